import pytest

from viscoh import corpus, tasks, toydata

_CRITERION_RESULTS = {}


@pytest.fixture(scope="session")
def toy_paths(tmp_path_factory):
    out = tmp_path_factory.mktemp("toycorpus")
    return toydata.generate_toy_corpus(out, seed=7)


@pytest.fixture(scope="session")
def toy_clustering(toy_paths):
    return corpus.load_clustering(toy_paths["clustering"])


@pytest.fixture(scope="session")
def toy_label_map(toy_paths):
    return corpus.load_labelmap(toy_paths["labels"], toy_paths["label_names"])


@pytest.fixture(scope="session")
def toy_features(toy_paths):
    return corpus.load_embeddings(toy_paths["features"], toy_paths["features_ids"])


@pytest.fixture(scope="session")
def toy_captions(toy_paths):
    return corpus.load_captions(toy_paths["captions"])


@pytest.fixture(scope="session")
def toy_caption_embs(toy_paths):
    return corpus.load_embeddings(toy_paths["caption_embs"],
                                  toy_paths["caption_embs_ids"])


@pytest.fixture(scope="session")
def toy_manifest(toy_paths):
    return corpus.load_manifest(toy_paths["manifest"], toy_paths["manifest"].parent)


@pytest.fixture(scope="session")
def toy_taskset(toy_clustering):
    config = tasks.StudyConfig(seed=11, selected_classes=tuple(range(20)))
    return tasks.build_learnability_tasks(toy_clustering, config)


def pytest_runtest_logreport(report):
    # one pass/fail line per acceptance criterion
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if not name.startswith("test_criterion"):
        return
    verdict = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {name}: {verdict}", flush=True)
