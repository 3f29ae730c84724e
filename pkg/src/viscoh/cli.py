"""Single executable for the whole pipeline.

Subcommands: validate, metrics purity|compare|hardneg|medoid, kmeans,
describe, tasks build|derive-desc|rating, serve, simulate, score, report,
retrieval-eval, toy.  Every command accepts --seed; artifacts embed
(tool version, seed, input digests) in a meta header (JSONL) or a
``.prov.json`` sidecar (CSV/binary).  Study directories follow the layout
``corpus/ tasks/ responses/ reports/ study.toml``; the TOML snapshot is
written once at `tasks build` and later commands refuse to run against a
taskset whose config no longer matches it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, captioner, corpus, kmeans as kmeans_mod, metrics
from . import report as report_mod
from . import retrieval as retrieval_mod
from . import service, stats, tasks as tasks_mod, toydata


class CliError(ValueError):
    pass


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _provenance(seed: int, inputs: dict[str, Path]) -> dict:
    return {
        "tool": "viscoh",
        "version": __version__,
        "seed": seed,
        "inputs": {name: _sha256(Path(p)) for name, p in sorted(inputs.items())},
    }


def _write_sidecar(artifact: Path, prov: dict) -> None:
    sidecar = artifact.with_name(artifact.name + ".prov.json")
    sidecar.write_text(json.dumps(prov, sort_keys=True, indent=2) + "\n",
                       encoding="utf-8")


def _emit(doc: dict, out: str | None) -> None:
    payload = report_mod.render_json(doc)
    if out:
        Path(out).write_bytes(payload)
    else:
        sys.stdout.write(payload.decode("utf-8"))


# --- study directory ----------------------------------------------------------

def _study_paths(root: str) -> dict[str, Path]:
    base = Path(root)
    return {
        "root": base,
        "tasks": base / "tasks",
        "responses": base / "responses",
        "reports": base / "reports",
        "toml": base / "study.toml",
    }


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(v) for v in value) + "]"
    return json.dumps(value)


def _render_study_toml(study_id: str, config: tasks_mod.StudyConfig) -> str:
    doc = config.to_doc()
    # TOML has no null: 0 encodes "no per-day limit"
    doc["rate_limit_per_class_per_day"] = doc["rate_limit_per_class_per_day"] or 0
    lines = [
        'schema = "viscoh-study-v1"',
        f'study_id = {json.dumps(study_id)}',
        "",
        "[config]",
    ]
    for key in sorted(doc):
        lines.append(f"{key} = {_toml_scalar(doc[key])}")
    return "\n".join(lines) + "\n"


def _load_study_toml(path: Path) -> tuple[str, tasks_mod.StudyConfig]:
    with path.open("rb") as fh:
        doc = tomllib.load(fh)
    config_doc = dict(doc["config"])
    if config_doc.get("rate_limit_per_class_per_day") == 0:
        config_doc["rate_limit_per_class_per_day"] = None
    return doc["study_id"], tasks_mod.StudyConfig.from_doc(config_doc)


def _check_snapshot(study_root: str | None, taskset: tasks_mod.TaskSet) -> None:
    if not study_root:
        return
    toml_path = _study_paths(study_root)["toml"]
    if not toml_path.exists():
        return
    _, snapshot = _load_study_toml(toml_path)
    if snapshot != taskset.config:
        raise CliError("taskset config does not match the study.toml snapshot")


def _read_responses(path: Path) -> list[stats.Response]:
    responses = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            if doc.get("type") == "meta":
                continue
            responses.append(stats.Response.from_doc(doc))
    return responses


# --- corpus flag helpers --------------------------------------------------------

def _add_embedding_flags(parser, prefix: str = "features"):
    parser.add_argument(f"--{prefix}", help=f"{prefix} EMB1 matrix file")
    parser.add_argument(f"--{prefix}-ids", help=f"{prefix} sidecar id file")


def _load_embedding_args(args, prefix: str = "features"):
    matrix = getattr(args, prefix.replace("-", "_"))
    ids = getattr(args, f"{prefix.replace('-', '_')}_ids")
    if not matrix or not ids:
        raise CliError(f"--{prefix} and --{prefix}-ids are required here")
    return corpus.load_embeddings(matrix, ids)


# --- subcommands -----------------------------------------------------------------

def _cmd_validate(args) -> int:
    bundle = corpus.CorpusBundle(
        manifest=(corpus.load_manifest(args.manifest, args.images_root)
                  if args.manifest else None),
        clustering=corpus.load_clustering(args.clustering) if args.clustering else None,
        label_map=(corpus.load_labelmap(args.labels, args.label_names)
                   if args.labels else None),
        embeddings=(corpus.load_embeddings(args.features, args.features_ids)
                    if args.features else None),
        caption_set=corpus.load_captions(args.captions) if args.captions else None,
        caption_embeddings=(
            corpus.load_embeddings(args.caption_embs, args.caption_embs_ids)
            if args.caption_embs else None),
    )
    validation = corpus.validate_corpus(bundle)
    text = validation.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 1 if validation.errors else 0


def _cmd_metrics_purity(args) -> int:
    clustering = corpus.load_clustering(args.clustering)
    label_map = corpus.load_labelmap(args.labels, args.label_names)
    purity = metrics.class_purity(clustering, label_map)
    doc = {
        "normalizer": purity.normalizer,
        "clusters": {
            str(c): {
                "purity": e.purity,
                "size": e.size,
                "labeled": e.labeled,
                "label_counts": {str(k): v for k, v in sorted(e.label_counts.items())},
            }
            for c, e in sorted(purity.per_cluster.items())
        },
    }
    _emit(doc, args.out)
    return 0


def _cmd_metrics_compare(args) -> int:
    a = corpus.load_clustering(args.a)
    b = corpus.load_clustering(args.b)
    scores = metrics.compare_clusterings(a, b)
    _emit({"nmi": scores.nmi, "ami": scores.ami, "ari": scores.ari}, args.out)
    return 0


def _cmd_metrics_hardneg(args) -> int:
    clustering = corpus.load_clustering(args.clustering)
    embeddings = _load_embedding_args(args)
    cmap = metrics.centroids_and_hard_negatives(clustering, embeddings)
    _emit({"hard_negative": {str(c): cmap.hard_negative[c]
                             for c in sorted(cmap.hard_negative)}}, args.out)
    return 0


def _cmd_metrics_medoid(args) -> int:
    clustering = corpus.load_clustering(args.clustering)
    embeddings = _load_embedding_args(args)
    if args.cluster is not None:
        clusters = [args.cluster]
    else:
        clusters = sorted(clustering.members())
    doc = {"medoid": {str(c): metrics.representative_image(c, clustering, embeddings)
                      for c in clusters}}
    _emit(doc, args.out)
    return 0


def _cmd_kmeans(args) -> int:
    embeddings = _load_embedding_args(args)
    result = kmeans_mod.kmeans(embeddings, k=args.k, seed=args.seed,
                               max_iter=args.max_iter, tol=args.tol,
                               normalize=args.normalize)
    out = Path(args.out)
    corpus.write_clustering(result.clustering, out)
    prov = _provenance(args.seed, {"features": args.features,
                                   "features_ids": args.features_ids})
    prov["k"] = args.k
    prov["inertia"] = result.inertia
    prov["n_iter"] = result.n_iter
    _write_sidecar(out, prov)
    return 0


def _cmd_describe(args) -> int:
    clustering = corpus.load_clustering(args.clustering)
    caption_set = corpus.load_captions(args.captions)
    caption_embeddings = None
    inputs = {"clustering": args.clustering, "captions": args.captions}
    if args.mode == "cosine":
        caption_embeddings = _load_embedding_args(args, "caption-embs")
        inputs["caption_embs"] = args.caption_embs
    descriptions = captioner.select_descriptions(
        clustering, caption_set, mode=args.mode,
        caption_embeddings=caption_embeddings,
        use_negative_term=not args.no_negative,
        intra_excludes_self=args.intra_excludes_self)
    captioner.write_descriptions(descriptions, args.out,
                                 provenance=_provenance(args.seed, inputs))
    if args.uniqueness:
        _emit(captioner.uniqueness_stats(descriptions), args.uniqueness)
    return 0


def _parse_classes(spec: str, clustering: corpus.Clustering) -> tuple[int, ...]:
    if spec == "all":
        return tuple(sorted(clustering.members()))
    try:
        return tuple(int(c) for c in spec.split(","))
    except ValueError:
        raise CliError(f"bad class list {spec!r}; use 'all' or e.g. '0,3,7'") from None


def _cmd_tasks_build(args) -> int:
    paths = _study_paths(args.study)
    clustering = corpus.load_clustering(args.clustering)
    config = tasks_mod.StudyConfig(
        seed=args.seed,
        selected_classes=_parse_classes(args.classes, clustering),
        reference_size=args.reference_size,
        hits_per_class=args.hits_per_class,
        annotators_per_hit=args.annotators_per_hit,
        negative_mode=args.negative_mode,
        rate_limit_per_class_per_day=args.rate_limit if args.rate_limit > 0 else None,
    )
    centroid_map = None
    inputs = {"clustering": args.clustering}
    if args.negative_mode == "hard":
        embeddings = _load_embedding_args(args)
        centroid_map = metrics.centroids_and_hard_negatives(clustering, embeddings)
        inputs["features"] = args.features
    taskset = tasks_mod.build_learnability_tasks(clustering, config, centroid_map)

    snapshot = _render_study_toml(taskset.study_id, config)
    if paths["toml"].exists():
        if paths["toml"].read_text(encoding="utf-8") != snapshot:
            raise CliError("study.toml already exists with a different config")
    else:
        paths["root"].mkdir(parents=True, exist_ok=True)
        paths["toml"].write_text(snapshot, encoding="utf-8")
    paths["tasks"].mkdir(parents=True, exist_ok=True)
    prov = _provenance(args.seed, inputs)
    private = paths["tasks"] / "learnability.jsonl"
    public = paths["tasks"] / "learnability.public.jsonl"
    tasks_mod.write_taskset(taskset, private, include_hidden=True, provenance=prov)
    tasks_mod.write_taskset(taskset, public, include_hidden=False, provenance=prov)
    for class_id, reason in taskset.exclusions:
        print(f"warning: class {class_id} excluded: {reason}", file=sys.stderr)
    print(f"wrote {len(taskset.tasks)} tasks to {private}")
    return 0


def _cmd_tasks_derive_desc(args) -> int:
    paths = _study_paths(args.study)
    source = paths["tasks"] / f"{args.taskset}.jsonl"
    taskset = tasks_mod.load_taskset(source)
    _check_snapshot(args.study, taskset)
    descriptions = captioner.load_descriptions(args.descriptions)
    derived = tasks_mod.derive_describability_tasks(taskset, descriptions.texts())
    prov = _provenance(args.seed, {"taskset": source, "descriptions": args.descriptions})
    private = paths["tasks"] / "describability.jsonl"
    public = paths["tasks"] / "describability.public.jsonl"
    tasks_mod.write_taskset(derived, private, include_hidden=True, provenance=prov)
    tasks_mod.write_taskset(derived, public, include_hidden=False, provenance=prov)
    print(f"wrote {len(derived.tasks)} tasks to {private}")
    return 0


def _cmd_tasks_rating(args) -> int:
    paths = _study_paths(args.study)
    clustering = corpus.load_clustering(args.clustering)
    _, config = _load_study_toml(paths["toml"])
    descriptions = captioner.load_descriptions(args.descriptions)
    rating = tasks_mod.build_rating_tasks(clustering, descriptions.texts(), config)
    prov = _provenance(args.seed, {"clustering": args.clustering,
                                   "descriptions": args.descriptions})
    out = paths["tasks"] / "rating.jsonl"
    paths["tasks"].mkdir(parents=True, exist_ok=True)
    tasks_mod.write_taskset(rating, out, include_hidden=True, provenance=prov)
    print(f"wrote {len(rating.tasks)} tasks to {out}")
    return 0


def _cmd_serve(args) -> int:
    paths = _study_paths(args.study)
    taskset = tasks_mod.load_taskset(paths["tasks"] / f"{args.taskset}.jsonl")
    _check_snapshot(args.study, taskset)
    manifest = None
    if args.manifest:
        manifest = corpus.load_manifest(args.manifest, args.images_root)
    else:
        default_manifest = paths["root"] / "corpus" / "manifest.csv"
        if default_manifest.exists():
            manifest = corpus.load_manifest(default_manifest, paths["root"] / "corpus")
    log_path = paths["responses"] / f"{args.taskset}.responses.jsonl"
    app = service.StudyApp(taskset, log_path, manifest=manifest, ui_dir=args.ui)
    print(f"serving study {taskset.study_id} on http://{args.host}:{args.port}")
    service.serve_forever(app, args.host, args.port)
    return 0


def _cmd_simulate(args) -> int:
    paths = _study_paths(args.study)
    source = paths["tasks"] / f"{args.taskset}.jsonl"
    taskset = tasks_mod.load_taskset(source)
    _check_snapshot(args.study, taskset)
    responses = stats.simulate_annotators(taskset, accuracy=args.p, seed=args.seed)
    paths["responses"].mkdir(parents=True, exist_ok=True)
    out = paths["responses"] / f"{args.taskset}.responses.jsonl"
    with out.open("w", encoding="utf-8") as fh:
        meta = {"type": "meta", "schema": "viscoh-responselog-v1",
                "study_id": taskset.study_id,
                "provenance": _provenance(args.seed, {"taskset": source})}
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for response in responses:
            fh.write(json.dumps(response.to_doc(), sort_keys=True) + "\n")
    print(f"wrote {len(responses)} responses to {out}")
    return 0


def _cmd_score(args) -> int:
    taskset = tasks_mod.load_taskset(args.taskset)
    _check_snapshot(args.study, taskset)
    responses = _read_responses(Path(args.responses))
    doc = report_mod.build_score_report(taskset, responses)
    _emit(doc, args.out)
    return 0


def _cmd_report(args) -> int:
    taskset = tasks_mod.load_taskset(args.taskset)
    _check_snapshot(args.study, taskset)
    responses = _read_responses(Path(args.responses))
    doc = report_mod.build_score_report(taskset, responses)
    if args.clustering and args.labels:
        clustering = corpus.load_clustering(args.clustering)
        label_map = corpus.load_labelmap(args.labels, args.label_names)
        purity = metrics.class_purity(clustering, label_map)
        result = stats.score_responses(taskset, responses)
        edges = tuple(float(e) for e in args.bin_edges.split(","))
        doc = report_mod.attach_purity_aggregates(doc, result.class_stats,
                                                  purity.scored(), edges)
    _emit(doc, args.out)
    if args.csv:
        Path(args.csv).write_text(report_mod.report_csv(doc), encoding="utf-8")
    return 0


def _cmd_retrieval_eval(args) -> int:
    retrieval = retrieval_mod.load_retrieval(args.retrieval)
    subset = None
    if args.subset:
        subset = {int(c) for c in Path(args.subset).read_text().split()}
    doc: dict = {"topk": {}}
    for k in (int(x) for x in args.k.split(",")):
        doc["topk"][str(k)] = retrieval_mod.topk_accuracy(retrieval, k, subset)
    if args.binary:
        doc["binary_preference"] = retrieval_mod.binary_preference(
            retrieval, seed=args.seed, trials_per_positive=args.trials)
    _emit(doc, args.out)
    return 0


def _cmd_toy(args) -> int:
    paths = toydata.generate_toy_corpus(Path(args.out) / "corpus", seed=args.seed)
    print(f"toy corpus written under {paths['manifest'].parent}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viscoh", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("validate", help="cross-check corpus files")
    p.add_argument("--manifest")
    p.add_argument("--images-root", default=".")
    p.add_argument("--clustering")
    p.add_argument("--labels")
    p.add_argument("--label-names")
    _add_embedding_flags(p)
    p.add_argument("--captions")
    _add_embedding_flags(p, "caption-embs")
    p.add_argument("--out")
    add_seed(p)
    p.set_defaults(func=_cmd_validate)

    pm = sub.add_parser("metrics", help="purity / compare / hardneg / medoid")
    msub = pm.add_subparsers(dest="metric", required=True)

    p = msub.add_parser("purity")
    p.add_argument("--clustering", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--label-names", required=True)
    p.add_argument("--out")
    add_seed(p)
    p.set_defaults(func=_cmd_metrics_purity)

    p = msub.add_parser("compare")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out")
    add_seed(p)
    p.set_defaults(func=_cmd_metrics_compare)

    p = msub.add_parser("hardneg")
    p.add_argument("--clustering", required=True)
    _add_embedding_flags(p)
    p.add_argument("--out")
    add_seed(p)
    p.set_defaults(func=_cmd_metrics_hardneg)

    p = msub.add_parser("medoid")
    p.add_argument("--clustering", required=True)
    _add_embedding_flags(p)
    p.add_argument("--cluster", type=int)
    p.add_argument("--out")
    add_seed(p)
    p.set_defaults(func=_cmd_metrics_medoid)

    p = sub.add_parser("kmeans", help="Lloyd's k-means over an EMB1 matrix")
    _add_embedding_flags(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(func=_cmd_kmeans)

    p = sub.add_parser("describe", help="select one caption per cluster")
    p.add_argument("--clustering", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--mode", choices=["cosine", "rouge"], default="cosine")
    _add_embedding_flags(p, "caption-embs")
    p.add_argument("--no-negative", action="store_true",
                   help="drop the inter-class term from the objective")
    p.add_argument("--intra-excludes-self", action="store_true",
                   help="divide the intra mean by |S_c|-1 instead of |S_c|")
    p.add_argument("--uniqueness", help="also write uniqueness stats JSON here")
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(func=_cmd_describe)

    pt = sub.add_parser("tasks", help="build / derive-desc / rating")
    tsub = pt.add_subparsers(dest="taskcmd", required=True)

    p = tsub.add_parser("build")
    p.add_argument("--study", required=True)
    p.add_argument("--clustering", required=True)
    p.add_argument("--classes", default="all")
    p.add_argument("--negative-mode", choices=["random", "hard"], default="random")
    _add_embedding_flags(p)
    p.add_argument("--reference-size", type=int, default=10)
    p.add_argument("--hits-per-class", type=int, default=20)
    p.add_argument("--annotators-per-hit", type=int, default=3)
    p.add_argument("--rate-limit", type=int, default=1,
                   help="describability HITs per worker per class per UTC day; 0 = unlimited")
    add_seed(p)
    p.set_defaults(func=_cmd_tasks_build)

    p = tsub.add_parser("derive-desc")
    p.add_argument("--study", required=True)
    p.add_argument("--taskset", default="learnability")
    p.add_argument("--descriptions", required=True)
    add_seed(p)
    p.set_defaults(func=_cmd_tasks_derive_desc)

    p = tsub.add_parser("rating")
    p.add_argument("--study", required=True)
    p.add_argument("--clustering", required=True)
    p.add_argument("--descriptions", required=True)
    add_seed(p)
    p.set_defaults(func=_cmd_tasks_rating)

    p = sub.add_parser("serve", help="run the study HTTP service")
    p.add_argument("--study", required=True)
    p.add_argument("--taskset", default="learnability")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--manifest")
    p.add_argument("--images-root", default=".")
    p.add_argument("--ui", help="directory with the annotator UI bundle")
    add_seed(p)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("simulate", help="synthetic annotators over a taskset")
    p.add_argument("--study", required=True)
    p.add_argument("--taskset", default="learnability")
    p.add_argument("--p", type=float, required=True)
    add_seed(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("score", help="canonical scoring report for a response log")
    p.add_argument("--taskset", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--study")
    p.add_argument("--out")
    add_seed(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("report", help="scoring report plus purity-binned rows")
    p.add_argument("--taskset", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--study")
    p.add_argument("--clustering")
    p.add_argument("--labels")
    p.add_argument("--label-names")
    p.add_argument("--bin-edges", default="0.0,0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--csv")
    p.add_argument("--out")
    add_seed(p)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("retrieval-eval", help="top-k / binary retrieval proxy")
    p.add_argument("--retrieval", required=True)
    p.add_argument("--k", default="1,5")
    p.add_argument("--binary", action="store_true")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--subset")
    p.add_argument("--out")
    add_seed(p)
    p.set_defaults(func=_cmd_retrieval_eval)

    p = sub.add_parser("toy", help="generate the bundled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=_cmd_toy)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
