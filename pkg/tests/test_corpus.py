import numpy as np
import pytest

from viscoh import corpus
from viscoh.corpus import CorpusError


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestClustering:
    def test_dense_reindex(self, tmp_path):
        path = _write(tmp_path / "c.csv", "a,0\nb,0\nc,7\n")
        clustering = corpus.load_clustering(path)
        assert clustering.num_clusters == 2
        assert clustering.assignment == {"a": 0, "b": 0, "c": 1}
        assert clustering.original_ids == ("0", "7")
        assert clustering.members() == {0: ["a", "b"], 1: ["c"]}

    def test_duplicate_id_rejected(self, tmp_path):
        path = _write(tmp_path / "c.csv", "a,0\na,1\n")
        with pytest.raises(CorpusError, match="duplicate image id"):
            corpus.load_clustering(path)

    def test_empty_file_rejected(self, tmp_path):
        path = _write(tmp_path / "c.csv", "")
        with pytest.raises(CorpusError, match="empty"):
            corpus.load_clustering(path)

    def test_non_integer_cluster_rejected(self, tmp_path):
        path = _write(tmp_path / "c.csv", "a,zero\n")
        with pytest.raises(CorpusError, match="not an integer"):
            corpus.load_clustering(path)

    def test_round_trip_identity(self, tmp_path):
        path = _write(tmp_path / "c.csv", "a,3\nb,3\nc,0\nd,9\n")
        clustering = corpus.load_clustering(path)
        out = tmp_path / "copy.csv"
        corpus.write_clustering(clustering, out)
        reloaded = corpus.load_clustering(out)
        assert reloaded.assignment == clustering.assignment
        assert reloaded.num_clusters == clustering.num_clusters

    def test_reindex_stable_under_order_preserving_permutation(self, tmp_path):
        first = corpus.load_clustering(_write(tmp_path / "a.csv",
                                              "a,5\nb,5\nc,2\nd,2\ne,5\n"))
        # swap lines within clusters: first appearances of 5 then 2 unchanged
        second = corpus.load_clustering(_write(tmp_path / "b.csv",
                                               "b,5\na,5\nc,2\ne,5\nd,2\n"))
        assert first.assignment == second.assignment
        assert first.original_ids == second.original_ids

    def test_header_flag(self, tmp_path):
        path = _write(tmp_path / "c.csv", "image_id,cluster_id\na,0\n")
        clustering = corpus.load_clustering(path, has_header=True)
        assert clustering.assignment == {"a": 0}


class TestEmbeddings:
    def test_round_trip_bit_for_bit(self, tmp_path):
        values = np.array([[1.5, -2.25, 3.125], [0.1, 0.2, 0.3]], dtype=np.float32)
        matrix = corpus.EmbeddingMatrix(ids=("a", "b"), values=values)
        corpus.write_embeddings(matrix, tmp_path / "m.emb1", tmp_path / "m.ids")
        loaded = corpus.load_embeddings(tmp_path / "m.emb1", tmp_path / "m.ids")
        assert loaded.ids == ("a", "b")
        assert loaded.values.tobytes() == values.tobytes()

    def test_id_count_mismatch(self, tmp_path):
        values = np.zeros((5, 2), dtype=np.float32)
        matrix = corpus.EmbeddingMatrix(ids=tuple("abcde"), values=values)
        corpus.write_embeddings(matrix, tmp_path / "m.emb1", tmp_path / "m.ids")
        (tmp_path / "m.ids").write_text("a\nb\nc\nd\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="4 ids for 5"):
            corpus.load_embeddings(tmp_path / "m.emb1", tmp_path / "m.ids")

    def test_non_finite_rejected(self, tmp_path):
        values = np.array([[1.0, np.nan]], dtype=np.float32)
        matrix = corpus.EmbeddingMatrix(ids=("a",), values=values)
        corpus.write_embeddings(matrix, tmp_path / "m.emb1", tmp_path / "m.ids")
        with pytest.raises(CorpusError, match="non-finite"):
            corpus.load_embeddings(tmp_path / "m.emb1", tmp_path / "m.ids")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "m.emb1").write_bytes(b"NOPE" + b"\0" * 8)
        (tmp_path / "m.ids").write_text("a\n")
        with pytest.raises(CorpusError, match="bad magic"):
            corpus.load_embeddings(tmp_path / "m.emb1", tmp_path / "m.ids")

    def test_truncated_payload(self, tmp_path):
        import struct
        (tmp_path / "m.emb1").write_bytes(b"EMB1" + struct.pack("<II", 2, 3) + b"\0" * 8)
        (tmp_path / "m.ids").write_text("a\nb\n")
        with pytest.raises(CorpusError, match="expected"):
            corpus.load_embeddings(tmp_path / "m.emb1", tmp_path / "m.ids")


class TestCaptionsAndLabels:
    def test_single_caption(self, tmp_path):
        path = _write(tmp_path / "cap.jsonl",
                      '{"image_id": "a", "caption": "a red square"}\n')
        captions = corpus.load_captions(path)
        assert len(captions) == 1
        assert captions.captions["a"] == "a red square"

    def test_empty_caption_names_line(self, tmp_path):
        path = _write(tmp_path / "cap.jsonl",
                      '{"image_id": "a", "caption": "ok"}\n'
                      '{"image_id": "b", "caption": ""}\n')
        with pytest.raises(CorpusError, match="cap.jsonl:2"):
            corpus.load_captions(path)

    def test_duplicate_caption_id(self, tmp_path):
        path = _write(tmp_path / "cap.jsonl",
                      '{"image_id": "a", "caption": "x"}\n'
                      '{"image_id": "a", "caption": "y"}\n')
        with pytest.raises(CorpusError, match="duplicate"):
            corpus.load_captions(path)

    def test_labelmap_round_trip(self, tmp_path):
        label_map = corpus.LabelMap(labels={"a": 1, "b": 2},
                                    names={1: "cat", 2: "dog"})
        corpus.write_labelmap(label_map, tmp_path / "l.csv", tmp_path / "n.csv")
        loaded = corpus.load_labelmap(tmp_path / "l.csv", tmp_path / "n.csv")
        assert loaded == label_map

    def test_label_without_name(self, tmp_path):
        _write(tmp_path / "l.csv", "a,1\nb,9\n")
        _write(tmp_path / "n.csv", "1,cat\n")
        with pytest.raises(CorpusError, match="without names"):
            corpus.load_labelmap(tmp_path / "l.csv", tmp_path / "n.csv")


class TestManifest:
    def test_traversal_rejected(self, tmp_path):
        path = _write(tmp_path / "m.csv", "a,../../etc/passwd\n")
        with pytest.raises(CorpusError, match="escapes"):
            corpus.load_manifest(path, tmp_path)

    def test_absolute_rejected(self, tmp_path):
        path = _write(tmp_path / "m.csv", "a,/etc/passwd\n")
        with pytest.raises(CorpusError, match="absolute"):
            corpus.load_manifest(path, tmp_path)

    def test_resolve(self, tmp_path):
        (tmp_path / "img").mkdir()
        (tmp_path / "img" / "a.png").write_bytes(b"x")
        manifest = corpus.load_manifest(_write(tmp_path / "m.csv", "a,img/a.png\n"),
                                        tmp_path)
        assert manifest.resolve("a").read_bytes() == b"x"
        assert manifest.resolve("missing") is None


class TestValidate:
    def _consistent_bundle(self, tmp_path):
        clustering = corpus.load_clustering(_write(tmp_path / "c.csv", "a,0\nb,1\n"))
        emb = corpus.EmbeddingMatrix(ids=("a", "b"),
                                     values=np.ones((2, 2), dtype=np.float32))
        captions = corpus.CaptionSet(captions={"a": "one", "b": "two"})
        label_map = corpus.LabelMap(labels={"a": 0, "b": 1},
                                    names={0: "x", 1: "y"})
        return corpus.CorpusBundle(clustering=clustering, embeddings=emb,
                                   caption_set=captions, label_map=label_map)

    def test_consistent_bundle_clean(self, tmp_path):
        report = corpus.validate_corpus(self._consistent_bundle(tmp_path))
        assert report.errors == []
        assert report.warnings == []

    def test_missing_embedding_is_error(self, tmp_path):
        bundle = self._consistent_bundle(tmp_path)
        short = corpus.EmbeddingMatrix(ids=("a",),
                                       values=np.ones((1, 2), dtype=np.float32))
        bundle = corpus.CorpusBundle(clustering=bundle.clustering, embeddings=short,
                                     caption_set=bundle.caption_set,
                                     label_map=bundle.label_map)
        report = corpus.validate_corpus(bundle)
        assert any(i.code == "missing-embeddings" for i in report.errors)

    def test_unlabeled_image_is_warning(self, tmp_path):
        bundle = self._consistent_bundle(tmp_path)
        partial = corpus.LabelMap(labels={"a": 0}, names={0: "x"})
        bundle = corpus.CorpusBundle(clustering=bundle.clustering,
                                     embeddings=bundle.embeddings,
                                     caption_set=bundle.caption_set,
                                     label_map=partial)
        report = corpus.validate_corpus(bundle)
        assert report.errors == []
        assert any(i.code == "unlabeled-images" for i in report.warnings)

    def test_report_is_pure(self, tmp_path):
        bundle = self._consistent_bundle(tmp_path)
        assert (corpus.validate_corpus(bundle).to_json()
                == corpus.validate_corpus(bundle).to_json())
