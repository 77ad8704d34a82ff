"""Corpus reading, orchestration, canonical output, and the error log."""
import json

import pytest

import extract_testkit as kit
from uknow_extractors import (
    CorpusReadError,
    config_from_dict,
    extract_features,
    read_corpus,
)


@pytest.fixture(scope="module")
def sample_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("sample_corpus")
    counts = kit.build_sample_corpus(root)
    return root, counts


def run_extract(corpus, out, cfg_obj):
    return extract_features(corpus, config_from_dict(cfg_obj), out)


def manifest_lines(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


class TestReadCorpus:
    def test_canonical_order(self, sample_corpus):
        root, counts = sample_corpus
        items = read_corpus(root)
        assert len(items) == counts["n_images"] + counts["n_texts"]
        selectors = [(it.owner_key, it.owner_id, it.selector) for it in items]
        assert selectors[:4] == [
            ("fact_id", 0, "title"), ("fact_id", 0, "content"),
            ("fact_id", 0, "image[0]"), ("fact_id", 0, "image[1]"),
        ]
        assert selectors[-2:] == [
            ("pair_id", 3, "pair_text"), ("pair_id", 3, "pair_image"),
        ]

    def test_news_sorted_by_fact_id(self, tmp_path):
        lines = []
        for fact_id in (5, 1, 3):
            lines.append(json.dumps({"fact_id": fact_id, "title": "T",
                                     "content": "C", "image_paths": []}))
        (tmp_path / "news.jsonl").write_text("\n".join(lines) + "\n")
        ids = [it.owner_id for it in read_corpus(tmp_path)]
        assert ids == [1, 1, 3, 3, 5, 5]

    def test_relative_paths_resolved_against_corpus(self, sample_corpus):
        root, _ = sample_corpus
        items = read_corpus(root)
        image = next(it for it in items if it.is_image)
        assert image.path.is_absolute()
        assert image.path.exists()

    def test_absolute_paths_kept(self, tmp_path):
        kit.build_sample_corpus(tmp_path, absolute_paths=True)
        items = read_corpus(tmp_path)
        image = next(it for it in items if it.is_image)
        assert image.path == tmp_path / "img" / "a0.png"

    def test_missing_both_manifests(self, tmp_path):
        with pytest.raises(CorpusReadError):
            read_corpus(tmp_path)

    def test_news_only_corpus(self, tmp_path):
        (tmp_path / "news.jsonl").write_text(json.dumps(
            {"fact_id": 0, "title": "T", "content": "C", "image_paths": []}) + "\n")
        items = read_corpus(tmp_path)
        assert [it.selector for it in items] == ["title", "content"]

    def test_pairs_only_corpus(self, tmp_path):
        (tmp_path / "pairs.tsv").write_text("hello there\timg/x.png\n")
        items = read_corpus(tmp_path)
        assert [it.selector for it in items] == ["pair_text", "pair_image"]

    def test_malformed_news_json(self, tmp_path):
        (tmp_path / "news.jsonl").write_text("{broken\n")
        with pytest.raises(CorpusReadError):
            read_corpus(tmp_path)

    def test_news_missing_keys(self, tmp_path):
        (tmp_path / "news.jsonl").write_text(json.dumps({"fact_id": 0}) + "\n")
        with pytest.raises(CorpusReadError):
            read_corpus(tmp_path)

    def test_pairs_without_tab(self, tmp_path):
        (tmp_path / "pairs.tsv").write_text("no tab here\n")
        with pytest.raises(CorpusReadError):
            read_corpus(tmp_path)

    def test_pairs_empty_text(self, tmp_path):
        (tmp_path / "pairs.tsv").write_text("\timg/x.png\n")
        with pytest.raises(CorpusReadError):
            read_corpus(tmp_path)


class TestExtractFeatures:
    def test_full_run_summary(self, sample_corpus, tmp_path):
        root, _ = sample_corpus
        summary = run_extract(root, tmp_path / "feats.jsonl", kit.full_config())
        assert summary["n_records"] > 0
        assert summary["n_skipped"] == 0
        assert summary["dim"] == 48
        # the gray blob in p3.png has no mapping entry
        assert summary["n_unmapped_detections"] >= 1
        # UNK capitalized runs are dropped but counted
        assert summary["n_unmapped_entities"] >= 1

    def test_every_line_is_schema_shaped(self, sample_corpus, tmp_path):
        root, _ = sample_corpus
        out = tmp_path / "feats.jsonl"
        run_extract(root, out, kit.full_config())
        for obj in manifest_lines(out):
            assert set(obj) == {"owner", "kind", "payload"}
            assert "selector" in obj["owner"]
            assert "fact_id" in obj["owner"] or "pair_id" in obj["owner"]
            assert obj["kind"] in ("embedding", "detection", "entity", "caption")

    def test_canonical_output_order(self, sample_corpus, tmp_path):
        root, _ = sample_corpus
        out = tmp_path / "feats.jsonl"
        run_extract(root, out, kit.full_config())
        owners = []
        for obj in manifest_lines(out):
            owner = obj["owner"]
            key = (0, owner["fact_id"]) if "fact_id" in owner else (1, owner["pair_id"])
            owners.append(key)
        assert owners == sorted(owners)

    def test_two_runs_byte_identical(self, sample_corpus, tmp_path):
        root, _ = sample_corpus
        out_a, out_b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run_extract(root, out_a, kit.full_config())
        run_extract(root, out_b, kit.full_config())
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_batch_size_does_not_change_output(self, sample_corpus, tmp_path):
        root, _ = sample_corpus
        out_a, out_b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run_extract(root, out_a, kit.full_config(batch_size=1))
        run_extract(root, out_b, kit.full_config(batch_size=7))
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_text_embed_only_subset(self, sample_corpus, tmp_path):
        root, counts = sample_corpus
        out = tmp_path / "feats.jsonl"
        run_extract(root, out, {"extractors": ["text_embed"], "dim": 16})
        lines = manifest_lines(out)
        assert len(lines) == counts["n_texts"]
        assert all(obj["kind"] == "embedding" for obj in lines)
        assert all(obj["owner"]["selector"] in ("title", "content", "pair_text")
                   for obj in lines)

    def test_ner_only_subset(self, sample_corpus, tmp_path):
        root, _ = sample_corpus
        out = tmp_path / "feats.jsonl"
        run_extract(root, out, {"extractors": ["ner"]})
        lines = manifest_lines(out)
        assert lines
        assert all(obj["kind"] == "entity" for obj in lines)

    def test_detect_only_still_embeds_crops(self, sample_corpus, tmp_path):
        root, _ = sample_corpus
        out = tmp_path / "feats.jsonl"
        run_extract(root, out, {"extractors": ["detect"], "dim": 12})
        lines = manifest_lines(out)
        assert lines
        for obj in lines:
            assert obj["kind"] == "detection"
            for det in obj["payload"]:
                assert len(det["crop_embedding"]) == 12
                x0, y0, x1, y1 = det["box"]
                assert 0.0 <= x0 < x1 <= 1.0
                assert 0.0 <= y0 < y1 <= 1.0

    def test_all_embeddings_share_config_dim(self, sample_corpus, tmp_path):
        root, _ = sample_corpus
        out = tmp_path / "feats.jsonl"
        run_extract(root, out, kit.full_config(dim=20))
        for obj in manifest_lines(out):
            if obj["kind"] == "embedding":
                assert len(obj["payload"]) == 20
            elif obj["kind"] == "detection":
                assert all(len(d["crop_embedding"]) == 20 for d in obj["payload"])

    def test_unreadable_image_skipped_and_logged(self, tmp_path):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        meta = kit.build_broken_corpus(corpus)
        out = tmp_path / "feats.jsonl"
        summary = run_extract(corpus, out, kit.full_config())
        assert summary["n_skipped"] == 1
        selectors = {obj["owner"]["selector"] for obj in manifest_lines(out)}
        assert meta["good_selector"] in selectors
        assert meta["bad_selector"] not in selectors
        log = [json.loads(line) for line in
               (tmp_path / "feats.errors.jsonl").read_text().splitlines()]
        skip = log[0]
        assert skip["owner"]["selector"] == meta["bad_selector"]
        assert skip["stage"] == "decode"
        assert set(skip["skipped_extractors"]) == {"image_embed", "detect", "caption"}

    def test_error_log_always_ends_with_summary(self, sample_corpus, tmp_path):
        root, _ = sample_corpus
        out = tmp_path / "feats.jsonl"
        summary = run_extract(root, out, kit.full_config())
        log_lines = (tmp_path / "feats.errors.jsonl").read_text().splitlines()
        last = json.loads(log_lines[-1])
        assert last["summary"]["n_records"] == summary["n_records"]
        assert "unmapped_detection_labels" in last["summary"]
        assert last["summary"]["unmapped_detection_labels"].get("gray", 0) >= 1

    def test_unknown_model_is_fatal(self, sample_corpus, tmp_path):
        from uknow_extractors import ModelLoadError
        root, _ = sample_corpus
        with pytest.raises(ModelLoadError):
            run_extract(root, tmp_path / "f.jsonl",
                        {"extractors": ["detect"],
                         "models": {"detect": "nonexistent-v9"}})
