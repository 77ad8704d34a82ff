"""Orchestration: run configured extractors over a corpus directory.

The corpus layout is the ingested form consumed by the downstream
pipeline: ``pairs.tsv`` (``<text>\\t<image path>`` per line) and
``news.jsonl`` (one JSON object per line), either of which may be
absent.  Output is a feature manifest in the downstream schema, one
JSON record per line, serialized in canonical owner order: news records
by fact id (title, content, image[k]...), then pairs by pair id
(pair_text, pair_image).

Each extractor processes its applicable items in batches of the
configured size; the writer then serializes all results in canonical
order, so output bytes never depend on worker scheduling.  Unreadable
images are skipped per item and recorded in a sidecar error log next to
the output; labels missing from the shipped mapping tables are dropped
and counted there.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .backends import (
    load_detect_label_map,
    load_image,
    load_model,
    load_ner_type_map,
)
from .config import ExtractorConfig
from .errors import CorpusReadError

IMAGE_EXTRACTORS = ("image_embed", "detect", "caption")
TEXT_EXTRACTORS = ("text_embed", "ner")


@dataclass(frozen=True)
class Item:
    """One corpus item in canonical position: a text or an image.

    ``text`` is None for images; ``path`` is None for texts.
    """

    owner_key: str
    owner_id: int
    selector: str
    text: str | None = None
    path: Path | None = None

    @property
    def is_image(self) -> bool:
        return self.path is not None


def _batches(items, size: int):
    for start in range(0, len(items), size):
        yield items[start:start + size]


def read_corpus(corpus_dir: str | Path) -> list[Item]:
    """Collect corpus items in canonical owner order."""
    corpus_dir = Path(corpus_dir)
    pairs_path = corpus_dir / "pairs.tsv"
    news_path = corpus_dir / "news.jsonl"
    if not pairs_path.exists() and not news_path.exists():
        raise CorpusReadError(f"{corpus_dir}: no pairs.tsv or news.jsonl found")

    def resolve(path_str: str) -> Path:
        path = Path(path_str)
        return path if path.is_absolute() else corpus_dir / path

    news = []
    if news_path.exists():
        with news_path.open("r", encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                where = f"{news_path}:{line_no}"
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusReadError(f"{where}: invalid JSON: {exc}") from exc
                missing = [k for k in ("fact_id", "title", "content", "image_paths")
                           if k not in obj]
                if missing:
                    raise CorpusReadError(f"{where}: missing keys {missing}")
                news.append(obj)

    items: list[Item] = []
    for obj in sorted(news, key=lambda rec: int(rec["fact_id"])):
        fact_id = int(obj["fact_id"])
        items.append(Item("fact_id", fact_id, "title", text=str(obj["title"])))
        items.append(Item("fact_id", fact_id, "content", text=str(obj["content"])))
        for k, path_str in enumerate(obj["image_paths"]):
            items.append(Item("fact_id", fact_id, f"image[{k}]",
                              path=resolve(str(path_str))))
    if pairs_path.exists():
        pair_id = 0
        with pairs_path.open("r", encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n").rstrip("\r")
                if not line:
                    continue
                if "\t" not in line:
                    raise CorpusReadError(
                        f"{pairs_path}:{line_no}: expected '<text>\\t<path>'"
                    )
                text, image_path = line.split("\t", 1)
                if not text:
                    raise CorpusReadError(f"{pairs_path}:{line_no}: empty text")
                items.append(Item("pair_id", pair_id, "pair_text", text=text))
                items.append(Item("pair_id", pair_id, "pair_image",
                                  path=resolve(image_path)))
                pair_id += 1
    return items


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)


def _owner_obj(item: Item) -> dict:
    return {item.owner_key: item.owner_id, "selector": item.selector}


def extract_features(corpus_dir: str | Path, config: ExtractorConfig,
                     out_path: str | Path) -> dict:
    """Run the configured extractors and write the feature manifest.

    Returns a summary dict with record, skip, and unmapped-label counts.
    The sidecar error log (``<stem>.errors.jsonl`` next to the output)
    is always written; its last line is the summary.
    """
    out_path = Path(out_path)
    items = read_corpus(corpus_dir)
    text_items = [(idx, it) for idx, it in enumerate(items) if not it.is_image]
    image_items = [(idx, it) for idx, it in enumerate(items) if it.is_image]

    models = {name: load_model(name, config.model_for(name), config.dim)
              for name in config.extractors}
    crop_embedder = models.get("image_embed")
    if "detect" in models and crop_embedder is None:
        # detection crops need an embedder even when image_embed is off
        crop_embedder = load_model("image_embed", config.model_for("image_embed"),
                                   config.dim)
    detect_map = load_detect_label_map() if "detect" in models else {}
    ner_map = load_ner_type_map() if "ner" in models else {}

    # decode pass: each image item is decoded once; a failure skips the
    # item for every image extractor and goes to the error log
    enabled_image = [n for n in IMAGE_EXTRACTORS if n in models]
    decoded: dict[int, object] = {}
    skips: list[dict] = []
    if enabled_image:
        for batch in _batches(image_items, config.batch_size):
            for idx, item in batch:
                try:
                    decoded[idx] = load_image(item.path)
                except OSError as exc:
                    skips.append({
                        "owner": _owner_obj(item),
                        "stage": "decode",
                        "error": str(exc),
                        "skipped_extractors": enabled_image,
                    })

    # one result slot per (item, kind); writer walks items in order
    results: dict[tuple[int, str], object] = {}
    unmapped_detections: dict[str, int] = {}
    unmapped_entities: dict[str, int] = {}

    if "text_embed" in models:
        backend = models["text_embed"]
        for batch in _batches(text_items, config.batch_size):
            for idx, item in batch:
                results[(idx, "embedding")] = [float(x) for x in
                                               backend.embed(item.text)]

    if "ner" in models:
        backend = models["ner"]
        for batch in _batches(text_items, config.batch_size):
            for idx, item in batch:
                payload = []
                for mention in backend.tag(item.text):
                    ner_index = ner_map.get(mention.entity_type)
                    if ner_index is None:
                        unmapped_entities[mention.entity_type] = (
                            unmapped_entities.get(mention.entity_type, 0) + 1
                        )
                        continue
                    payload.append({"surface": mention.surface,
                                    "ner_index": ner_index,
                                    "span": list(mention.span)})
                if payload:
                    results[(idx, "entity")] = payload

    if "image_embed" in models:
        backend = models["image_embed"]
        for batch in _batches(image_items, config.batch_size):
            for idx, item in batch:
                if idx in decoded:
                    results[(idx, "embedding")] = [float(x) for x in
                                                   backend.embed(decoded[idx])]

    if "detect" in models:
        backend = models["detect"]
        for batch in _batches(image_items, config.batch_size):
            for idx, item in batch:
                img = decoded.get(idx)
                if img is None:
                    continue
                h, w = img.shape[:2]
                payload = []
                for blob in backend.detect(img):
                    class_index = detect_map.get(blob.label)
                    if class_index is None:
                        unmapped_detections[blob.label] = (
                            unmapped_detections.get(blob.label, 0) + 1
                        )
                        continue
                    x0, y0, x1, y1 = blob.box
                    crop = img[int(round(y0 * h)):int(round(y1 * h)),
                               int(round(x0 * w)):int(round(x1 * w))]
                    payload.append({
                        "class_index": class_index,
                        "box": [x0, y0, x1, y1],
                        "crop_embedding": [float(x) for x in
                                           crop_embedder.embed(crop)],
                    })
                if payload:
                    results[(idx, "detection")] = payload

    if "caption" in models:
        backend = models["caption"]
        for batch in _batches(image_items, config.batch_size):
            for idx, item in batch:
                if idx in decoded:
                    results[(idx, "caption")] = backend.caption(decoded[idx])

    lines = []
    for idx, item in enumerate(items):
        kinds = ("embedding", "entity") if not item.is_image else \
                ("embedding", "detection", "caption")
        for kind in kinds:
            if (idx, kind) in results:
                lines.append({"owner": _owner_obj(item), "kind": kind,
                              "payload": results[(idx, kind)]})

    _atomic_write(out_path, "".join(_dumps(obj) + "\n" for obj in lines))

    summary = {
        "dim": config.dim,
        "n_records": len(lines),
        "n_skipped": len(skips),
        "n_unmapped_detections": sum(unmapped_detections.values()),
        "n_unmapped_entities": sum(unmapped_entities.values()),
    }
    log_path = out_path.with_name(out_path.stem + ".errors.jsonl")
    log_lines = [_dumps(entry) for entry in skips]
    log_lines.append(_dumps({"summary": {
        **summary,
        "unmapped_detection_labels": dict(sorted(unmapped_detections.items())),
        "unmapped_ner_types": dict(sorted(unmapped_entities.items())),
    }}))
    _atomic_write(log_path, "".join(line + "\n" for line in log_lines))
    return summary
