"""Corpus ingestion: the two canonical input manifests.

Two kinds of raw input are supported:

* pair manifests -- UTF-8 text, one ``<text>\\t<image path>`` per line;
* news manifests -- UTF-8 text, one JSON object per line carrying a full
  news fact (title, content, time, images, hierarchical event label).

Parsing is pure: the records produced are a function of the file bytes
only, and ``parse_news_manifest(serialize_news_records(records))`` returns
an equal list.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateIdError, InvalidEventError, MalformedLineError, SchemaError

ARROW = "→"

# The eleven coarse event categories.  "Others" is a real category, not a
# catch-all for unknown labels: anything outside this list is rejected.
EVENT_CATEGORIES = (
    "Armed conflicts and attacks",
    "Arts and culture",
    "Business and economy",
    "Disasters and accidents",
    "Health and environment",
    "International relations",
    "Sports",
    "Law and crime",
    "Politics and elections",
    "Science and technology",
    "Others",
)


@dataclass(frozen=True)
class PairRecord:
    """One image-text pair from a tab-separated pair manifest."""

    pair_id: int
    text: str
    image_path: str


@dataclass(frozen=True)
class NewsRecord:
    """One news fact with hierarchical event annotation."""

    fact_id: int
    title: str
    content: str
    time: str
    image_paths: tuple[str, ...]
    image_descriptions: tuple[str, ...]
    event_description: str
    event_coarse: str
    event_fine: str
    event_attributes: dict[str, str] = field(default_factory=dict)

    @property
    def event(self) -> str:
        """The hierarchical event string, e.g. ``"Sports→2019 Daytona 500"``."""
        if self.event_fine:
            return f"{self.event_coarse}{ARROW}{self.event_fine}"
        return self.event_coarse


@dataclass(frozen=True)
class CorpusSummary:
    """Counts plus the owner index used to validate feature manifests.

    ``n_texts`` counts title and content of every news record plus the text
    of every pair.  The owner maps are not part of the summary proper but
    travel with it so downstream loaders can check that a referenced owner
    and selector actually exist.
    """

    n_pairs: int
    n_news: int
    n_images: int
    n_texts: int
    event_histogram: dict[str, int]
    fact_images: dict[int, int] = field(default_factory=dict)
    pair_ids: frozenset[int] = frozenset()


def split_event(label: str) -> tuple[str, str]:
    """Split a hierarchical event string into (coarse, fine).

    Both the arrow glyph and ASCII ``->`` are accepted as separator; a label
    without either yields an empty fine part.
    """
    for sep in (ARROW, "->"):
        if sep in label:
            coarse, fine = label.split(sep, 1)
            return coarse.strip(), fine.strip()
    return label.strip(), ""


def parse_pair_manifest(path: str | Path) -> list[PairRecord]:
    """Parse a ``<text>\\t<path>`` manifest into pair records.

    Ids are the 0-based ordinals of nonempty lines.  A nonempty line without
    a tab is malformed.
    """
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            if "\t" not in line:
                raise MalformedLineError(path, line_no, "expected '<text>\\t<path>'")
            text, image_path = line.split("\t", 1)
            if not text:
                raise MalformedLineError(path, line_no, "empty text before tab")
            records.append(PairRecord(pair_id=len(records), text=text, image_path=image_path))
    return records


def _news_from_obj(obj: dict, where: str) -> NewsRecord:
    required = (
        "fact_id", "title", "content", "time", "image_paths",
        "image_descriptions", "event_description", "event", "event_attributes",
    )
    missing = [key for key in required if key not in obj]
    if missing:
        raise SchemaError(f"{where}: missing keys {missing}")
    paths = list(obj["image_paths"])
    descriptions = list(obj["image_descriptions"])
    if len(paths) != len(descriptions):
        raise SchemaError(
            f"{where}: {len(paths)} image_paths but {len(descriptions)} image_descriptions"
        )
    coarse, fine = split_event(str(obj["event"]))
    if coarse not in EVENT_CATEGORIES:
        raise InvalidEventError(f"{where}: unknown coarse event {coarse!r}")
    return NewsRecord(
        fact_id=int(obj["fact_id"]),
        title=str(obj["title"]),
        content=str(obj["content"]),
        time=str(obj["time"]),
        image_paths=tuple(str(p) for p in paths),
        image_descriptions=tuple(str(d) for d in descriptions),
        event_description=str(obj["event_description"]),
        event_coarse=coarse,
        event_fine=fine,
        event_attributes={str(k): str(v) for k, v in dict(obj["event_attributes"]).items()},
    )


def parse_news_manifest(path: str | Path) -> list[NewsRecord]:
    """Parse a JSON-lines news manifest into news records."""
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLineError(path, line_no, f"invalid JSON: {exc}") from exc
            records.append(_news_from_obj(obj, f"{path}:{line_no}"))
    return records


def serialize_news_records(records: list[NewsRecord]) -> str:
    """Serialize news records to the JSON-lines manifest format."""
    lines = []
    for rec in records:
        obj = {
            "fact_id": rec.fact_id,
            "title": rec.title,
            "content": rec.content,
            "time": rec.time,
            "image_paths": list(rec.image_paths),
            "image_descriptions": list(rec.image_descriptions),
            "event_description": rec.event_description,
            "event": rec.event,
            "event_attributes": dict(rec.event_attributes),
        }
        lines.append(json.dumps(obj, ensure_ascii=False, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def serialize_pair_records(records: list[PairRecord]) -> str:
    """Serialize pair records to the tab-separated manifest format."""
    return "".join(f"{rec.text}\t{rec.image_path}\n" for rec in records)


def validate_corpus(pairs: list[PairRecord], news: list[NewsRecord]) -> CorpusSummary:
    """Check id uniqueness and summarize a parsed corpus."""
    pair_ids = [p.pair_id for p in pairs]
    dup = {i for i in pair_ids if pair_ids.count(i) > 1}
    if dup:
        raise DuplicateIdError("pair_id", dup)
    fact_ids = [n.fact_id for n in news]
    dup = {i for i in fact_ids if fact_ids.count(i) > 1}
    if dup:
        raise DuplicateIdError("fact_id", dup)

    histogram: dict[str, int] = {}
    for rec in news:
        histogram[rec.event_coarse] = histogram.get(rec.event_coarse, 0) + 1
    n_images = len(pairs) + sum(len(n.image_paths) for n in news)
    n_texts = len(pairs) + 2 * len(news)
    return CorpusSummary(
        n_pairs=len(pairs),
        n_news=len(news),
        n_images=n_images,
        n_texts=n_texts,
        event_histogram=histogram,
        fact_images={n.fact_id: len(n.image_paths) for n in news},
        pair_ids=frozenset(pair_ids),
    )
