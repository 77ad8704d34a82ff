"""Command-line entry point.

One subcommand per pipeline stage: ingest, featurize, build, stats,
sweep, split, train, eval, score, retrieve, classify.  Every run writes
a RunManifest (command, parameters, seeds, input digests, tool version)
next to its output; commands that print to stdout park the manifest in a
``manifests/`` folder beside their primary input.  Exit statuses: 0
success, 1 usage error, 2 data error, 3 internal error.  Diagnostics and
human summaries go to stderr; stdout carries only machine-readable JSON.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    parse_news_manifest,
    parse_pair_manifest,
    serialize_news_records,
    serialize_pair_records,
    validate_corpus,
)
from .construct import COSINE_CODES, build_graph
from .errors import UKnowError
from .features import (
    load_feature_manifest,
    stub_detections,
    stub_entities,
    stub_featurize,
)
from .reasoning import TrainConfig, TripleSet, evaluate, load_model, save_model, train
from .scoring import (
    build_zk,
    classification_eval,
    fact_retrieval_inputs,
    retrieval_eval,
    score_tik_terms,
)
from .store import (
    compute_stats,
    load_graph,
    load_split,
    save_graph,
    save_split,
    split as make_split,
    tau_sweep,
)
from .symbolize import edge_registry


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(location: Path, command: str, args: argparse.Namespace,
                    inputs: list[Path], seeds: dict) -> None:
    manifest = {
        "command": command,
        "parameters": {k: str(v) for k, v in sorted(vars(args).items())
                       if k != "func" and v is not None},
        "seeds": seeds,
        "input_hashes": {str(p): _sha256_file(p) for p in inputs if p.exists()},
        "tool_version": __version__,
    }
    _atomic_write_text(location, _dumps(manifest) + "\n")


def _manifest_for(out: Path | None, fallback_dir: Path, command: str) -> Path:
    if out is not None:
        if out.suffix == "" and (out.is_dir() or not out.exists()):
            return out / "run_manifest.json"
        return out.with_name(out.name + ".manifest.json")
    return fallback_dir / "manifests" / f"{command}.manifest.json"


def _emit(payload: dict, out: Path | None) -> None:
    text = _dumps(payload) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        _atomic_write_text(out, text)


def _load_corpus_dir(directory: Path):
    pairs_path = directory / "pairs.tsv"
    news_path = directory / "news.jsonl"
    if not pairs_path.exists() and not news_path.exists():
        raise UKnowError(f"{directory}: no pairs.tsv or news.jsonl found")
    pairs = parse_pair_manifest(pairs_path) if pairs_path.exists() else []
    news = parse_news_manifest(news_path) if news_path.exists() else []
    summary = validate_corpus(pairs, news)
    return pairs, news, summary


def _corpus_input_files(directory: Path) -> list[Path]:
    return [directory / "pairs.tsv", directory / "news.jsonl"]


# ---------------------------------------------------------------- commands


def _cmd_ingest(args) -> int:
    if args.pairs is None and args.news is None:
        raise _UsageError("ingest needs --pairs and/or --news")
    pairs = parse_pair_manifest(args.pairs) if args.pairs else []
    news = parse_news_manifest(args.news) if args.news else []
    summary = validate_corpus(pairs, news)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(out / "pairs.tsv", serialize_pair_records(pairs))
    _atomic_write_text(out / "news.jsonl", serialize_news_records(news))
    report = {
        "n_pairs": summary.n_pairs,
        "n_news": summary.n_news,
        "n_images": summary.n_images,
        "n_texts": summary.n_texts,
        "event_histogram": summary.event_histogram,
    }
    _atomic_write_text(out / "summary.json", _dumps(report) + "\n")
    inputs = [Path(p) for p in (args.pairs, args.news) if p]
    _write_manifest(out / "run_manifest.json", "ingest", args, inputs, {})
    sys.stdout.write(_dumps(report) + "\n")
    print(f"ingested corpus into {out}", file=sys.stderr)
    return 0


def _featurize_records(pairs, news, dim: int, seed: int, max_objects: int):
    """Stub features for every item, in canonical owner order.

    Image bytes are never read; the image path string is the hashed
    content, so equal path strings give equal stub vectors.
    """
    lines = []

    def add(owner_key, owner_id, selector, kind, payload):
        lines.append({"owner": {owner_key: owner_id, "selector": selector},
                      "kind": kind, "payload": payload})

    def add_text(owner_key, owner_id, selector, text):
        vec = stub_featurize(text, dim, seed)
        add(owner_key, owner_id, selector, "embedding",
            [float(x) for x in vec])
        ents = stub_entities(text, seed)
        if ents:
            add(owner_key, owner_id, selector, "entity",
                [{"surface": e.surface, "ner_index": e.ner_index,
                  "span": list(e.span)} for e in ents])

    def add_image(owner_key, owner_id, selector, path_str):
        vec = stub_featurize(path_str, dim, seed)
        add(owner_key, owner_id, selector, "embedding",
            [float(x) for x in vec])
        dets = stub_detections(path_str, dim, seed, max_objects)
        if dets:
            add(owner_key, owner_id, selector, "detection",
                [{"class_index": d.class_index, "box": list(d.box),
                  "crop_embedding": [float(x) for x in d.crop_embedding]}
                 for d in dets])

    for rec in sorted(news, key=lambda r: r.fact_id):
        add_text("fact_id", rec.fact_id, "title", rec.title)
        add_text("fact_id", rec.fact_id, "content", rec.content)
        for k, path_str in enumerate(rec.image_paths):
            add_image("fact_id", rec.fact_id, f"image[{k}]", path_str)
    for rec in sorted(pairs, key=lambda r: r.pair_id):
        add_text("pair_id", rec.pair_id, "pair_text", rec.text)
        add_image("pair_id", rec.pair_id, "pair_image", rec.image_path)
    return lines


def _cmd_featurize(args) -> int:
    if args.dim < 1:
        raise _UsageError("--dim must be >= 1")
    corpus_dir = Path(args.corpus)
    pairs, news, _ = _load_corpus_dir(corpus_dir)
    lines = _featurize_records(pairs, news, args.dim, args.seed,
                               args.max_objects)
    out = Path(args.out)
    _atomic_write_text(out, "".join(_dumps(obj) + "\n" for obj in lines))
    _write_manifest(out.with_name(out.name + ".manifest.json"), "featurize",
                    args, _corpus_input_files(corpus_dir),
                    {"seed": args.seed})
    sys.stdout.write(_dumps({"n_records": len(lines), "dim": args.dim}) + "\n")
    print(f"wrote {len(lines)} feature records to {out}", file=sys.stderr)
    return 0


def _cmd_build(args) -> int:
    if not 0.0 < args.tau <= 1.0:
        raise _UsageError("--tau must be in (0, 1]")
    if args.sim_topk is not None and args.sim_topk < 1:
        raise _UsageError("--sim-topk must be >= 1")
    corpus_dir = Path(args.corpus)
    pairs, news, summary = _load_corpus_dir(corpus_dir)
    store = load_feature_manifest(args.features, summary)
    if args.registry:
        edge_registry(args.registry)
    graph = build_graph(pairs, news, store, args.tau, args.seed,
                        topk=args.sim_topk)
    graph.check_invariants()
    if args.registry:
        graph.provenance["registry_overrides"] = str(args.registry)
    out = Path(args.out)
    save_graph(graph, out)
    inputs = _corpus_input_files(corpus_dir) + [Path(args.features)]
    _write_manifest(out / "run_manifest.json", "build", args, inputs,
                    {"seed": args.seed})
    report = {"n_nodes": len(graph.node_table), "n_edges": len(graph.edges),
              "tau": graph.tau}
    sys.stdout.write(_dumps(report) + "\n")
    print(f"built graph in {out}", file=sys.stderr)
    return 0


def _cmd_stats(args) -> int:
    directory = Path(args.graph)
    graph = load_graph(directory)
    stats = compute_stats(graph)
    payload = {"n_nodes": len(graph.node_table),
               "n_edges": len(graph.edges)} | stats.to_json()
    out = Path(args.out) if args.out else None
    _emit(payload, out)
    _write_manifest(_manifest_for(out, directory, "stats"), "stats", args,
                    [directory / "meta.json"], {})
    return 0


def _parse_taus(spec: str) -> list[float]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise _UsageError("--taus range must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise _UsageError("--taus step must be positive")
        taus = []
        t = start
        while t <= stop + 1e-12:
            taus.append(round(t, 12))
            t += step
        return taus
    return [float(p) for p in spec.split(",") if p]


def _cmd_sweep(args) -> int:
    taus = _parse_taus(args.taus)
    if not taus or any(b < a for a, b in zip(taus, taus[1:])):
        raise _UsageError("--taus must be a nonempty ascending list")
    if taus[0] <= 0 or taus[-1] > 1:
        raise _UsageError("--taus values must be in (0, 1]")
    directory = Path(args.graph)
    graph = load_graph(directory)
    structural = sum(1 for e in graph.edges if e.code not in COSINE_CODES)
    points = tau_sweep(graph.node_table, None, taus,
                       structural_edges=structural)
    payload = {"points": [{"tau": p.tau, "edge_count": p.edge_count,
                           "rho_mean": p.rho_mean} for p in points],
               "structural_edges": structural}
    out = Path(args.out) if args.out else None
    _emit(payload, out)
    _write_manifest(_manifest_for(out, directory, "sweep"), "sweep", args,
                    [directory / "meta.json"], {})
    return 0


def _cmd_split(args) -> int:
    ratios = tuple(float(r) for r in args.ratios.split(","))
    if len(ratios) != 3:
        raise _UsageError("--ratios must be three comma-separated reals")
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise _UsageError("--ratios must be positive and sum to 1")
    labels = tuple(args.labels.split(","))
    if len(labels) != 3 or len(set(labels)) != 3:
        raise _UsageError("--labels must be three distinct names")
    directory = Path(args.graph)
    graph = load_graph(directory)
    sp = make_split(graph, ratios, args.mode, args.seed, labels)
    save_split(directory, args.name, sp)
    tagged = sp.edge_labels(graph)
    sizes = {label: tagged.count(label) for label in labels}
    _write_manifest(directory / "splits" / f"{args.name}.manifest.json",
                    "split", args, [directory / "meta.json"],
                    {"seed": args.seed})
    sys.stdout.write(_dumps({"name": args.name, "mode": args.mode,
                             "edge_counts": sizes}) + "\n")
    return 0


def _cmd_train(args) -> int:
    if args.model != "transe":
        raise _UsageError(f"unknown model {args.model!r} (only transe ships)")
    directory = Path(args.graph)
    graph = load_graph(directory)
    if args.split_name:
        sp = load_split(directory, args.split_name)
        label = args.train_label or sp.labels[0]
        data = TripleSet.from_graph(graph, sp, label)
    else:
        data = TripleSet.from_graph(graph)
    cfg = TrainConfig(dim=args.dim, margin=args.margin, lr=args.lr,
                      epochs=args.epochs, negatives=args.negatives,
                      norm=args.norm, seed=args.seed,
                      plugin=(args.plugin == "on"),
                      neighbor_cap=args.neighbor_cap)
    model = train(data, cfg)
    out = Path(args.out)
    save_model(model, out)
    _write_manifest(out / "run_manifest.json", "train", args,
                    [directory / "meta.json"], {"seed": args.seed})
    report = {"n_triples": int(data.triples.shape[0]),
              "epochs": cfg.epochs,
              "final_loss": model.loss_curve[-1] if model.loss_curve else None}
    sys.stdout.write(_dumps(report) + "\n")
    print(f"trained model saved to {out}", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    model = load_model(Path(args.model))
    directory = Path(args.graph)
    graph = load_graph(directory)
    if args.split:
        sp = load_split(directory, args.split_name)
        test = sp.triples_for(graph, args.split)
    else:
        test = graph.triples()
    if test.shape[0] == 0:
        raise UKnowError("selected evaluation partition has no triples")
    metrics = evaluate(model, test, graph.triples())
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    known = {"mrr", "h@1", "h@3", "h@10"}
    bad = [m for m in wanted if m not in known]
    if bad:
        raise _UsageError(f"unknown metrics: {', '.join(bad)}")
    payload = {m: metrics[m] for m in wanted}
    payload["n_queries"] = metrics["n_queries"]
    payload["seed"] = model.cfg.seed
    out = Path(args.out) if args.out else None
    _emit(payload, out)
    _write_manifest(_manifest_for(out, directory, "eval"), "eval", args,
                    [directory / "meta.json", Path(args.model) / "model.json"],
                    {"seed": model.cfg.seed})
    return 0


def _cmd_score(args) -> int:
    directory = Path(args.graph)
    graph = load_graph(directory)
    source = None
    inputs = [directory / "meta.json"]
    if args.source == "model":
        if not args.model:
            raise _UsageError("--source model requires --model DIR")
        source = load_model(Path(args.model))
        inputs.append(Path(args.model) / "model.json")
    n = len(graph.node_table)
    for nid, want in ((args.image_node, "image"), (args.text_node, "text")):
        if not 0 <= nid < n:
            raise UKnowError(f"node id {nid} outside 0..{n - 1}")
        if graph.node_table.node(nid).modality != want:
            raise UKnowError(f"node {nid} is not a {want} node")
    zk = build_zk(args.image_node, args.text_node, graph, source)
    if source is None:
        zi = graph.node_table.embedding_of(args.image_node)
        zt = graph.node_table.embedding_of(args.text_node)
        if zi is None or zt is None:
            missing = args.image_node if zi is None else args.text_node
            raise UKnowError(f"node {missing} has no stored feature vector")
    else:
        reps = source.entity_reps()
        zi = reps[args.image_node]
        zt = reps[args.text_node]
    terms = score_tik_terms(zt, zi, zk)
    payload = {"terms": [float(t) for t in terms],
               "total": float(sum(terms))}
    out = Path(args.out) if args.out else None
    _emit(payload, out)
    _write_manifest(_manifest_for(out, directory, "score"), "score", args,
                    inputs, {})
    return 0


def _cmd_retrieve(args) -> int:
    if args.k < 1:
        raise _UsageError("--k must be >= 1")
    modes = ("img2img", "txt2txt", "img2txt", "txt2img")
    if args.mode != "all" and args.mode not in modes:
        raise _UsageError(f"--mode must be one of {modes} or all")
    directory = Path(args.graph)
    graph = load_graph(directory)
    source = None
    inputs = [directory / "meta.json"]
    if args.source == "model":
        if not args.model:
            raise _UsageError("--source model requires --model DIR")
        source = load_model(Path(args.model))
        inputs.append(Path(args.model) / "model.json")
    fact_ids, img_embs, txt_embs, labels = fact_retrieval_inputs(graph, source)
    if not fact_ids:
        raise UKnowError("no facts with both image and text vectors")
    results = retrieval_eval(img_embs, txt_embs, labels, args.k)
    n_eligible = len([i for i in range(len(labels))
                      if labels.count(labels[i]) >= 2])
    wanted = modes if args.mode == "all" else (args.mode,)
    payload = {f"r@{args.k}": {m: results[m] for m in wanted},
               "n_items": len(fact_ids), "n_eligible": n_eligible}
    out = Path(args.out) if args.out else None
    _emit(payload, out)
    _write_manifest(_manifest_for(out, directory, "retrieve"), "retrieve",
                    args, inputs, {})
    return 0


def _cmd_classify(args) -> int:
    ks = []
    for part in args.k.split(","):
        part = part.strip()
        if part:
            k = int(part)
            if k < 1:
                raise _UsageError("--k values must be >= 1")
            ks.append(k)
    if not ks:
        raise _UsageError("--k must list at least one cutoff")
    scores_path = Path(args.scores)
    labels_path = Path(args.labels)
    scores = np.asarray(json.loads(scores_path.read_text(encoding="utf-8")),
                        dtype=np.float64)
    labels = json.loads(labels_path.read_text(encoding="utf-8"))
    payload = {f"acc@{k}": classification_eval(scores, labels, k) for k in ks}
    payload["n_queries"] = int(scores.shape[0]) if scores.ndim == 2 else 0
    out = Path(args.out) if args.out else None
    _emit(payload, out)
    manifest = (out.with_name(out.name + ".manifest.json") if out
                else scores_path.with_name(scores_path.name
                                           + ".classify.manifest.json"))
    _write_manifest(manifest, "classify", args, [scores_path, labels_path], {})
    return 0


# ---------------------------------------------------------------- parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="uknow",
                     description="Multimodal knowledge graph pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="validate and normalize a corpus")
    p.add_argument("--pairs")
    p.add_argument("--news")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("featurize", help="emit deterministic stub features")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-objects", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("build", help="build the five-view graph")
    p.add_argument("--corpus", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--tau", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sim-topk", type=int, default=None)
    p.add_argument("--registry", default=None,
                   help="JSON file overriding edge-code names/views")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("stats", help="graph statistics")
    p.add_argument("graph")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("sweep", help="similarity threshold sweep")
    p.add_argument("graph")
    p.add_argument("--taus", required=True,
                   help="comma list or start:stop:step")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("split", help="partition the graph")
    p.add_argument("graph")
    p.add_argument("--ratios", default="0.8,0.15,0.05")
    p.add_argument("--mode", choices=("triple", "fact"), default="triple")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="default")
    p.add_argument("--labels", default="train,val,test")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train link-prediction embeddings")
    p.add_argument("graph")
    p.add_argument("--model", default="transe")
    p.add_argument("--plugin", choices=("on", "off"), default="off")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--negatives", type=int, default=1)
    p.add_argument("--norm", choices=("L1", "L2"), default="L1")
    p.add_argument("--neighbor-cap", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-name", default=None)
    p.add_argument("--train-label", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="filtered MRR / Hits@N evaluation")
    p.add_argument("model")
    p.add_argument("graph")
    p.add_argument("--split", default=None,
                   help="partition label to evaluate (e.g. test)")
    p.add_argument("--split-name", default="default")
    p.add_argument("--metrics", default="mrr,h@1,h@3,h@10")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("score", help="knowledge-augmented similarity score")
    p.add_argument("graph")
    p.add_argument("--image-node", type=int, required=True)
    p.add_argument("--text-node", type=int, required=True)
    p.add_argument("--source", choices=("graph", "model"), default="graph")
    p.add_argument("--model")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("retrieve", help="event-cluster retrieval metrics")
    p.add_argument("graph")
    p.add_argument("--mode", default="all")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--source", choices=("graph", "model"), default="graph")
    p.add_argument("--model")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("classify", help="ACC@K over a score matrix")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--k", default="1,5")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_classify)

    return parser


def dispatch(argv) -> int:
    """Route argv to a subcommand; exceptions map to exit statuses."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            print("error: a subcommand is required", file=sys.stderr)
            return 1
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse's --help/--version path exits 0; anything else is usage
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    except UKnowError as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive catch-all
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
