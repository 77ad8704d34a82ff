"""Session fixtures: the packaged toy corpus pipeline and the shared
lattice-graph training run used by the acceptance suite."""
from __future__ import annotations

import time
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

import helpers
from uknow.cli import main as cli_main
from uknow.construct import build_graph
from uknow.corpus import parse_news_manifest, parse_pair_manifest, validate_corpus
from uknow.features import load_feature_manifest
from uknow.reasoning import TrainConfig, TripleSet, evaluate, train

TOY_FEATURE_SEED = 7
TOY_DIM = 64
TOY_TAU = 0.8
TOY_BUILD_SEED = 11

GRID_TRAIN_CFG = dict(dim=32, margin=2.0, lr=0.01, epochs=200,
                      negatives=16, norm="L1")


@pytest.fixture(scope="session")
def toy_dir() -> Path:
    path = Path(str(resources.files("uknow") / "data" / "toy"))
    assert (path / "pairs.tsv").exists() and (path / "news.jsonl").exists()
    return path


@pytest.fixture(scope="session")
def toy_corpus(toy_dir):
    pairs = parse_pair_manifest(toy_dir / "pairs.tsv")
    news = parse_news_manifest(toy_dir / "news.jsonl")
    return pairs, news


@pytest.fixture(scope="session")
def toy_summary(toy_corpus):
    pairs, news = toy_corpus
    return validate_corpus(pairs, news)


@pytest.fixture(scope="session")
def toy_features(toy_dir, toy_summary, tmp_path_factory):
    out = tmp_path_factory.mktemp("toyfeat") / "features.jsonl"
    status = cli_main(["featurize", "--corpus", str(toy_dir),
                       "--dim", str(TOY_DIM), "--seed", str(TOY_FEATURE_SEED),
                       "--out", str(out)])
    assert status == 0
    return load_feature_manifest(out, toy_summary)


@pytest.fixture(scope="session")
def toy_graph(toy_corpus, toy_features):
    pairs, news = toy_corpus
    return build_graph(pairs, news, toy_features, tau=TOY_TAU,
                       seed=TOY_BUILD_SEED)


@pytest.fixture(scope="session")
def grid_data():
    train_t, test_t = helpers.grid_triples(seed=0)
    all_t = np.concatenate([train_t, test_t])
    return train_t, test_t, all_t


@pytest.fixture(scope="session")
def grid_transe_seed0(grid_data):
    """The seed-0 reference TransE run on the lattice graph, shared by the
    reasoning-sanity and plug-in acceptance checks.  Returns the model,
    its filtered metrics, and the wall seconds spent training so callers
    can charge the run against their own time budgets."""
    train_t, test_t, all_t = grid_data
    cfg = TrainConfig(seed=0, **GRID_TRAIN_CFG)
    data = TripleSet(train_t, helpers.GRID_W * helpers.GRID_H,
                     filter_triples=all_t)
    t0 = time.monotonic()
    model = train(data, cfg)
    metrics = evaluate(model, test_t, known_triples=all_t)
    seconds = time.monotonic() - t0
    return model, metrics, seconds
