"""Translation-embedding training, ranking and model persistence."""
from __future__ import annotations

import numpy as np
import pytest

import uknow.reasoning as reasoning
from uknow.errors import DivergenceError, MissingManifestError
from uknow.reasoning import (
    EmbeddingTable,
    Model,
    TrainConfig,
    TripleQuery,
    TripleSet,
    evaluate,
    init_embeddings,
    load_model,
    margin_loss,
    metrics_from_ranks,
    neighbor_aggregate,
    rank_answer,
    save_model,
    train,
    train_step,
    transe_score,
)
from uknow.symbolize import N_CODES

import helpers


def manual_model(entities, relations=None, norm="L1"):
    entities = np.asarray(entities, dtype=np.float64)
    dim = entities.shape[1]
    if relations is None:
        relations = np.zeros((N_CODES, dim))
    cfg = TrainConfig(dim=dim, norm=norm)
    table = EmbeddingTable(entities, np.asarray(relations, dtype=np.float64))
    return Model(table=table, plugin=None, neighbor_lists=None,
                 loss_curve=[], cfg=cfg)


def path_triples(n=10, relation=0):
    return np.array([[i, relation, i + 1] for i in range(n - 1)],
                    dtype=np.int64)


class TestTrainConfig:
    def test_defaults_valid(self):
        cfg = TrainConfig()
        assert cfg.dim == 64
        assert cfg.norm == "L1"

    @pytest.mark.parametrize("kwargs", [
        {"dim": 0},
        {"margin": -0.5},
        {"lr": 0.0},
        {"epochs": -1},
        {"negatives": 0},
        {"norm": "L3"},
        {"plugin": True, "neighbor_cap": 1},
    ])
    def test_invalid_configs(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestInitEmbeddings:
    def test_shapes(self):
        table, params = init_embeddings(25, TrainConfig(dim=16))
        assert table.entities.shape == (25, 16)
        assert table.relations.shape == (N_CODES, 16)
        assert params is None

    def test_entities_unit_norm(self):
        table, _ = init_embeddings(40, TrainConfig(dim=16, seed=3))
        norms = np.linalg.norm(table.entities, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-9

    def test_deterministic(self):
        a, _ = init_embeddings(10, TrainConfig(dim=8, seed=5))
        b, _ = init_embeddings(10, TrainConfig(dim=8, seed=5))
        assert np.array_equal(a.entities, b.entities)
        assert np.array_equal(a.relations, b.relations)

    def test_seed_sensitivity(self):
        a, _ = init_embeddings(10, TrainConfig(dim=8, seed=0))
        b, _ = init_embeddings(10, TrainConfig(dim=8, seed=1))
        assert not np.array_equal(a.entities, b.entities)

    def test_relation_bound(self):
        table, _ = init_embeddings(10, TrainConfig(dim=16, seed=2))
        bound = 6.0 / np.sqrt(16)
        assert np.max(np.abs(table.relations)) <= bound

    def test_from_triple_set(self):
        ts = TripleSet(path_triples(5), 5)
        table, _ = init_embeddings(ts, TrainConfig(dim=8))
        assert table.n_entities == 5

    def test_from_graph(self, toy_graph):
        table, _ = init_embeddings(toy_graph, TrainConfig(dim=8))
        assert table.n_entities == len(toy_graph.node_table)

    def test_zero_entities_rejected(self):
        with pytest.raises(ValueError):
            init_embeddings(0, TrainConfig(dim=8))

    def test_plugin_params_created(self):
        table, params = init_embeddings(10, TrainConfig(dim=8, plugin=True,
                                                        neighbor_cap=4))
        assert params is not None
        assert params.dim == 8


class TestTripleSet:
    def test_filter_defaults_to_triples(self):
        ts = TripleSet(path_triples(5), 5)
        assert np.array_equal(ts.filter_triples, ts.triples)

    def test_explicit_filter_kept(self):
        extra = np.array([[0, 1, 4]])
        ts = TripleSet(path_triples(5), 5, filter_triples=extra)
        assert ts.filter_triples.shape == (1, 3)

    def test_from_graph_whole(self, toy_graph):
        ts = TripleSet.from_graph(toy_graph)
        assert ts.triples.shape == (len(toy_graph.edges), 3)
        assert ts.n_entities == len(toy_graph.node_table)


class TestScore:
    def test_exact_translation_scores_zero(self):
        entities = np.array([[0.0, 0.0], [1.0, 1.0]])
        relations = np.zeros((N_CODES, 2))
        relations[5] = [1.0, 1.0]
        table = EmbeddingTable(entities, relations)
        assert transe_score(0, 5, 1, table, "L1") == pytest.approx(0.0)
        assert transe_score(0, 5, 1, table, "L2") == pytest.approx(0.0)

    def test_l1_l2_hand_values(self):
        entities = np.zeros((2, 2))
        relations = np.zeros((N_CODES, 2))
        relations[0] = [1.0, -1.0]
        table = EmbeddingTable(entities, relations)
        assert transe_score(0, 0, 1, table, "L1") == pytest.approx(2.0)
        assert transe_score(0, 0, 1, table, "L2") == pytest.approx(np.sqrt(2))

    def test_validation(self):
        table = EmbeddingTable(np.zeros((2, 2)), np.zeros((N_CODES, 2)))
        with pytest.raises(ValueError):
            transe_score(2, 0, 0, table)
        with pytest.raises(ValueError):
            transe_score(0, N_CODES, 0, table)
        with pytest.raises(ValueError):
            transe_score(0, 0, 1, table, norm="L0")

    def test_margin_loss_cases(self):
        assert margin_loss(0.0, 2.0, 1.0) == 0.0
        assert margin_loss(1.0, 1.0, 1.0) == 1.0
        assert margin_loss(2.0, 1.0, 0.5) == 1.5
        assert margin_loss(0.0, 1.0, 1.0) == 0.0


class TestTrainStep:
    def test_inactive_hinge_no_updates(self):
        entities = np.array([[0.0, 0.0], [0.0, 0.0], [9.0, 9.0]])
        relations = np.zeros((N_CODES, 2))
        table = EmbeddingTable(entities.copy(), relations.copy())
        cfg = TrainConfig(dim=2, margin=1.0, norm="L1")
        loss = train_step(table, None, None, (0, 0, 1), (0, 0, 2), cfg)
        assert loss == 0.0
        assert np.array_equal(table.entities, entities)
        assert np.array_equal(table.relations, relations)

    def test_active_hinge_exact_updates(self):
        """Hand-traced L1 step: shared head accumulates both signs."""
        entities = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        relations = np.zeros((N_CODES, 2))
        table = EmbeddingTable(entities, relations)
        cfg = TrainConfig(dim=2, margin=10.0, lr=0.1, norm="L1")
        loss = train_step(table, None, None, (0, 5, 1), (0, 5, 2), cfg)
        assert loss == pytest.approx(10.0)
        assert np.allclose(table.entities[0], [0.1, -0.1])
        assert np.allclose(table.entities[1], [0.9, 0.0])
        assert np.allclose(table.entities[2], [0.0, 1.1])
        assert np.allclose(table.relations[5], [0.1, -0.1])

    def test_loss_value_matches_definition(self):
        rng = np.random.default_rng(4)
        entities = rng.normal(size=(4, 6))
        relations = rng.normal(size=(N_CODES, 6))
        table = EmbeddingTable(entities.copy(), relations.copy())
        cfg = TrainConfig(dim=6, margin=3.0, norm="L2")
        d_pos = transe_score(0, 7, 1, table, "L2")
        d_neg = transe_score(2, 7, 3, table, "L2")
        loss = train_step(table, None, None, (0, 7, 1), (2, 7, 3), cfg)
        assert loss == pytest.approx(margin_loss(d_pos, d_neg, 3.0))


class TestTrain:
    def test_empty_triples_rejected(self):
        ts = TripleSet(np.zeros((0, 3), dtype=np.int64), 5)
        with pytest.raises(ValueError):
            train(ts, TrainConfig(dim=8, epochs=1))

    def test_zero_epochs(self):
        ts = TripleSet(path_triples(6), 6)
        model = train(ts, TrainConfig(dim=8, epochs=0))
        assert model.loss_curve == []
        norms = np.linalg.norm(model.table.entities, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-6

    def test_deterministic_plain(self):
        ts = TripleSet(path_triples(12), 12)
        cfg = TrainConfig(dim=8, epochs=5, seed=3, negatives=2)
        a = train(ts, cfg)
        b = train(ts, cfg)
        assert np.array_equal(a.table.entities, b.table.entities)
        assert np.array_equal(a.table.relations, b.table.relations)
        assert a.loss_curve == b.loss_curve

    def test_deterministic_plugin(self):
        ts = TripleSet(path_triples(8), 8)
        cfg = TrainConfig(dim=8, epochs=2, seed=1, plugin=True,
                          neighbor_cap=4)
        a = train(ts, cfg)
        b = train(ts, cfg)
        assert np.array_equal(a.table.entities, b.table.entities)
        assert np.array_equal(a.plugin.w1, b.plugin.w1)
        assert a.loss_curve == b.loss_curve

    def test_seed_changes_result(self):
        ts = TripleSet(path_triples(12), 12)
        a = train(ts, TrainConfig(dim=8, epochs=3, seed=0))
        b = train(ts, TrainConfig(dim=8, epochs=3, seed=1))
        assert not np.array_equal(a.table.entities, b.table.entities)

    def test_loss_decreases(self):
        ts = TripleSet(path_triples(12), 12)
        cfg = TrainConfig(dim=16, margin=2.0, lr=0.05, epochs=40,
                          negatives=4, seed=0)
        model = train(ts, cfg)
        curve = model.loss_curve
        assert len(curve) == 40
        assert np.mean(curve[-5:]) < np.mean(curve[:5])

    def test_entities_unit_after_training(self):
        ts = TripleSet(path_triples(12), 12)
        model = train(ts, TrainConfig(dim=8, epochs=4, seed=2))
        norms = np.linalg.norm(model.table.entities, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-6

    def test_divergence_names_epoch(self, monkeypatch):
        monkeypatch.setattr(reasoning, "margin_loss",
                            lambda d_pos, d_neg, margin: float("nan"))
        ts = TripleSet(path_triples(6), 6)
        with pytest.raises(DivergenceError) as info:
            train(ts, TrainConfig(dim=8, epochs=2))
        assert info.value.epoch == 0

    def test_plugin_model_reps_differ_from_raw(self):
        ts = TripleSet(path_triples(8), 8)
        model = train(ts, TrainConfig(dim=8, epochs=1, plugin=True,
                                      neighbor_cap=4))
        assert not np.allclose(model.entity_reps(), model.table.entities)

    def test_neighbor_aggregate_matches_reps(self):
        ts = TripleSet(path_triples(8), 8)
        model = train(ts, TrainConfig(dim=8, epochs=1, plugin=True,
                                      neighbor_cap=4, seed=4))
        reps = model.entity_reps()
        for e in (0, 3, 7):
            vec = neighbor_aggregate(e, ts, model.table, model.plugin)
            assert np.allclose(reps[e], vec)


class TestRankAnswer:
    def test_strictly_best_ranks_first(self):
        entities = [[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [-3.0, 2.0]]
        relations = np.zeros((N_CODES, 2))
        relations[0] = [1.0, 0.0]
        model = manual_model(entities, relations)
        rank = rank_answer(TripleQuery(0, 0, "tail"), 1, model)
        assert rank == 1

    def test_all_tied_ranks_last(self):
        model = manual_model(np.ones((7, 3)))
        rank = rank_answer(TripleQuery(0, 0, "tail"), 4, model)
        assert rank == 7

    def test_head_direction_orientation(self):
        entities = [[0.0, 0.0], [1.0, 1.0], [4.0, -4.0]]
        relations = np.zeros((N_CODES, 2))
        relations[9] = [1.0, 1.0]
        model = manual_model(entities, relations)
        assert rank_answer(TripleQuery(1, 9, "head"), 0, model) == 1

    def test_filtering_never_hurts(self):
        rng = np.random.default_rng(11)
        model = manual_model(rng.normal(size=(30, 8)),
                             rng.normal(size=(N_CODES, 8)))
        for q in range(10):
            query = TripleQuery(int(rng.integers(30)), int(rng.integers(5)))
            answer = int(rng.integers(30))
            others = [i for i in range(30) if i != answer][:5]
            raw = rank_answer(query, answer, model)
            filt = rank_answer(query, answer, model, filter_ids=others)
            assert filt <= raw

    def test_answer_in_filter_still_counted(self):
        model = manual_model(np.ones((5, 3)))
        rank = rank_answer(TripleQuery(0, 0, "tail"), 2, model,
                           filter_ids=[2])
        assert rank == 5

    def test_matches_brute_force(self):
        rng = np.random.default_rng(23)
        for trial in range(3):
            n = int(rng.integers(10, 40))
            model = manual_model(rng.normal(size=(n, 6)),
                                 rng.normal(size=(N_CODES, 6)),
                                 norm="L2" if trial % 2 else "L1")
            reps = model.entity_reps()
            for _ in range(50):
                query = TripleQuery(int(rng.integers(n)),
                                    int(rng.integers(10)),
                                    "head" if rng.random() < 0.5 else "tail")
                answer = int(rng.integers(n))
                filt = [int(x) for x in
                        rng.choice(n, size=min(4, n), replace=False)]
                got = rank_answer(query, answer, model, filter_ids=filt)
                want = helpers.brute_force_rank(
                    reps, model.table.relations[query.relation],
                    query.entity, query.direction, answer, filt,
                    model.cfg.norm)
                assert got == want

    def test_validation(self):
        model = manual_model(np.ones((4, 2)))
        with pytest.raises(ValueError):
            rank_answer(TripleQuery(0, 0, "tail"), 9, model)
        with pytest.raises(ValueError):
            rank_answer(TripleQuery(9, 0, "tail"), 0, model)
        with pytest.raises(ValueError):
            rank_answer(TripleQuery(0, N_CODES, "tail"), 1, model)
        with pytest.raises(ValueError):
            rank_answer(TripleQuery(0, 0, "sideways"), 1, model)


class TestMetrics:
    def test_perfect_ranks(self):
        m = metrics_from_ranks([1, 1, 1])
        assert m == {"mrr": 1.0, "h@1": 1.0, "h@3": 1.0, "h@10": 1.0,
                     "n_queries": 3}

    def test_rank_four(self):
        m = metrics_from_ranks([4])
        assert m["mrr"] == pytest.approx(0.25)
        assert m["h@1"] == 0.0
        assert m["h@3"] == 0.0
        assert m["h@10"] == 1.0

    def test_mixed(self):
        m = metrics_from_ranks([1, 4])
        assert m["mrr"] == pytest.approx(0.625)
        assert m["h@1"] == 0.5

    def test_beyond_ten(self):
        assert metrics_from_ranks([12])["h@10"] == 0.0

    def test_hits_monotone(self):
        rng = np.random.default_rng(0)
        m = metrics_from_ranks(rng.integers(1, 30, size=50))
        assert m["h@1"] <= m["h@3"] <= m["h@10"]

    def test_validation(self):
        with pytest.raises(ValueError):
            metrics_from_ranks([])
        with pytest.raises(ValueError):
            metrics_from_ranks([1, 0])


class TestEvaluate:
    def test_both_directions_counted(self):
        model = manual_model(np.eye(6, 4))
        metrics = evaluate(model, path_triples(6))
        assert metrics["n_queries"] == 10

    def test_empty_rejected(self):
        model = manual_model(np.eye(4, 4))
        with pytest.raises(ValueError):
            evaluate(model, np.zeros((0, 3), dtype=np.int64))

    def test_permutation_invariant(self):
        rng = np.random.default_rng(6)
        model = manual_model(rng.normal(size=(15, 6)),
                             rng.normal(size=(N_CODES, 6)))
        triples = np.array([[i, i % 4, (i * 3 + 1) % 15] for i in range(12)
                            if i != (i * 3 + 1) % 15])
        a = evaluate(model, triples)
        b = evaluate(model, triples[::-1])
        assert a == b

    def test_known_triples_filter_improves(self):
        """A known alternative answer that outranks the test answer is
        removed from the candidate pool."""
        entities = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]
        relations = np.zeros((N_CODES, 2))
        relations[0] = [1.0, 0.0]
        model = manual_model(entities, relations)
        test = np.array([[0, 0, 2]])
        known = np.array([[0, 0, 1], [0, 0, 2]])
        plain = evaluate(model, test)
        filtered = evaluate(model, test, known_triples=known)
        assert filtered["mrr"] > plain["mrr"]


class TestModelIO:
    def test_plain_round_trip(self, tmp_path):
        ts = TripleSet(path_triples(10), 10)
        model = train(ts, TrainConfig(dim=8, epochs=3, seed=5))
        save_model(model, tmp_path / "m")
        loaded = load_model(tmp_path / "m")
        assert np.array_equal(loaded.table.entities, model.table.entities)
        assert np.array_equal(loaded.table.relations, model.table.relations)
        assert loaded.cfg == model.cfg
        assert loaded.loss_curve == model.loss_curve
        assert loaded.plugin is None

    def test_plugin_round_trip(self, tmp_path):
        ts = TripleSet(path_triples(8), 8)
        model = train(ts, TrainConfig(dim=8, epochs=1, plugin=True,
                                      neighbor_cap=4, seed=2))
        save_model(model, tmp_path / "m")
        loaded = load_model(tmp_path / "m")
        assert np.array_equal(loaded.plugin.conv, model.plugin.conv)
        assert loaded.plugin.conv_bias == model.plugin.conv_bias
        assert np.array_equal(loaded.plugin.w2, model.plugin.w2)
        assert loaded.neighbor_lists == model.neighbor_lists
        assert np.array_equal(loaded.entity_reps(), model.entity_reps())

    def test_loaded_model_scores_identically(self, tmp_path):
        ts = TripleSet(path_triples(10), 10)
        model = train(ts, TrainConfig(dim=8, epochs=2, seed=7))
        save_model(model, tmp_path / "m")
        loaded = load_model(tmp_path / "m")
        assert evaluate(loaded, ts.triples) == evaluate(model, ts.triples)

    def test_missing_dir(self, tmp_path):
        with pytest.raises(MissingManifestError):
            load_model(tmp_path / "absent")
