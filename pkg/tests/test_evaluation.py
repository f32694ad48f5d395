import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taggnn.evaluation import (Predictor, evaluate, precision_at_k, predict_topk,
                               report_to_json, subset_precision)
from taggnn.graph import NodeRef, NodeType
from taggnn.training import TrainConfig, train


class TestPrecisionAtK:
    def test_partial_overlap(self):
        assert precision_at_k(["t1", "t2", "t3"], {"t1", "t3"}, 3) == pytest.approx(2 / 3)

    def test_top_hit(self):
        assert precision_at_k(["t1", "t2"], {"t1"}, 1) == 1.0

    def test_empty_truth_rejected(self):
        with pytest.raises(ValueError, match="empty ground-truth"):
            precision_at_k(["t1"], set(), 1)

    def test_nonpositive_k_rejected(self):
        with pytest.raises(ValueError):
            precision_at_k(["t1"], {"t1"}, 0)

    @given(st.data())
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force_oracle(self, data):
        n = data.draw(st.integers(1, 20))
        preds = data.draw(st.permutations(range(n)))
        truth = data.draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=n))
        k = data.draw(st.integers(1, n))
        # brute force: walk the first k predictions, count membership
        hits = 0
        for p in list(preds)[:k]:
            if p in truth:
                hits += 1
        assert precision_at_k(list(preds), truth, k) == hits / k


class _StubPredictor:
    """Predictor stand-in with a fixed score matrix (items x tags)."""

    def __init__(self, scores):
        self.scores_matrix = np.asarray(scores, dtype=float)
        self.n_tags = self.scores_matrix.shape[1]

    def topk(self, item_index, k, exclude=()):
        s = self.scores_matrix[item_index].copy()
        order = np.lexsort((np.arange(self.n_tags), -s))
        return [int(t) for t in order if int(t) not in set(exclude)][:k]


class TestTopK:
    def _trained(self, toy_setup):
        _, splits, vocab, graph = toy_setup
        cfg = TrainConfig(dim=12, n_layers=1, max_epochs=8, seed=2)
        result = train(graph, splits, cfg, n_words=len(vocab))
        return result.model, graph

    def test_highest_similarity_first(self):
        stub = _StubPredictor([[0.9, 0.1]])
        assert stub.topk(0, 1) == [0]

    def test_tie_breaks_by_lower_index(self):
        stub = _StubPredictor([[0.5, 0.7, 0.7]])
        assert stub.topk(0, 2) == [1, 2]
        stub = _StubPredictor([[0.7, 0.7, 0.5]])
        assert stub.topk(0, 2) == [0, 1]

    def test_exclusion_shrinks_candidates(self, toy_setup):
        model, graph = self._trained(toy_setup)
        pred = Predictor(model, graph)
        exclude = set(range(graph.n_tags - 1))
        out = pred.topk(0, 3, exclude=exclude)
        assert out == [graph.n_tags - 1]

    def test_k_must_be_positive(self, toy_setup):
        model, graph = self._trained(toy_setup)
        with pytest.raises(ValueError):
            Predictor(model, graph).topk(0, 0)

    def test_predict_topk_accepts_noderef(self, toy_setup):
        model, graph = self._trained(toy_setup)
        direct = Predictor(model, graph).topk(3, 2)
        assert predict_topk(model, graph, NodeRef(NodeType.ITEM, 3), 2) == direct

    def test_rescaling_tag_reps_preserves_order(self, toy_setup):
        model, graph = self._trained(toy_setup)
        pred = Predictor(model, graph)
        before = [pred.topk(i, graph.n_tags) for i in range(graph.n_items)]
        pred._tag_reps = pred._tag_reps * 7.5
        after = [pred.topk(i, graph.n_tags) for i in range(graph.n_items)]
        assert before == after


class TestEvaluate:
    def test_oracle_scores_score_perfectly(self, toy_setup):
        dataset, splits, vocab, graph = toy_setup
        tag_pos = {t: n for n, t in enumerate(graph.tag_ids)}
        labels = np.zeros((graph.n_items, graph.n_tags))
        for item_id, _ in dataset.items:
            for t in dataset.item_tags(item_id):
                labels[dataset.item_index[item_id], tag_pos[t]] = 1.0
        oracle = _StubPredictor(labels)
        out = subset_precision(oracle, graph, splits,
                               roles=("test_full", "test_comp"), ks=(1, 3))
        # every fixture item has three tags: P@K = 1 wherever |truth| >= K
        assert out["test_full"]["p@1"] == 1.0
        assert out["test_full"]["p@3"] == 1.0
        assert out["test_comp"]["p@1"] == 1.0   # truth is the held-out pair

    def test_completion_ceiling_at_k5(self, toy_setup):
        dataset, splits, vocab, graph = toy_setup
        tag_pos = {t: n for n, t in enumerate(graph.tag_ids)}
        labels = np.zeros((graph.n_items, graph.n_tags))
        for item_id in splits.heldout:
            for t in splits.heldout[item_id]:
                labels[dataset.item_index[item_id], tag_pos[t]] = 1.0
        oracle = _StubPredictor(labels)
        out = subset_precision(oracle, graph, splits, roles=("test_comp",), ks=(5,))
        assert out["test_comp"]["p@5"] == pytest.approx(2 / 5)  # perfect model, |truth| = 2

    def test_known_tags_never_counted(self, toy_setup):
        dataset, splits, vocab, graph = toy_setup
        tag_pos = {t: n for n, t in enumerate(graph.tag_ids)}
        # adversarial model that puts all mass on the known tags
        scores = np.zeros((graph.n_items, graph.n_tags))
        for item_id, known in splits.known.items():
            for t in known:
                scores[dataset.item_index[item_id], tag_pos[t]] = 10.0
        out = subset_precision(_StubPredictor(scores), graph, splits,
                               roles=("test_comp",), ks=(1,))
        comp_items = [i for i, r in splits.roles.items() if r == "test_comp"]
        for item_id in comp_items:
            idx = dataset.item_index[item_id]
            ranked = _StubPredictor(scores).topk(idx, graph.n_tags,
                                                 exclude={tag_pos[t] for t in splits.known[item_id]})
            assert not {graph.tag_ids[t] for t in ranked} & splits.known[item_id]
        assert out["test_comp"]["p@1"] is not None

    def test_report_shape_and_determinism(self, toy_setup):
        _, splits, vocab, graph = toy_setup
        cfg = TrainConfig(dim=12, n_layers=1, max_epochs=6, seed=4)
        model = train(graph, splits, cfg, n_words=len(vocab)).model
        meta = {"config_hash": cfg.sha256(), "seed": cfg.seed, "epochs_trained": 6}
        r1 = evaluate(model, graph, splits, ks=(1, 3, 5), meta=meta)
        r2 = evaluate(model, graph, splits, ks=(1, 3, 5), meta=meta)
        assert report_to_json(r1) == report_to_json(r2)
        for section in ("without_tags", "partial_tags"):
            assert set(r1[section]) == {"p@1", "p@3", "p@5", "items"}
        assert r1["meta"]["config_hash"] == cfg.sha256()


def test_reproduces_golden_report(toydata_dir):
    # golden file generated by this implementation after the finite-difference
    # gradient sign-off; guards against silent numeric drift
    import os

    from taggnn import data as dmod
    from taggnn.graph import Vocabulary as V

    dataset = dmod.load_dataset(toydata_dir)
    splits = dmod.make_splits(dataset, (8, 2, 2), seed=11)
    vocab = V.from_texts(dataset.texts(), min_count=1)
    graph = dmod.dataset_to_graph(dataset, vocab, splits=splits)
    cfg = TrainConfig(dim=12, n_layers=2, max_epochs=12, patience=5, seed=11)
    result = train(graph, splits, cfg, n_words=len(vocab))
    report = evaluate(result.model, graph, splits, ks=(1, 3, 5), subset="test",
                      meta={"config_hash": cfg.sha256(), "seed": cfg.seed,
                            "epochs_trained": result.epochs_trained})
    golden = open(os.path.join(os.path.dirname(__file__), "golden",
                               "toydata_report.json"), encoding="utf-8").read()
    assert report_to_json(report) == golden
