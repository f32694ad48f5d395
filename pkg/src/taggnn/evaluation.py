"""Top-K tag inference and the Precision@K harness.

A trained model is frozen into a :class:`Predictor` (one dropout-free
forward pass); ranking is by dot-product similarity against every tag, or by
head logits for the query-item variant.  Completion items never see their
known tags among the candidates.
"""

import json

import numpy as np


def precision_at_k(predicted, truth, k):
    """Fraction of the first ``k`` predictions that are in the truth set."""
    if k <= 0:
        raise ValueError("k must be positive")
    truth = set(truth)
    if not truth:
        raise ValueError("empty ground-truth set")
    hits = sum(1 for p in predicted[:k] if p in truth)
    return hits / k


class Predictor:
    """Frozen model + graph: caches one eval-mode forward for repeated ranking."""

    def __init__(self, model, graph):
        self.model = model
        self.graph = graph
        out = model.forward(graph, train_mode=False)
        self._item_reps = out.item_reps.data
        self._tag_reps = out.tag_reps.data if out.tag_reps is not None else None
        self._head_logits = out.head_logits.data if out.head_logits is not None else None
        self.n_tags = graph.n_tags

    def scores(self, item_index):
        """Similarity of one item against every tag."""
        if self.model.variant.kind == "qi":
            return self._head_logits[item_index].copy()
        return self._tag_reps @ self._item_reps[item_index]

    def topk(self, item_index, k, exclude=()):
        """Indices of the best-scoring tags; ties go to the lower tag index."""
        if k <= 0:
            raise ValueError("k must be positive")
        s = self.scores(item_index)
        if exclude:
            s = s.copy()
            s[list(exclude)] = -np.inf
        order = np.lexsort((np.arange(self.n_tags), -s))
        out = []
        for t in order:
            t = int(t)
            if exclude and t in exclude:
                continue
            out.append(t)
            if len(out) == k:
                break
        return out


def predict_topk(model, graph, item, k, exclude=()):
    """One-off top-K prediction for a single item node (NodeRef or index)."""
    index = item if isinstance(item, int) else item.index
    return Predictor(model, graph).topk(index, k, exclude=exclude)


def _role_items(graph, splits, role):
    pos = {item_id: i for i, item_id in enumerate(graph.item_ids)}
    out = [(pos[item_id], item_id) for item_id, r in splits.roles.items()
           if r == role and item_id in pos]
    return sorted(out)


def _subset_scores(predictor, graph, splits, role, ks):
    """Macro-averaged P@K for one role; completion items exclude known tags."""
    tag_pos = {tag_id: t for t, tag_id in enumerate(graph.tag_ids)}
    completion = role.endswith("_comp")
    per_k = {k: [] for k in ks}
    items = _role_items(graph, splits, role)
    for index, item_id in items:
        truth_ids = splits.truth.get(item_id)
        if not truth_ids:
            raise ValueError(f"no ground-truth tags recorded for item {item_id!r}")
        truth = {tag_pos[t] for t in truth_ids}
        exclude = {tag_pos[t] for t in splits.known.get(item_id, ())} if completion else set()
        ranked = predictor.topk(index, max(ks), exclude=exclude)
        for k in ks:
            per_k[k].append(precision_at_k(ranked, truth, k))
    out = {f"p@{k}": (float(np.mean(per_k[k])) if items else None) for k in ks}
    out["items"] = len(items)
    return out


def subset_precision(model, graph, splits, roles, ks=(1, 3, 5)):
    """P@K per role over the given split roles (shared forward pass).

    ``model`` may be anything with a Predictor-style ``topk``; a raw model is
    frozen into one here.
    """
    predictor = model if hasattr(model, "topk") else Predictor(model, graph)
    return {role: _subset_scores(predictor, graph, splits, role, ks) for role in roles}


def evaluate(model, graph, splits, ks=(1, 3, 5), subset="test", meta=None):
    """Assemble the fixed-shape report over the full-prediction and completion subsets.

    ``subset`` picks the split pair ("test" or "val").  ``meta`` entries
    (config hash, seed, epochs) are copied into the report verbatim.
    """
    roles = (f"{subset}_full", f"{subset}_comp")
    scored = subset_precision(model, graph, splits, roles, ks=ks)
    report = {
        "without_tags": scored[roles[0]],
        "partial_tags": scored[roles[1]],
        "meta": dict(meta or {}),
    }
    return report


def report_to_json(report):
    """Canonical byte-stable JSON for golden-file comparisons."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
