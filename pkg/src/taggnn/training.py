"""Losses and the full-batch training loop with early stopping.

The objective pairs a primary loss on propagated item representations with a
gamma-weighted dual loss that scores the *unpropagated* item vectors against
the same propagated tag side, so the trained model keeps working for items
with no edges at all.
"""

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import evaluation
from .autodiff import Adam
from .model import ModelVariant, TagGNNModel


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.003
    dropout: float = 0.5
    dim: int = 200
    n_layers: int = 2
    gamma: float = 1.0
    max_epochs: int = 200
    patience: int = 5
    seed: int = 0
    variant: str = "full"
    heterogeneous: bool = True
    use_tag_names: bool = True
    use_tag_ids: bool = True

    def model_variant(self):
        return ModelVariant(kind=self.variant, heterogeneous=self.heterogeneous,
                            use_tag_names=self.use_tag_names, use_tag_ids=self.use_tag_ids,
                            n_layers=self.n_layers)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        return cls(**d)

    def sha256(self):
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()


def link_prediction_loss(item_reps, tag_reps, labels):
    """Mean BCE of every item-against-every-tag dot-product score."""
    if item_reps.shape[0] == 0:
        raise ValueError("link prediction needs at least one item")
    logits = ad.matmul(item_reps, tag_reps, transpose_b=True)
    return ad.bce_with_logits(logits, labels)


def node_classification_loss(item_reps, head_weight, head_bias, labels):
    """Mean BCE of the linear classification head over all tags."""
    if head_weight is None or head_bias is None:
        raise ValueError("node classification requires the qi head")
    logits = ad.add(ad.matmul(item_reps, head_weight), head_bias)
    return ad.bce_with_logits(logits, labels)


def combined_loss(graph, model, item_indices, labels, train_mode=False, dropout_p=0.5, rng=None):
    """Primary plus gamma-weighted dual loss over the given item rows.

    Returns ``(total, l1, l2)``.  With ``gamma == 0`` the total *is* the
    primary loss tensor, untouched, so the two are equal to the last bit.
    """
    out = model.forward(graph, train_mode=train_mode, dropout_p=dropout_p, rng=rng)
    final_items = ad.gather_rows(out.item_reps, item_indices)
    initial_items = ad.gather_rows(out.initial_item_reps, item_indices)
    if model.variant.kind == "qi":
        l1 = node_classification_loss(final_items, model.head_weight, model.head_bias, labels)
        l2 = node_classification_loss(initial_items, model.head_weight, model.head_bias, labels)
    else:
        l1 = link_prediction_loss(final_items, out.tag_reps, labels)
        l2 = link_prediction_loss(initial_items, out.tag_reps, labels)
    total = l1 if model.gamma == 0.0 else l1 + model.gamma * l2
    return total, l1, l2


def label_matrix(graph, item_indices):
    """0/1 matrix of the graph's item-tag links restricted to the given items."""
    tag_sets = graph.item_tag_sets()
    y = np.zeros((len(item_indices), graph.n_tags))
    for row, idx in enumerate(item_indices):
        for t in tag_sets[idx]:
            y[row, t] = 1.0
    return y


@dataclass
class TrainResult:
    model: TagGNNModel
    log: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_p1: float = None
    epochs_trained: int = 0


def _item_indices_by_role(graph, splits, roles):
    pos = {item_id: i for i, item_id in enumerate(graph.item_ids)}
    out = []
    for item_id, role in splits.roles.items():
        if role in roles and item_id in pos:
            out.append(pos[item_id])
    return np.asarray(sorted(out), dtype=np.int64)


def vocab_size_of(graph):
    """Smallest word-table size covering every token id used in the graph."""
    top = 0
    for token_lists in (graph.query_tokens, graph.item_tokens, graph.tag_tokens):
        for toks in token_lists:
            if toks:
                top = max(top, max(toks))
    return top + 1


def train(graph, splits, config, n_words=None, log_stream=None):
    """Full-batch training: one forward on the whole graph per epoch, one Adam step.

    After every epoch validation P@1 is measured on the full-prediction and
    completion subsets (macro mean of the two).  Training stops when that
    metric has not improved for ``patience`` consecutive epochs, and the
    parameters from the best epoch are returned.  Without validation items
    the loop simply runs to ``max_epochs``.
    """
    variant = config.model_variant()
    if n_words is None:
        n_words = vocab_size_of(graph)
    model = TagGNNModel.init(n_words, graph.n_tags, config.dim, variant,
                             gamma=config.gamma, rng=np.random.default_rng([config.seed, 0]))
    return train_model(model, graph, splits, config, log_stream=log_stream)


def train_model(model, graph, splits, config, log_stream=None):
    train_idx = _item_indices_by_role(graph, splits, ("train",))
    if len(train_idx) == 0:
        raise ValueError("no training items in the split assignment")
    labels = label_matrix(graph, train_idx)

    params = model.parameters()
    optimizer = Adam(params, lr=config.learning_rate)
    dropout_rng = np.random.default_rng([config.seed, 1])

    has_val = any(r in ("val_full", "val_comp") for r in splits.roles.values())
    best_val, best_epoch, best_state, bad_epochs = -np.inf, -1, None, 0
    log = []

    for epoch in range(config.max_epochs):
        started = time.perf_counter()
        ad.zero_grads(params)
        total, l1, l2 = combined_loss(graph, model, train_idx, labels,
                                      train_mode=True, dropout_p=config.dropout,
                                      rng=dropout_rng)
        if not np.isfinite(total.data):
            raise NumericalError(f"non-finite loss at epoch {epoch}: "
                                 f"l1={float(l1.data)} l2={float(l2.data)}")
        ad.backward(total)
        model.zero_frozen_grads()
        optimizer.step()

        record = {
            "epoch": epoch,
            "loss": float(total.data),
            "l1": float(l1.data),
            "l2": float(l2.data),
            "val_p1_full": None,
            "val_p1_comp": None,
            "val_p1": None,
            "seconds": None,
        }

        if has_val:
            val = evaluation.subset_precision(model, graph, splits,
                                              roles=("val_full", "val_comp"), ks=(1,))
            parts = [val[r]["p@1"] for r in ("val_full", "val_comp") if val[r]["items"] > 0]
            record["val_p1_full"] = val["val_full"]["p@1"] if val["val_full"]["items"] else None
            record["val_p1_comp"] = val["val_comp"]["p@1"] if val["val_comp"]["items"] else None
            record["val_p1"] = float(np.mean(parts)) if parts else None

        record["seconds"] = time.perf_counter() - started
        log.append(record)
        if log_stream is not None:
            log_stream.write(json.dumps(record) + "\n")

        if record["val_p1"] is not None:
            if record["val_p1"] > best_val:
                best_val, best_epoch, bad_epochs = record["val_p1"], epoch, 0
                best_state = model.state_arrays()
            else:
                bad_epochs += 1
                if bad_epochs >= config.patience:  # patience 0: first flat epoch stops
                    break

    epochs_trained = len(log)
    if best_state is not None:
        model.load_state_arrays(best_state)
    else:
        best_epoch = epochs_trained - 1
        best_val = None
    return TrainResult(model=model, log=log, best_epoch=best_epoch,
                       best_val_p1=best_val, epochs_trained=epochs_trained)
