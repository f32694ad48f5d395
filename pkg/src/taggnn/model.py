"""Attention-based message passing over the tripartite graph.

One layer = neighbor attention, weighted aggregation, and a gated
per-node-type update.  Layers run synchronously: every node's new
representation is computed from the previous layer's matrix, and nodes
without edges pass through bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import IT, QI, NodeType, EmbeddingTable

LEAKY_SLOPE = 0.2

VARIANT_KINDS = ("it", "qi", "full")


@dataclass
class ModelVariant:
    """Which slice of the tripartite graph the model propagates over.

    ``it`` uses item-tag edges and the link-prediction score, ``qi`` uses
    query-item edges with a classification head, ``full`` uses both edge
    families with link prediction.
    """

    kind: str = "full"
    heterogeneous: bool = True
    use_tag_names: bool = True
    use_tag_ids: bool = True
    n_layers: int = 2

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise ValueError(f"unknown variant kind {self.kind!r}")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.kind != "qi" and not (self.use_tag_names or self.use_tag_ids):
            raise ValueError("tag nodes need name embeddings, id embeddings, or both")

    @property
    def needs_head(self):
        return self.kind == "qi"


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class LayerParams:
    """Per-layer parameters: shared attention, per-type update, shared gate."""

    attn_proj: Tensor       # d x d, shared across node types
    attn_context: Tensor    # 2d x 1 scoring vector
    update_query: Tensor    # d x d
    update_item: Tensor     # d x d
    update_tag: Tensor      # d x d
    gate_new: Tensor        # d x d
    gate_old: Tensor        # d x d
    gate_bias: Tensor       # d

    @classmethod
    def init(cls, dim, rng, heterogeneous=True):
        attn_proj = Tensor(_glorot(rng, dim, dim), requires_grad=True)
        attn_context = Tensor(_glorot(rng, 2 * dim, 1), requires_grad=True)
        upd = Tensor(_glorot(rng, dim, dim), requires_grad=True)
        if heterogeneous:
            upd_q, upd_i, upd_t = (upd,
                                   Tensor(_glorot(rng, dim, dim), requires_grad=True),
                                   Tensor(_glorot(rng, dim, dim), requires_grad=True))
        else:
            # one shared matrix: the same tensor object serves all three types
            upd_q = upd_i = upd_t = upd
        return cls(
            attn_proj=attn_proj,
            attn_context=attn_context,
            update_query=upd_q,
            update_item=upd_i,
            update_tag=upd_t,
            gate_new=Tensor(_glorot(rng, dim, dim), requires_grad=True),
            gate_old=Tensor(_glorot(rng, dim, dim), requires_grad=True),
            gate_bias=Tensor(np.zeros(dim), requires_grad=True),
        )

    def parameters(self):
        out = [self.attn_proj, self.attn_context]
        for t in (self.update_query, self.update_item, self.update_tag):
            if all(t is not u for u in out):
                out.append(t)
        out += [self.gate_new, self.gate_old, self.gate_bias]
        return out


@dataclass
class PackedEdges:
    """Directed edge arrays for one variant, sorted by (center, neighbor)."""

    centers: np.ndarray      # global row of the node being updated
    neighbors: np.ndarray    # global row of the message source
    multipliers: np.ndarray  # positive scalar per directed edge
    active: np.ndarray       # bool per global row: has at least one edge


def pack_edges(graph, kind):
    """Flatten the variant's undirected edges into directed center/neighbor arrays."""
    if graph.qi_mult is None and len(graph.qi_query) and kind in ("qi", "full"):
        raise ValueError("edge weights not standardized; call graph.standardize_weights()")
    key = kind
    cached = graph._pack_cache.get(key)
    if cached is not None:
        return cached

    qoff, ioff, toff = 0, graph.n_queries, graph.n_queries + graph.n_items
    cs, ns, ms = [], [], []
    if kind in ("qi", "full") and len(graph.qi_query):
        q = graph.qi_query + qoff
        i = graph.qi_item + ioff
        m = graph.qi_mult
        cs += [q, i]
        ns += [i, q]
        ms += [m, m]
    if kind in ("it", "full") and len(graph.it_item):
        i = graph.it_item + ioff
        t = graph.it_tag + toff
        ones = np.ones(len(i))  # item-tag edges keep an exact multiplier of 1
        cs += [i, t]
        ns += [t, i]
        ms += [ones, ones]

    if cs:
        centers = np.concatenate(cs)
        neighbors = np.concatenate(ns)
        mult = np.concatenate(ms)
        order = np.lexsort((neighbors, centers))
        centers, neighbors, mult = centers[order], neighbors[order], mult[order]
    else:
        centers = np.empty(0, dtype=np.int64)
        neighbors = np.empty(0, dtype=np.int64)
        mult = np.empty(0, dtype=np.float64)

    active = np.zeros(graph.n_nodes, dtype=bool)
    active[centers] = True
    packed = PackedEdges(centers=centers, neighbors=neighbors, multipliers=mult, active=active)
    graph._pack_cache[key] = packed
    return packed


def attention_coefficients(center, reps, params, graph, kind="full"):
    """Attention weights over one node's neighborhood, in adjacency order.

    The softmax part sums to 1 over the neighbor set; each weight is then
    scaled by the edge's positive multiplier (standardized-softplus weight
    for query-item edges, exactly 1 for item-tag edges).
    """
    H = reps.data if isinstance(reps, Tensor) else np.asarray(reps, dtype=np.float64)
    gidx = graph.global_index(center)
    entries = [e for e in graph.adjacency(gidx)
               if (e[1] == QI and kind in ("qi", "full")) or (e[1] == IT and kind in ("it", "full"))]
    if not entries:
        raise ValueError("attention undefined for an isolated node")
    W = params.attn_proj.data
    a = params.attn_context.data
    hc = H[gidx] @ W
    scores = np.empty(len(entries))
    mult = np.empty(len(entries))
    for j, (nb, ekind, eid) in enumerate(entries):
        s = np.concatenate([hc, H[nb] @ W]) @ a[:, 0]
        scores[j] = s if s > 0 else LEAKY_SLOPE * s
        mult[j] = graph.qi_mult[eid] if ekind == QI else 1.0
    shifted = np.exp(scores - scores.max())
    return mult * (shifted / shifted.sum())


def aggregate_message(alpha, neighbor_reps, proj):
    """Attention-weighted sum of projected neighbor vectors, then ReLU."""
    alpha = np.asarray(alpha, dtype=np.float64)
    reps = np.asarray(neighbor_reps, dtype=np.float64)
    W = proj.data if isinstance(proj, Tensor) else np.asarray(proj)
    return np.maximum((alpha[:, None] * (reps @ W)).sum(axis=0), 0.0)


def gated_update(h_v, h_m, node_type, params, heterogeneous=True):
    """Blend the fused candidate with the previous vector through a sigmoid gate."""
    h_v = np.asarray(h_v, dtype=np.float64)
    h_m = np.asarray(h_m, dtype=np.float64)
    if heterogeneous:
        W = {NodeType.QUERY: params.update_query,
             NodeType.ITEM: params.update_item,
             NodeType.TAG: params.update_tag}[node_type].data
    else:
        W = params.update_query.data
    hat = np.maximum((h_v + h_m) @ W, 0.0)
    z = 1.0 / (1.0 + np.exp(-(hat @ params.gate_new.data
                              + h_v @ params.gate_old.data
                              + params.gate_bias.data)))
    return z * hat + (1.0 - z) * h_v


def propagate_layer(graph, H, params, kind="full"):
    """One synchronous propagation layer over the whole node matrix.

    ``H`` is the (n_nodes, d) representation Tensor from the previous layer;
    isolated nodes under this variant's edge set are copied through exactly.
    """
    if not isinstance(H, Tensor):
        H = Tensor(H)
    edges = pack_edges(graph, kind)
    if len(edges.centers) == 0:
        return H

    Wh = ad.matmul(H, params.attn_proj)
    h_center = ad.gather_rows(Wh, edges.centers)
    h_neighbor = ad.gather_rows(Wh, edges.neighbors)
    raw = ad.matmul(ad.concat([h_center, h_neighbor], axis=1), params.attn_context)
    scores = ad.leaky_relu(raw, LEAKY_SLOPE)
    attn = ad.segment_softmax(scores, edges.centers)
    alpha = ad.mul(attn, edges.multipliers[:, None])

    message = ad.relu(ad.scatter_add_rows(ad.mul(alpha, h_neighbor), edges.centers, graph.n_nodes))
    fused = ad.add(H, message)

    nq, ni = graph.n_queries, graph.n_items
    blocks = []
    for lo, hi, W_type in ((0, nq, params.update_query),
                           (nq, nq + ni, params.update_item),
                           (nq + ni, graph.n_nodes, params.update_tag)):
        if hi > lo:
            blocks.append(ad.matmul(ad.gather_rows(fused, np.arange(lo, hi)), W_type))
    hat = ad.relu(ad.concat(blocks, axis=0) if len(blocks) > 1 else blocks[0])

    z = ad.sigmoid(ad.add(ad.add(ad.matmul(hat, params.gate_new),
                                 ad.matmul(H, params.gate_old)),
                          params.gate_bias))
    updated = ad.add(ad.mul(z, hat), ad.mul(1.0 - z, H))
    return ad.where_rows(edges.active, updated, H)


@dataclass
class ForwardResult:
    """Everything downstream losses and inference need from one forward pass."""

    reps: Tensor            # (n_nodes, d) after all layers
    initial: Tensor         # (n_nodes, d) entering the first layer (post-dropout)
    item_reps: Tensor       # final item block
    tag_reps: Tensor        # final tag block
    initial_item_reps: Tensor
    head_logits: Tensor = None  # (n_items, n_tags), qi variant only


class TagGNNModel:
    """All learnable state for one tagging model plus its forward pass."""

    def __init__(self, embeddings, layers, variant, gamma=1.0, head_weight=None, head_bias=None):
        if variant.needs_head != (head_weight is not None):
            raise ValueError("classification head present iff variant is 'qi'")
        self.embeddings = embeddings
        self.layers = list(layers)
        self.variant = variant
        self.gamma = gamma
        self.head_weight = head_weight
        self.head_bias = head_bias

    @classmethod
    def init(cls, n_words, n_tags, dim, variant, gamma=1.0, seed=0, rng=None):
        if rng is None:
            rng = np.random.default_rng([seed, 0])
        embeddings = EmbeddingTable.init(n_words, n_tags, dim, rng)
        layers = [LayerParams.init(dim, rng, heterogeneous=variant.heterogeneous)
                  for _ in range(variant.n_layers)]
        head_w = head_b = None
        if variant.needs_head:
            head_w = Tensor(_glorot(rng, dim, n_tags), requires_grad=True)
            head_b = Tensor(np.zeros(n_tags), requires_grad=True)
        return cls(embeddings, layers, variant, gamma=gamma, head_weight=head_w, head_bias=head_b)

    @property
    def dim(self):
        return self.embeddings.dim

    def parameters(self):
        out = [self.embeddings.words, self.embeddings.tag_ids]
        for layer in self.layers:
            out.extend(layer.parameters())
        if self.head_weight is not None:
            out += [self.head_weight, self.head_bias]
        return out

    def zero_frozen_grads(self):
        # the unknown-token row never trains; it anchors the zero fallback
        if self.embeddings.words.grad is not None:
            self.embeddings.words.grad[0] = 0.0

    def state_arrays(self):
        return [p.data.copy() for p in self.parameters()]

    def load_state_arrays(self, arrays):
        for p, a in zip(self.parameters(), arrays):
            p.data[...] = a

    # -- forward -------------------------------------------------------------

    def _mean_token_block(self, token_lists, n_rows):
        flat_tokens, owners = [], []
        inv = np.zeros((n_rows, 1))
        for row, toks in enumerate(token_lists):
            if toks:
                inv[row, 0] = 1.0 / len(toks)
                flat_tokens.extend(toks)
                owners.extend([row] * len(toks))
        if not flat_tokens:
            return Tensor(np.zeros((n_rows, self.dim)))
        gathered = ad.gather_rows(self.embeddings.words, np.asarray(flat_tokens, dtype=np.int64))
        summed = ad.scatter_add_rows(gathered, np.asarray(owners, dtype=np.int64), n_rows)
        return ad.mul(summed, inv)

    def initial_representations(self, graph):
        """Stacked initial vectors for every node, in (queries, items, tags) order."""
        blocks = []
        if graph.n_queries:
            blocks.append(self._mean_token_block(graph.query_tokens, graph.n_queries))
        if graph.n_items:
            blocks.append(self._mean_token_block(graph.item_tokens, graph.n_items))
        if graph.n_tags:
            tag_block = None
            if self.variant.use_tag_names:
                tag_block = self._mean_token_block(graph.tag_tokens, graph.n_tags)
            if self.variant.use_tag_ids:
                if self.embeddings.tag_ids.shape[0] != graph.n_tags:
                    raise ValueError("tag-id table does not match the graph's tag count")
                tag_block = self.embeddings.tag_ids if tag_block is None \
                    else ad.add(tag_block, self.embeddings.tag_ids)
            if tag_block is None:
                tag_block = Tensor(np.zeros((graph.n_tags, self.dim)))
            blocks.append(tag_block)
        return ad.concat(blocks, axis=0) if len(blocks) > 1 else blocks[0]

    def forward(self, graph, train_mode=False, dropout_p=0.5, rng=None):
        """Initial representations, optional feature dropout, then the layer stack."""
        H0 = self.initial_representations(graph)
        if train_mode and dropout_p > 0.0:
            if rng is None:
                raise ValueError("train-mode forward needs an rng for dropout")
            H0 = ad.dropout(H0, dropout_p, rng)
        H = H0
        for layer in self.layers:
            H = propagate_layer(graph, H, layer, kind=self.variant.kind)

        nq, ni = graph.n_queries, graph.n_items
        item_rows = np.arange(nq, nq + ni)
        tag_rows = np.arange(nq + ni, graph.n_nodes)
        item_reps = ad.gather_rows(H, item_rows)
        tag_reps = ad.gather_rows(H, tag_rows) if graph.n_tags else None
        initial_items = ad.gather_rows(H0, item_rows)
        head_logits = None
        if self.variant.needs_head:
            head_logits = ad.add(ad.matmul(item_reps, self.head_weight), self.head_bias)
        return ForwardResult(reps=H, initial=H0, item_reps=item_reps, tag_reps=tag_reps,
                             initial_item_reps=initial_items, head_logits=head_logits)


def forward(graph, model, train_mode=False, dropout_p=0.5, rng=None):
    return model.forward(graph, train_mode=train_mode, dropout_p=dropout_p, rng=rng)
