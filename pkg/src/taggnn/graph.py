"""The query-item-tag tripartite graph and its initial node representations.

Nodes carry token-id lists; query-item edges carry weights that are
standardized and pushed through a softplus so the per-edge attention
multipliers stay positive.  The graph is immutable once built.
"""

import hashlib
from collections import Counter
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .autodiff import Tensor


class NodeType(Enum):
    QUERY = "query"
    ITEM = "item"
    TAG = "tag"


@dataclass(frozen=True)
class NodeRef:
    """A typed node handle: a node type plus the index within that type."""

    node_type: NodeType
    index: int


UNK_ID = 0
UNK_TOKEN = "<unk>"


class Vocabulary:
    """Token-to-id map with a frequency threshold.

    Ids are dense ``0..V-1`` with id 0 reserved for the unknown token; any
    token seen fewer than ``min_count`` times maps to it.  The unknown
    token's embedding is pinned to zero by the models, so nodes whose every
    token is out-of-vocabulary keep a zero initial representation.
    """

    def __init__(self, tokens, min_count=1):
        self.min_count = min_count
        self.id_to_token = [UNK_TOKEN] + list(tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def from_texts(cls, texts, min_count=1):
        """Build from an iterable of whitespace-tokenized strings.

        Kept tokens get ids in first-occurrence order, which makes the
        vocabulary deterministic for a fixed corpus ordering.
        """
        counts = Counter()
        order = []
        for text in texts:
            for tok in text.split():
                if tok not in counts:
                    order.append(tok)
                counts[tok] += 1
        kept = [tok for tok in order if counts[tok] >= min_count and tok != UNK_TOKEN]
        return cls(kept, min_count=min_count)

    def encode(self, text):
        return [self.token_to_id.get(tok, UNK_ID) for tok in text.split()]

    def __len__(self):
        return len(self.id_to_token)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def sha256(self):
        h = hashlib.sha256()
        for tok in self.id_to_token:
            h.update(tok.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def tokenize_and_index(text, vocab):
    """Map whitespace-separated tokens to vocabulary ids, unknowns to UNK."""
    return vocab.encode(text)


def standardize(weights):
    """Z-score over the given weights (population sigma; all zeros when sigma=0)."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        return w.copy()
    mu = w.mean()
    sigma = w.std()
    if sigma == 0.0:
        return np.zeros_like(w)
    return (w - mu) / sigma


def standardize_edge_weights(weights):
    """Standardize raw weights, then softplus so every multiplier is positive.

    The softplus keeps the scalar edge multiplier strictly positive and
    strictly increasing in the raw weight; equal raw weights all map to ln 2.
    """
    z = standardize(weights)
    # stable softplus: log(1 + e^z) without overflowing for large z
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)


# edge kinds in adjacency structures
QI = 0
IT = 1


class TripartiteGraph:
    """Undirected tripartite graph over query, item and tag nodes.

    Construct through :func:`build_graph`.  Adjacency lists are sorted by
    neighbor index so iteration order (and therefore any floating-point
    accumulation that follows it) is deterministic.
    """

    def __init__(self, query_tokens, item_tokens, tag_tokens, qi_edges, it_edges,
                 query_ids=None, item_ids=None, tag_ids=None):
        self.query_tokens = [list(t) for t in query_tokens]
        self.item_tokens = [list(t) for t in item_tokens]
        self.tag_tokens = [list(t) for t in tag_tokens]
        self.query_ids = list(query_ids) if query_ids is not None else [str(i) for i in range(len(query_tokens))]
        self.item_ids = list(item_ids) if item_ids is not None else [str(i) for i in range(len(item_tokens))]
        self.tag_ids = list(tag_ids) if tag_ids is not None else [str(i) for i in range(len(tag_tokens))]

        nq, ni, nt = len(self.query_tokens), len(self.item_tokens), len(self.tag_tokens)
        merged = {}
        for q, i, w in qi_edges:
            if not 0 <= q < nq:
                raise ValueError(f"query-item edge references unknown query index {q}")
            if not 0 <= i < ni:
                raise ValueError(f"query-item edge references unknown item index {i}")
            if w < 0:
                raise ValueError(f"negative edge weight {w} on query-item edge ({q}, {i})")
            merged[(q, i)] = merged.get((q, i), 0.0) + float(w)
        keys = sorted(merged)
        self.qi_query = np.array([k[0] for k in keys], dtype=np.int64)
        self.qi_item = np.array([k[1] for k in keys], dtype=np.int64)
        self.qi_weight = np.array([merged[k] for k in keys], dtype=np.float64)

        seen = set()
        for i, t in it_edges:
            if not 0 <= i < ni:
                raise ValueError(f"item-tag edge references unknown item index {i}")
            if not 0 <= t < nt:
                raise ValueError(f"item-tag edge references unknown tag index {t}")
            seen.add((i, t))
        keys = sorted(seen)
        self.it_item = np.array([k[0] for k in keys], dtype=np.int64)
        self.it_tag = np.array([k[1] for k in keys], dtype=np.int64)

        self.qi_mult = None
        self._adjacency = None
        self._pack_cache = {}

    # -- sizes and indexing ------------------------------------------------

    @property
    def n_queries(self):
        return len(self.query_tokens)

    @property
    def n_items(self):
        return len(self.item_tokens)

    @property
    def n_tags(self):
        return len(self.tag_tokens)

    @property
    def n_nodes(self):
        return self.n_queries + self.n_items + self.n_tags

    def global_index(self, ref):
        """Pack a NodeRef into the global row index (queries, items, tags)."""
        if ref.node_type is NodeType.QUERY:
            base, count = 0, self.n_queries
        elif ref.node_type is NodeType.ITEM:
            base, count = self.n_queries, self.n_items
        else:
            base, count = self.n_queries + self.n_items, self.n_tags
        if not 0 <= ref.index < count:
            raise IndexError(f"{ref.node_type.value} index {ref.index} out of range")
        return base + ref.index

    def tokens_of(self, ref):
        if ref.node_type is NodeType.QUERY:
            return self.query_tokens[ref.index]
        if ref.node_type is NodeType.ITEM:
            return self.item_tokens[ref.index]
        return self.tag_tokens[ref.index]

    # -- edges and adjacency -----------------------------------------------

    def standardize_weights(self):
        """Fill per-edge attention multipliers from the raw query-item weights."""
        self.qi_mult = standardize_edge_weights(self.qi_weight)
        self._pack_cache.clear()
        return self.qi_mult

    def _build_adjacency(self):
        adj = {g: [] for g in range(self.n_nodes)}
        qoff, ioff, toff = 0, self.n_queries, self.n_queries + self.n_items
        for e in range(len(self.qi_query)):
            q, i = qoff + self.qi_query[e], ioff + self.qi_item[e]
            adj[q].append((i, QI, e))
            adj[i].append((q, QI, e))
        for e in range(len(self.it_item)):
            i, t = ioff + self.it_item[e], toff + self.it_tag[e]
            adj[i].append((t, IT, e))
            adj[t].append((i, IT, e))
        self._adjacency = {g: sorted(entries) for g, entries in adj.items()}

    def adjacency(self, gidx):
        """Sorted ``(neighbor global idx, edge kind, edge id)`` triples."""
        if self._adjacency is None:
            self._build_adjacency()
        return self._adjacency[gidx]

    def neighbors(self, ref):
        """Neighbor NodeRefs of ``ref`` in ascending global-index order."""
        out = []
        for g, _, _ in self.adjacency(self.global_index(ref)):
            out.append(self.ref_of(g))
        return out

    def ref_of(self, gidx):
        if gidx < self.n_queries:
            return NodeRef(NodeType.QUERY, gidx)
        if gidx < self.n_queries + self.n_items:
            return NodeRef(NodeType.ITEM, gidx - self.n_queries)
        return NodeRef(NodeType.TAG, gidx - self.n_queries - self.n_items)

    def degree(self, ref):
        return len(self.adjacency(self.global_index(ref)))

    def item_tag_sets(self):
        """Per-item set of linked tag indices (the label structure)."""
        sets = [set() for _ in range(self.n_items)]
        for i, t in zip(self.it_item, self.it_tag):
            sets[i].add(int(t))
        return sets


def build_graph(queries, items, tags, qi_edges, it_edges,
                query_ids=None, item_ids=None, tag_ids=None):
    """Assemble a deduplicated undirected tripartite graph.

    ``queries``/``items``/``tags`` are token-id lists per node.  Duplicate
    query-item edges are merged with their weights summed; duplicate item-tag
    edges collapse to one.  Dangling indices raise with the offending edge.
    """
    return TripartiteGraph(queries, items, tags, qi_edges, it_edges,
                           query_ids=query_ids, item_ids=item_ids, tag_ids=tag_ids)


@dataclass
class EmbeddingTable:
    """Learnable word and tag-id embeddings sharing one model dimension."""

    words: Tensor
    tag_ids: Tensor
    dim: int

    @classmethod
    def init(cls, n_words, n_tags, dim, rng):
        words = rng.uniform(-0.05, 0.05, size=(n_words, dim))
        words[UNK_ID] = 0.0  # unknown token stays a zero vector
        tag_ids = rng.uniform(-0.05, 0.05, size=(n_tags, dim))
        return cls(words=Tensor(words, requires_grad=True),
                   tag_ids=Tensor(tag_ids, requires_grad=True),
                   dim=dim)


def initial_node_representation(node, graph, table, use_tag_names=True, use_tag_ids=True):
    """Initial vector of one node: mean word embedding, plus the id embedding for tags.

    Queries and items with no tokens fall back to the zero vector; tags fall
    back to their id embedding alone.
    """
    words = table.words.data
    tokens = graph.tokens_of(node)
    if node.node_type is not NodeType.TAG:
        if not tokens:
            return np.zeros(table.dim)
        return words[tokens].sum(axis=0) * (1.0 / len(tokens))
    rep = np.zeros(table.dim)
    if use_tag_names and tokens:
        rep = rep + words[tokens].sum(axis=0) * (1.0 / len(tokens))
    if use_tag_ids:
        rep = rep + table.tag_ids.data[node.index]
    return rep
