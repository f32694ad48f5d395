#!/usr/bin/env python3
# Build the query-item-tag graph from the bundled toy dataset and poke at
# its pieces: vocabulary, edge-weight standardization, initial node vectors,
# and one node's attention weights.

import os

import numpy as np

from taggnn import data as dm
from taggnn.graph import (NodeRef, NodeType, Vocabulary, initial_node_representation,
                          standardize_edge_weights)
from taggnn.model import ModelVariant, TagGNNModel, attention_coefficients

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "tests", "fixtures", "toydata")

dataset = dm.load_dataset(DATA)
print(f"loaded {len(dataset.items)} items, {len(dataset.queries)} queries, "
      f"{len(dataset.tags)} tags")

vocab = Vocabulary.from_texts(dataset.texts(), min_count=1)
print(f"vocabulary: {len(vocab)} tokens (id 0 is the pinned-to-zero unknown)")

graph = dm.dataset_to_graph(dataset, vocab)
print(f"graph: {len(graph.qi_query)} query-item edges, {len(graph.it_item)} item-tag edges")

# raw interaction counts become positive attention multipliers
raw = graph.qi_weight[:6]
print("\nraw weights          :", raw)
print("softplus multipliers :", np.round(standardize_edge_weights(graph.qi_weight)[:6], 4))

# initial representations: mean word embedding, tags add their id embedding
model = TagGNNModel.init(len(vocab), graph.n_tags, dim=8,
                         variant=ModelVariant(kind="full", n_layers=1), seed=0)
item0 = NodeRef(NodeType.ITEM, 0)
tag0 = NodeRef(NodeType.TAG, 0)
print(f"\nitem '{graph.item_ids[0]}' initial vector:",
      np.round(initial_node_representation(item0, graph, model.embeddings), 3))
print(f"tag  '{graph.tag_ids[0]}' initial vector:",
      np.round(initial_node_representation(tag0, graph, model.embeddings), 3))

# attention over one item's neighborhood (queries and tags mixed)
H = model.initial_representations(graph).data
alpha = attention_coefficients(item0, H, model.layers[0], graph, kind="full")
neighbors = graph.neighbors(item0)
print(f"\nattention at item '{graph.item_ids[0]}':")
for ref, a in zip(neighbors, alpha):
    name = {NodeType.QUERY: graph.query_ids, NodeType.ITEM: graph.item_ids,
            NodeType.TAG: graph.tag_ids}[ref.node_type][ref.index]
    print(f"  {ref.node_type.value:5s} {name:8s} alpha = {a:.4f}")
print("(query edges carry their softplus multiplier, tag edges exactly 1)")
