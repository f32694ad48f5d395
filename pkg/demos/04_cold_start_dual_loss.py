#!/usr/bin/env python3
# The cold-start story.  Training items always have tag neighbors, so a model
# trained only on propagated representations reads the answer off the graph
# and never learns to tag an item from its text alone.  The dual loss scores
# the *unpropagated* item vector against the propagated tags, which is
# exactly the situation an isolated test item is in.

from taggnn import data as dm
from taggnn.evaluation import evaluate
from taggnn.graph import Vocabulary
from taggnn.synthetic import cold_start_dataset
from taggnn.training import TrainConfig, train


def isolated_item_p1(gamma, seed=0):
    dataset, splits = cold_start_dataset(seed=seed)
    vocab = Vocabulary.from_texts(dataset.texts(), min_count=1)
    graph = dm.dataset_to_graph(dataset, vocab, splits=splits)
    config = TrainConfig(dim=48, n_layers=2, max_epochs=300, seed=seed,
                         variant="it", gamma=gamma, dropout=0.3)
    result = train(graph, splits, config, n_words=len(vocab))
    report = evaluate(result.model, graph, splits, ks=(1,), subset="test")
    return report["without_tags"]["p@1"]


print("item-tag model, 40 tags, test items fully isolated (no edges at all)")
print(f"{'gamma':>6s}  {'cold-start P@1':>14s}")
for gamma in (0.0, 0.5, 1.0):
    print(f"{gamma:6.1f}  {isolated_item_p1(gamma):14.3f}")
print("\nwithout the dual term the model collapses toward chance (1/40 per tag);")
print("with it, the same architecture tags unseen items from their titles.")
