"""
Completing a basket
===================

Two ways to suggest items.  A multi-task model scores every candidate as a
target in one pass.  A single-task model grows the basket greedily, adding
the item that most raises the basket's probability each time.

Run:  python demos/03_completing_a_basket.py
"""

import numpy as np

from basketdpp import TrainConfig, greedy_complete, make_examples, rank_targets, split, train
from basketdpp.synthetic import planted_model, sample_baskets

truth = planted_model(p=40, r=6, topics=4, seed=10)
parts = split(sample_baskets(truth, 1500, seed=11), 0.7, seed=12)
examples = make_examples(parts, "random-holdout", seed=13)
cat = parts.catalog

multi, _ = train("multitask", examples.train, cat, TrainConfig(rank=6, max_epochs=20, seed=14))
single, _ = train("logistic", examples.train, cat, TrainConfig(rank=6, max_epochs=20, seed=14))

basket = cat.encode(["i000", "i004"])  # both items belong to topic 0
print("basket:", cat.decode(basket))

ranked = rank_targets(multi, basket)[:5]
print("multi-task suggestions:")
for item, prob in ranked:
    print(f"  {cat.tokens[item]}  p={prob:.4f}  topic={item % 4}")

picks = greedy_complete(single, basket, 3)
print("greedy single-task completion:", cat.decode(picks))

# topic agreement of the suggestions
topics = np.array([i % 4 for i, _ in ranked])
print("share of suggestions from topic 0:", (topics == 0).mean())
