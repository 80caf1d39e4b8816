"""Planted multi-task models and baskets sampled from them.

Used for recovery experiments: the generating model is known, so a trained
model can be compared against it on held-out baskets.
"""

from __future__ import annotations

import numpy as np

from .data import BasketDataset
from .models import DEFAULT_W, MultiTaskDppModel, link, target_dets


def planted_model(p=100, r=10, topics=5, seed=0, strong=2.0, weak=0.2, bias=0.3, noise=0.05, w=DEFAULT_W):
    """Topic-structured multi-task model.

    The ``r`` latent dimensions are split evenly into ``topics`` blocks and
    item ``i`` belongs to topic ``i % topics``.  Its factor row is a random
    unit vector inside its topic's block plus small noise; the task diagonal
    ``R[tau]`` is ``strong`` on the block of ``tau``'s topic and ``weak``
    elsewhere.  Baskets drawn from one topic therefore favour completions
    from the same topic.
    """
    if topics > r:
        raise ValueError("need at least one latent dimension per topic")
    rng = np.random.default_rng(seed)
    blocks = np.array_split(np.arange(r), topics)
    topic = np.arange(p) % topics
    V = rng.normal(0.0, noise, size=(p, r))
    R = np.full((p, r), weak) + rng.normal(0.0, noise, size=(p, r))
    for i in range(p):
        dims = blocks[topic[i]]
        u = rng.normal(size=dims.size)
        V[i, dims] = u / np.linalg.norm(u)
        R[i, dims] = strong
    D = np.full(p, bias)
    return MultiTaskDppModel(V, D, R, w)


def sample_baskets(model: MultiTaskDppModel, n, min_size=3, max_size=5, seed=0, tokens=None):
    """Grow baskets one item at a time from a uniform first item.

    Each further item ``j`` is drawn with probability proportional to
    ``P(y_j = 1 | current basket)`` under ``model``.  Basket order is the
    order of addition, so the dataset is marked ordered.
    """
    rng = np.random.default_rng(seed)
    tokens = tokens or [f"i{j:03d}" for j in range(model.p)]
    baskets = []
    for _ in range(n):
        size = int(rng.integers(min_size, max_size + 1))
        basket = [int(rng.integers(model.p))]
        while len(basket) < size:
            prob = link(target_dets(model, basket), model.w)
            prob[basket] = 0.0
            basket.append(int(rng.choice(model.p, p=prob / prob.sum())))
        baskets.append([tokens[j] for j in basket])
    return BasketDataset(baskets, ordered=True)
