"""Basket ingestion, filtering, splitting and training-example construction."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, ParseError
from .models import Observation

FORMATS = ("basket-lines", "csv-transactions")
HOLDOUTS = ("random", "last")


@dataclass
class BasketDataset:
    baskets: list
    ordered: bool = False

    def __post_init__(self):
        self.baskets = [list(b) for b in self.baskets]
        for n, b in enumerate(self.baskets):
            if not b:
                raise InputError(f"basket {n} is empty")
            if any(not isinstance(t, str) or not t for t in b):
                raise InputError(f"basket {n} has an empty or non-string token")

    def __len__(self):
        return len(self.baskets)

    def items(self) -> set:
        return {t for b in self.baskets for t in b}

    def summary(self) -> dict:
        sizes = [len(b) for b in self.baskets]
        return {
            "baskets": len(self.baskets),
            "items": len(self.items()),
            "mean_basket_size": float(np.mean(sizes)) if sizes else 0.0,
            "ordered": self.ordered,
        }


def inverse_popularity(counts) -> np.ndarray:
    """``mean_count / count_i`` over seen items; unseen items get the largest weight."""
    counts = np.asarray(counts, dtype=np.float64)
    seen = counts > 0
    if not seen.any():
        raise InputError("no item was observed; cannot derive regularization weights")
    alpha = np.empty_like(counts)
    alpha[seen] = counts[seen].mean() / counts[seen]
    alpha[~seen] = alpha[seen].max()
    return alpha


@dataclass
class ItemCatalog:
    """Token/index bijection with popularity counts and penalty weights."""

    tokens: list
    counts: np.ndarray
    alpha: np.ndarray = None
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.tokens = list(self.tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise InputError("catalog tokens must be unique")
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (len(self.tokens),):
            raise InputError("counts length must match the number of tokens")
        if self.alpha is None:
            self.alpha = inverse_popularity(self.counts)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)

    @property
    def p(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_baskets(cls, baskets):
        counts = Counter(t for b in baskets for t in set(b))
        tokens = sorted(counts)
        return cls(tokens, [counts[t] for t in tokens])

    def encode(self, tokens) -> list[int]:
        missing = [t for t in tokens if t not in self.index]
        if missing:
            raise InputError(f"unknown item token(s): {', '.join(missing)}")
        return [self.index[t] for t in tokens]

    def decode(self, indices) -> list[str]:
        return [self.tokens[i] for i in indices]


def regularization_weights(catalog: ItemCatalog, data) -> np.ndarray:
    """Per-item penalty weights from positive observations.

    An item's count is the number of positive observations whose items or
    target contain it; sampled negatives carry no popularity signal.
    """
    data = list(data)
    if not data:
        raise InputError("cannot derive regularization weights from empty data")
    counts = np.zeros(catalog.p)
    for obs in data:
        if obs.label == 1:
            counts[list(obs.full_set)] += 1
    return inverse_popularity(counts)


# -- loading ------------------------------------------------------------------


def load_baskets(path, format: str = "basket-lines", ordered: bool = False) -> BasketDataset:
    """Read baskets from ``path``.

    ``basket-lines``: one basket per line, comma-separated tokens.  ``ordered``
    declares that token order within a line is the order items were added.

    ``csv-transactions``: rows ``basket_id,item[,position]`` with an optional
    header; rows are grouped by basket id in order of first appearance and
    sorted by ``position`` when that column is present.
    """
    if format not in FORMATS:
        raise ConfigError(f"unknown basket format {format!r}; expected one of {FORMATS}")
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    if not text.strip():
        raise ParseError(f"{path}: file is empty")
    if format == "basket-lines":
        return _parse_lines(text, ordered)
    return _parse_csv(text)


def _parse_lines(text, ordered):
    baskets = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        tokens = [t.strip() for t in line.split(",")]
        if any(not t for t in tokens):
            raise ParseError("empty item token", lineno)
        baskets.append(tokens)
    if not baskets:
        raise ParseError("no baskets found")
    return BasketDataset(baskets, ordered=ordered)


def _parse_csv(text):
    rows = list(csv.reader(text.splitlines()))
    start = 0
    if rows and rows[0] and rows[0][0].strip().lower() in ("basket_id", "basket", "order_id"):
        start = 1
    groups: dict[str, list] = {}
    positions: dict[str, set] = {}
    has_position = None
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) not in (2, 3):
            raise ParseError(f"expected 2 or 3 columns, got {len(row)}", lineno)
        with_pos = len(row) == 3
        if has_position is None:
            has_position = with_pos
        elif has_position != with_pos:
            raise ParseError("inconsistent number of columns", lineno)
        bid, item = row[0].strip(), row[1].strip()
        if not bid or not item:
            raise ParseError("empty basket id or item token", lineno)
        pos = None
        if with_pos:
            try:
                pos = float(row[2])
            except ValueError:
                raise ParseError(f"position {row[2]!r} is not a number", lineno) from None
            seen = positions.setdefault(bid, set())
            if pos in seen:
                raise ParseError(f"duplicate position {row[2].strip()} in basket {bid}", lineno)
            seen.add(pos)
        groups.setdefault(bid, []).append((pos, len(groups.get(bid, ())), item))
    if not groups:
        raise ParseError("no transactions found")
    baskets = []
    for entries in groups.values():
        if has_position:
            entries = sorted(entries, key=lambda e: (e[0], e[1]))
        baskets.append([e[2] for e in entries])
    return BasketDataset(baskets, ordered=bool(has_position))


# -- filtering and splitting ---------------------------------------------------


def _dedup(basket):
    return list(dict.fromkeys(basket))


def filter_dataset(
    ds: BasketDataset, min_item_count: int = 0, min_basket_size: int = 1, max_basket_size=None
) -> BasketDataset:
    """Drop rare items and out-of-range baskets until nothing changes.

    Repeated items inside a basket are collapsed to their first occurrence.
    """
    if min_item_count < 0 or min_basket_size < 0 or (max_basket_size is not None and max_basket_size < 0):
        raise InputError("filter thresholds must be nonnegative")
    hi = math.inf if max_basket_size is None else max_basket_size
    baskets = [_dedup(b) for b in ds.baskets]
    while True:
        counts = Counter(t for b in baskets for t in b)
        kept = []
        for b in baskets:
            b2 = [t for t in b if counts[t] >= min_item_count]
            if b2 and min_basket_size <= len(b2) <= hi:
                kept.append(b2)
        if kept == baskets:
            break
        baskets = kept
    if not baskets:
        raise InputError("filtering removed every basket")
    return BasketDataset(baskets, ordered=ds.ordered)


@dataclass
class BasketSplit:
    """Train/test baskets encoded against a catalog built from train only."""

    train: list
    test: list
    catalog: ItemCatalog
    ordered: bool = False

    def __iter__(self):
        yield self.train
        yield self.test


def split(ds: BasketDataset, train_fraction: float = 0.7, seed: int = 0) -> BasketSplit:
    """Seeded random split; the first ``ceil(fraction * N)`` permuted baskets train."""
    if not 0 < train_fraction < 1:
        raise InputError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(ds.baskets)
    n_train = math.ceil(train_fraction * n)
    if n_train < 1 or n_train >= n:
        raise InputError(f"cannot split {n} baskets with fraction {train_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    train_tok = [_dedup(ds.baskets[i]) for i in perm[:n_train]]
    test_tok = [_dedup(ds.baskets[i]) for i in perm[n_train:]]
    catalog = ItemCatalog.from_baskets(train_tok)
    train = [catalog.encode(b) for b in train_tok]
    test = []
    for b in test_tok:
        known = [catalog.index[t] for t in b if t in catalog.index]
        if len(known) >= 2:
            test.append(known)
    return BasketSplit(train, test, catalog, ds.ordered)


# -- protocols and examples ------------------------------------------------------


@dataclass(frozen=True)
class ProtocolSpec:
    """Which item is held out of each basket, for train and test separately."""

    train: str = "random"
    test: str = "random"

    def __post_init__(self):
        for h in (self.train, self.test):
            if h not in HOLDOUTS:
                raise ConfigError(f"unknown hold-out rule {h!r}; expected one of {HOLDOUTS}")

    @classmethod
    def named(cls, name: str) -> "ProtocolSpec":
        table = {
            "random-holdout": cls("random", "random"),
            "random": cls("random", "random"),
            "last-item-holdout": cls("last", "last"),
            "last-item": cls("last", "last"),
            "mixed": cls("random", "last"),
        }
        if name not in table:
            raise ConfigError(f"unknown protocol {name!r}; expected one of {sorted(table)}")
        return table[name]

    @property
    def needs_order(self) -> bool:
        return "last" in (self.train, self.test)


@dataclass(frozen=True)
class EvaluationCase:
    context: tuple
    held_out: int

    def __post_init__(self):
        if not self.context:
            raise InputError("evaluation context must be nonempty")
        if self.held_out in self.context:
            raise InputError("held-out item appears in its own context")


@dataclass
class Examples:
    train: list
    test: list
    catalog: ItemCatalog


def _hold_out(basket, rule, rng):
    j = len(basket) - 1 if rule == "last" else int(rng.integers(len(basket)))
    return tuple(basket[:j] + basket[j + 1 :]), basket[j]


def make_examples(
    data: BasketSplit, protocol: ProtocolSpec | str = "random-holdout", negative_ratio: float = 1.0, seed: int = 0
) -> Examples:
    """Training observations and test cases for one hold-out protocol.

    Each train basket yields one positive (remaining items, held-out target)
    and ``floor(negative_ratio)`` negatives whose target is drawn uniformly
    from catalog items outside the original basket.
    """
    if isinstance(protocol, str):
        protocol = ProtocolSpec.named(protocol)
    if protocol.needs_order and not data.ordered:
        raise ConfigError("last-item hold-out needs a dataset with item order")
    if negative_ratio < 0:
        raise InputError("negative_ratio must be nonnegative")
    n_neg = int(math.floor(negative_ratio))
    rng = np.random.default_rng(seed)
    p = data.catalog.p
    train = []
    for n, basket in enumerate(data.train):
        if len(basket) < 2:
            raise InputError(f"train basket {n} has fewer than 2 items")
        items, target = _hold_out(list(basket), protocol.train, rng)
        train.append(Observation(items, target, 1))
        if n_neg:
            outside = np.setdiff1d(np.arange(p), basket)
            if outside.size == 0:
                continue
            for t in rng.choice(outside, size=n_neg, replace=True):
                train.append(Observation(items, int(t), 0))
    test = []
    for n, basket in enumerate(data.test):
        if len(basket) < 2:
            raise InputError(f"test basket {n} has fewer than 2 items")
        context, held = _hold_out(list(basket), protocol.test, rng)
        test.append(EvaluationCase(context, held))
    return Examples(train, test, data.catalog)
