"""Logistic DPP and multi-task DPP models.

Both models map a nonnegative kernel determinant to a success probability
with the link ``1 - exp(-w * det)``.  The multi-task model keeps one diagonal
``R[tau]`` per target item ``tau``, sharing ``V`` and ``D`` across targets.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .kernel import FactorizedKernel, _frozen, build_submatrix, check_items, determinant

SIGMA_CLAMP = 1e-12
DEFAULT_W = 0.01
FORMAT_VERSION = 1
MAGIC = b"BASKETDPP\n"

KINDS = ("logistic", "multitask", "multitask-nobias")


def link(det, w):
    """``1 - exp(-w * max(det, 0))``, elementwise."""
    return -np.expm1(-w * np.maximum(det, 0.0))


def clamp_sigma(sigma):
    return np.clip(sigma, SIGMA_CLAMP, 1.0 - SIGMA_CLAMP)


@dataclass(frozen=True)
class LogisticDppModel:
    V: np.ndarray
    D: np.ndarray
    w: float = DEFAULT_W

    def __post_init__(self):
        object.__setattr__(self, "V", _frozen(self.V, 2, "V"))
        object.__setattr__(self, "D", _frozen(self.D, 1, "D"))
        if self.D.shape[0] != self.V.shape[0]:
            raise InputError("D length must equal the number of rows of V")
        if not (np.isfinite(self.w) and self.w > 0):
            raise InputError(f"w must be positive, got {self.w}")
        object.__setattr__(self, "w", float(self.w))

    kind = "logistic"

    @property
    def p(self):
        return self.V.shape[0]

    @property
    def r(self):
        return self.V.shape[1]

    @property
    def kernel(self) -> FactorizedKernel:
        return FactorizedKernel(self.V, self.D)


@dataclass(frozen=True)
class MultiTaskDppModel:
    """Shared ``V`` (p x r), bias ``D`` (p), and per-target diagonals ``R`` (p x r).

    With ``bias=False`` the bias is pinned to zero (the no-bias variant).
    """

    V: np.ndarray
    D: np.ndarray
    R: np.ndarray
    w: float = DEFAULT_W
    bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "V", _frozen(self.V, 2, "V"))
        object.__setattr__(self, "D", _frozen(self.D, 1, "D"))
        object.__setattr__(self, "R", _frozen(self.R, 2, "R"))
        p, r = self.V.shape
        if self.D.shape != (p,):
            raise InputError("D length must equal the number of rows of V")
        if self.R.shape != (p, r):
            raise InputError(f"R must have shape {(p, r)}, got {self.R.shape}")
        if not (np.isfinite(self.w) and self.w > 0):
            raise InputError(f"w must be positive, got {self.w}")
        object.__setattr__(self, "w", float(self.w))

    @property
    def kind(self):
        return "multitask" if self.bias else "multitask-nobias"

    @property
    def p(self):
        return self.V.shape[0]

    @property
    def r(self):
        return self.V.shape[1]

    def task_kernel(self, target: int) -> FactorizedKernel:
        return FactorizedKernel(self.V, self.D, self.R[target])


@dataclass(frozen=True)
class Observation:
    """Item set with an optional target item and a binary label.

    The single-task model scores ``items`` plus ``target`` as one set.
    """

    items: tuple
    target: int | None = None
    label: int = 1

    def __post_init__(self):
        items = tuple(int(i) for i in self.items)
        object.__setattr__(self, "items", items)
        if not items:
            raise InputError("observation item set must be nonempty")
        if self.target is not None:
            object.__setattr__(self, "target", int(self.target))
            if self.target in items:
                raise InputError(f"target {self.target} is also in the item set")
        if self.label not in (0, 1):
            raise InputError(f"label must be 0 or 1, got {self.label}")
        object.__setattr__(self, "label", int(self.label))

    @property
    def full_set(self) -> tuple:
        if self.target is None:
            return self.items
        return self.items + (self.target,)


def success_probability_logistic(model: LogisticDppModel, items) -> float:
    L = build_submatrix(model.kernel, items)
    return float(link(determinant(L), model.w))


def success_probability_multitask(model: MultiTaskDppModel, target: int, items) -> float:
    idx = check_items(items, model.p)
    if not 0 <= target < model.p:
        raise InputError(f"target {target} out of range [0, {model.p})")
    if target in idx:
        raise InputError(f"target {target} is part of the item set")
    K = build_submatrix(model.task_kernel(target), idx)
    return float(link(determinant(K), model.w))


# -- batched evaluation over many observations -------------------------------


@dataclass
class PackedObservations:
    """Observations grouped by scored-set size for stacked linear algebra.

    ``groups`` maps set size ``k`` to ``(positions, items, tasks, labels)``
    where ``items`` is ``(n_k, k)`` and ``tasks`` holds the target index per
    row (``-1`` when the model is single-task).
    """

    n: int
    groups: dict = field(default_factory=dict)


def pack_observations(observations: Sequence[Observation], multitask: bool) -> PackedObservations:
    buckets: dict[int, list] = {}
    for pos, obs in enumerate(observations):
        if multitask:
            if obs.target is None:
                raise InputError(f"observation {pos} has no target for the multi-task model")
            s, t = obs.items, obs.target
        else:
            s, t = obs.full_set, -1
        buckets.setdefault(len(s), []).append((pos, s, t, obs.label))
    packed = PackedObservations(n=len(observations))
    for k in sorted(buckets):
        rows = buckets[k]
        packed.groups[k] = (
            np.array([r[0] for r in rows], dtype=np.intp),
            np.array([r[1] for r in rows], dtype=np.intp).reshape(len(rows), k),
            np.array([r[2] for r in rows], dtype=np.intp),
            np.array([r[3] for r in rows], dtype=np.float64),
        )
    return packed


def submatrix_stack(V, D, items, R_rows=None):
    """Stack of kernel submatrices for an ``(n, k)`` block of item sets."""
    Vi = V[items]  # (n, k, r)
    if R_rows is None:
        Vw = Vi
    else:
        Vw = Vi * (R_rows**2)[:, None, :]
    S = np.matmul(Vw, np.swapaxes(Vi, 1, 2))
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    k = items.shape[1]
    S[:, np.arange(k), np.arange(k)] += D[items] ** 2
    return S


def observation_dets(V, D, R, packed: PackedObservations) -> np.ndarray:
    """Determinant of each observation's scored submatrix, in input order."""
    dets = np.empty(packed.n)
    for pos, items, tasks, _ in packed.groups.values():
        R_rows = None if R is None else R[tasks]
        dets[pos] = np.linalg.det(submatrix_stack(V, D, items, R_rows))
    return dets


def _as_weights(catalog, p):
    alpha = getattr(catalog, "alpha", catalog)
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (p,):
        raise InputError(f"regularization weights must have length {p}")
    return alpha


def log_bernoulli(dets, labels, w):
    """Per-observation ``y log s + (1 - y) log(1 - s)`` with clamped ``s``.

    ``log(1 - s)`` is evaluated as ``-w * det`` (capped at the clamp), which
    stays exact where ``1 - s`` itself would cancel.
    """
    x = w * np.maximum(dets, 0.0)
    log_s = np.log(clamp_sigma(-np.expm1(-x)))
    log_not_s = -np.minimum(x, -np.log(SIGMA_CLAMP))
    log_not_s = np.minimum(log_not_s, np.log1p(-SIGMA_CLAMP))
    return labels * log_s + (1.0 - labels) * log_not_s


def _data_term(dets, labels, w):
    return float(np.sum(log_bernoulli(dets, labels, w)))


def _labels(packed):
    labels = np.empty(packed.n)
    for pos, _, _, y in packed.groups.values():
        labels[pos] = y
    return labels


def penalized_log_likelihood_logistic(
    model: LogisticDppModel, observations, catalog, alpha0: float
) -> float:
    """Bernoulli log-likelihood minus the popularity-weighted L2 penalty."""
    alpha = _as_weights(catalog, model.p)
    packed = (
        observations
        if isinstance(observations, PackedObservations)
        else pack_observations(list(observations), multitask=False)
    )
    dets = observation_dets(model.V, model.D, None, packed)
    data = _data_term(dets, _labels(packed), model.w)
    reg = np.sum(alpha * (np.sum(model.V**2, axis=1) + model.D**2))
    return data - 0.5 * alpha0 * float(reg)


def penalized_log_likelihood_multitask(
    model: MultiTaskDppModel, observations, catalog, alpha0: float
) -> float:
    alpha = _as_weights(catalog, model.p)
    packed = (
        observations
        if isinstance(observations, PackedObservations)
        else pack_observations(list(observations), multitask=True)
    )
    dets = observation_dets(model.V, model.D, model.R, packed)
    data = _data_term(dets, _labels(packed), model.w)
    reg = np.sum(
        alpha * (np.sum(model.V**2, axis=1) + model.D**2 + np.sum(model.R**2, axis=1))
    )
    return data - 0.5 * alpha0 * float(reg)


# -- scoring ------------------------------------------------------------------


def target_dets(model: MultiTaskDppModel, basket, chunk: int = 4096) -> np.ndarray:
    """``det K_{tau, basket}`` for every task ``tau`` (basket members included)."""
    idx = check_items(basket, model.p)
    Vb = model.V[idx]
    Db2 = model.D[idx] ** 2
    k = idx.size
    out = np.empty(model.p)
    for start in range(0, model.p, chunk):
        R2 = model.R[start : start + chunk] ** 2  # (c, r)
        S = np.einsum("sj,cj,tj->cst", Vb, R2, Vb)
        S = 0.5 * (S + np.swapaxes(S, 1, 2))
        S[:, np.arange(k), np.arange(k)] += Db2
        out[start : start + chunk] = np.linalg.det(S)
    return out


def completion_dets(model: LogisticDppModel, basket, chunk: int = 4096) -> np.ndarray:
    """``det L_{basket + {j}}`` for every item ``j``; zero for ``j`` in the basket.

    A repeated item duplicates a row of the submatrix, so its determinant is 0.
    """
    idx = check_items(basket, model.p)
    k = idx.size
    out = np.empty(model.p)
    cand = np.arange(model.p)
    for start in range(0, model.p, chunk):
        c = cand[start : start + chunk]
        items = np.concatenate([np.broadcast_to(idx, (c.size, k)), c[:, None]], axis=1)
        out[start : start + chunk] = np.linalg.det(submatrix_stack(model.V, model.D, items))
    out[idx] = 0.0
    return out


def _ordered(scores, candidates):
    # descending score, ascending index on ties
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order]


def rank_targets(model: MultiTaskDppModel, basket) -> list[tuple[int, float]]:
    """All targets outside ``basket`` ranked by success probability, best first."""
    idx = check_items(basket, model.p)
    if idx.size == 0:
        raise InputError("basket must be nonempty")
    dets = np.maximum(target_dets(model, idx), 0.0)
    cand = np.setdiff1d(np.arange(model.p), idx)
    ranked = _ordered(dets, cand)
    probs = link(dets[ranked], model.w)
    return [(int(t), float(s)) for t, s in zip(ranked, probs)]


def greedy_complete(model: LogisticDppModel, basket, count: int) -> list[int]:
    """Repeatedly add the item that maximizes the completed basket's probability."""
    idx = check_items(basket, model.p)
    if count < 0 or count > model.p - idx.size:
        raise InputError(f"cannot add {count} items to a basket of {idx.size} over {model.p} items")
    current = list(idx)
    picks = []
    for _ in range(count):
        dets = completion_dets(model, current) if current else _singleton_dets(model)
        dets[current] = -np.inf
        j = int(np.argmax(dets))
        picks.append(j)
        current.append(j)
    return picks


def _singleton_dets(model):
    return np.sum(model.V**2, axis=1) + model.D**2


# -- serialization ------------------------------------------------------------


def save_model(path, model, tokens: Iterable[str] | None = None) -> None:
    """Write header + little-endian float64 blocks; replaces ``path`` atomically."""
    tokens = list(tokens) if tokens is not None else [str(i) for i in range(model.p)]
    if len(tokens) != model.p:
        raise InputError(f"{len(tokens)} tokens for a model over {model.p} items")
    blocks = ["V", "D"] + (["R"] if model.kind != "logistic" else [])
    header = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "p": model.p,
        "r": model.r,
        "w": model.w,
        "blocks": blocks,
        "tokens": tokens,
    }
    payload = MAGIC + json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    for name in blocks:
        payload += np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes()
    _atomic_write(path, payload)


def _atomic_write(path, data: bytes):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(model, tokens)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise InputError(f"{path}: not a model file")
    end = raw.index(b"\n", len(MAGIC))
    header = json.loads(raw[len(MAGIC) : end].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported format version {header.get('format_version')}")
    p, r = header["p"], header["r"]
    shapes = {"V": (p, r), "D": (p,), "R": (p, r)}
    offset = end + 1
    arrays = {}
    for name in header["blocks"]:
        n = int(np.prod(shapes[name]))
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shapes[name])
        offset += 8 * n
    if offset != len(raw):
        raise InputError(f"{path}: trailing or missing bytes")
    kind = header["kind"]
    if kind == "logistic":
        model = LogisticDppModel(arrays["V"], arrays["D"], header["w"])
    elif kind in ("multitask", "multitask-nobias"):
        model = MultiTaskDppModel(
            arrays["V"], arrays["D"], arrays["R"], header["w"], bias=kind == "multitask"
        )
    else:
        raise InputError(f"{path}: unknown model kind {kind!r}")
    return model, header["tokens"]
