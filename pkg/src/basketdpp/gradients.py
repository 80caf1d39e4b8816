"""Analytic minibatch gradients of the penalized log-likelihoods.

For an observation with scored set ``I``, kernel submatrix ``K`` and clamped
success probability ``s``, every derivative shares the factor

    c = 2 w (y - s) / s * det K

and then picks up a trace term of ``K^{-1}``:

* ``dV[I, k]  += c * R[tau, k]^2 * (K^{-1} V[I, k])``
* ``dD[I]     += c * diag(K^{-1}) * D[I]``
* ``dR[tau,k] += c * R[tau, k] * V[I, k]^T K^{-1} V[I, k]``

(``R = 1`` for the single-task model.)  The L2 penalty is added once per
call, scaled by ``len(minibatch) / n_total`` so that a full epoch of
minibatches applies it exactly once.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kernel import batch_det_and_inverse
from .models import (
    LogisticDppModel,
    MultiTaskDppModel,
    PackedObservations,
    _as_weights,
    clamp_sigma,
    link,
    pack_observations,
    submatrix_stack,
)

log = logging.getLogger(__name__)


@dataclass
class GradientSet:
    dV: np.ndarray
    dD: np.ndarray
    dR: np.ndarray | None = None
    skipped: int = 0


def _chunk_terms(V, D, R, w, items, tasks, labels):
    Vi = V[items]
    R_rows = None if R is None else R[tasks]
    S = submatrix_stack(V, D, items, R_rows)
    dets, inv, _, ok = batch_det_and_inverse(S)
    det = np.maximum(dets, 0.0)
    sigma = clamp_sigma(link(det, w))
    c = 2.0 * w * (labels - sigma) / sigma * det
    # more items than latent factors and no bias: det is identically zero
    structural = (items.shape[1] > V.shape[1]) & np.all(D[items] == 0.0, axis=1)
    ok = ok & ~structural
    c[~ok] = 0.0

    Vw = Vi if R_rows is None else Vi * (R_rows**2)[:, None, :]
    gV = c[:, None, None] * np.matmul(inv, Vw)
    gD = c[:, None] * np.diagonal(inv, axis1=1, axis2=2) * D[items]
    gR = None
    if R is not None:
        quad = np.einsum("nsj,nst,ntj->nj", Vi, inv, Vi)
        gR = c[:, None] * R_rows * quad
    return gV, gD, gR, ok


def _split(n, workers):
    if workers <= 1 or n < 2:
        return [slice(0, n)]
    bounds = np.linspace(0, n, min(workers, n) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def data_gradients(V, D, R, w, packed: PackedObservations, workers: int = 1):
    """Unpenalized gradient sums; returns ``(dV, dD, dR, skipped)``.

    Per-observation terms may be computed on several threads, but they are
    accumulated in observation order, so the result does not depend on
    ``workers``.
    """
    jobs = []
    for pos, items, tasks, labels in packed.groups.values():
        for sl in _split(pos.size, workers):
            jobs.append((pos[sl], items[sl], tasks[sl], labels[sl]))

    def run(job):
        pos, items, tasks, labels = job
        return pos, items, tasks, _chunk_terms(V, D, R, w, items, tasks, labels)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    p, r = V.shape
    dV = np.zeros((p, r))
    dD = np.zeros(p)
    dR = None if R is None else np.zeros((p, r))
    if not results:
        return dV, dD, dR, 0

    # one row per (observation, member) pair, sorted by observation position
    pos_all = np.concatenate([res[0] for res in results])
    order = np.argsort(pos_all, kind="stable")
    items_all = [res[1] for res in results]
    skipped = int(sum(np.count_nonzero(~res[3][3]) for res in results))

    # groups have different set sizes, so scatter member rows via a flat list
    flat_items = np.concatenate([it.ravel() for it in items_all])
    flat_pos = np.concatenate([np.repeat(res[0], res[1].shape[1]) for res in results])
    flat_member = np.concatenate(
        [np.tile(np.arange(res[1].shape[1]), res[1].shape[0]) for res in results]
    )
    flat_gV = np.concatenate([res[3][0].reshape(-1, r) for res in results])
    flat_gD = np.concatenate([res[3][1].ravel() for res in results])
    flat_order = np.lexsort((flat_member, flat_pos))
    np.add.at(dV, flat_items[flat_order], flat_gV[flat_order])
    np.add.at(dD, flat_items[flat_order], flat_gD[flat_order])

    if R is not None:
        tasks_all = np.concatenate([res[2] for res in results])
        gR_all = np.concatenate([res[3][2] for res in results])
        np.add.at(dR, tasks_all[order], gR_all[order])
    if skipped:
        log.debug("skipped %d singular observations", skipped)
    return dV, dD, dR, skipped


def _reg_scale(n_batch, n_total):
    if n_total is None:
        return 1.0
    return n_batch / n_total


def grad_logistic(
    model: LogisticDppModel, minibatch, catalog, alpha0: float, n_total=None, workers: int = 1
) -> GradientSet:
    """Gradient of the logistic-DPP objective on ``minibatch``.

    ``catalog`` is an :class:`~basketdpp.data.ItemCatalog` or a plain array of
    per-item weights.  ``n_total`` is the training-set size used to scale the
    penalty; ``None`` applies the full penalty.
    """
    alpha = _as_weights(catalog, model.p)
    packed = (
        minibatch
        if isinstance(minibatch, PackedObservations)
        else pack_observations(list(minibatch), multitask=False)
    )
    dV, dD, _, skipped = data_gradients(model.V, model.D, None, model.w, packed, workers)
    scale = alpha0 * _reg_scale(packed.n, n_total)
    dV -= scale * alpha[:, None] * model.V
    dD -= scale * alpha * model.D
    return GradientSet(dV, dD, None, skipped)


def grad_multitask(
    model: MultiTaskDppModel, minibatch, catalog, alpha0: float, n_total=None, workers: int = 1
) -> GradientSet:
    """Gradient of the multi-task objective; ``dD`` is zero for the no-bias model."""
    alpha = _as_weights(catalog, model.p)
    packed = (
        minibatch
        if isinstance(minibatch, PackedObservations)
        else pack_observations(list(minibatch), multitask=True)
    )
    dV, dD, dR, skipped = data_gradients(model.V, model.D, model.R, model.w, packed, workers)
    scale = alpha0 * _reg_scale(packed.n, n_total)
    dV -= scale * alpha[:, None] * model.V
    dD -= scale * alpha * model.D
    dR -= scale * alpha[:, None] * model.R
    if not model.bias:
        dD[:] = 0.0
    return GradientSet(dV, dD, dR, skipped)
