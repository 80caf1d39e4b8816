"""Stochastic gradient ascent with Nesterov momentum for both DPP models."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, TrainingError
from .gradients import grad_logistic, grad_multitask
from .models import (
    DEFAULT_W,
    KINDS,
    LogisticDppModel,
    MultiTaskDppModel,
    _as_weights,
    pack_observations,
    penalized_log_likelihood_logistic,
    penalized_log_likelihood_multitask,
)

log = logging.getLogger(__name__)

INIT_STD = 0.1  # N(mu, 0.01) read as variance 0.01


@dataclass
class TrainConfig:
    rank: int = 50
    alpha0: float = 1.0
    step: float = 0.01
    momentum: float = 0.9
    minibatch_size: int = 128
    max_epochs: int = 60
    convergence_tol: float = 1e-4
    w: float = DEFAULT_W
    seed: int = 0
    negative_ratio: float = 1.0

    def __post_init__(self):
        if self.rank < 1:
            raise InputError("rank must be >= 1")
        if self.alpha0 < 0:
            raise InputError("alpha0 must be >= 0")
        if self.step < 0:
            raise InputError("step must be >= 0")
        if not 0 <= self.momentum < 1:
            raise InputError("momentum must be in [0, 1)")
        if self.minibatch_size < 1 or self.max_epochs < 1:
            raise InputError("minibatch_size and max_epochs must be >= 1")
        if self.convergence_tol < 0:
            raise InputError("convergence_tol must be >= 0")
        if not self.w > 0:
            raise InputError("w must be > 0")
        if self.negative_ratio < 0:
            raise InputError("negative_ratio must be >= 0")


@dataclass
class TrainReport:
    epochs_run: int = 0
    final_loglik: float = float("nan")
    trace: list = field(default_factory=list)
    skipped: int = 0


def initialize(kind: str, p: int, r: int, config: TrainConfig, rng: np.random.Generator):
    """Random starting point: ``V ~ N(0, .01)``, ``D ~ N(1, .01)``, ``R ~ N(1, .01)``.

    Draw order is V (row-major), then D, then R, for every kind, so the same
    seed gives the same V across model kinds.  The no-bias model discards
    its D draw and starts (and stays) at zero.
    """
    if kind not in KINDS:
        raise InputError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    if p < 1 or r < 1:
        raise InputError("p and r must be >= 1")
    V = rng.normal(0.0, INIT_STD, size=(p, r))
    D = rng.normal(1.0, INIT_STD, size=p)
    if kind == "logistic":
        return LogisticDppModel(V, D, config.w)
    R = rng.normal(1.0, INIT_STD, size=(p, r))
    if kind == "multitask-nobias":
        D = np.zeros(p)
    return MultiTaskDppModel(V, D, R, config.w, bias=kind == "multitask")


def _build(kind, V, D, R, w):
    if kind == "logistic":
        return LogisticDppModel(V, D, w)
    return MultiTaskDppModel(V, D, R, w, bias=kind == "multitask")


def objective(model, packed, alpha, alpha0):
    if isinstance(model, LogisticDppModel):
        return penalized_log_likelihood_logistic(model, packed, alpha, alpha0)
    return penalized_log_likelihood_multitask(model, packed, alpha, alpha0)


def nag_step(kind, params, accum, grad_fn, step, momentum):
    """One Nesterov update on ``params``/``accum`` (dicts of arrays, in place).

    The gradient is taken at the look-ahead point ``theta + momentum * accum``;
    then ``accum <- momentum * accum + (1 - momentum) * step * grad`` and
    ``theta <- theta + accum``.
    """
    ahead = {k: params[k] + momentum * accum[k] for k in params}
    g = grad_fn(ahead)
    grads = {"V": g.dV, "D": g.dD, "R": g.dR}
    for k in params:
        if kind == "multitask-nobias" and k == "D":
            continue
        accum[k] = momentum * accum[k] + (1.0 - momentum) * step * grads[k]
        params[k] = params[k] + accum[k]
    return g


def train(kind: str, data, catalog, config: TrainConfig, workers: int = 1, model=None):
    """Fit a model of ``kind`` to ``data`` (a list of observations).

    Each epoch reshuffles the data and walks it in consecutive minibatches.
    Training stops after ``max_epochs`` or once the epoch-end objective moves
    by less than ``convergence_tol`` relative to the previous epoch; a drop
    larger than that does not stop training.  ``model``
    overrides the random initialization.

    Returns ``(model, TrainReport)``.
    """
    data = list(data)
    if not data:
        raise InputError("no training observations")
    if kind not in KINDS:
        raise InputError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    p = catalog.p if hasattr(catalog, "p") else len(catalog)
    alpha = _as_weights(catalog, p)
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = initialize(kind, p, config.rank, config, rng)
    elif model.kind != kind:
        raise InputError(f"initial model is {model.kind}, expected {kind}")

    multitask = kind != "logistic"
    grad = grad_multitask if multitask else grad_logistic
    packed_all = pack_observations(data, multitask=multitask)
    M = len(data)

    params = {"V": model.V.copy(), "D": model.D.copy()}
    if multitask:
        params["R"] = model.R.copy()
    accum = {k: np.zeros_like(v) for k, v in params.items()}

    report = TrainReport()
    previous = None
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(M)
        skipped = 0
        for start in range(0, M, config.minibatch_size):
            batch = pack_observations(
                [data[i] for i in order[start : start + config.minibatch_size]], multitask
            )

            def grad_fn(theta, batch=batch):
                if not all(np.all(np.isfinite(v)) for v in theta.values()):
                    raise TrainingError(f"parameters diverged in epoch {epoch}; lower the step size")
                m = _build(kind, theta["V"], theta["D"], theta.get("R"), config.w)
                with np.errstate(over="ignore", invalid="ignore"):
                    g = grad(m, batch, alpha, config.alpha0, n_total=M, workers=workers)
                blocks = (g.dV, g.dD) if g.dR is None else (g.dV, g.dD, g.dR)
                if not all(np.all(np.isfinite(b)) for b in blocks):
                    raise TrainingError(f"gradient became non-finite in epoch {epoch}; lower the step size")
                return g

            g = nag_step(kind, params, accum, grad_fn, config.step, config.momentum)
            skipped += g.skipped
        if skipped >= M:
            raise TrainingError(f"every observation was singular in epoch {epoch}")

        model = _build(kind, params["V"], params["D"], params.get("R"), config.w)
        ll = objective(model, packed_all, alpha, config.alpha0)
        if not np.isfinite(ll):
            raise TrainingError(f"objective became non-finite in epoch {epoch}")
        report.trace.append(ll)
        report.skipped += skipped
        report.epochs_run = epoch
        log.info("epoch=%d loglik=%.10g skipped=%d", epoch, ll, skipped)
        if previous is not None and abs(ll - previous) < config.convergence_tol * abs(previous):
            break
        previous = ll
    report.final_loglik = report.trace[-1]
    return model, report
