"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import build_submatrix
from .gradients import grad_logistic, grad_multitask
from .models import (
    LogisticDppModel,
    MultiTaskDppModel,
    Observation,
    penalized_log_likelihood_logistic,
    penalized_log_likelihood_multitask,
)

FD_STEP = 1e-5


MAX_COND = 1e4


def random_instance(kind, rng, p=8, r=3, n_obs=6, min_size=2, max_size=5, w=0.5):
    """Random model, observations with mixed labels, and item weights.

    ``min_size``/``max_size`` bound the whole basket: the scored set for the
    logistic model, context plus target for the multi-task models.
    Instances with a nearly singular submatrix (condition number above
    ``MAX_COND``) are redrawn, since central differences are unreliable
    there; submatrices that are singular for every parameter value (no-bias
    contexts larger than ``r``) are kept.
    """
    while True:
        model, obs, alpha = _draw(kind, rng, p, r, n_obs, min_size, max_size, w)
        if _well_conditioned(model, obs):
            return model, obs, alpha


def _well_conditioned(model, obs):
    for o in obs:
        if isinstance(model, LogisticDppModel):
            K = build_submatrix(model.kernel, o.full_set)
        else:
            if not model.bias and len(o.items) > model.r:
                continue
            K = build_submatrix(model.task_kernel(o.target), o.items)
        if np.linalg.cond(K) > MAX_COND:
            return False
    return True


def _draw(kind, rng, p, r, n_obs, min_size, max_size, w):
    V = rng.normal(0.0, 0.5, size=(p, r))
    D = rng.normal(1.0, 0.1, size=p)
    alpha = rng.uniform(0.5, 2.0, size=p)
    obs = []
    for m in range(n_obs):
        k = int(rng.integers(min_size, max_size + 1))
        s = rng.choice(p, size=k, replace=False)
        obs.append(Observation(tuple(s[:-1]), int(s[-1]), m % 2))
    if kind == "logistic":
        return LogisticDppModel(V, D, w), obs, alpha
    R = rng.normal(1.0, 0.3, size=(p, r))
    if kind == "multitask-nobias":
        return MultiTaskDppModel(V, np.zeros(p), R, w, bias=False), obs, alpha
    return MultiTaskDppModel(V, D, R, w), obs, alpha


def _objective(model, obs, alpha, alpha0):
    if isinstance(model, LogisticDppModel):
        return penalized_log_likelihood_logistic(model, obs, alpha, alpha0)
    return penalized_log_likelihood_multitask(model, obs, alpha, alpha0)


def _replace(model, name, value):
    if isinstance(model, LogisticDppModel):
        fields = {"V": model.V, "D": model.D}
        fields[name] = value
        return LogisticDppModel(fields["V"], fields["D"], model.w)
    fields = {"V": model.V, "D": model.D, "R": model.R}
    fields[name] = value
    return MultiTaskDppModel(fields["V"], fields["D"], fields["R"], model.w, model.bias)


def finite_difference(model, obs, alpha, alpha0, h=FD_STEP):
    """Central differences of the penalized log-likelihood for each block."""
    blocks = ["V", "D"] if isinstance(model, LogisticDppModel) else ["V", "D", "R"]
    out = {}
    for name in blocks:
        base = np.array(getattr(model, name))
        fd = np.zeros_like(base)
        for ix in np.ndindex(base.shape):
            up, down = base.copy(), base.copy()
            up[ix] += h
            down[ix] -= h
            f_up = _objective(_replace(model, name, up), obs, alpha, alpha0)
            f_down = _objective(_replace(model, name, down), obs, alpha, alpha0)
            fd[ix] = (f_up - f_down) / (2 * h)
        out[name] = fd
    return out


def relative_error(analytic, numeric):
    """``max |a - n| / max(1, |a|)``."""
    analytic = np.asarray(analytic)
    return float(np.max(np.abs(analytic - np.asarray(numeric)) / np.maximum(1.0, np.abs(analytic))))


@dataclass
class CheckResult:
    kind: str
    instance: int
    errors: dict

    @property
    def max_error(self):
        return max(self.errors.values())


def check_instance(model, obs, alpha, alpha0=0.5, h=FD_STEP) -> dict:
    """Max relative error per parameter block (``V``, ``D``, ``R``)."""
    if isinstance(model, LogisticDppModel):
        g = grad_logistic(model, obs, alpha, alpha0)
        analytic = {"V": g.dV, "D": g.dD}
    else:
        g = grad_multitask(model, obs, alpha, alpha0)
        analytic = {"V": g.dV, "D": g.dD, "R": g.dR}
    numeric = finite_difference(model, obs, alpha, alpha0, h)
    return {name: relative_error(analytic[name], numeric[name]) for name in analytic}


def run_gradcheck(kinds=("logistic", "multitask", "multitask-nobias"), instances=5, p=8, r=3, seed=0, w=0.5, alpha0=0.5):
    rng = np.random.default_rng(seed)
    results = []
    for kind in kinds:
        for n in range(instances):
            model, obs, alpha = random_instance(kind, rng, p=p, r=r, w=w)
            results.append(CheckResult(kind, n, check_instance(model, obs, alpha, alpha0)))
    return results
