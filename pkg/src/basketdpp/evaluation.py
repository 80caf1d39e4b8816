"""Mean percentile rank and precision@K for basket completion."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, InputError
from .models import LogisticDppModel, MultiTaskDppModel, completion_dets, target_dets

DEFAULT_KS = (5, 10, 20)


def percentile_rank(scores, held_out: int) -> float:
    """Percentage of all items whose score does not exceed the held-out item's."""
    scores = np.asarray(scores, dtype=np.float64)
    return 100.0 * np.count_nonzero(scores <= scores[held_out]) / scores.size


def rank_of(scores, held_out: int) -> int:
    """1-based rank under descending score, ties going to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    s = scores[held_out]
    return 1 + int(np.count_nonzero(scores > s)) + int(np.count_nonzero(scores[:held_out] == s))


@dataclass
class MetricsReport:
    mpr: float
    precision: dict
    cases: int

    def as_dict(self) -> dict:
        out = {"MPR": self.mpr}
        out.update({f"precision@{k}": v for k, v in sorted(self.precision.items())})
        out["cases"] = self.cases
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=False)

    def table(self, label: str = "model") -> str:
        ks = sorted(self.precision)
        head = ["model", "MPR"] + [f"Prec.@{k}" for k in ks]
        row = [label, f"{self.mpr:.2f}"] + [f"{self.precision[k]:.2f}" for k in ks]
        widths = [max(len(a), len(b)) for a, b in zip(head, row)]
        fmt = "  ".join(f"{{:>{w}}}" for w in widths)
        return fmt.format(*head) + "\n" + fmt.format(*row)


def _case_metrics(scores, case, ks, mask_context):
    if not np.all(np.isfinite(scores)):
        raise EvaluationError(f"scorer returned non-finite values for case {case}")
    if mask_context:
        keep = np.ones(scores.size, dtype=bool)
        keep[list(case.context)] = False
        held = int(np.count_nonzero(keep[: case.held_out]))
        scores = scores[keep]
    else:
        held = case.held_out
    pr = percentile_rank(scores, held)
    rank = rank_of(scores, held)
    return pr, [rank <= k for k in ks]


def evaluate(scorer, cases, ks=DEFAULT_KS, mask_context: bool = False, workers: int = 1) -> MetricsReport:
    """Score every case's context and summarize where the held-out item lands.

    ``scorer(context)`` must return one score per catalog item.  By default
    context items stay in the ranking; ``mask_context`` removes them.
    """
    cases = list(cases)
    if not cases:
        raise InputError("no evaluation cases")
    ks = tuple(ks)

    def one(case):
        scores = np.asarray(scorer(case.context), dtype=np.float64)
        return _case_metrics(scores, case, ks, mask_context)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, cases))
    else:
        results = [one(c) for c in cases]
    prs = np.array([r[0] for r in results])
    hits = np.array([r[1] for r in results], dtype=np.float64).reshape(len(cases), len(ks))
    precision = {k: 100.0 * float(hits[:, j].mean()) for j, k in enumerate(ks)}
    return MetricsReport(float(prs.mean()), precision, len(cases))


def model_scorer(model):
    """Scores ``w * det`` used for ranking; monotone in success probability.

    Multi-task: ``det K_{tau, context}`` for every target ``tau``.
    Logistic: ``det L_{context + {j}}`` for every item ``j`` (the greedy
    first step), which is zero for items already in the context.
    """
    if isinstance(model, MultiTaskDppModel):
        return lambda context: model.w * np.maximum(target_dets(model, context), 0.0)
    if isinstance(model, LogisticDppModel):
        return lambda context: model.w * np.maximum(completion_dets(model, context), 0.0)
    raise InputError(f"no scorer for {type(model).__name__}")
