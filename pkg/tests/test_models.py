import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from basketdpp import (
    BasketDataset,
    LogisticDppModel,
    MultiTaskDppModel,
    Observation,
    TrainConfig,
    greedy_complete,
    load_model,
    make_examples,
    penalized_log_likelihood_logistic,
    penalized_log_likelihood_multitask,
    rank_targets,
    save_model,
    split,
    success_probability_logistic,
    success_probability_multitask,
    train,
)
from basketdpp.errors import InputError
from basketdpp.models import SIGMA_CLAMP
from oracles import cofactor_det, exhaustive_greedy, full_task_kernel, principal
from oracles import loglik as oracle_loglik


def random_multitask(rng, p=8, r=3, w=0.3):
    return MultiTaskDppModel(
        rng.normal(size=(p, r)), rng.normal(size=p), rng.normal(size=(p, r)), w
    )


def random_observations(rng, p, n, multitask=True):
    obs = []
    for m in range(n):
        k = int(rng.integers(2, 5))
        s = rng.choice(p, size=k, replace=False)
        obs.append(Observation(tuple(s[:-1]), int(s[-1]), int(rng.integers(2))))
    return obs


# -- probabilities --------------------------------------------------------------


def test_zero_determinant_gives_zero_probability():
    V = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 1.0]])
    model = LogisticDppModel(V, np.zeros(3), 0.01)
    assert success_probability_logistic(model, [0, 1]) == 0.0


def test_single_item_closed_form():
    model = LogisticDppModel(np.zeros((3, 2)), [1.0, 1.0, 1.0], 0.01)
    expected = 1.0 - math.exp(-0.01)
    assert success_probability_logistic(model, [1]) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.00995, abs=1e-5)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 10.0))
def test_probability_in_unit_interval(seed, w):
    g = np.random.default_rng(seed)
    model = LogisticDppModel(g.normal(size=(6, 2)), g.normal(size=6), w)
    items = list(g.permutation(6)[: g.integers(1, 7)])
    prob = success_probability_logistic(model, items)
    assert 0.0 <= prob < 1.0 or prob == pytest.approx(1.0)


def test_multitask_with_unit_rows_reduces_to_logistic(rng):
    V, D = rng.normal(size=(7, 3)), rng.normal(size=7)
    mt = MultiTaskDppModel(V, D, np.ones((7, 3)), 0.05)
    lg = LogisticDppModel(V, D, 0.05)
    for items in ([0], [1, 4], [2, 3, 6]):
        assert success_probability_multitask(mt, 5, items) == success_probability_logistic(lg, items)


def test_multitask_zero_rows_collapse_to_diagonal(rng):
    d = np.array([1.1, 0.7, 1.3, 0.9])
    mt = MultiTaskDppModel(rng.normal(size=(4, 2)), d, np.zeros((4, 2)), 0.2)
    expected = 1.0 - math.exp(-0.2 * (1.1**2 * 0.7**2 * 1.3**2))
    assert success_probability_multitask(mt, 3, [0, 1, 2]) == pytest.approx(expected, rel=1e-12)


def test_multitask_matches_full_kernel_oracle(rng):
    model = random_multitask(rng, p=8, r=3, w=0.05)
    K = full_task_kernel(model.V.tolist(), model.D.tolist(), model.R[6].tolist())
    items = [1, 4, 2]
    det = cofactor_det(principal(K, items))
    expected = -math.expm1(-model.w * det)
    assert success_probability_multitask(model, 6, items) == pytest.approx(expected, rel=1e-10)


def test_target_inside_items_is_rejected(rng):
    model = random_multitask(rng)
    with pytest.raises(InputError):
        success_probability_multitask(model, 2, [1, 2])


def test_observation_invariants():
    with pytest.raises(InputError):
        Observation((1, 2), 2, 1)
    with pytest.raises(InputError):
        Observation((), 2, 1)
    with pytest.raises(InputError):
        Observation((1,), 2, 3)
    assert Observation((1, 2), 0, 0).full_set == (1, 2, 0)


# -- likelihoods --------------------------------------------------------------


def test_empty_likelihood_is_zero():
    model = LogisticDppModel(np.zeros((3, 2)), np.zeros(3))
    assert penalized_log_likelihood_logistic(model, [], np.ones(3), 1.0) == 0.0
    mt = MultiTaskDppModel(np.zeros((3, 2)), np.zeros(3), np.zeros((3, 2)))
    assert penalized_log_likelihood_multitask(mt, [], np.ones(3), 1.0) == 0.0


def test_clamped_positive_observation():
    model = LogisticDppModel(np.zeros((3, 2)), np.zeros(3))
    ll = penalized_log_likelihood_logistic(model, [Observation((0,), 1, 1)], np.ones(3), 0.0)
    assert ll == pytest.approx(math.log(SIGMA_CLAMP), rel=1e-12)


def test_logistic_likelihood_compositional_oracle(rng):
    model = LogisticDppModel(rng.normal(size=(8, 3)), rng.normal(size=8), 0.2)
    obs = random_observations(rng, 8, 15)
    alpha = rng.uniform(0.5, 2, size=8)
    got = penalized_log_likelihood_logistic(model, obs, alpha, 0.7)
    assert got == pytest.approx(oracle_loglik(model.V, model.D, None, model.w, obs, alpha, 0.7), abs=1e-10)


def test_multitask_likelihood_compositional_oracle(rng):
    model = random_multitask(rng)
    obs = random_observations(rng, 8, 15)
    alpha = rng.uniform(0.5, 2, size=8)
    got = penalized_log_likelihood_multitask(model, obs, alpha, 0.7)
    assert got == pytest.approx(oracle_loglik(model.V, model.D, model.R, model.w, obs, alpha, 0.7), abs=1e-10)


def test_multitask_likelihood_unit_rows_reduction(rng):
    V, D = rng.normal(size=(6, 2)), rng.normal(size=6)
    alpha = rng.uniform(0.5, 2, size=6)
    obs = [Observation((0, 3), 5, 1)]
    mt = MultiTaskDppModel(V, D, np.ones((6, 2)), 0.1)
    lg = LogisticDppModel(V, D, 0.1)
    # the logistic model scores items only when the target is absent
    lg_obs = [Observation((0, 3), None, 1)]
    extra = 0.5 * 0.4 * np.sum(alpha * np.sum(mt.R**2, axis=1))
    assert penalized_log_likelihood_multitask(mt, obs, alpha, 0.4) == pytest.approx(
        penalized_log_likelihood_logistic(lg, lg_obs, alpha, 0.4) - extra, abs=1e-12
    )


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 50.0))
def test_likelihood_is_finite(seed, scale):
    g = np.random.default_rng(seed)
    model = MultiTaskDppModel(
        scale * g.normal(size=(6, 2)), scale * g.normal(size=6), scale * g.normal(size=(6, 2)), 1.0
    )
    obs = random_observations(g, 6, 8)
    assert np.isfinite(penalized_log_likelihood_multitask(model, obs, np.ones(6), 1.0))


# -- ranking and completion ---------------------------------------------------------


def test_rank_targets_orders_by_probability():
    # p = 3, basket {0}: design scores so item 2 beats item 1
    V = np.array([[1.0], [0.0], [0.0]])
    R = np.array([[1.0], [np.sqrt(0.2)], [np.sqrt(0.7)]])
    D = np.zeros(3)
    model = MultiTaskDppModel(V, D, R, 1.0)
    ranked = rank_targets(model, [0])
    assert [t for t, _ in ranked] == [2, 1]
    assert ranked[0][1] == pytest.approx(1 - math.exp(-0.7))
    assert ranked[1][1] == pytest.approx(1 - math.exp(-0.2))


def test_rank_targets_tie_goes_to_lower_index(rng):
    V, D, R = rng.normal(size=(4, 2)), rng.normal(size=4), rng.normal(size=(4, 2))
    V[2], D[2], R[2] = V[1], D[1], R[1]
    R[3] = 0.0
    ranked = rank_targets(MultiTaskDppModel(V, D, R, 0.1), [0])
    assert [t for t, _ in ranked][:2] == [1, 2]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_rank_targets_invariant_to_w(seed, c):
    g = np.random.default_rng(seed)
    V, D, R = g.normal(size=(9, 3)), g.normal(size=9), g.normal(size=(9, 3))
    a = rank_targets(MultiTaskDppModel(V, D, R, 0.01), [0, 4])
    b = rank_targets(MultiTaskDppModel(V, D, R, 0.01 * c), [0, 4])
    assert [t for t, _ in a] == [t for t, _ in b]


def test_rank_targets_complete_and_excludes_basket(rng):
    model = random_multitask(rng, p=10)
    ranked = rank_targets(model, [3, 7])
    assert sorted(t for t, _ in ranked) == [0, 1, 2, 4, 5, 6, 8, 9]
    for t, s in ranked:
        assert s == pytest.approx(success_probability_multitask(model, t, [3, 7]), rel=1e-12, abs=1e-300)


def test_planted_completion_ranks_in_top_five():
    rng = np.random.default_rng(0)
    groups = np.arange(30).reshape(10, 3)
    baskets = [[f"i{j:02d}" for j in rng.permutation(groups[rng.integers(10)])] for _ in range(1500)]
    parts = split(BasketDataset(baskets), 0.7, seed=1)
    ex = make_examples(parts, "random-holdout", 1.0, seed=2)
    model, _ = train("multitask", ex.train, parts.catalog, TrainConfig(rank=10, seed=3))
    hits = [c.held_out in [t for t, _ in rank_targets(model, c.context)[:5]] for c in ex.test]
    assert np.mean(hits) >= 0.6


def test_greedy_zero_count(rng):
    model = LogisticDppModel(rng.normal(size=(5, 2)), rng.normal(size=5))
    assert greedy_complete(model, [0], 0) == []


def test_greedy_first_pick_is_best_pair():
    V = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.1]])
    model = LogisticDppModel(V, np.full(3, 0.1), 0.5)
    assert success_probability_logistic(model, [0, 1]) > success_probability_logistic(model, [0, 2])
    assert greedy_complete(model, [0], 1) == [1]


def test_greedy_matches_exhaustive_oracle(rng):
    model = LogisticDppModel(rng.normal(size=(6, 3)), rng.normal(size=6), 0.1)
    oracle = exhaustive_greedy(lambda s: success_probability_logistic(model, s), 6, [2], 2)
    assert greedy_complete(model, [2], 2) == oracle


def test_greedy_count_too_large(rng):
    model = LogisticDppModel(rng.normal(size=(4, 2)), rng.normal(size=4))
    with pytest.raises(InputError):
        greedy_complete(model, [0, 1], 3)


# -- serialization --------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["logistic", "multitask", "multitask-nobias"])
def test_round_trip_is_bit_exact(tmp_path, rng, kind):
    V, D, R = rng.normal(size=(5, 3)), rng.normal(size=5), rng.normal(size=(5, 3))
    if kind == "logistic":
        model = LogisticDppModel(V, D, 0.0123456789)
    else:
        model = MultiTaskDppModel(V, np.zeros(5) if kind == "multitask-nobias" else D, R, 0.01, kind == "multitask")
    tokens = ["a", "b", "c", "d", "é"]
    path = tmp_path / "m.bdpp"
    save_model(path, model, tokens)
    back, toks = load_model(path)
    assert toks == tokens
    assert back.kind == kind and back.w == model.w
    for name in ("V", "D") + (("R",) if kind != "logistic" else ()):
        assert getattr(back, name).tobytes() == getattr(model, name).tobytes()
    save_model(tmp_path / "again.bdpp", back, toks)
    assert (tmp_path / "again.bdpp").read_bytes() == path.read_bytes()


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "x"
    path.write_bytes(b"hello")
    with pytest.raises(InputError):
        load_model(path)
