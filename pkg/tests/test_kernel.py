import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from basketdpp.errors import InputError, SingularKernelError
from basketdpp.kernel import (
    FactorizedKernel,
    batch_det_and_inverse,
    build_submatrix,
    det_and_inverse,
)
from oracles import cofactor_det, naive_submatrix


def test_zero_factors_leave_squared_bias():
    k = FactorizedKernel(np.zeros((2, 3)), [2.0, 3.0])
    np.testing.assert_array_equal(build_submatrix(k, [0, 1]), np.diag([4.0, 9.0]))


def test_parallel_rows_give_zero_determinant():
    k = FactorizedKernel([[1.0], [1.0]], [0.0, 0.0])
    L = build_submatrix(k, [0, 1])
    np.testing.assert_array_equal(L, [[1.0, 1.0], [1.0, 1.0]])
    assert L[0, 0] * L[1, 1] - L[0, 1] ** 2 == 0.0


def test_matches_triple_loop(rng):
    V = rng.normal(size=(6, 3))
    D = rng.normal(size=6)
    R = rng.normal(size=3)
    items = [4, 0, 5, 2]
    got = build_submatrix(FactorizedKernel(V, D, R), items)
    want = naive_submatrix(V.tolist(), D.tolist(), items, R.tolist())
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(got, got.T)


@pytest.mark.parametrize("items", [[0, 7], [-1], [1, 1]])
def test_bad_item_sets(items):
    k = FactorizedKernel(np.ones((3, 2)), np.ones(3))
    with pytest.raises(InputError):
        build_submatrix(k, items)


def test_kernel_rejects_non_finite():
    with pytest.raises(InputError):
        FactorizedKernel([[np.nan]], [1.0])


def test_identity():
    res = det_and_inverse(np.eye(3))
    assert res.det == 1.0
    np.testing.assert_array_equal(res.inverse, np.eye(3))
    assert not res.jittered


def test_diagonal():
    res = det_and_inverse([[4.0, 0.0], [0.0, 9.0]])
    assert res.det == pytest.approx(36.0, rel=1e-15)
    np.testing.assert_allclose(res.inverse, np.diag([0.25, 1 / 9]), rtol=1e-15)


def test_random_psd_matches_cofactor(rng):
    A = rng.normal(size=(5, 5))
    M = A @ A.T + 0.1 * np.eye(5)
    res = det_and_inverse(M)
    assert res.det == pytest.approx(cofactor_det(M.tolist()), rel=1e-10)
    np.testing.assert_allclose(M @ res.inverse, np.eye(5), atol=1e-8)


def test_empty_matrix_has_unit_determinant():
    assert det_and_inverse(np.zeros((0, 0))).det == 1.0


def test_non_finite_matrix_is_input_error():
    with pytest.raises(InputError):
        det_and_inverse([[1.0, np.inf], [np.inf, 1.0]])


def test_rank_deficient_matrix_is_jittered():
    v = np.array([[1.0, 2.0, 3.0]])
    res = det_and_inverse(v.T @ v + np.diag([0.0, 0.0, 0.0]))
    assert res.jittered
    assert np.all(np.isfinite(res.inverse))
    assert res.det >= -1e-10


def test_singular_after_jitter_raises():
    res = det_and_inverse(np.zeros((2, 2)))
    assert res.jittered
    # the jitter lands exactly on a zero pivot
    bad = np.diag([-1e-10, 1e-3])
    with pytest.raises(SingularKernelError):
        det_and_inverse(bad)


def test_batch_agrees_with_single(rng):
    A = rng.normal(size=(20, 4, 4))
    S = A @ np.swapaxes(A, 1, 2)
    S[3] = np.outer([1, 2, 3, 4], [1, 2, 3, 4])
    dets, inv, jit, ok = batch_det_and_inverse(S)
    for j in range(20):
        single = det_and_inverse(S[j])
        assert jit[j] == single.jittered
        assert dets[j] == pytest.approx(single.det, rel=1e-9, abs=1e-25)
        if not single.jittered:
            np.testing.assert_allclose(inv[j], single.inverse, rtol=1e-8)
    assert ok.all()


def _kernels(draw_p=st.integers(2, 7), draw_r=st.integers(1, 4)):
    @st.composite
    def build(draw):
        p, r = draw(draw_p), draw(draw_r)
        seed = draw(st.integers(0, 2**32 - 1))
        g = np.random.default_rng(seed)
        R = g.normal(size=r) if draw(st.booleans()) else None
        kern = FactorizedKernel(g.normal(size=(p, r)), g.normal(size=p) * draw(st.sampled_from([0.0, 1.0])), R)
        k = draw(st.integers(1, p))
        items = list(g.permutation(p)[:k])
        return kern, items

    return build()


@settings(max_examples=200, deadline=None)
@given(_kernels())
def test_psd_property(case):
    kern, items = case
    L = build_submatrix(kern, items)
    assert np.linalg.det(L) >= -1e-10 * max(1.0, np.trace(L)) ** len(items)


@settings(max_examples=100, deadline=None)
@given(_kernels())
def test_det_is_permutation_invariant(case):
    kern, items = case
    a = np.linalg.det(build_submatrix(kern, items))
    b = np.linalg.det(build_submatrix(kern, items[::-1]))
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(_kernels(draw_p=st.integers(1, 6)))
def test_singleton_is_weighted_squared_norm(case):
    kern, items = case
    i = items[0]
    R = np.ones(kern.r) if kern.R is None else kern.R
    expected = np.sum(kern.V[i] ** 2 * R**2) + kern.D[i] ** 2
    assert build_submatrix(kern, [i])[0, 0] == pytest.approx(expected, rel=1e-12)


def test_duplicate_latent_rows_repel(rng):
    V = rng.normal(size=(4, 3))
    V[2] = V[1]
    R = rng.normal(size=3)
    L = build_submatrix(FactorizedKernel(V, np.zeros(4), R), [1, 2])
    assert abs(np.linalg.det(L)) < 1e-12 * np.trace(L) ** 2


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_det_matches_cofactor_expansion(k, seed):
    g = np.random.default_rng(seed)
    A = g.normal(size=(k, k))
    M = A @ A.T + 0.05 * np.eye(k)
    assert det_and_inverse(M).det == pytest.approx(cofactor_det(M.tolist()), rel=1e-10)
