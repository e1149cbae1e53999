import itertools
import math

import numpy as np
import pytest
from scipy.linalg import expm

from trimix.exact import (
    DistVector,
    SizeCapError,
    apply_transition,
    continuous_distribution,
    continuous_tv,
    distribution_at,
    enumerate_group,
    exact_tv,
    projected_tv,
    t_mix_exact,
    tv_series,
)
from trimix.modular import UniUpperMatrix


def dense_kernel(n, m, lazy=True):
    """Transition matrix built from matrices directly (independent of the index permutations)."""
    elems = [UniUpperMatrix.from_free_entries(f[::-1], n, m)
             for f in itertools.product(range(m), repeat=n * (n - 1) // 2)]
    # reversed product order gives the same little-endian code as the table
    idx = {e: k for k, e in enumerate(elems)}
    N = len(elems)
    P = np.zeros((N, N))
    for k, e in enumerate(elems):
        for i in range(2, n + 1):
            for s in (1, -1):
                P[k, idx[e.row_add(i, s)]] += 1.0 / (2 * (n - 1))
    if lazy:
        P = 0.5 * np.eye(N) + 0.5 * P
    return P, idx


def test_table_sizes():
    assert enumerate_group(2, 3).size == 3
    assert enumerate_group(3, 3).size == 27
    assert enumerate_group(4, 2).size == 64
    with pytest.raises(SizeCapError, match="exceeds"):
        enumerate_group(5, 5)


def test_table_indexing_bijection():
    t = enumerate_group(3, 4)
    assert np.array_equal(t.index_of(t.coords), np.arange(t.size))
    assert t.element(0).is_identity()
    for k in (5, 17, 63):
        assert t.index_of(t.element(k).free_entries()) == k


def test_row_op_permutations_match_matrices():
    t = enumerate_group(3, 3)
    for (plus, minus), i in zip(t.permutations, range(2, 4)):
        assert np.array_equal(plus[minus], np.arange(t.size))
        for k in range(t.size):
            assert t.element(plus[k]) == t.element(k).row_add(i, 1)


def test_uniform_is_stationary():
    t = enumerate_group(3, 5)
    u = DistVector.uniform(t)
    assert np.allclose(apply_transition(u).p, u.p, atol=1e-15)


def test_one_step_n2_m3():
    d = apply_transition(DistVector.point_mass(enumerate_group(2, 3)))
    assert np.allclose(d.p, [0.5, 0.25, 0.25])


def test_operator_symmetric_and_matches_sparse_action():
    P, _ = dense_kernel(3, 3)
    assert np.allclose(P, P.T)
    t = enumerate_group(3, 3)
    for k in range(t.size):
        row = apply_transition(DistVector.point_mass(t, k)).p
        assert np.allclose(row, P[k], atol=1e-15)


def test_tv_at_zero_and_monotone():
    tv = tv_series(3, 3, 200)
    assert abs(tv[0] - (1 - 1 / 27)) < 1e-12
    assert np.all(np.diff(tv) <= 1e-15)
    assert tv[-1] < 1e-6


def test_dense_power_oracle_t50():
    P, _ = dense_kernel(3, 3)
    p = np.linalg.matrix_power(P, 50)[0]
    oracle = 0.5 * np.abs(p - 1 / 27).sum()
    assert abs(exact_tv(3, 3, 50) - oracle) < 1e-10


def test_dense_oracle_n4_m2():
    P, _ = dense_kernel(4, 2)
    p = np.linalg.matrix_power(P, 7)[0]
    assert np.allclose(distribution_at(4, 2, 7).p, p, atol=1e-13)


def test_vertex_transitivity_n3_m3():
    series0 = tv_series(3, 3, 30)
    for start in range(27):
        assert np.allclose(tv_series(3, 3, 30, start), series0, atol=1e-13)


def _cycle_walk_tmix(m, eps):
    # standalone lazy +-1 walk on Z/mZ
    p = np.zeros(m)
    p[0] = 1.0
    t = 0
    while 0.5 * np.abs(p - 1 / m).sum() > eps:
        p = 0.5 * p + 0.25 * np.roll(p, 1) + 0.25 * np.roll(p, -1)
        t += 1
    return t


@pytest.mark.parametrize("m", [2, 3, 5, 8, 13])
def test_tmix_n2_matches_cycle_walk(m):
    for eps in (0.5, 0.25, 0.1):
        assert t_mix_exact(2, m, eps) == _cycle_walk_tmix(m, eps)


def test_tmix_trivial_eps():
    assert t_mix_exact(3, 3, 1 - 1 / 27) == 0
    with pytest.raises(ValueError):
        t_mix_exact(3, 3, 0)


def test_continuous_matches_matrix_exponential():
    P, _ = dense_kernel(3, 3, lazy=False)
    Q = 2 * (P - np.eye(27))  # total ring rate n - 1 = 2
    for t in (0.0, 0.7, 3.0, 12.0):
        d, err = continuous_distribution(3, 3, t)
        want = expm(Q * t)[0]
        assert np.abs(d.p - want).sum() <= 2 * err + 1e-12
        tv, _ = continuous_tv(3, 3, t)
        assert abs(tv - 0.5 * np.abs(want - 1 / 27).sum()) < 1e-10


def test_projection_is_a_lower_bound():
    for t in (0, 3, 10):
        d = distribution_at(3, 4, t)
        full = d.tv_to_uniform()
        for proj in ("corner", "first_row", "last_column"):
            assert projected_tv(d, proj) <= full + 1e-15
        assert abs(projected_tv(d, "full") - full) < 1e-15


def test_corner_projection_n2_is_cycle_walk():
    d = distribution_at(2, 7, 5)
    p = np.zeros(7)
    p[0] = 1
    for _ in range(5):
        p = 0.5 * p + 0.25 * np.roll(p, 1) + 0.25 * np.roll(p, -1)
    assert np.allclose(d.project("corner"), p)


def test_distvector_validation():
    t = enumerate_group(2, 3)
    with pytest.raises(ValueError):
        DistVector(t, [0.5, 0.5])
    with pytest.raises(ValueError):
        DistVector(t, [0.5, 0.6, -0.1])
