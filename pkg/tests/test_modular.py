import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimix.modular import (
    ElementaryMatrix,
    Residue,
    ResidueVector,
    UniUpperMatrix,
    centered_magnitude,
    dot,
    group_order,
    mat_inverse,
    mat_mul,
    mulmod,
    row_add,
)


def dense_mul(a, b, m):
    # python-int oracle
    n = len(a)
    return [[sum(int(a[i][k]) * int(b[k][j]) for k in range(n)) % m for j in range(n)] for i in range(n)]


@st.composite
def matrices(draw, n=None, m=None):
    n = n or draw(st.integers(2, 6))
    m = m or draw(st.sampled_from([2, 3, 7, 12]))
    free = draw(st.lists(st.integers(0, m - 1), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2))
    return UniUpperMatrix.from_free_entries(free, n, m)


def test_residue_reduces_and_rejects_trivial_modulus():
    assert Residue(-1, 3).value == 2
    assert Residue(7, 5) + 4 == Residue(1, 5)
    assert Residue(2, 5) * Residue(3, 5) == Residue(1, 5)
    assert -Residue(1, 4) == Residue(3, 4)
    with pytest.raises(ValueError):
        Residue(0, 1)
    with pytest.raises(ValueError):
        Residue(1, 3) + Residue(1, 5)


def test_centered_magnitude_examples():
    assert centered_magnitude(Residue(5, 7)) == 2
    assert Residue(5, 7).exceeds(1)
    assert centered_magnitude(Residue(4, 8)) == 4
    assert centered_magnitude(np.array([0, 1, 6]), 7).tolist() == [0, 1, 1]


def test_centered_magnitude_matches_set_definition():
    for m in range(2, 51):
        for a in range(m):
            for b in range(0, m // 2 + 1):
                in_set = a in range(b + 1, m - b)
                assert Residue(a, m).exceeds(b) == in_set, (m, a, b)


def test_frequency_vectors_need_zero_first_coordinate():
    ResidueVector.frequency([0, 1, 2], 3)
    with pytest.raises(ValueError):
        ResidueVector.frequency([1, 0, 0], 3)
    assert ResidueVector.basis(2, 3, 5).coords.tolist() == [0, 1, 0]


def test_dot_examples():
    I = UniUpperMatrix.identity(4, 5)
    assert dot(ResidueVector.basis(2, 4, 5), I.row(2)).value == 1
    assert dot(ResidueVector([0, 0, 0, 0], 5), ResidueVector([3, 1, 4, 1], 5)).value == 0


@given(st.lists(st.integers(-10**12, 10**12), min_size=1, max_size=8), st.integers(2, 2**31 - 1), st.data())
def test_dot_against_big_integers(ys, m, data):
    vs = data.draw(st.lists(st.integers(-10**12, 10**12), min_size=len(ys), max_size=len(ys)))
    got = dot(ResidueVector(ys, m), ResidueVector(vs, m)).value
    assert got == sum(a * b for a, b in zip(ys, vs)) % m


def test_dot_rejects_mismatch():
    with pytest.raises(ValueError):
        dot(ResidueVector([0, 1], 3), ResidueVector([0, 1, 2], 3))
    with pytest.raises(ValueError):
        dot(ResidueVector([0, 1], 3), ResidueVector([0, 1], 5))


def test_product_of_two_elementaries():
    a = ElementaryMatrix(1, 2).unit(3, 5)
    b = ElementaryMatrix(2, 3).unit(3, 5)
    c = mat_mul(a, b)
    assert c[1, 2] == 1 and c[2, 3] == 1 and c[1, 3] == 1
    I = UniUpperMatrix.identity(3, 5)
    assert mat_mul(I, I) == I


def test_inverse_examples():
    assert mat_inverse(UniUpperMatrix.identity(4, 3)).is_identity()
    inv = mat_inverse(ElementaryMatrix(1, 2).unit(3, 7))
    assert inv[1, 2] == 6


@pytest.mark.parametrize("n,m", [(n, m) for n in range(2, 7) for m in (2, 3, 7, 12)])
def test_group_axioms_on_random_samples(n, m):
    rng = np.random.default_rng(1000 * n + m)
    I = UniUpperMatrix.identity(n, m)
    for _ in range(1000 if n <= 3 else 100):
        a, b, c = (UniUpperMatrix.random(n, m, rng) for _ in range(3))
        assert (a @ b) @ c == a @ (b @ c)
        assert a @ a.inverse() == I and a.inverse() @ a == I
        assert a @ I == a


def test_inverse_n4_m6_round_trip():
    rng = np.random.default_rng(6)
    a = UniUpperMatrix.random(4, 6, rng)
    assert (a @ mat_inverse(a)).is_identity()


@given(matrices(), st.data())
def test_mul_matches_dense_oracle(a, data):
    b = data.draw(matrices(n=a.n, m=a.m))
    assert (a @ b).entries.tolist() == dense_mul(a.entries.tolist(), b.entries.tolist(), a.m)


def test_mulmod_large_modulus_no_overflow():
    m = 2**31 - 1
    a = np.array([[m - 1, m - 2], [m - 3, m - 4]])
    want = [[sum(int(a[i][k]) * int(a[k][j]) for k in range(2)) % m for j in range(2)] for i in range(2)]
    assert mulmod(a, a, m).tolist() == want


def test_row_add_examples():
    I = UniUpperMatrix.identity(3, 3)
    a = row_add(I, 2, 1)
    assert a[1, 2] == 1 and a.entries.sum() == 4
    assert row_add(I, 2, -1)[1, 2] == 2
    assert row_add(a, 2, -1) == I
    with pytest.raises(ValueError):
        row_add(I, 1, 1)
    with pytest.raises(ValueError):
        row_add(I, 4, 1)
    with pytest.raises(ValueError):
        row_add(I, 2, 2)


@given(matrices(), st.data())
def test_row_add_is_left_multiplication(a, data):
    i = data.draw(st.integers(2, a.n))
    s = data.draw(st.sampled_from([1, -1]))
    assert row_add(a, i, s) == ElementaryMatrix(i - 1, i, s).unit(a.n, a.m) @ a
    assert row_add(row_add(a, i, s), i, -s) == a


@pytest.mark.parametrize("n,m", [(2, 3), (3, 2), (3, 3), (4, 2)])
def test_row_ops_are_bijections_and_order_formula(n, m):
    elems = {UniUpperMatrix.from_free_entries(f, n, m) for f in itertools.product(range(m), repeat=n * (n - 1) // 2)}
    assert len(elems) == group_order(n, m)
    for i in range(2, n + 1):
        assert {row_add(e, i, 1) for e in elems} == elems


def test_unitriangular_validation():
    with pytest.raises(ValueError):
        UniUpperMatrix([[1, 0], [1, 1]], 3)
    with pytest.raises(ValueError):
        UniUpperMatrix([[2, 0], [0, 1]], 3)
    with pytest.raises(ValueError):
        UniUpperMatrix([[1]], 3)


def test_elementary_is_nilpotent():
    e = ElementaryMatrix(2, 3).dense(4, 5)
    assert not (e @ e).any()


@pytest.mark.parametrize("n,m", [(4, 3), (5, 5), (6, 7)])
def test_block_zero_sandwich_vanishes(n, m):
    rng = np.random.default_rng(n * m)
    for I in range(2, n + 1):
        E = ElementaryMatrix(I - 1, I).dense(n, m)
        for _ in range(50):
            y = UniUpperMatrix.random(n, m, rng).entries.copy()
            y[: I - 1, I - 1:] = 0
            np.fill_diagonal(y, 1)
            assert not mulmod(mulmod(E, y, m), E, m).any()
