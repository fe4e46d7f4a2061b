from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from algebroids.matrix import Matrix, Q, from_columns, from_rows, identity, zeros

import oracles


@st.composite
def matrix_strategy(draw, max_dim=5):
    nrows = draw(st.integers(0, max_dim))
    ncols = draw(st.integers(0, max_dim))
    ent = st.fractions(min_value=-4, max_value=4, max_denominator=3)
    rows = [[draw(ent) for _ in range(ncols)] for _ in range(nrows)]
    return Matrix(rows, ncols=ncols)


def test_constructor_rejects_ragged():
    with pytest.raises(ValueError):
        Matrix([[1, 2], [3]])


def test_constructor_rejects_floats():
    with pytest.raises(TypeError):
        Matrix([[0.5]])


def test_mul_and_identity():
    a = from_rows([[1, 2], [3, 4]])
    assert identity(2) * a == a
    assert a * identity(2) == a
    b = from_rows([[0, 1], [1, 0]])
    assert a * b == from_rows([[2, 1], [4, 3]])


def test_rref_known():
    a = from_rows([[1, 2, 3], [2, 4, 6], [1, 1, 1]])
    red, pivots = a.rref()
    assert pivots == [0, 1]
    assert red == from_rows([[1, 0, -1], [0, 1, 2], [0, 0, 0]])


def test_kernel_known():
    a = from_rows([[1, 2, 3], [2, 4, 6], [1, 1, 1]])
    k = a.kernel()
    assert k.shape == (3, 1)
    assert k.column(0) == (Q(1), Q(-2), Q(1))


def test_solve_known_and_inconsistent():
    a = from_rows([[1, 1], [0, 1]])
    assert a.solve([Q(3), Q(1)]) == (Q(2), Q(1))
    b = from_rows([[1, 1], [2, 2]])
    assert b.solve([Q(1), Q(3)]) is None


def test_inverse():
    a = from_rows([[1, 2], [3, 4]])
    inv = a.inverse()
    assert inv is not None
    assert a * inv == identity(2)
    assert from_rows([[1, 2], [2, 4]]).inverse() is None


def test_empty_shapes():
    z = zeros(0, 3)
    assert z.rank() == 0
    assert z.kernel().shape == (3, 3)
    assert zeros(3, 0).kernel().shape == (0, 0)
    assert from_columns([], nrows=2).shape == (2, 0)


@settings(max_examples=60, deadline=None)
@given(matrix_strategy())
def test_rank_matches_sympy(m):
    assert m.rank() == oracles.rank(m)


@settings(max_examples=60, deadline=None)
@given(matrix_strategy())
def test_kernel_matches_sympy(m):
    k = m.kernel()
    assert k.ncols == oracles.nullity(m)
    assert (m * k).is_zero()
    # columns independent
    assert k.rank() == k.ncols


@settings(max_examples=40, deadline=None)
@given(matrix_strategy(max_dim=4), st.data())
def test_solve_matches_sympy(m, data):
    if m.nrows == 0:
        return
    ent = st.fractions(min_value=-3, max_value=3, max_denominator=2)
    target = [data.draw(ent) for _ in range(m.nrows)]
    mine = m.solve(target)
    theirs = oracles.solve_exact(m, target)
    assert (mine is None) == (theirs is None)
    if mine is not None:
        assert m.apply(mine) == tuple(Fraction(t) for t in target)
