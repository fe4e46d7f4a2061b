"""Algebra presentations, derivations, Kaehler differentials, duality pairing."""

from fractions import Fraction as Q

import pytest

from algebroids.cdga import (
    CdgaPresentation,
    derivations,
    kaehler,
    pairing_check,
    validate_cdga,
)
from algebroids.fixtures import all_algebras, fix_dual, fix_eta, fix_k
from algebroids.graded import GradedMap, GradedSpace, tensor_slices, tensor_space
from algebroids.matrix import Matrix, from_columns, sgn

import oracles


# hand-written multiplication tables, flat basis indexing, for the oracle
DUAL_DEGREES = [0, 0]                     # 1, x
DUAL_MULT = {(0, 0): {0: 1}, (0, 1): {1: 1}, (1, 0): {1: 1}, (1, 1): {}}
ETA_DEGREES = [0, -1]                     # 1, eta
ETA_MULT = {(0, 0): {0: 1}, (0, 1): {1: 1}, (1, 0): {1: 1}, (1, 1): {}}


def test_fixtures_validate():
    for alg in all_algebras():
        rep = validate_cdga(alg)
        assert rep.ok, rep.lines()


def test_validation_catches_broken_unit():
    space = GradedSpace({0: 2}, {0: ("1", "x")})
    sq = tensor_space(space, space)
    blocks = {}
    for n in sq.degrees():
        cols = []
        for p, i, j in tensor_slices(space, space, n):
            if i == 0 and j == 0:
                cols.append([Q(1), Q(0)])
            else:
                cols.append([Q(0), Q(0)])    # 1.x = 0: unit law fails
        blocks[n] = from_columns(cols, nrows=space.dim(n))
    broken = CdgaPresentation(space, GradedMap(sq, space, 0, blocks), name="broken")
    rep = validate_cdga(broken)
    assert not rep.ok
    assert any(ax in ("left-unit", "right-unit") for ax, _ in rep.failures)


def test_derivations_ground_field_trivial():
    T = derivations(fix_k())
    assert T.space.total_dim() == 0


def test_derivations_dual_numbers():
    # D(1) = 0 and 0 = D(x.x) = 2x D(x) force D(x) into Q.x
    T = derivations(fix_dual())
    assert T.space.dims == {0: 1}
    assert oracles.derivation_solution_dim(DUAL_DEGREES, DUAL_MULT, 0) == 1
    D = T.space.basis_element(0, 0)
    A = fix_dual()
    one, x = A.space.basis_element(0, 0), A.space.basis_element(0, 1)
    assert T.evaluate(D, one).is_zero()
    img = T.evaluate(D, x)
    assert img.coords[0] == 0 and img.coords[1] != 0


def test_derivations_eta_line():
    # degree 0: eta d/d(eta); degree 1: d/d(eta); nothing in degree -1
    T = derivations(fix_eta())
    assert T.space.dims == {0: 1, 1: 1}
    for n in (-1, 0, 1):
        assert oracles.derivation_solution_dim(ETA_DEGREES, ETA_MULT, n) \
            == T.space.dims.get(n, 0)
    A = fix_eta()
    eta = A.space.basis_element(-1, 0)
    E = T.space.basis_element(0, 0)
    img = T.evaluate(E, eta)
    assert img.degree == -1 and img.coords[0] != 0
    P = T.space.basis_element(1, 0)
    img = T.evaluate(P, eta)
    assert img.degree == 0 and img.coords[0] != 0


def test_bracket_structure_eta():
    T = derivations(fix_eta())
    E = T.space.basis_element(0, 0)      # proportional to eta d/d(eta)
    P = T.space.basis_element(1, 0)      # proportional to d/d(eta)
    assert T.bracket(E, E).is_zero()
    assert T.bracket(P, P).is_zero()     # odd self-bracket 2P^2 = 0
    # with E = lam.(eta d/d(eta)) one has [P, E] = lam.P
    lam = T.evaluate(E, T.algebra.space.basis_element(-1, 0)).coords[0]
    assert (T.bracket(P, E) - P.scale(lam)).is_zero()


def test_bracket_graded_antisymmetry_and_jacobi():
    T = derivations(fix_eta())
    elems = [T.space.basis_element(0, 0), T.space.basis_element(1, 0)]
    for a in elems:
        for b in elems:
            lhs = T.bracket(a, b)
            rhs = T.bracket(b, a).scale(-sgn(a.degree * b.degree))
            assert (lhs - rhs).is_zero()
            for c in elems:
                j1 = T.bracket(a, T.bracket(b, c))
                j2 = T.bracket(T.bracket(a, b), c)
                j3 = T.bracket(b, T.bracket(a, c)).scale(sgn(a.degree * b.degree))
                assert (j1 - j2 - j3).is_zero()


def test_derivation_complex_of_fixtures_has_zero_differential():
    # base differentials vanish, so [d, D] = 0 throughout
    for alg in (fix_dual(), fix_eta()):
        T = derivations(alg)
        assert T.complex.d.is_zero()
        assert T.complex.cohomology().dims() == T.space.dims


def test_kaehler_ground_field():
    assert kaehler(fix_k()).space.total_dim() == 0


def test_kaehler_dual_numbers():
    # d(x.x) = 0 gives x.dx = 0, leaving a single class in degree 0
    O = kaehler(fix_dual())
    assert O.space.dims == {0: 1}
    A = fix_dual()
    x = A.space.basis_element(0, 1)
    dx = O.universal(x)
    assert not dx.is_zero()
    assert O.bimodule.lmul(x, dx).is_zero()


def test_kaehler_eta_free_of_rank_one():
    # no relation appears in odd degree: d(eta)^2 sees a sign cancellation
    O = kaehler(fix_eta())
    assert O.space.dims == {-1: 1, -2: 1}
    A = fix_eta()
    eta = A.space.basis_element(-1, 0)
    deta = O.universal(eta)
    assert deta.degree == -1 and not deta.is_zero()
    assert not O.bimodule.lmul(eta, deta).is_zero()


def test_universal_map_satisfies_leibniz():
    for alg in (fix_dual(), fix_eta()):
        O = kaehler(alg)
        for a in alg.all_basis():
            for b in alg.all_basis():
                lhs = O.universal(alg.mul(a, b))
                rhs = O.bimodule.rmul(O.universal(a), b) \
                    + O.bimodule.rmul(O.universal(b), a).scale(sgn(a.degree * b.degree))
                assert (lhs - rhs).is_zero()


def test_universal_map_kills_unit():
    for alg in all_algebras():
        assert kaehler(alg).universal(alg.unit()).is_zero()


def test_pairing_between_derivations_and_kaehler_dual():
    for alg in all_algebras():
        assert pairing_check(derivations(alg), kaehler(alg))
