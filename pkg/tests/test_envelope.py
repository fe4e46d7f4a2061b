"""Envelope towers, primitives, coproducts, jets and invariance checks.

Frozen values come from hand computation on the rank one fixtures:
filtration dimensions by listing words a, a.s(v), a.s(v)s(v), ... modulo
unit insertions, primitive brackets by expanding commutators of the
operators the letters induce on A, and jet level dimensions from the
envelope levels they pair against.
"""

from fractions import Fraction as Q
from functools import lru_cache

import pytest

from algebroids.atiyah import AnchoredModule
from algebroids.cdga import derivations
from algebroids.envelope import (
    TruncationError,
    algebroid_from_table,
    cdga_anchored_algebra,
    coequalizer_tower,
    coproduct,
    enveloping_relation_check,
    envelope_primitives,
    jet_tower,
    primitive_space,
    qiso_invariance_test,
    tautological_algebroid,
    validate_algebroid,
    zero_algebroid,
    _slices,
)
from algebroids.fixtures import (
    anchored_dual,
    anchored_eta,
    anchored_zero,
    fix_dual,
    fix_eta,
)
from algebroids.graded import GradedMap, tensor_element
from algebroids.matrix import from_columns, sgn
from algebroids.modules import FreeModuleBuilder, map_from_generators


@lru_cache(maxsize=None)
def _anchored(kind: str):
    if kind == "zero":
        return anchored_zero(fix_eta(), 1)
    return {"dual": anchored_dual, "eta": anchored_eta}[kind]()


@lru_cache(maxsize=None)
def _envelope(kind: str, order: int):
    return coequalizer_tower(_anchored(kind), order)


@lru_cache(maxsize=None)
def _jets(kind: str, order: int):
    return jet_tower(_anchored(kind), order)


# -- algebroid validation ----------------------------------------------------


def test_tautological_algebroid_satisfies_axioms():
    for alg in (fix_dual(), fix_eta()):
        L = tautological_algebroid(alg)
        assert validate_algebroid(L).ok


def test_zero_algebroid_needs_zero_anchor():
    L = zero_algebroid(_anchored("zero"))
    assert validate_algebroid(L).ok
    with pytest.raises(ValueError, match="zero anchor"):
        zero_algebroid(anchored_dual())


def test_bracket_table_on_the_dual_numbers():
    anch = anchored_dual()
    V = anch.module
    xv = V.space.basis_element(0, 1)

    def good(x, y):
        i, j = x.coords.index(1), y.coords.index(1)
        if (i, j) == (0, 1):
            return xv
        if (i, j) == (1, 0):
            return xv.scale(-1)
        return V.space.zero(0)

    assert validate_algebroid(algebroid_from_table(anch, good)).ok

    def bad(x, y):
        # [v, xv] = v is not compatible with the anchor of v
        i, j = x.coords.index(1), y.coords.index(1)
        if (i, j) == (0, 1):
            return V.space.basis_element(0, 0)
        if (i, j) == (1, 0):
            return V.space.basis_element(0, 0).scale(-1)
        return V.space.zero(0)

    rep = validate_algebroid(algebroid_from_table(anch, bad))
    assert not rep.ok
    assert any(axiom == "leibniz" for axiom, _ in rep.failures)


# -- the filtration ----------------------------------------------------------


def test_envelope_dimensions():
    U = _envelope("eta", 3)
    assert [U.space(n).total_dim() for n in range(4)] == [2, 4, 6, 8]
    assert U.space(1).dims == {-1: 1, 0: 2, 1: 1}
    D = _envelope("dual", 2)
    assert [D.space(n).total_dim() for n in range(3)] == [2, 4, 6]


def test_graded_pieces_are_tensor_powers_of_the_module():
    # V free of rank one in degree 1 over Q[eta]: Gr^n is free on one
    # generator of degree n
    U = _envelope("eta", 3)
    for n in range(4):
        assert U.graded_piece(n).space.dims == {n - 1: 1, n: 1}


def test_envelope_rejects_negative_order():
    with pytest.raises(ValueError, match="nonnegative"):
        coequalizer_tower(anchored_eta(), -1)
    with pytest.raises(ValueError, match="nonnegative"):
        jet_tower(anchored_eta(), -1)


def test_products_past_the_order_overflow():
    U = _envelope("eta", 2)
    v = U.anchored.module.space.basis_element(1, 0)
    sv = U.include_module(v, 2)
    v2 = U.mul(sv, sv)
    with pytest.raises(TruncationError):
        U.mul(v2, sv)


def test_weights_and_unit():
    U = _envelope("eta", 2)
    v = U.anchored.module.space.basis_element(1, 0)
    sv = U.include_module(v, 2)
    assert U.weight(U.unit(2)) == 0
    assert U.weight(sv) == 1
    assert U.weight(U.mul(sv, sv)) == 2
    assert (U.mul(U.unit(2), sv) - sv).is_zero()
    low = U.lower(sv, 1)
    assert low is not None and (U.chain_embed(1, 2)(low) - sv).is_zero()
    assert U.lower(U.mul(sv, sv), 1) is None


def test_enveloping_relation():
    # s(v) iota(a) - (-1)^{|a||v|} iota(a) s(v) = iota(rho(v)(a))
    for kind in ("dual", "eta", "zero"):
        assert enveloping_relation_check(_envelope(kind, 2)).ok
    U = _envelope("dual", 2)
    x = U.algebra.space.basis_element(0, 1)
    sv = U.include_module(U.anchored.module.space.basis_element(0, 0), 1)
    ix = U.include_algebra(x, 0)
    comm = U.mul_levels(1, 0, sv, ix) - U.mul_levels(0, 1, ix, sv)
    assert (comm - U.include_algebra(x, 1)).is_zero()


def test_zero_anchor_letters_commute_with_scalars():
    U = _envelope("zero", 2)
    v = U.anchored.module.space.basis_element(1, 0)
    sv = U.include_module(v, 1)
    for a in U.algebra.all_basis():
        ia = U.include_algebra(a, 0)
        comm = U.mul_levels(1, 0, sv, ia) \
            - U.mul_levels(0, 1, ia, sv).scale(sgn(a.degree * v.degree))
        assert comm.is_zero()


def test_counit_kills_letters_and_fixes_scalars():
    U = _envelope("eta", 2)
    eps = U.counit_map(2)
    eta = U.algebra.space.basis_element(-1, 0)
    v = U.anchored.module.space.basis_element(1, 0)
    assert (eps(U.include_algebra(eta, 2)) - eta).is_zero()
    # sigma(v)(1) = rho(v)(1) = 0
    assert eps(U.include_module(v, 2)).is_zero()
    assert eps(U.unit(2)).coords == (Q(1),)


# -- primitives --------------------------------------------------------------


def test_primitives_of_the_plain_algebra_vanish():
    assert primitive_space(cdga_anchored_algebra(fix_dual())) == {}
    assert primitive_space(cdga_anchored_algebra(fix_eta())) == {}


def test_envelope_primitives_over_the_dual_numbers():
    L = envelope_primitives(anchored_dual(), 1)
    assert L.report.ok
    assert L.module.space.dims == {0: 2}
    U = L.host
    v = U.anchored.module.space.basis_element(0, 0)
    x = U.algebra.space.basis_element(0, 1)
    sv = U.include_module(v, 2)
    xsv = U.level(2).lmul(x, sv)

    def back(el):
        sol = L.inclusion.block(el.degree).solve(list(el.coords))
        assert sol is not None, "element is not primitive"
        return L.module.space.element(el.degree, sol)

    pv, pxv = back(sv), back(xsv)
    assert L.bra(pv, pv).is_zero()
    assert (L.bra(pv, pxv) - pxv).is_zero()
    assert (L.bra(pxv, pv) + pxv).is_zero()


def test_envelope_primitives_over_the_odd_line():
    # weight <= 2 primitives close under the commutator: the letter v, its
    # scalar multiple eta.v, and the squares v^2, eta.v^2
    L = envelope_primitives(anchored_eta(), 2)
    assert L.report.ok
    assert L.module.space.dims == {0: 1, 1: 2, 2: 1}
    U = L.host
    eta = U.algebra.space.basis_element(-1, 0)
    sv = U.include_module(U.anchored.module.space.basis_element(1, 0), 4)
    v2 = U.mul(sv, sv)

    def back(el):
        sol = L.inclusion.block(el.degree).solve(list(el.coords))
        assert sol is not None, "element is not primitive"
        return L.module.space.element(el.degree, sol)

    pv = back(sv)
    pev = back(U.level(4).lmul(eta, sv))
    pv2 = back(v2)
    pev2 = back(U.level(4).lmul(eta, v2))
    assert (L.bra(pv, pv) - pv2.scale(2)).is_zero()
    assert (L.bra(pv, pev) - (pv - pev2.scale(2))).is_zero()
    assert L.bra(pv, pv2).is_zero()
    assert L.bra(pv2, pev2).is_zero()


# -- extensions --------------------------------------------------------------


def test_extension_to_the_envelope_itself():
    from algebroids.envelope import extend_to_envelope

    U = _envelope("eta", 2)
    R = U.as_algebra()
    v = U.anchored.module.space
    phi = GradedMap(v, R.space, 0, {
        d: from_columns([list(U.include_module(v.basis_element(d, i), 2).coords)
                         for i in range(v.dim(d))], nrows=R.space.dim(d))
        for d in v.degrees()})
    mor = extend_to_envelope(U, R, phi)
    for deg in U.space(2).degrees():
        for i in range(U.space(2).dim(deg)):
            b = U.space(2).basis_element(deg, i)
            assert (mor(b) - b).is_zero()


def test_extension_rejects_anchor_incompatible_letters():
    from algebroids.envelope import extend_to_envelope

    U = _envelope("eta", 2)
    R = U.as_algebra()
    zero = GradedMap.zero(U.anchored.module.space, R.space, 0)
    with pytest.raises(ValueError, match="anchor compatibility"):
        extend_to_envelope(U, R, zero)


# -- the coproduct -----------------------------------------------------------


def test_coproduct_of_unit_and_letters():
    U = _envelope("eta", 2)
    cop = coproduct(U)
    wsp = cop.wspace
    unit2 = U.unit(2)
    one_w = tensor_element(unit2, unit2, wsp)
    rep = cop.represent(cop.delta(unit2))
    assert cop.ideal.project(rep - one_w).is_zero()
    sv = U.include_module(U.anchored.module.space.basis_element(1, 0), 2)
    prim = tensor_element(sv, unit2, wsp) + tensor_element(unit2, sv, wsp)
    rep = cop.represent(cop.delta(sv))
    assert cop.ideal.project(rep - prim).is_zero()


def test_coproduct_counit_laws():
    U = _envelope("eta", 2)
    cop = coproduct(U)
    F2 = U.level(2)
    eps = U.counit_map(2)
    for deg in F2.space.degrees():
        for i in range(F2.space.dim(deg)):
            x = F2.space.basis_element(deg, i)
            rep = cop.represent(cop.delta(x))
            left = F2.space.zero(deg)
            right = F2.space.zero(deg)
            for c, x1, x2 in _slices(F2.space, F2.space, rep):
                left = left + F2.lmul(eps(x1), x2).scale(c)
                right = right + F2.rmul(x1, eps(x2)).scale(c)
            assert (left - x).is_zero()
            assert (right - x).is_zero()


# -- jets --------------------------------------------------------------------


def test_jet_level_dimensions():
    J = _jets("eta", 2)
    assert J.level_spaces[0].dims == {-1: 1, 0: 1}
    assert J.level_spaces[1].dims == {-2: 1, -1: 2, 0: 1}
    assert J.level_spaces[2].dims == {-3: 1, -2: 2, -1: 2, 0: 1}
    assert J.duality_sign == (1, 0)
    D = _jets("dual", 2)
    assert [D.level_spaces[n].total_dim() for n in range(3)] == [2, 4, 6]


def test_jet_order_zero_is_the_algebra():
    J = _jets("eta", 0)
    assert J.words[0].space.dims == fix_eta().space.dims
    for a in J.words[0].all_basis():
        assert J.evaluate_at_unit(0, a).coords == a.coords


def test_jet_restrictions_are_dual_to_the_embeddings():
    J = _jets("eta", 2)
    U = J.envelope
    for n in (1, 2):
        for deg in J.level_spaces[n].degrees():
            for i in range(J.level_spaces[n].dim(deg)):
                j = J.level_spaces[n].basis_element(deg, i)
                up = J.level_functional(n, J.level_inclusions[n](j))
                down = J.level_functional(
                    n - 1, J.level_inclusions[n - 1](J.restrictions[n](j)))
                assert (up.compose(U.embeds[n]) - down).is_zero()


def test_shuffle_scalar_laws_are_dual_to_the_bimodule():
    J = _jets("dual", 2)
    U = J.envelope
    alg = U.algebra
    n = 2
    for deg in J.level_spaces[n].degrees():
        for i in range(J.level_spaces[n].dim(deg)):
            w = J.level_inclusions[n](J.level_spaces[n].basis_element(deg, i))
            fw = J.word_functional(n, w)
            for a in alg.all_basis():
                fl = J.word_functional(n, J.shuffle(0, n, a, w))
                fr = J.word_functional(n, J.shuffle(n, 0, w, a))
                for x in U.level(n).all_basis():
                    t = U.levels[n].quotient.section(x)
                    star = fw(U.tensors[n].rmul(t, a)).scale(
                        sgn(a.degree * (deg + t.degree)))
                    plain = alg.mul(fw(t), a).scale(sgn(a.degree * t.degree))
                    assert (fl(t) - star).is_zero()
                    assert (fr(t) - plain).is_zero()


def test_zero_anchor_shuffle_symmetrizes_letters():
    J = _jets("zero", 2)
    w1 = J.words[1]
    SD = J.dual_sigma.bimodule.space
    e = w1.space.basis_element(0, 0)
    doubled = J.word_products[2].pure(SD.basis_element(0, 0), e).scale(2)
    assert (J.shuffle(1, 1, e, e) - doubled).is_zero()
    for deg in w1.space.degrees():
        if deg % 2 == 0:
            continue
        for i in range(w1.space.dim(deg)):
            u = w1.space.basis_element(deg, i)
            assert J.shuffle(1, 1, u, u).is_zero()


@pytest.mark.parametrize("kind", ["dual", "eta", "zero"])
def test_jet_product_is_certified_and_unital(kind):
    J = _jets(kind, 2)
    P = J.multiplication()
    assert P is J.multiplication()
    uw = P.unit_word
    assert J.evaluate_at_unit(2, uw).coords[0] == Q(1)
    top = [J.level_inclusions[2](J.level_spaces[2].basis_element(deg, i))
           for deg in J.level_spaces[2].degrees()
           for i in range(J.level_spaces[2].dim(deg))]
    for u in top:
        assert (P.product(uw, u) - u).is_zero()
        assert (P.product(u, uw) - u).is_zero()


def test_jet_product_commutes_and_respects_the_differential():
    J = _jets("dual", 2)
    P = J.multiplication()
    top = [J.level_inclusions[2](J.level_spaces[2].basis_element(deg, i))
           for deg in J.level_spaces[2].degrees()
           for i in range(J.level_spaces[2].dim(deg))]
    d = J.words[2].d
    for u in top:
        for w in top:
            uw = P.product(u, w)
            flip = P.product(w, u).scale(sgn(u.degree * w.degree))
            assert (uw - flip).is_zero()
            leib = d(uw) - P.product(d(u), w) \
                - P.product(u, d(w)).scale(sgn(u.degree))
            assert leib.is_zero()
            ev = J.evaluate_at_unit(2, uw)
            sep = J.envelope.algebra.mul(J.evaluate_at_unit(2, u),
                                         J.evaluate_at_unit(2, w))
            assert (ev - sep).is_zero()


# -- invariance under quasi-isomorphism --------------------------------------


def test_invariance_along_the_identity():
    V = anchored_eta()
    rep = qiso_invariance_test(GradedMap.identity(V.module.space), V, V, 2)
    assert rep.hypothesis_met and rep.conclusion


def test_invariance_along_a_projection_off_an_acyclic_summand():
    A = fix_eta()
    T = derivations(A)
    V = anchored_eta()
    b = FreeModuleBuilder(A, [("v", 1), ("e0", 0), ("e1", -1)])
    b.set_d("e1", b.times(A.unit(), "e0"))
    W = b.build("V+cone")
    gens = [V.rho(V.module.space.basis_element(1, 0)),
            T.space.zero(0), T.space.zero(-1)]
    src = AnchoredModule(W, T, map_from_generators(W, 0, gens, T.lmul, T.space),
                         name="V+cone")
    cols_by_deg = {}
    for d in W.space.degrees():
        cols = []
        for i in range(W.space.dim(d)):
            col = [0] * V.module.space.dim(d)
            for j in range(V.module.space.dim(d)):
                if V.module.space.label(d, j) == W.space.label(d, i):
                    col[j] = 1
            cols.append(col)
        cols_by_deg[d] = from_columns(cols, nrows=V.module.space.dim(d))
    proj = GradedMap(W.space, V.module.space, 0, cols_by_deg)
    rep = qiso_invariance_test(proj, src, V, 2)
    assert rep.hypothesis_met and rep.conclusion


def test_invariance_is_vacuous_without_a_quasi_isomorphism():
    Z = _anchored("zero")
    zero = GradedMap.zero(Z.module.space, Z.module.space, 0)
    rep = qiso_invariance_test(zero, Z, Z, 2)
    assert not rep.hypothesis_met
    assert rep.conclusion
    assert any("hypothesis not met" in line for line in rep.lines)
