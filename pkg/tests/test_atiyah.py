"""Square extensions, their duals, first-order operators, jets, duality."""

import pytest

from algebroids.atiyah import (
    AnchoredModule,
    anchor_transpose,
    build_diff1,
    build_first_jets,
    build_sigma,
    build_sigma_dual,
    chi_involution,
    jets_pushout_check,
    kaehler_transpose,
    theta_duality,
)
from algebroids.cdga import derivations, kaehler
from algebroids.fixtures import (
    anchored_dual,
    anchored_eta,
    anchored_zero,
    fix_dual,
    fix_eta,
    fix_k,
    free_rank_one,
    free_two_step,
)
from algebroids.graded import GradedMap, tensor_element, tensor_space
from algebroids.matrix import Matrix
from algebroids.modules import (
    algebra_bimodule,
    derivations_as_module,
    is_isomorphic_as_bimodules,
    left_dual,
    nilpotency_index,
    opposite,
)


def test_anchored_module_rejects_nonlinear_anchor():
    alg = fix_dual()
    V = free_rank_one(alg, 0, "v")
    T = derivations(alg)
    # v |-> 0 but x*v |-> the Euler field: not compatible with scaling by x
    bad = GradedMap(V.space, T.space, 0, {0: Matrix(((0, 1),))})
    with pytest.raises(ValueError, match="A-linear"):
        AnchoredModule(V, T, bad)


def test_anchored_module_rejects_wrong_degree():
    alg = fix_dual()
    V = free_rank_one(alg, 0, "v")
    T = derivations(alg)
    with pytest.raises(ValueError, match="degree 0"):
        AnchoredModule(V, T, GradedMap(V.space, T.space, 1, {}))


def test_sigma_dims():
    assert build_sigma(anchored_dual()).bimodule.space.dims == {0: 4}
    assert build_sigma(anchored_eta()).bimodule.space.dims == {-1: 1, 0: 2, 1: 1}


def test_sigma_right_twist_dual():
    # (0, v).x = (x, xv): the anchor leaks into the algebra summand
    an = anchored_dual()
    sig = build_sigma(an)
    iA, iV = sig.parts.include
    alg, V = an.algebra, an.module
    x = alg.space.basis_element(0, 1)
    v = V.space.basis_element(0, 0)
    got = sig.bimodule.rmul(iV(v), x)
    assert got == iA(x) + iV(V.lmul(x, v))
    # while x.(0, v) stays in the module summand
    assert sig.bimodule.lmul(x, iV(v)) == iV(V.lmul(x, v))


def test_sigma_right_twist_eta():
    # (0, v).eta = (1, -eta v): rho(v)(eta) = 1 plus a Koszul sign on the tail
    an = anchored_eta()
    sig = build_sigma(an)
    iA, iV = sig.parts.include
    alg, V = an.algebra, an.module
    eta = alg.space.basis_element(-1, 0)
    v = V.space.basis_element(1, 0)
    got = sig.bimodule.rmul(iV(v), eta)
    assert got == iA(alg.unit()) - iV(V.lmul(eta, v))


def test_sigma_zero_anchor_is_symmetric():
    an = anchored_zero(fix_dual())
    sig = build_sigma(an)
    assert nilpotency_index(sig.bimodule) == 0
    op = opposite(sig.bimodule)
    assert op.left == sig.bimodule.left
    assert op.right == sig.bimodule.right


def test_sigma_nilpotency_is_one():
    assert nilpotency_index(build_sigma(anchored_dual()).bimodule) == 1
    assert nilpotency_index(build_sigma(anchored_eta()).bimodule) == 1
    assert nilpotency_index(build_sigma_dual(anchored_dual()).bimodule) == 1
    assert nilpotency_index(build_sigma_dual(anchored_eta()).bimodule) == 1


def test_sigma_keeps_free_structure():
    sig = build_sigma(anchored_eta())
    assert sig.bimodule.free is not None
    assert sig.bimodule.free.triangular
    assert sig.sequence.sub.space.dims == fix_eta().space.dims


def test_sigma_isomorphic_to_opposite():
    # e.g. over the odd line: v |-> -v, (0, eta v) |-> (1, -eta v), rest fixed
    for an in (anchored_dual(), anchored_eta()):
        sig = build_sigma(an).bimodule
        assert is_isomorphic_as_bimodules(opposite(sig), sig)


def test_isomorphism_decision_rejects_twist():
    # same shape, but one differential is nonzero: no bimodule isomorphism
    from algebroids.fixtures import twisted_module
    from algebroids.modules import free_module

    tw = twisted_module()
    flat = free_module(tw.algebra, [("g1", 0), ("g2", -2)], name="flat")
    assert flat.space.dims == tw.space.dims
    assert not is_isomorphic_as_bimodules(flat, tw)


def test_sigma_dual_dims():
    assert build_sigma_dual(anchored_dual()).bimodule.space.dims == {0: 4}
    assert build_sigma_dual(anchored_eta()).bimodule.space.dims == \
        {-2: 1, -1: 2, 0: 1}


def test_transpose_anchor_values():
    an = anchored_dual()
    rh, vd = anchor_transpose(an)
    alg, V = an.algebra, an.module
    x = alg.space.basis_element(0, 1)
    v = V.space.basis_element(0, 0)
    assert vd.pair(rh(x), v) == x
    assert rh(alg.unit()).is_zero()

    an = anchored_eta()
    rh, vd = anchor_transpose(an)
    alg, V = an.algebra, an.module
    eta = alg.space.basis_element(-1, 0)
    v = V.space.basis_element(1, 0)
    # rhohat(eta)(v) = (-1)^{|eta||v|} rho(v)(eta) = -1
    assert vd.pair(rh(eta), v) == alg.unit().scale(-1)


def test_transpose_anchor_factors_through_forms():
    for an in (anchored_dual(), anchored_eta()):
        rh, vd = anchor_transpose(an)
        O = kaehler(an.algebra)
        rho_star = kaehler_transpose(an, O, vd)
        assert rho_star.compose(O.universal) == rh


def test_pairing_values_eta():
    an = anchored_eta()
    sd = build_sigma_dual(an)
    alg, V = an.algebra, an.module
    iT, iA = sd.parts.include
    iA_s, iV_s = sd.sigma.parts.include
    one_s = iA_s(alg.unit())
    v_s = iV_s(V.space.basis_element(1, 0))
    eta = alg.space.basis_element(-1, 0)
    assert sd.pair(iA(alg.unit()), one_s) == alg.unit()
    assert sd.pair(iA(eta), v_s).is_zero()
    assert sd.pair(iT(sd.rhohat(eta)), v_s) == alg.unit().scale(-1)


def test_chi_involution_values():
    an = anchored_eta()
    sd = build_sigma_dual(an)
    chi = chi_involution(sd)
    iT, iA = sd.parts.include
    alg = an.algebra
    eta = alg.space.basis_element(-1, 0)
    assert chi(iA(alg.unit())) == iA(alg.unit())
    assert chi(iA(eta)) == iA(eta) + iT(sd.rhohat(eta))
    theta = sd.rhohat(eta)
    assert chi(iT(theta)) == iT(theta.scale(-1))


def test_chi_involution_runs_on_dual_fixture():
    sd = build_sigma_dual(anchored_dual())
    chi = chi_involution(sd)
    iT, iA = sd.parts.include
    x = sd.anchored.algebra.space.basis_element(0, 1)
    assert chi(iA(x)) == iA(x) + iT(sd.rhohat(x))


def test_diff1_dims():
    assert build_diff1(fix_k()).bimodule.space.dims == {0: 1}
    assert build_diff1(fix_dual()).bimodule.space.dims == {0: 3}
    assert build_diff1(fix_eta()).bimodule.space.dims == {-1: 1, 0: 2, 1: 1}


def test_diff1_is_the_generic_square_extension():
    for alg in (fix_k(), fix_dual(), fix_eta()):
        D1 = build_diff1(alg)
        T = derivations(alg)
        an = AnchoredModule(derivations_as_module(T), T,
                            GradedMap.identity(T.space), name=f"T({alg.name})")
        other = build_sigma(an)
        assert D1.bimodule.left == other.bimodule.left
        assert D1.bimodule.right == other.bimodule.right
        assert D1.bimodule.d == other.bimodule.d


def test_jets_dims():
    assert build_first_jets(fix_k()).bimodule.space.dims == {0: 1}
    FJ = build_first_jets(fix_dual())
    assert FJ.bimodule.space.dims == {0: 3}
    assert FJ.kaehler.space.dims == {0: 1}
    FJ = build_first_jets(fix_eta())
    assert FJ.bimodule.space.dims == {-2: 1, -1: 2, 0: 1}
    assert FJ.kaehler.space.dims == {-2: 1, -1: 1}


def test_jets_kaehler_relations():
    # x.dx = 0 survives the embedding into the jets
    alg = fix_dual()
    FJ = build_first_jets(alg)
    x = alg.space.basis_element(0, 1)
    dx = FJ.kaehler_include(FJ.kaehler.universal(x))
    assert not dx.is_zero()
    assert FJ.bimodule.lmul(x, dx).is_zero()
    # while eta.d(eta) does not vanish
    alg = fix_eta()
    FJ = build_first_jets(alg)
    eta = alg.space.basis_element(-1, 0)
    deta = FJ.kaehler_include(FJ.kaehler.universal(eta))
    assert not FJ.bimodule.lmul(eta, deta).is_zero()


def test_jets_pair_against_first_order_operators():
    # class(1 (x) 1) is evaluation at the function part
    alg = fix_dual()
    FJ = build_first_jets(alg)
    amb = tensor_space(alg.space, alg.space)
    one = alg.unit()
    w = FJ.presentation.quotient.project(tensor_element(one, one, amb))
    F = FJ.theta(w)
    iA_d, iV_d = FJ.diff1.parts.include
    assert FJ.diff1_dual.pair(F, iA_d(one)) == one
    euler = FJ.diff1.anchored.module.space.basis_element(0, 0)
    assert FJ.diff1_dual.pair(F, iV_d(euler)).is_zero()


def test_jets_pushout_against_dual_extension():
    assert jets_pushout_check(anchored_eta())
    assert jets_pushout_check(anchored_dual())


def test_theta_duality_ranks_one_and_two():
    for an in (anchored_dual(), anchored_eta()):
        for M in (algebra_bimodule(an.algebra), free_two_step(an.algebra)):
            td = theta_duality(an, M)
            assert td.theta.inverse() is not None
            assert td.domain.bimodule.space.dims == td.codomain.space.dims


def test_theta_duality_rejects_module_without_certificate():
    an = anchored_dual()
    T = derivations(an.algebra)
    with pytest.raises(ValueError, match="triangular-free"):
        theta_duality(an, derivations_as_module(T))


def test_theta_duality_sees_the_anchor():
    # pairing (0, v) (x) m against delta (x) (0, 1) produces the derivative
    # rho(v)(delta(m)), which has no counterpart for the zero anchor
    an = anchored_eta()
    M = algebra_bimodule(an.algebra)
    td = theta_duality(an, M)
    alg, V = an.algebra, an.module
    DM = left_dual(M)
    delta = DM.space.basis_element(0, 0)
    sd = build_sigma_dual(an)
    phi = sd.parts.include[1](alg.unit())
    w = td.domain.pure(delta, phi)
    F = td.codomain.as_functional(td.theta(w))
    iV_s = sd.sigma.parts.include[1]
    v = V.space.basis_element(1, 0)
    m = M.space.basis_element(-1, 0)
    got = F(td.target.pure(iV_s(v), m))
    expect = an.evaluate(v, DM.pair(delta, m))
    assert not expect.is_zero()
    assert got == expect or got == expect.scale(-1)
