"""Anchored modules, square extensions, first-order operators, jets, duality.

An anchored module is a dg-module V with a degree 0 A-linear chain map
rho: V -> Der(A).  The square extension Sigma_V = A (+) V keeps the naive
left action and twists the right one,

    (a, v).a' = (a a' + rho(v)(a'), (-1)^{|a'||v|} a' v),

and its left dual is modelled on V* (+) A with the naive right action and
the left action twisted by the transpose anchor

    rhohat(a)(v) = (-1)^{|a||v|} rho(v)(a),

which obeys rhohat(a''a') = rhohat(a'').a' + a''.rhohat(a') inside V*.
All structural identities (associativity of the twisted actions, the
pairing against the computed left dual, the symmetry involution, the jet
duality) are re-verified mechanically at construction time.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cdga import (
    CdgaPresentation,
    DerivationComplex,
    KaehlerModule,
    _kaehler_ambient,
    derivation_functional,
    derivations,
    kaehler,
)
from .graded import (
    DirectSum,
    Element,
    GradedMap,
    direct_sum,
    tensor_element,
    tensor_map,
    tensor_slices,
    tensor_space,
)
from .matrix import from_columns, sgn
from .modules import (
    BimoduleQuotient,
    DgBimodule,
    DualBimodule,
    FreeStructure,
    ShortExact,
    TensorOverA,
    algebra_bimodule,
    bimodule_from_operators,
    derivations_as_module,
    direct_sum_bimodule,
    dual_map,
    is_isomorphic_as_bimodules,
    left_dual,
    quotient_bimodule,
    tensor_A,
    tensor_A_map,
    validate_bimodule,
    validate_short_exact,
)
from .solve import membership_coords

__all__ = [
    "AnchoredModule",
    "AtiyahBimodule",
    "DualAtiyahBimodule",
    "build_sigma",
    "build_sigma_dual",
    "anchor_transpose",
    "kaehler_transpose",
    "chi_involution",
    "build_diff1",
    "FirstJets",
    "build_first_jets",
    "jets_pushout_check",
    "ThetaDuality",
    "theta_duality",
]


class AnchoredModule:
    """A dg-module together with an anchor into the derivation complex."""

    def __init__(self, module: DgBimodule, derivations: DerivationComplex,
                 rho: GradedMap, name: str = "V"):
        if module.algebra is not derivations.algebra:
            raise ValueError("module and derivations live over different algebras")
        if rho.degree != 0 or rho.source != module.space \
                or rho.target != derivations.space:
            raise ValueError("anchor must be a degree 0 map V -> T")
        chain = derivations.complex.d.compose(rho) - rho.compose(module.d)
        if not chain.is_zero():
            raise ValueError("anchor does not commute with the differentials")
        for a in module.algebra.all_basis():
            for v in module.all_basis():
                lhs = rho(module.lmul(a, v))
                rhs = derivations.lmul(a, rho(v))
                if not (lhs - rhs).is_zero():
                    raise ValueError("anchor is not A-linear")
        self.module = module
        self.derivations = derivations
        self.rho = rho
        self.name = name
        self.algebra = module.algebra

    def evaluate(self, v: Element, a: Element) -> Element:
        """rho(v)(a), an element of A."""
        return self.derivations.evaluate(self.rho(v), a)

    def is_triangular_free(self) -> bool:
        return self.module.is_triangular_free()

    def __repr__(self):
        return f"AnchoredModule({self.name})"


@dataclass
class AtiyahBimodule:
    """Sigma_V with its two-sided extension 0 -> A -> Sigma_V -> V -> 0.

    The extension exhibits Sigma_V as perfect on either side whenever V is;
    on the left this is also recorded as an explicit free structure.
    """

    anchored: AnchoredModule
    bimodule: DgBimodule
    parts: DirectSum                 # summands [A, V]
    include: GradedMap               # A basis slots -> Sigma
    project: GradedMap               # Sigma -> V
    sequence: ShortExact


@dataclass
class DualAtiyahBimodule:
    """Sigma_V* on V* (+) A, with the pairing against the computed dual."""

    anchored: AnchoredModule
    bimodule: DgBimodule
    parts: DirectSum                 # summands [V*, A]
    vdual: DualBimodule
    rhohat: GradedMap                # A -> V*
    include: GradedMap               # V* -> Sigma_V*
    project: GradedMap               # Sigma_V* -> A basis slots
    sequence: ShortExact
    sigma: AtiyahBimodule
    sigma_dual: DualBimodule         # computed left dual of Sigma_V
    pairing_iso: GradedMap           # Sigma_V* -> D(Sigma_V)

    def pair(self, w: Element, s: Element) -> Element:
        """<w, s> for w in Sigma_V*, s in Sigma_V."""
        return self.sigma_dual.pair(self.pairing_iso(w), s)


def build_sigma(anchored: AnchoredModule) -> AtiyahBimodule:
    alg = anchored.algebra
    V = anchored.module
    ds = direct_sum([alg.space, V.space])
    iA, iV = ds.include
    pA, pV = ds.project

    def lact(ap, s):
        return iA(alg.mul(ap, pA(s))) + iV(V.lmul(ap, pV(s)))

    def ract(s, ap):
        v = pV(s)
        return iA(alg.mul(pA(s), ap) + anchored.evaluate(v, ap)) \
            + iV(V.rmul(v, ap))

    def diff(s):
        return iA(alg.d(pA(s))) + iV(V.d(pV(s)))

    free = None
    if V.free is not None:
        gens = [(f"one_{anchored.name}", 0)] + list(V.free.generators)
        layout = {}
        for n in ds.space.degrees():
            slots = [(0, n, i) for i in range(alg.space.dim(n))]
            slots += [(gi + 1, an, ai) for gi, an, ai in V.free.layout.get(n, [])]
            layout[n] = slots
        free = FreeStructure(gens, layout, V.free.triangular)

    bim = bimodule_from_operators(alg, ds.space, lact, ract, diff,
                                  name=f"Sigma({anchored.name})", free=free)
    rep = validate_bimodule(bim)
    if not rep.ok:
        raise ValueError("square extension failed validation: "
                         + "; ".join(rep.lines()))
    Amod = algebra_bimodule(alg)
    include = GradedMap(Amod.space, ds.space, 0,
                        {n: iA.block(n) for n in alg.space.degrees()})
    seq = ShortExact(Amod, bim, V, include, pV)
    rep = validate_short_exact(seq)
    if not rep.ok:
        raise ValueError("square extension sequence failed: "
                         + "; ".join(rep.lines()))
    return AtiyahBimodule(anchored, bim, ds, include, pV, seq)


def anchor_transpose(anchored: AnchoredModule,
                     vdual: DualBimodule | None = None):
    """rhohat: A -> V* with rhohat(a)(v) = (-1)^{|a||v|} rho(v)(a)."""
    V = anchored.module
    vdual = vdual or left_dual(V)
    alg = anchored.algebra
    blocks = {}
    for n in alg.space.degrees():
        cols = []
        for i in range(alg.space.dim(n)):
            a = alg.space.basis_element(n, i)
            fb = {}
            for m in V.space.degrees():
                fc = []
                for j in range(V.space.dim(m)):
                    v = V.space.basis_element(m, j)
                    fc.append(list(anchored.evaluate(v, a).scale(sgn(n * m)).coords))
                fb[m] = from_columns(fc, nrows=alg.space.dim(m + n))
            f = GradedMap(V.space, alg.space, n, fb)
            coords = membership_coords(f, vdual.functionals(n))
            if coords is None:
                raise ValueError("transpose anchor is not left-linear")
            cols.append(list(coords))
        blocks[n] = from_columns(cols, nrows=vdual.space.dim(n))
    return GradedMap(alg.space, vdual.space, 0, blocks), vdual


def build_sigma_dual(anchored: AnchoredModule) -> DualAtiyahBimodule:
    alg = anchored.algebra
    vdual = left_dual(anchored.module)
    rhohat, _ = anchor_transpose(anchored, vdual)
    ds = direct_sum([vdual.space, alg.space])
    iT, iA = ds.include
    pT, pA = ds.project

    def ract(s, ap):
        return iT(vdual.rmul(pT(s), ap)) + iA(alg.mul(pA(s), ap))

    def lact(ap, s):
        twist = vdual.rmul(rhohat(ap), pA(s))
        return iT(vdual.lmul(ap, pT(s)) + twist) + iA(alg.mul(ap, pA(s)))

    def diff(s):
        return iT(vdual.d(pT(s))) + iA(alg.d(pA(s)))

    bim = bimodule_from_operators(alg, ds.space, lact, ract, diff,
                                  name=f"SigmaDual({anchored.name})")
    rep = validate_bimodule(bim)
    if not rep.ok:
        raise ValueError("dual square extension failed validation: "
                         + "; ".join(rep.lines()))
    include = GradedMap(vdual.space, ds.space, 0,
                        {n: iT.block(n) for n in vdual.space.degrees()})
    Amod = algebra_bimodule(alg)
    project = GradedMap(ds.space, Amod.space, 0,
                        {n: pA.block(n) for n in ds.space.degrees()})
    seq = ShortExact(vdual, bim, Amod, include, project)
    rep = validate_short_exact(seq)
    if not rep.ok:
        raise ValueError("dual square extension sequence failed: "
                         + "; ".join(rep.lines()))

    sigma = build_sigma(anchored)
    dsig = left_dual(sigma.bimodule)
    psi = _sigma_pairing_iso(anchored, bim, ds, vdual, sigma, dsig)
    sd = DualAtiyahBimodule(anchored, bim, ds, vdual, rhohat, include,
                            project, seq, sigma, dsig, psi)
    _check_pairing_actions(sd)
    return sd


def _sigma_pairing_iso(anchored, bim, ds, vdual, sigma, dsig) -> GradedMap:
    """(theta, a) pairs with (a'', v'') as (-1)^{|a||a''|} a''a + theta(v'')."""
    alg = anchored.algebra
    pT, pA = ds.project
    pA_s, pV_s = sigma.parts.project
    sig_space = sigma.bimodule.space
    blocks = {}
    for n in ds.space.degrees():
        cols = []
        for idx in range(ds.space.dim(n)):
            w = ds.space.basis_element(n, idx)
            theta, a_el = pT(w), pA(w)
            fb = {}
            for m in sig_space.degrees():
                fc = []
                for j in range(sig_space.dim(m)):
                    s = sig_space.basis_element(m, j)
                    val = alg.mul(pA_s(s), a_el).scale(sgn(n * m)) \
                        + vdual.pair(theta, pV_s(s))
                    fc.append(list(val.coords))
                fb[m] = from_columns(fc, nrows=alg.space.dim(m + n))
            f = GradedMap(sig_space, alg.space, n, fb)
            coords = membership_coords(f, dsig.functionals(n))
            if coords is None:
                raise ValueError("pairing functional is not left-linear")
            cols.append(list(coords))
        blocks[n] = from_columns(cols, nrows=dsig.space.dim(n))
    psi = GradedMap(ds.space, dsig.space, 0, blocks)
    if not (dsig.d.compose(psi) - psi.compose(bim.d)).is_zero():
        # same differential on both models of the dual
        raise ValueError("pairing map is not a chain map")
    psi.inverse()
    return psi


def _check_pairing_actions(sd: DualAtiyahBimodule):
    """The pairing iso intertwines both actions; split out for tests."""
    psi, S, D = sd.pairing_iso, sd.bimodule, sd.sigma_dual
    for a in S.algebra.all_basis():
        for w in S.all_basis():
            if not (psi(S.lmul(a, w)) - D.lmul(a, psi(w))).is_zero():
                raise ValueError("pairing map fails left equivariance")
            if not (psi(S.rmul(w, a)) - D.rmul(psi(w), a)).is_zero():
                raise ValueError("pairing map fails right equivariance")


def chi_involution(sd: DualAtiyahBimodule) -> GradedMap:
    """chi(theta, a) = (rhohat(a) - theta, a), Sigma_V* -> opposite."""
    iT, iA = sd.parts.include
    pT, pA = sd.parts.project
    chi = iT.compose(sd.rhohat.compose(pA) - pT) + iA.compose(pA)
    S = sd.bimodule
    if not (chi.compose(chi) - GradedMap.identity(S.space)).is_zero():
        raise ValueError("chi is not an involution")
    if not (S.d.compose(chi) - chi.compose(S.d)).is_zero():
        raise ValueError("chi is not a chain map")
    for a in S.algebra.all_basis():
        for w in S.all_basis():
            sign = sgn(a.degree * w.degree)
            if not (chi(S.lmul(a, w)) - S.rmul(chi(w), a).scale(sign)).is_zero():
                raise ValueError("chi fails the left-to-right identity")
            if not (chi(S.rmul(w, a)) - S.lmul(a, chi(w)).scale(sign)).is_zero():
                raise ValueError("chi fails the right-to-left identity")
    return chi


def build_diff1(alg: CdgaPresentation) -> AtiyahBimodule:
    """First-order operators as the square extension of the identity anchor."""
    T = derivations(alg)
    V = derivations_as_module(T)
    anchored = AnchoredModule(V, T, GradedMap.identity(T.space),
                              name=f"T({alg.name})")
    return build_sigma(anchored)


# -- first jets -------------------------------------------------------------------


def _square_slices(alg, degree):
    return tensor_slices(alg.space, alg.space, degree)


def _square_product(alg, amb, w1: Element, w2: Element) -> Element:
    """(a1 (x) a2)(b1 (x) b2) = (-1)^{|a2||b1|} a1 b1 (x) a2 b2."""
    out = amb.zero(w1.degree + w2.degree)
    s1 = _square_slices(alg, w1.degree)
    s2 = _square_slices(alg, w2.degree)
    for pos1, c1 in enumerate(w1.coords):
        if c1 == 0:
            continue
        p1, i1, j1 = s1[pos1]
        a1 = alg.space.basis_element(p1, i1)
        a2 = alg.space.basis_element(w1.degree - p1, j1)
        for pos2, c2 in enumerate(w2.coords):
            if c2 == 0:
                continue
            p2, i2, j2 = s2[pos2]
            b1 = alg.space.basis_element(p2, i2)
            b2 = alg.space.basis_element(w2.degree - p2, j2)
            term = tensor_element(alg.mul(a1, b1), alg.mul(a2, b2), amb)
            out = out + term.scale(c1 * c2 * sgn(a2.degree * b1.degree))
    return out


@dataclass
class FirstJets:
    algebra: CdgaPresentation
    bimodule: DgBimodule             # A^(1)
    presentation: BimoduleQuotient   # of A (x) A by the square of the kernel
    kaehler: KaehlerModule
    kaehler_include: GradedMap       # Omega -> A^(1)
    project: GradedMap               # A^(1) -> A basis slots
    sequence: ShortExact             # 0 -> Omega -> A^(1) -> A -> 0
    diff1: AtiyahBimodule
    diff1_dual: DualBimodule
    theta: GradedMap                 # A^(1) -> D(Diff1)


def build_first_jets(alg: CdgaPresentation) -> FirstJets:
    amb = tensor_space(alg.space, alg.space)

    def lact(ap, w):
        out = amb.zero(ap.degree + w.degree)
        for pos, c in enumerate(w.coords):
            if c == 0:
                continue
            p, i, j = _square_slices(alg, w.degree)[pos]
            b1 = alg.space.basis_element(p, i)
            b2 = alg.space.basis_element(w.degree - p, j)
            out = out + tensor_element(alg.mul(ap, b1), b2, amb).scale(c)
        return out

    def ract(w, ap):
        out = amb.zero(w.degree + ap.degree)
        for pos, c in enumerate(w.coords):
            if c == 0:
                continue
            p, i, j = _square_slices(alg, w.degree)[pos]
            b1 = alg.space.basis_element(p, i)
            b2 = alg.space.basis_element(w.degree - p, j)
            out = out + tensor_element(b1, alg.mul(b2, ap), amb).scale(c)
        return out

    ident = GradedMap.identity(alg.space)
    d_amb = tensor_map(alg.d, ident, amb, amb) + tensor_map(ident, alg.d, amb, amb)

    AA = bimodule_from_operators(alg, amb, lact, ract, lambda w: d_amb(w),
                                 name=f"{alg.name}(x){alg.name}")

    i_basis = []
    for n in amb.degrees():
        ker = alg.mult.block(n).kernel()
        for col in range(ker.ncols):
            i_basis.append(Element(amb, n, ker.column(col)))
    i2_gens = []
    for u in i_basis:
        for v in i_basis:
            g = _square_product(alg, amb, u, v)
            if not g.is_zero():
                i2_gens.append(g)
    jq = quotient_bimodule(AA, i2_gens, name=f"Jet1({alg.name})")
    A1 = jq.bimodule

    Amod = algebra_bimodule(alg)
    pr_alg = alg.mult.compose(jq.quotient.section)
    project = GradedMap(A1.space, Amod.space, 0,
                        {n: pr_alg.block(n) for n in A1.space.degrees()})

    O = kaehler(alg)
    layout = _kaehler_ambient(alg)[1]
    one = alg.unit()

    def kappa_on_symbols(w: Element) -> Element:
        # d(a).b  |->  class(a (x) b - 1 (x) ab)
        out = A1.space.zero(w.degree)
        for pos, c in enumerate(w.coords):
            if c == 0:
                continue
            sn, si, bn, bi = layout[w.degree][pos]
            a = alg.space.basis_element(sn, si)
            b = alg.space.basis_element(bn, bi)
            rep = tensor_element(a, b, amb) \
                - tensor_element(one, alg.mul(a, b), amb)
            out = out + jq.quotient.project(rep).scale(c)
        return out

    kappa_blocks = {}
    for n in O.space.degrees():
        cols = [list(kappa_on_symbols(O.quotient.section(
            O.space.basis_element(n, i))).coords) for i in range(O.space.dim(n))]
        kappa_blocks[n] = from_columns(cols, nrows=A1.space.dim(n))
    kappa = GradedMap(O.space, A1.space, 0, kappa_blocks)

    seq = ShortExact(O.bimodule, A1, Amod, kappa, project)
    rep = validate_short_exact(seq)
    if not rep.ok:
        raise ValueError("jet sequence failed: " + "; ".join(rep.lines()))

    D1 = build_diff1(alg)
    DD1 = left_dual(D1.bimodule)
    theta = _jet_duality(alg, jq, D1, DD1, amb)
    return FirstJets(alg, A1, jq, O, kappa, project, seq, D1, DD1, theta)


def _jet_functional(alg, D1, w: Element) -> GradedMap:
    """class(a1 (x) a2) pairs with (a'', D) via a''(a1 a2) and D(a1).a2."""
    n = w.degree
    T = D1.anchored.derivations
    pA_s, pV_s = D1.parts.project
    slices = _square_slices(alg, n)
    space = D1.bimodule.space
    blocks = {}
    for m in space.degrees():
        fc = []
        for j in range(space.dim(m)):
            s = space.basis_element(m, j)
            app, Dv = pA_s(s), pV_s(s)
            out = alg.space.zero(n + m)
            for pos, c in enumerate(w.coords):
                if c == 0:
                    continue
                p, i, jj = slices[pos]
                a1 = alg.space.basis_element(p, i)
                a2 = alg.space.basis_element(n - p, jj)
                term = alg.mul(app, alg.mul(a1, a2)) \
                    + alg.mul(T.evaluate(Dv, a1), a2)
                out = out + term.scale(c * sgn(n * m))
            fc.append(list(out.coords))
        blocks[m] = from_columns(fc, nrows=alg.space.dim(m + n))
    return GradedMap(space, alg.space, n, blocks)


def _jet_duality(alg, jq, D1, DD1, amb) -> GradedMap:
    # representative independence: the functional factors through the
    # square of the kernel ideal
    for n in amb.degrees():
        for i in range(amb.dim(n)):
            u = amb.basis_element(n, i)
            nf = jq.quotient.section(jq.quotient.project(u))
            lhs = _jet_functional(alg, D1, u)
            rhs = _jet_functional(alg, D1, nf)
            if not (lhs - rhs).is_zero():
                raise ValueError("jet functional does not factor through I^2")
    A1 = jq.bimodule
    blocks = {}
    for n in A1.space.degrees():
        cols = []
        for i in range(A1.space.dim(n)):
            w = jq.quotient.section(A1.space.basis_element(n, i))
            f = _jet_functional(alg, D1, w)
            coords = membership_coords(f, DD1.functionals(n))
            if coords is None:
                raise ValueError("jet functional is not left-linear")
            cols.append(list(coords))
        blocks[n] = from_columns(cols, nrows=DD1.space.dim(n))
    theta = GradedMap(A1.space, DD1.space, 0, blocks)
    if not (DD1.d.compose(theta) - theta.compose(A1.d)).is_zero():
        raise ValueError("jet duality is not a chain map")
    for a in alg.all_basis():
        for k in A1.all_basis():
            if not (theta(A1.lmul(a, k)) - DD1.lmul(a, theta(k))).is_zero():
                raise ValueError("jet duality fails left equivariance")
            if not (theta(A1.rmul(k, a)) - DD1.rmul(theta(k), a)).is_zero():
                raise ValueError("jet duality fails right equivariance")
    theta.inverse()
    return theta


def kaehler_transpose(anchored: AnchoredModule, O: KaehlerModule,
                      vdual: DualBimodule) -> GradedMap:
    """rho*: Omega -> V*, rho*(omega)(v) = (-1)^{|omega||v|} <d(a).b, rho(v)>."""
    alg = anchored.algebra
    V = anchored.module
    T = anchored.derivations
    phis = {}
    for m in V.space.degrees():
        for j in range(V.space.dim(m)):
            v = V.space.basis_element(m, j)
            phis[(m, j)] = derivation_functional(O, T.as_map(anchored.rho(v)))
    blocks = {}
    for q in O.space.degrees():
        cols = []
        for i in range(O.space.dim(q)):
            om = O.space.basis_element(q, i)
            fb = {}
            for m in V.space.degrees():
                fc = []
                for j in range(V.space.dim(m)):
                    fc.append(list(phis[(m, j)](om).scale(sgn(q * m)).coords))
                fb[m] = from_columns(fc, nrows=alg.space.dim(m + q))
            f = GradedMap(V.space, alg.space, q, fb)
            coords = membership_coords(f, vdual.functionals(q))
            if coords is None:
                raise ValueError("transposed form is not left-linear")
            cols.append(list(coords))
        blocks[q] = from_columns(cols, nrows=vdual.space.dim(q))
    rho_star = GradedMap(O.space, vdual.space, 0, blocks)
    Ob = O.bimodule
    if not (vdual.d.compose(rho_star) - rho_star.compose(Ob.d)).is_zero():
        raise ValueError("transposed anchor is not a chain map")
    for a in alg.all_basis():
        for w in Ob.all_basis():
            if not (rho_star(Ob.lmul(a, w)) - vdual.lmul(a, rho_star(w))).is_zero():
                raise ValueError("transposed anchor fails left linearity")
            if not (rho_star(Ob.rmul(w, a)) - vdual.rmul(rho_star(w), a)).is_zero():
                raise ValueError("transposed anchor fails right linearity")
    return rho_star


def jets_pushout_check(anchored: AnchoredModule) -> bool:
    """Sigma_V* is the pushout of A^(1) <- Omega -> V* along rho*."""
    alg = anchored.algebra
    FJ = build_first_jets(alg)
    SD = build_sigma_dual(anchored)
    O = FJ.kaehler
    rho_star = kaehler_transpose(anchored, O, SD.vdual)
    total, ds = direct_sum_bimodule(FJ.bimodule, SD.vdual)
    i1, i2 = ds.include
    gens = []
    for n in O.space.degrees():
        for i in range(O.space.dim(n)):
            om = O.space.basis_element(n, i)
            gens.append(i1(FJ.kaehler_include(om)) - i2(rho_star(om)))
    P = quotient_bimodule(total, gens, name="pushout")
    return is_isomorphic_as_bimodules(P.bimodule, SD.bimodule)


# -- the duality Theta ---------------------------------------------------------


@dataclass
class ThetaDuality:
    anchored: AnchoredModule
    module: DgBimodule                 # M
    domain: TensorOverA                # M* (x)_A Sigma_V*
    target: TensorOverA                # Sigma_V (x)_A M
    codomain: DualBimodule             # D(Sigma_V (x)_A M)
    theta: GradedMap
    corner: GradedMap                  # M* (x)_A V* -> D(V (x)_A M)
    rows: tuple[ShortExact, ShortExact]


def theta_duality(anchored: AnchoredModule, M: DgBimodule) -> ThetaDuality:
    if not anchored.is_triangular_free():
        raise ValueError("duality needs a triangular-free anchored module")
    if M.free is None or not M.free.triangular:
        raise ValueError("duality needs a triangular-free coefficient module")
    alg = anchored.algebra
    V = anchored.module
    SD = build_sigma_dual(anchored)
    sigma = SD.sigma
    S = sigma.bimodule
    pV_s = sigma.parts.project[1]
    iA_s = sigma.parts.include[0]

    DM = left_dual(M)
    TSM = tensor_A(S, M)
    TVM = tensor_A(V, M)
    DT = left_dual(TSM.bimodule)
    DVM = left_dual(TVM.bimodule)
    dom = tensor_A(DM, SD.bimodule)
    dom_corner = tensor_A(DM, SD.vdual)

    # pairing tables, keyed by (degree, position) of the dual basis element
    phi_func = {}
    for q in SD.bimodule.space.degrees():
        for j in range(SD.bimodule.space.dim(q)):
            phi = SD.bimodule.space.basis_element(q, j)
            phi_func[(q, j)] = SD.sigma_dual.as_functional(SD.pairing_iso(phi))
    delta_func = {}
    for p in DM.space.degrees():
        for i in range(DM.space.dim(p)):
            delta_func[(p, i)] = DM.as_functional(DM.space.basis_element(p, i))

    def core(dk, pk, s: Element, m: Element) -> Element:
        """Theta(delta (x) phi) on s (x) m is +-phi(s.delta(m)).

        The prefactor (-1)^{|delta|(|phi| + |s|)} is the unique sign making
        the recipe balanced over A and left-linear; the anchor contribution
        enters through the twisted right action of Sigma_V.
        """
        dm = delta_func[dk](m)
        return phi_func[pk](S.rmul(s, dm)).scale(sgn(dk[0] * (pk[0] + s.degree)))

    def core_on_pairs(wrep: Element, s: Element, m: Element) -> Element:
        out = alg.space.zero(wrep.degree + s.degree + m.degree)
        for pos, c in enumerate(wrep.coords):
            if c == 0:
                continue
            p, i, j = tensor_slices(DM.space, SD.bimodule.space, wrep.degree)[pos]
            out = out + core((p, i), (wrep.degree - p, j), s, m).scale(c)
        return out

    def functional_of(wrep: Element) -> GradedMap:
        n = wrep.degree
        blocks = {}
        for q in TSM.bimodule.space.degrees():
            fc = []
            for u in range(TSM.bimodule.space.dim(q)):
                urep = TSM.quotient.section(TSM.bimodule.space.basis_element(q, u))
                out = alg.space.zero(n + q)
                for pos, c in enumerate(urep.coords):
                    if c == 0:
                        continue
                    p, i, j = tensor_slices(S.space, M.space, q)[pos]
                    s = S.space.basis_element(p, i)
                    m = M.space.basis_element(q - p, j)
                    out = out + core_on_pairs(wrep, s, m).scale(c)
                fc.append(list(out.coords))
            blocks[q] = from_columns(fc, nrows=alg.space.dim(q + n))
        return GradedMap(TSM.bimodule.space, alg.space, n, blocks)

    # identity 1: balanced in the source variable pair
    for p in DM.space.degrees():
        for i in range(DM.space.dim(p)):
            delta = DM.space.basis_element(p, i)
            for a in alg.all_basis():
                for q in SD.bimodule.space.degrees():
                    for j in range(SD.bimodule.space.dim(q)):
                        phi = SD.bimodule.space.basis_element(q, j)
                        lhs = tensor_element(DM.rmul(delta, a), phi, dom.ambient)
                        rhs = tensor_element(delta, SD.bimodule.lmul(a, phi),
                                             dom.ambient)
                        if not (functional_of(lhs) - functional_of(rhs)).is_zero():
                            raise ValueError("duality fails source balancing")

    # identities 2 and 3: balanced and left-linear in the target variables
    wreps = []
    for n in dom.bimodule.space.degrees():
        for i in range(dom.bimodule.space.dim(n)):
            wreps.append(dom.quotient.section(dom.bimodule.space.basis_element(n, i)))
    for wrep in wreps:
        for a in alg.all_basis():
            for s in S.all_basis():
                for m in M.all_basis():
                    lhs = core_on_pairs(wrep, S.rmul(s, a), m)
                    rhs = core_on_pairs(wrep, s, M.lmul(a, m))
                    if not (lhs - rhs).is_zero():
                        raise ValueError("duality fails target balancing")
                    lin = core_on_pairs(wrep, S.lmul(a, s), m) \
                        - alg.mul(a, core_on_pairs(wrep, s, m)) \
                        .scale(sgn(wrep.degree * a.degree))
                    if not lin.is_zero():
                        raise ValueError("duality fails functional linearity")

    theta_blocks = {}
    for n in dom.bimodule.space.degrees():
        cols = []
        for i in range(dom.bimodule.space.dim(n)):
            wrep = dom.quotient.section(dom.bimodule.space.basis_element(n, i))
            coords = membership_coords(functional_of(wrep), DT.functionals(n))
            if coords is None:
                raise ValueError("duality functional is not in the dual")
            cols.append(list(coords))
        theta_blocks[n] = from_columns(cols, nrows=DT.space.dim(n))
    theta = GradedMap(dom.bimodule.space, DT.space, 0, theta_blocks)

    # identity 4: Theta is an isomorphism of dg-bimodules
    if not (DT.d.compose(theta) - theta.compose(dom.bimodule.d)).is_zero():
        raise ValueError("duality is not a chain map")
    for a in alg.all_basis():
        for w in dom.bimodule.all_basis():
            if not (theta(dom.bimodule.lmul(a, w)) - DT.lmul(a, theta(w))).is_zero():
                raise ValueError("duality fails left equivariance")
            if not (theta(dom.bimodule.rmul(w, a)) - DT.rmul(theta(w), a)).is_zero():
                raise ValueError("duality fails right equivariance")
    theta.inverse()

    # corner map on the quotient row: same recipe without the anchor twist
    th_func = {}
    for q in SD.vdual.space.degrees():
        for j in range(SD.vdual.space.dim(q)):
            th_func[(q, j)] = SD.vdual.as_functional(
                SD.vdual.space.basis_element(q, j))

    def corner_functional(wrep: Element) -> GradedMap:
        n = wrep.degree
        blocks = {}
        for q in TVM.bimodule.space.degrees():
            fc = []
            for u in range(TVM.bimodule.space.dim(q)):
                urep = TVM.quotient.section(TVM.bimodule.space.basis_element(q, u))
                out = alg.space.zero(n + q)
                for pos2, c2 in enumerate(urep.coords):
                    if c2 == 0:
                        continue
                    p2, i2, j2 = tensor_slices(V.space, M.space, q)[pos2]
                    v = V.space.basis_element(p2, i2)
                    m = M.space.basis_element(q - p2, j2)
                    for pos, c in enumerate(wrep.coords):
                        if c == 0:
                            continue
                        p, i, j = tensor_slices(DM.space, SD.vdual.space,
                                                wrep.degree)[pos]
                        dm = delta_func[(p, i)](m)
                        val = th_func[(wrep.degree - p, j)](V.rmul(v, dm)) \
                            .scale(sgn(p * (wrep.degree - p + v.degree)))
                        out = out + val.scale(c * c2)
                fc.append(list(out.coords))
            blocks[q] = from_columns(fc, nrows=alg.space.dim(q + n))
        return GradedMap(TVM.bimodule.space, alg.space, n, blocks)

    corner_blocks = {}
    for n in dom_corner.bimodule.space.degrees():
        cols = []
        for i in range(dom_corner.bimodule.space.dim(n)):
            wrep = dom_corner.quotient.section(
                dom_corner.bimodule.space.basis_element(n, i))
            coords = membership_coords(corner_functional(wrep), DVM.functionals(n))
            if coords is None:
                raise ValueError("corner functional is not in the dual")
            cols.append(list(coords))
        corner_blocks[n] = from_columns(cols, nrows=DVM.space.dim(n))
    corner = GradedMap(dom_corner.bimodule.space, DVM.space, 0, corner_blocks)

    # the two rows and the connecting squares
    j1 = tensor_A_map(dom_corner, dom, GradedMap.identity(DM.space), SD.include)
    e1_blocks = {}
    for n in dom.bimodule.space.degrees():
        cols = []
        for i in range(dom.bimodule.space.dim(n)):
            wrep = dom.quotient.section(dom.bimodule.space.basis_element(n, i))
            out = DM.space.zero(n)
            for pos, c in enumerate(wrep.coords):
                if c == 0:
                    continue
                p, ii, j = tensor_slices(DM.space, SD.bimodule.space, n)[pos]
                delta = DM.space.basis_element(p, ii)
                phi = SD.bimodule.space.basis_element(n - p, j)
                a_part = SD.parts.project[1](phi)
                out = out + DM.rmul(delta, a_part).scale(c)
            cols.append(list(out.coords))
        e1_blocks[n] = from_columns(cols, nrows=DM.space.dim(n))
    e1 = GradedMap(dom.bimodule.space, DM.space, 0, e1_blocks)
    row1 = ShortExact(dom_corner.bimodule, dom.bimodule, DM, j1, e1)
    rep = validate_short_exact(row1)
    if not rep.ok:
        raise ValueError("domain row is not exact: " + "; ".join(rep.lines()))

    one_s = iA_s(alg.unit())
    incl_blocks = {}
    for n in M.space.degrees():
        cols = [list(TSM.pure(one_s, M.space.basis_element(n, i)).coords)
                for i in range(M.space.dim(n))]
        incl_blocks[n] = from_columns(cols, nrows=TSM.bimodule.space.dim(n))
    incl_M = GradedMap(M.space, TSM.bimodule.space, 0, incl_blocks)
    proj_VM = tensor_A_map(TSM, TVM, pV_s, GradedMap.identity(M.space))
    j2 = dual_map(proj_VM, DT, DVM)
    e2 = dual_map(incl_M, DM, DT)
    row2 = ShortExact(DVM, DT, DM, j2, e2)
    rep = validate_short_exact(row2)
    if not rep.ok:
        raise ValueError("dual row is not exact: " + "; ".join(rep.lines()))

    if theta.compose(j1) != j2.compose(corner):
        raise ValueError("duality square over the corner does not commute")
    if e2.compose(theta) != e1:
        raise ValueError("duality square over the edge does not commute")

    return ThetaDuality(anchored, M, dom, TSM, DT, theta, corner, (row1, row2))
