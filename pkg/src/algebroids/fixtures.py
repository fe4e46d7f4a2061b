"""Shared desk-scale fixtures.

Three base algebras:

* ``fix_k``     the ground field Q in degree 0;
* ``fix_dual``  Q[x]/(x^2) with |x| = 0 and zero differential;
* ``fix_eta``   Q[eta]/(eta^2) with |eta| = -1 and zero differential.

On top of these: free modules, the twisted two-generator module over
fix_eta, a two-term cone-shaped module over fix_dual, and a hand-checked
nonsplit extension built as a pullback inside A (+) M.
"""

from __future__ import annotations

from functools import lru_cache

from .cdga import CdgaPresentation, DerivationComplex, derivations
from .graded import Element, GradedMap, GradedSpace, tensor_slices, tensor_space
from .matrix import Matrix, Q, from_columns
from .modules import (
    DgBimodule,
    FreeModuleBuilder,
    ShortExact,
    algebra_bimodule,
    bimodule_from_operators,
    map_from_generators,
)

__all__ = [
    "fix_k",
    "fix_dual",
    "fix_eta",
    "all_algebras",
    "free_rank_one",
    "free_two_step",
    "algebra_as_bimodule",
    "twisted_module",
    "cone_module",
    "pullback_extension",
    "split_extension",
    "derivation_element",
    "anchored_dual",
    "anchored_eta",
    "anchored_zero",
]


def _mult_from_rule(space: GradedSpace, rule) -> GradedMap:
    sq = tensor_space(space, space)
    blocks = {}
    for n in sq.degrees():
        cols = []
        for p, i, j in tensor_slices(space, space, n):
            cols.append(list(rule(p, i, n - p, j).coords))
        blocks[n] = from_columns(cols, nrows=space.dim(n))
    return GradedMap(sq, space, 0, blocks)


@lru_cache(maxsize=None)
def fix_k() -> CdgaPresentation:
    space = GradedSpace({0: 1}, {0: ("1",)})

    def rule(p, i, q, j):
        return space.basis_element(0, 0)

    return CdgaPresentation(space, _mult_from_rule(space, rule), name="Q")


@lru_cache(maxsize=None)
def fix_dual() -> CdgaPresentation:
    space = GradedSpace({0: 2}, {0: ("1", "x")})

    def rule(p, i, q, j):
        if i == 0:
            return space.basis_element(q, j)
        if j == 0:
            return space.basis_element(p, i)
        return space.zero(0)     # x.x = 0

    return CdgaPresentation(space, _mult_from_rule(space, rule), name="Q[x]/(x^2)")


@lru_cache(maxsize=None)
def fix_eta() -> CdgaPresentation:
    space = GradedSpace({-1: 1, 0: 1}, {-1: ("eta",), 0: ("1",)})

    def rule(p, i, q, j):
        if (p, i) == (0, 0):
            return space.basis_element(q, j)
        if (q, j) == (0, 0):
            return space.basis_element(p, i)
        return space.zero(p + q)     # eta.eta = 0, forced in odd degree

    return CdgaPresentation(space, _mult_from_rule(space, rule), name="Q[eta]")


def all_algebras():
    return [fix_k(), fix_dual(), fix_eta()]


def free_rank_one(alg: CdgaPresentation, degree: int = 0,
                  gen: str = "e", name: str | None = None) -> DgBimodule:
    return FreeModuleBuilder(alg, [(gen, degree)]).build(name or f"{alg.name}<{gen}>")


def free_two_step(alg: CdgaPresentation, name: str | None = None) -> DgBimodule:
    b = FreeModuleBuilder(alg, [("e0", 0), ("e1", -1)])
    return b.build(name or f"{alg.name}<e0,e1>")


def algebra_as_bimodule(alg: CdgaPresentation) -> DgBimodule:
    """A over itself, free on one central generator in degree 0."""
    return algebra_bimodule(alg)


@lru_cache(maxsize=None)
def twisted_module() -> DgBimodule:
    """Free on g1 (degree 0) and g2 (degree -2) over fix_eta, d(g2) = eta.g1."""
    A = fix_eta()
    b = FreeModuleBuilder(A, [("g1", 0), ("g2", -2)])
    eta = A.space.basis_element(-1, 0)
    b.set_d("g2", b.times(eta, "g1"))
    return b.build("M_tw")


@lru_cache(maxsize=None)
def cone_module() -> DgBimodule:
    """Free on e (degree 0) and f (degree -1) over fix_dual, d(f) = x.e."""
    A = fix_dual()
    b = FreeModuleBuilder(A, [("e", 0), ("f", -1)])
    x = A.space.basis_element(0, 1)
    b.set_d("f", b.times(x, "e"))
    return b.build("cone(x)")


@lru_cache(maxsize=None)
def pullback_extension() -> ShortExact:
    """Hand-checked nonsplit sequence 0 -> Q.z -> K -> cone(x) -> 0 over fix_dual.

    K is the pullback of A -> A/(x) <- cone(x) inside A (+) cone(x); the
    submodule is spanned by z = (x, 0), on which x acts by zero.  The
    canonical splitting s(e) = (1, e), s(f) = (0, f) has cocycle
    c(f) = -(x, 0) = -z, and every A-linear degree 0 map h: cone(x) -> Q.z
    has (dh - hd)(f) = -h(x.e) = 0, so the class does not cobound.
    """
    A = fix_dual()
    M = cone_module()

    sub_space = GradedSpace({0: 1}, {0: ("z",)})

    def sub_lact(a, k):
        return k.scale(a.coords[0])     # x.z = 0

    sub = bimodule_from_operators(
        A, sub_space,
        lact=sub_lact,
        ract=lambda k, a: sub_lact(a, k),
        diff=lambda k: sub_space.zero(k.degree + 1),
        name="Q.z",
    )

    tot_space = GradedSpace(
        {-1: 2, 0: 3},
        {-1: ("(0,f)", "(0,xf)"), 0: ("(1,e)", "(x,0)", "(0,xe)")},
    )
    x_action = {
        (-1, 0): tot_space.basis_element(-1, 1),
        (-1, 1): tot_space.zero(-1),
        (0, 0): tot_space.basis_element(0, 1) + tot_space.basis_element(0, 2),
        (0, 1): tot_space.zero(0),
        (0, 2): tot_space.zero(0),
    }

    def tot_lact(a, k):
        out = k.scale(a.coords[0])
        beta = a.coords[1]
        if beta != 0:
            for pos, c in enumerate(k.coords):
                if c != 0:
                    out = out + x_action[(k.degree, pos)].scale(beta * c)
        return out

    def tot_diff(k):
        out = tot_space.zero(k.degree + 1)
        if k.degree == -1 and k.coords[0] != 0:
            out = out + tot_space.basis_element(0, 2).scale(k.coords[0])
        return out

    total = bimodule_from_operators(
        A, tot_space,
        lact=tot_lact,
        ract=lambda k, a: tot_lact(a, k),
        diff=tot_diff,
        name="A x_Q cone(x)",
    )

    include = GradedMap(sub_space, tot_space, 0,
                        {0: Matrix(((0,), (1,), (0,)))})
    project = GradedMap(tot_space, M.space, 0, {
        -1: Matrix(((1, 0), (0, 1))),
        0: Matrix(((1, 0, 0), (0, 0, 1))),
    })
    return ShortExact(sub, total, M, include, project)


def split_extension(alg: CdgaPresentation) -> ShortExact:
    """Direct sum sequence 0 -> A<u> -> A<u,w> -> A<w> -> 0."""
    sub = free_rank_one(alg, 0, gen="u")
    quot = free_rank_one(alg, 0, gen="w")
    tot_b = FreeModuleBuilder(alg, [("u", 0), ("w", 0)])
    total = tot_b.build(f"{alg.name}<u,w>")
    include = map_from_generators(sub, 0, [tot_b.gen("u")], total.lmul, total.space)
    w = quot.free.gen_element(quot.space, 0, alg.unit_index)
    project = map_from_generators(total, 0, [quot.space.zero(0), w],
                                  quot.lmul, quot.space)
    return ShortExact(sub, total, quot, include, project)


def derivation_element(T: DerivationComplex, f: GradedMap, degree: int) -> Element:
    coords = T.membership(f, degree)
    if coords is None:
        raise ValueError("map is not in the derivation complex")
    return T.element(degree, coords)


@lru_cache(maxsize=None)
def anchored_dual():
    """V = A.v over fix_dual, |v| = 0, anchor v -> x d/dx."""
    from .atiyah import AnchoredModule

    A = fix_dual()
    T = derivations(A)
    xddx = GradedMap(A.space, A.space, 0, {0: Matrix(((0, 0), (0, 1)))})
    rho_v = derivation_element(T, xddx, 0)
    V = free_rank_one(A, 0, gen="v", name="V_dual")
    rho = map_from_generators(V, 0, [rho_v], T.lmul, T.space)
    return AnchoredModule(V, T, rho, name="V_dual")


@lru_cache(maxsize=None)
def anchored_eta():
    """V = A.v over fix_eta, |v| = 1, anchor v -> d/d(eta)."""
    from .atiyah import AnchoredModule

    A = fix_eta()
    T = derivations(A)
    ddeta = GradedMap(A.space, A.space, 1, {-1: Matrix(((1,),))})
    rho_v = derivation_element(T, ddeta, 1)
    V = free_rank_one(A, 1, gen="v", name="V_eta")
    rho = map_from_generators(V, 0, [rho_v], T.lmul, T.space)
    return AnchoredModule(V, T, rho, name="V_eta")


def anchored_zero(alg: CdgaPresentation, vdegree: int = 0):
    """Free rank one module with the zero anchor."""
    from .atiyah import AnchoredModule

    T = derivations(alg)
    V = free_rank_one(alg, vdegree, gen="v", name="V_0")
    rho = GradedMap.zero(V.space, T.space, 0)
    return AnchoredModule(V, T, rho, name="V_0")
