"""Graded-commutative dg-algebras: presentations, derivations, Kaehler forms.

An algebra is presented by structure constants over a global basis with a
distinguished unit vector and a differential.  Validation certifies the
axioms on basis tuples; bilinearity is structural, so that is a complete
check at this finite scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .graded import (
    Complex,
    Element,
    GradedMap,
    GradedSpace,
    Quotient,
    tensor_element,
    tensor_space,
)
from .matrix import Q, from_columns
from .solve import combine_maps, map_solution_space, membership_coords

__all__ = [
    "CdgaPresentation",
    "ValidationReport",
    "validate_cdga",
    "DerivationComplex",
    "derivations",
    "KaehlerModule",
    "kaehler",
    "derivation_functional",
    "pairing_check",
]


@dataclass
class ValidationReport:
    subject: str
    failures: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def record(self, axiom: str, witness: str):
        self.failures.append((axiom, witness))

    def lines(self) -> list[str]:
        if self.ok:
            return [f"{self.subject}: all axioms hold"]
        out = [f"{self.subject}: {len(self.failures)} failure(s)"]
        for axiom, witness in self.failures:
            out.append(f"  {axiom}: {witness}")
        return out


class CdgaPresentation:
    """Structure constants, unit and differential of a cdga over Q."""

    def __init__(self, space: GradedSpace, mult: GradedMap, unit_index: int = 0,
                 differential: GradedMap | None = None, name: str = "A"):
        self.space = space
        self.square = tensor_space(space, space)
        if mult.source != self.square or mult.target != space or mult.degree != 0:
            raise ValueError("mult must be a degree 0 map A(x)A -> A")
        self.mult = mult
        if unit_index >= space.dim(0):
            raise ValueError("unit index outside degree 0")
        self.unit_index = unit_index
        self.d = differential if differential is not None else GradedMap.zero(space, space, 1)
        if self.d.degree != 1:
            raise ValueError("differential must have degree +1")
        self.name = name

    def unit(self) -> Element:
        return self.space.basis_element(0, self.unit_index)

    def mul(self, a: Element, b: Element) -> Element:
        return self.mult(tensor_element(a, b, self.square))

    def basis(self, n: int):
        return [self.space.basis_element(n, i) for i in range(self.space.dim(n))]

    def all_basis(self) -> list[Element]:
        return [b for n in self.space.degrees() for b in self.basis(n)]

    def complex(self) -> Complex:
        return Complex(self.space, self.d)

    def describe(self, x: Element) -> str:
        return x.describe()


def validate_cdga(p: CdgaPresentation) -> ValidationReport:
    rep = ValidationReport(f"cdga {p.name}")
    if any(n > 0 for n in p.space.degrees()):
        rep.record("nonpositive-support", f"degrees {p.space.degrees()}")
    one = p.unit()
    for a in p.all_basis():
        if not (p.mul(one, a) - a).is_zero():
            rep.record("left-unit", f"a={a.describe()}")
        if not (p.mul(a, one) - a).is_zero():
            rep.record("right-unit", f"a={a.describe()}")
    basis = list(p.all_basis())
    for a in basis:
        for b in basis:
            sign = Q(-1) if (a.degree * b.degree) % 2 else Q(1)
            if not (p.mul(a, b) - p.mul(b, a).scale(sign)).is_zero():
                rep.record("graded-commutativity", f"a={a.describe()}, b={b.describe()}")
            # Leibniz: d(ab) = d(a) b + (-1)^{|a|} a d(b)
            sa = Q(-1) if a.degree % 2 else Q(1)
            lhs = p.d(p.mul(a, b))
            rhs = p.mul(p.d(a), b) + p.mul(a, p.d(b)).scale(sa)
            if not (lhs - rhs).is_zero():
                rep.record("leibniz", f"a={a.describe()}, b={b.describe()}")
            for c in basis:
                if not (p.mul(p.mul(a, b), c) - p.mul(a, p.mul(b, c))).is_zero():
                    rep.record("associativity",
                               f"a={a.describe()}, b={b.describe()}, c={c.describe()}")
    if not p.d.compose(p.d).is_zero():
        rep.record("d-squared", "d*d != 0")
    else:
        hdims = p.complex().cohomology().dims()
        if any(n > 0 for n in hdims):
            rep.record("nonpositive-cohomology", f"H dims {hdims}")
    return rep


class DerivationComplex:
    """Graded derivations of A with bracket, differential and A-action.

    The degree-n component is the solution space of the Leibniz system for
    degree-n endomorphisms of A; each basis vector is kept as an honest
    graded map so derivations can be evaluated on algebra elements.
    """

    def __init__(self, algebra: CdgaPresentation):
        self.algebra = algebra
        degs = algebra.space.degrees()
        lo, hi = min(degs), max(degs)
        self.maps: dict[int, list[GradedMap]] = {}
        dims, labels = {}, {}
        for n in range(lo - hi, hi - lo + 1):
            sols = map_solution_space(algebra.space, algebra.space, n,
                                      lambda f, n=n: self._leibniz_residual(f, n))
            if sols:
                self.maps[n] = sols
                dims[n] = len(sols)
                labels[n] = tuple(f"T{n}_{i}" for i in range(len(sols)))
        self.space = GradedSpace(dims, labels)
        d_blocks = {}
        for n in self.space.degrees():
            cols = []
            for D in self.maps[n]:
                img = self._d_of_map(D, n)
                coords = self.membership(img, n + 1)
                if coords is None:
                    raise ValueError("[d, derivation] left the derivation space")
                cols.append(list(coords))
            d_blocks[n] = from_columns(cols, nrows=self.space.dim(n + 1))
        self.complex = Complex(self.space, GradedMap(self.space, self.space, 1, d_blocks))

    def _leibniz_residual(self, f: GradedMap, n: int):
        out = []
        alg = self.algebra
        for a in alg.all_basis():
            sign = Q(-1) if (n * a.degree) % 2 else Q(1)
            for b in alg.all_basis():
                res = f(alg.mul(a, b)) - alg.mul(f(a), b) - alg.mul(a, f(b)).scale(sign)
                out.extend(res.coords)
        return out

    def _d_of_map(self, D: GradedMap, n: int) -> GradedMap:
        sign = Q(-1) if n % 2 else Q(1)
        return self.algebra.d.compose(D) - D.compose(self.algebra.d).scale(sign)

    def membership(self, f: GradedMap, degree: int):
        basis = self.maps.get(degree, [])
        if not basis:
            return () if f.is_zero() else None
        return membership_coords(f, basis)

    def as_map(self, x: Element) -> GradedMap:
        """The endomorphism of A represented by an element of the complex."""
        basis = self.maps.get(x.degree, [])
        if not basis:
            return GradedMap.zero(self.algebra.space, self.algebra.space, x.degree)
        return combine_maps(basis, x.coords)

    def evaluate(self, x: Element, a: Element) -> Element:
        return self.as_map(x)(a)

    def element(self, degree: int, coords) -> Element:
        return self.space.element(degree, coords)

    def bracket(self, x: Element, y: Element) -> Element:
        """[x, y] = x y - (-1)^{|x||y|} y x, expressed back in the basis."""
        f, g = self.as_map(x), self.as_map(y)
        sign = Q(-1) if (x.degree * y.degree) % 2 else Q(1)
        comm = f.compose(g) - g.compose(f).scale(sign)
        coords = self.membership(comm, x.degree + y.degree)
        if coords is None:
            raise ValueError("bracket left the derivation space")
        return Element(self.space, x.degree + y.degree, tuple(coords))

    def lmul(self, a: Element, x: Element) -> Element:
        """The derivation a * x, i.e. b -> a * x(b)."""
        f = self.as_map(x)
        alg = self.algebra
        deg = a.degree + x.degree
        blocks = {}
        for p in alg.space.degrees():
            cols = []
            for i in range(alg.space.dim(p)):
                img = alg.mul(a, f(alg.space.basis_element(p, i)))
                cols.append(list(img.coords))
            blocks[p] = from_columns(cols, nrows=alg.space.dim(p + deg))
        prod = GradedMap(alg.space, alg.space, deg, blocks)
        coords = self.membership(prod, deg)
        if coords is None:
            raise ValueError("A-action left the derivation space")
        return Element(self.space, a.degree + x.degree, tuple(coords))

    def describe(self, x: Element) -> str:
        f = self.as_map(x)
        parts = []
        for a in self.algebra.all_basis():
            img = f(a)
            if not img.is_zero():
                parts.append(f"{a.describe()}->{img.describe()}")
        return "{" + ", ".join(parts) + "}" if parts else "0"


def derivations(p: CdgaPresentation) -> DerivationComplex:
    return DerivationComplex(p)


@dataclass
class KaehlerModule:
    """Kaehler forms as a quotient of the free right module on symbols."""

    algebra: CdgaPresentation
    bimodule: object                 # DgBimodule; typed loosely to avoid a cycle
    universal: GradedMap             # A -> Omega, a |-> class of d(a)
    quotient: Quotient
    symbol_of: GradedMap             # A -> ambient, a |-> symbol d(a) * 1

    @property
    def space(self) -> GradedSpace:
        return self.bimodule.space


def _kaehler_ambient(p: CdgaPresentation):
    """Free right module on symbols d(a_i): basis pairs (symbol, algebra basis)."""
    alg_basis = [(n, i) for n in p.space.degrees() for i in range(p.space.dim(n))]
    layout: dict[int, list[tuple[int, int, int, int]]] = {}
    for sn, si in alg_basis:
        for bn, bi in alg_basis:
            layout.setdefault(sn + bn, []).append((sn, si, bn, bi))
    dims = {n: len(v) for n, v in layout.items()}
    labels = {
        n: tuple(f"d({p.space.label(sn, si)})*{p.space.label(bn, bi)}"
                 for sn, si, bn, bi in v)
        for n, v in layout.items()
    }
    return GradedSpace(dims, labels), layout


def kaehler(p: CdgaPresentation) -> KaehlerModule:
    from . import modules

    ambient, layout = _kaehler_ambient(p)
    index = {}
    for n, slots in layout.items():
        for pos, key in enumerate(slots):
            index[key] = (n, pos)

    def sym(a: Element) -> Element:
        """Symbol d(a) * 1 for an algebra element a."""
        coords = [Q(0)] * ambient.dim(a.degree)
        for i, c in enumerate(a.coords):
            if c != 0:
                n, pos = index[(a.degree, i, 0, p.unit_index)]
                coords[pos] += c
        return Element(ambient, a.degree, tuple(coords))

    def rmul_amb(w: Element, b: Element) -> Element:
        out = ambient.zero(w.degree + b.degree)
        for pos, c in enumerate(w.coords):
            if c == 0:
                continue
            sn, si, bn, bi = layout[w.degree][pos]
            prod = p.mul(p.space.basis_element(bn, bi), b)
            for j, pc in enumerate(prod.coords):
                if pc == 0:
                    continue
                n2, pos2 = index[(sn, si, prod.degree, j)]
                out = out + Element(ambient, n2,
                                    tuple(c * pc if k == pos2 else Q(0)
                                          for k in range(ambient.dim(n2))))
        return out

    def d_amb(w: Element) -> Element:
        out = ambient.zero(w.degree + 1)
        for pos, c in enumerate(w.coords):
            if c == 0:
                continue
            sn, si, bn, bi = layout[w.degree][pos]
            a_el = p.space.basis_element(sn, si)
            b_el = p.space.basis_element(bn, bi)
            # d(d(a) * b) = d(d_A a) * b + (-1)^{|a|} d(a) * d_A b
            out = out + rmul_amb(sym(p.d(a_el)), b_el)
            sign = Q(-1) if sn % 2 else Q(1)
            out = out + rmul_amb(sym(a_el), p.d(b_el)).scale(sign)
        return out

    relations: dict[int, list] = {}
    rel_elements = []
    basis = list(p.all_basis())
    for a in basis:
        for b in basis:
            sign = Q(-1) if (a.degree * b.degree) % 2 else Q(1)
            rel = sym(p.mul(a, b)) - rmul_amb(sym(a), b) - rmul_amb(sym(b), a).scale(sign)
            for c in basis:
                v = rmul_amb(rel, c)
                if not v.is_zero():
                    relations.setdefault(v.degree, []).append(v.coords)
                    rel_elements.append(v)
            if not rel.is_zero():
                relations.setdefault(rel.degree, []).append(rel.coords)
                rel_elements.append(rel)
    quot = Quotient(ambient, relations)
    for r in rel_elements:
        if not quot.project(d_amb(r)).is_zero():
            raise ValueError("relation span not closed under the differential")

    proj, sec = quot.project, quot.section

    def ract(w: Element, a: Element) -> Element:
        return proj(rmul_amb(sec(w), a))

    def lact(a: Element, w: Element) -> Element:
        sign = Q(-1) if (a.degree * w.degree) % 2 else Q(1)
        return ract(w, a).scale(sign)

    def diff(w: Element) -> Element:
        return proj(d_amb(sec(w)))

    bim = modules.bimodule_from_operators(p, quot.space, lact, ract, diff,
                                          name=f"Kaehler({p.name})")
    universal_blocks = {}
    for n in p.space.degrees():
        cols = [list(proj(sym(p.space.basis_element(n, i))).coords)
                for i in range(p.space.dim(n))]
        universal_blocks[n] = from_columns(cols, nrows=quot.space.dim(n))
    universal = GradedMap(p.space, quot.space, 0, universal_blocks)
    sym_blocks = {}
    for n in p.space.degrees():
        cols = [list(sym(p.space.basis_element(n, i)).coords)
                for i in range(p.space.dim(n))]
        sym_blocks[n] = from_columns(cols, nrows=ambient.dim(n))
    symbol_of = GradedMap(p.space, ambient, 0, sym_blocks)
    return KaehlerModule(p, bim, universal, quot, symbol_of)


def _phi_on_kaehler_ambient(p: CdgaPresentation, layout, Dmap: GradedMap,
                            w: Element) -> Element:
    out = p.space.zero(w.degree + Dmap.degree)
    for pos, c in enumerate(w.coords):
        if c == 0:
            continue
        sn, si, bn, bi = layout[w.degree][pos]
        val = p.mul(Dmap(p.space.basis_element(sn, si)),
                    p.space.basis_element(bn, bi))
        out = out + val.scale(c)
    return out


def derivation_functional(O: KaehlerModule, Dmap: GradedMap) -> GradedMap:
    """phi_D on Kaehler classes, phi_D(d(a).b) = D(a).b.

    Raises when phi_D fails to factor through the Leibniz relations, which
    happens exactly when Dmap is not a derivation.
    """
    p = O.algebra
    layout = _kaehler_ambient(p)[1]
    blocks = {}
    for m in O.space.degrees():
        fc = []
        for i in range(O.space.dim(m)):
            w = O.quotient.section(O.space.basis_element(m, i))
            fc.append(list(_phi_on_kaehler_ambient(p, layout, Dmap, w).coords))
        blocks[m] = from_columns(fc, nrows=p.space.dim(m + Dmap.degree))
    phi = GradedMap(O.space, p.space, Dmap.degree, blocks)
    for m in O.quotient.ambient.degrees():
        for i in range(O.quotient.ambient.dim(m)):
            w = O.quotient.ambient.basis_element(m, i)
            nf = O.quotient.section(O.quotient.project(w))
            lhs = _phi_on_kaehler_ambient(p, layout, Dmap, w)
            rhs = _phi_on_kaehler_ambient(p, layout, Dmap, nf)
            if not (lhs - rhs).is_zero():
                raise ValueError("functional is not representative independent")
    return phi


def pairing_check(T: DerivationComplex, O: KaehlerModule) -> bool:
    """Evaluation pairing <D, d(a) b> = D(a) b gives T = left dual of Omega."""
    from . import modules

    dual = modules.left_dual(O.bimodule)
    for n in sorted(set(T.space.degrees()) | set(dual.space.degrees())):
        if T.space.dim(n) != dual.space.dim(n):
            return False
        cols = []
        for D in T.maps.get(n, []):
            try:
                phi = derivation_functional(O, D)
            except ValueError:
                return False
            coords = membership_coords(phi, dual.functionals(n))
            if coords is None:
                return False
            cols.append(list(coords))
        mat = from_columns(cols, nrows=dual.space.dim(n))
        if mat.inverse() is None and dual.space.dim(n) > 0:
            return False
    return True
