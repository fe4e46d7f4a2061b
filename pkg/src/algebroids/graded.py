"""Graded vector spaces, graded maps, complexes and their primitives.

Conventions fixed here and used by every other module:

* cohomological grading, differentials have degree +1;
* shift: (M[k])^n = M^(n+k), d_{M[k]} = (-1)^k d_M;
* cone of a chain map f: X -> Y is Y (+) X[1] with differential
  [[d_Y, f], [0, -d_X]], together with the inclusion of Y and the
  projection onto X[1];
* tensor products over the ground field order their basis by source
  degree ascending, then left index, then right index;
* the braiding carries the Koszul sign (-1)^{|x||y|}, and a tensor of
  maps evaluates as (f (x) g)(x (x) y) = (-1)^{|g||x|} f(x) (x) g(y).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .matrix import Matrix, Q, from_columns, identity, zeros

__all__ = [
    "GradedSpace",
    "Element",
    "GradedMap",
    "Complex",
    "shift_complex",
    "shift_map",
    "cone",
    "tensor_space",
    "tensor_slices",
    "tensor_index",
    "tensor_map",
    "tensor_complex",
    "tensor_element",
    "associator",
    "braiding",
    "direct_sum",
    "DirectSum",
    "Quotient",
    "kernel_presentation",
    "Cohomology",
    "is_quasi_iso",
]


class GradedSpace:
    """Finite dimensional graded vector space with optional basis labels."""

    __slots__ = ("dims", "labels")

    def __init__(self, dims: dict[int, int], labels: dict[int, tuple[str, ...]] | None = None):
        self.dims = {n: d for n, d in dims.items() if d}
        if any(d < 0 for d in self.dims.values()):
            raise ValueError("negative dimension")
        self.labels = {}
        if labels:
            for n, names in labels.items():
                if self.dim(n) != len(names):
                    raise ValueError(f"label count mismatch in degree {n}")
                self.labels[n] = tuple(names)

    def dim(self, n: int) -> int:
        return self.dims.get(n, 0)

    def degrees(self) -> list[int]:
        return sorted(self.dims)

    def total_dim(self) -> int:
        return sum(self.dims.values())

    def label(self, n: int, i: int) -> str:
        if n in self.labels:
            return self.labels[n][i]
        return f"e{n}_{i}"

    def __eq__(self, other) -> bool:
        return isinstance(other, GradedSpace) and self.dims == other.dims

    def __repr__(self):
        return f"GradedSpace({self.dims})"

    def basis_element(self, n: int, i: int) -> "Element":
        coords = [Q(0)] * self.dim(n)
        coords[i] = Q(1)
        return Element(self, n, tuple(coords))

    def zero(self, n: int) -> "Element":
        return Element(self, n, tuple([Q(0)] * self.dim(n)))

    def element(self, n: int, coords) -> "Element":
        coords = tuple(Fraction(c) for c in coords)
        if len(coords) != self.dim(n):
            raise ValueError(f"expected {self.dim(n)} coordinates in degree {n}")
        return Element(self, n, coords)


@dataclass(frozen=True)
class Element:
    """Homogeneous element, held as coordinates against the chosen basis."""

    space: GradedSpace
    degree: int
    coords: tuple[Fraction, ...]

    def __add__(self, other: "Element") -> "Element":
        if self.space != other.space or self.degree != other.degree:
            raise ValueError("cannot add elements of different degree")
        return Element(self.space, self.degree, tuple(a + b for a, b in zip(self.coords, other.coords)))

    def __sub__(self, other: "Element") -> "Element":
        return self + other.scale(Q(-1))

    def scale(self, c) -> "Element":
        c = Fraction(c)
        return Element(self.space, self.degree, tuple(c * x for x in self.coords))

    def __neg__(self) -> "Element":
        return self.scale(Q(-1))

    def is_zero(self) -> bool:
        return all(x == 0 for x in self.coords)

    def describe(self) -> str:
        terms = []
        for i, c in enumerate(self.coords):
            if c == 0:
                continue
            name = self.space.label(self.degree, i)
            if c == 1:
                terms.append(name)
            elif c == -1:
                terms.append(f"-{name}")
            else:
                terms.append(f"({c})*{name}")
        return " + ".join(terms).replace("+ -", "- ") if terms else "0"


class GradedMap:
    """Degree-homogeneous linear map, stored as one matrix per source degree.

    The block in source degree d maps X^d to Y^(d+degree) and acts on
    coordinate columns.
    """

    __slots__ = ("source", "target", "degree", "blocks")

    def __init__(self, source: GradedSpace, target: GradedSpace, degree: int,
                 blocks: dict[int, Matrix]):
        self.source = source
        self.target = target
        self.degree = degree
        clean: dict[int, Matrix] = {}
        for d, m in blocks.items():
            want = (target.dim(d + degree), source.dim(d))
            if m.shape != want:
                raise ValueError(f"block {d}: shape {m.shape}, expected {want}")
            if 0 not in want:
                clean[d] = m
        self.blocks = clean

    @staticmethod
    def zero(source: GradedSpace, target: GradedSpace, degree: int) -> "GradedMap":
        return GradedMap(source, target, degree, {})

    @staticmethod
    def identity(space: GradedSpace) -> "GradedMap":
        return GradedMap(space, space, 0, {n: identity(d) for n, d in space.dims.items()})

    def block(self, d: int) -> Matrix:
        if d in self.blocks:
            return self.blocks[d]
        return zeros(self.target.dim(d + self.degree), self.source.dim(d))

    def __call__(self, x: Element) -> Element:
        if x.space != self.source:
            raise ValueError("element not in the source space")
        out = self.block(x.degree).apply(x.coords)
        return Element(self.target, x.degree + self.degree, out)

    def compose(self, other: "GradedMap") -> "GradedMap":
        """self after other."""
        if other.target != self.source:
            raise ValueError("composition mismatch")
        deg = self.degree + other.degree
        blocks = {}
        for d in other.source.degrees():
            blocks[d] = self.block(d + other.degree) * other.block(d)
        return GradedMap(other.source, self.target, deg, blocks)

    def __add__(self, other: "GradedMap") -> "GradedMap":
        if (self.source, self.target, self.degree) != (other.source, other.target, other.degree):
            raise ValueError("cannot add maps of different type")
        blocks = {}
        for d in set(self.blocks) | set(other.blocks):
            blocks[d] = self.block(d) + other.block(d)
        return GradedMap(self.source, self.target, self.degree, blocks)

    def __sub__(self, other: "GradedMap") -> "GradedMap":
        return self + other.scale(Q(-1))

    def scale(self, c) -> "GradedMap":
        c = Fraction(c)
        return GradedMap(self.source, self.target, self.degree,
                         {d: m.scale(c) for d, m in self.blocks.items()})

    def __neg__(self) -> "GradedMap":
        return self.scale(Q(-1))

    def is_zero(self) -> bool:
        return all(m.is_zero() for m in self.blocks.values())

    def inverse(self) -> "GradedMap":
        """Blockwise inverse; raises when any block is not invertible."""
        if self.degree != 0:
            raise ValueError("only degree 0 maps can be inverted")
        blocks = {}
        for n in set(self.source.degrees()) | set(self.target.degrees()):
            if self.source.dim(n) != self.target.dim(n):
                raise ValueError(f"degree {n}: dimension mismatch")
            if self.source.dim(n) == 0:
                continue
            inv = self.block(n).inverse()
            if inv is None:
                raise ValueError(f"degree {n}: block not invertible")
            blocks[n] = inv
        return GradedMap(self.target, self.source, 0, blocks)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GradedMap):
            return NotImplemented
        if (self.source, self.target, self.degree) != (other.source, other.target, other.degree):
            return False
        return (self - other).is_zero()

    def __repr__(self):
        return f"GradedMap(degree={self.degree}, blocks={sorted(self.blocks)})"


class Complex:
    """Graded space with a square-zero degree +1 differential."""

    __slots__ = ("space", "d")

    def __init__(self, space: GradedSpace, d: GradedMap, check: bool = True):
        if d.source != space or d.target != space or d.degree != 1:
            raise ValueError("differential must be a degree +1 endomorphism")
        if check and not d.compose(d).is_zero():
            raise ValueError("differential does not square to zero")
        self.space = space
        self.d = d

    def dim(self, n: int) -> int:
        return self.space.dim(n)

    def degrees(self) -> list[int]:
        return self.space.degrees()

    def cohomology(self) -> "Cohomology":
        return Cohomology(self)

    def __eq__(self, other) -> bool:
        return isinstance(other, Complex) and self.space == other.space and self.d == other.d


class Cohomology:
    """Per-degree kernels, images, chosen representatives and class maps."""

    def __init__(self, cx: Complex):
        self.complex = cx
        self._data: dict[int, tuple[Matrix, Matrix, list[int]]] = {}
        degs = set(cx.degrees())
        degs |= {n + 1 for n in cx.degrees()}
        for n in sorted(degs):
            kn = cx.d.block(n).kernel()            # columns: basis of cocycles
            bn = cx.d.block(n - 1)                 # image columns inside degree n
            probe = bn.hstack(kn)
            pivots = probe.column_space_pivots()
            rep_cols = [j - bn.ncols for j in pivots if j >= bn.ncols]
            self._data[n] = (kn, bn, rep_cols)

    def dim(self, n: int) -> int:
        if n not in self._data:
            return 0
        return len(self._data[n][2])

    def dims(self) -> dict[int, int]:
        return {n: self.dim(n) for n in self._data if self.dim(n)}

    def representatives(self, n: int) -> list[tuple[Fraction, ...]]:
        """Cocycle vectors whose classes form a basis of H^n."""
        if n not in self._data:
            return []
        kn, _, rep_cols = self._data[n]
        return [kn.column(j) for j in rep_cols]

    def class_of(self, x: Element) -> tuple[Fraction, ...]:
        """Coordinates of a cocycle's class against the representative basis."""
        n = x.degree
        if not self.complex.d(x).is_zero():
            raise ValueError("not a cocycle")
        if n not in self._data:
            return ()
        kn, bn, rep_cols = self._data[n]
        reps = from_columns([kn.column(j) for j in rep_cols],
                            nrows=self.complex.dim(n))
        sol = bn.hstack(reps).solve(x.coords)
        assert sol is not None
        return tuple(sol[bn.ncols:])

    def is_acyclic(self) -> bool:
        return all(self.dim(n) == 0 for n in self._data)


def shift_complex(cx: Complex, k: int) -> Complex:
    """(M[k])^n = M^(n+k) with differential (-1)^k d."""
    space = GradedSpace(
        {n - k: d for n, d in cx.space.dims.items()},
        {n - k: tuple(f"{name}[{k}]" for name in cx.space.labels[n])
         for n in cx.space.labels},
    )
    sign = Q(-1) if k % 2 else Q(1)
    blocks = {d - k: m.scale(sign) for d, m in cx.d.blocks.items()}
    return Complex(space, GradedMap(space, space, 1, blocks), check=False)


def shift_map(f: GradedMap, shifted_source: GradedSpace, shifted_target: GradedSpace, k: int) -> GradedMap:
    """The same blocks reindexed for source[k] -> target[k]."""
    blocks = {d - k: m for d, m in f.blocks.items()}
    return GradedMap(shifted_source, shifted_target, f.degree, blocks)


@dataclass
class DirectSum:
    """X (+) Y with the four structure maps; X coordinates come first."""

    space: GradedSpace
    include: list[GradedMap]
    project: list[GradedMap]


def direct_sum(parts: list[GradedSpace]) -> DirectSum:
    degs = sorted({n for p in parts for n in p.degrees()})
    dims = {n: sum(p.dim(n) for p in parts) for n in degs}
    labels = {}
    for n in degs:
        row: list[str] = []
        for idx, p in enumerate(parts):
            row.extend(p.label(n, i) if p.labels else f"s{idx}:{p.label(n, i)}"
                       for i in range(p.dim(n)))
        labels[n] = tuple(row)
    total = GradedSpace(dims, labels)
    include, project = [], []
    for idx, p in enumerate(parts):
        inc_blocks, prj_blocks = {}, {}
        for n in degs:
            before = sum(q.dim(n) for q in parts[:idx])
            rows = []
            for i in range(total.dim(n)):
                row = [Q(0)] * p.dim(n)
                if before <= i < before + p.dim(n):
                    row[i - before] = Q(1)
                rows.append(row)
            inc = Matrix(rows, ncols=p.dim(n))
            inc_blocks[n] = inc
            prj_blocks[n] = inc.transpose()
        include.append(GradedMap(p, total, 0, inc_blocks))
        project.append(GradedMap(total, p, 0, prj_blocks))
    return DirectSum(total, include, project)


@dataclass
class Cone:
    complex: Complex
    from_target: GradedMap       # Y -> cone, chain map
    to_shifted_source: GradedMap  # cone -> X[1], chain map
    shifted_source: Complex


def cone(f: GradedMap, source: Complex, target: Complex) -> Cone:
    """Mapping cone of a degree 0 chain map f: source -> target."""
    if f.source != source.space or f.target != target.space or f.degree != 0:
        raise ValueError("cone needs a degree 0 map between the given complexes")
    if not (target.d.compose(f) - f.compose(source.d)).is_zero():
        raise ValueError("cone needs a chain map")
    sh = shift_complex(source, 1)
    ds = direct_sum([target.space, sh.space])
    iy, ix = ds.include
    py, px = ds.project
    # d(y, x) = (d_Y y + f x, d_{X[1]} x); the shift already carries -d_X
    f_sh = GradedMap(sh.space, target.space, 1,
                     {d - 1: m for d, m in f.blocks.items()})
    d = iy.compose(target.d).compose(py) + iy.compose(f_sh).compose(px) \
        + ix.compose(sh.d).compose(px)
    cx = Complex(ds.space, d)
    return Cone(cx, iy, px, sh)


def is_quasi_iso(f: GradedMap, source: Complex, target: Complex) -> bool:
    return cone(f, source, target).complex.cohomology().is_acyclic()


# -- tensor products over the ground field -------------------------------------


def tensor_slices(x: GradedSpace, y: GradedSpace, n: int) -> list[tuple[int, int, int]]:
    """Ordered (p, i, j) index triples for the degree n part of X (x) Y."""
    out = []
    for p in x.degrees():
        q = n - p
        for i in range(x.dim(p)):
            for j in range(y.dim(q)):
                out.append((p, i, j))
    return out


def tensor_space(x: GradedSpace, y: GradedSpace) -> GradedSpace:
    degs = {p + q for p in x.degrees() for q in y.degrees()}
    dims, labels = {}, {}
    for n in sorted(degs):
        sl = tensor_slices(x, y, n)
        dims[n] = len(sl)
        labels[n] = tuple(f"{x.label(p, i)}(x){y.label(n - p, j)}" for p, i, j in sl)
    return GradedSpace(dims, labels)


def tensor_index(x: GradedSpace, y: GradedSpace, n: int, p: int, i: int, j: int) -> int:
    idx = 0
    for pp in x.degrees():
        if pp < p:
            idx += x.dim(pp) * y.dim(n - pp)
        elif pp == p:
            return idx + i * y.dim(n - p) + j
    raise ValueError("index outside the tensor space")


def tensor_map(f: GradedMap, g: GradedMap,
               src: GradedSpace | None = None, tgt: GradedSpace | None = None) -> GradedMap:
    """f (x) g with the Koszul sign (-1)^{|g| |x|}."""
    src = src or tensor_space(f.source, g.source)
    tgt = tgt or tensor_space(f.target, g.target)
    deg = f.degree + g.degree
    blocks: dict[int, Matrix] = {}
    for n in src.degrees():
        m_rows = tgt.dim(n + deg)
        cols: list[list[Fraction]] = [[Q(0)] * m_rows for _ in range(src.dim(n))]
        for col, (p, i, j) in enumerate(tensor_slices(f.source, g.source, n)):
            q = n - p
            sign = Q(-1) if (g.degree * p) % 2 else Q(1)
            fb = f.block(p)
            gb = g.block(q)
            for ii in range(fb.nrows):
                a = fb.entry(ii, i)
                if a == 0:
                    continue
                for jj in range(gb.nrows):
                    b = gb.entry(jj, j)
                    if b == 0:
                        continue
                    row = tensor_index(f.target, g.target, n + deg, p + f.degree, ii, jj)
                    cols[col][row] += sign * a * b
        blocks[n] = from_columns(cols, nrows=m_rows)
    return GradedMap(src, tgt, deg, blocks)


def tensor_complex(x: Complex, y: Complex) -> Complex:
    space = tensor_space(x.space, y.space)
    idx = GradedMap.identity(x.space)
    idy = GradedMap.identity(y.space)
    d = tensor_map(x.d, idy, space, space) + tensor_map(idx, y.d, space, space)
    return Complex(space, d)


def tensor_element(a: Element, b: Element, tsp: GradedSpace | None = None) -> Element:
    """Coordinates of a (x) b inside tensor_space(a.space, b.space)."""
    tsp = tsp or tensor_space(a.space, b.space)
    n = a.degree + b.degree
    coords = [Q(0)] * tsp.dim(n)
    for i, ca in enumerate(a.coords):
        if ca == 0:
            continue
        for j, cb in enumerate(b.coords):
            if cb == 0:
                continue
            coords[tensor_index(a.space, b.space, n, a.degree, i, j)] = ca * cb
    return Element(tsp, n, tuple(coords))


def associator(x: GradedSpace, y: GradedSpace, z: GradedSpace) -> GradedMap:
    """(X (x) Y) (x) Z -> X (x) (Y (x) Z), the basis permutation (no signs)."""
    xy = tensor_space(x, y)
    yz = tensor_space(y, z)
    src = tensor_space(xy, z)
    tgt = tensor_space(x, yz)
    blocks = {}
    for n in src.degrees():
        cols = []
        for pq, idx_xy, k in tensor_slices(xy, z, n):
            r = n - pq
            # unpack the pair index inside (X (x) Y)^pq
            p, i, j = tensor_slices(x, y, pq)[idx_xy]
            q = pq - p
            vec = [Q(0)] * tgt.dim(n)
            inner = tensor_index(y, z, q + r, q, j, k)
            vec[tensor_index(x, yz, n, p, i, inner)] = Q(1)
            cols.append(vec)
        blocks[n] = from_columns(cols, nrows=tgt.dim(n))
    return GradedMap(src, tgt, 0, blocks)


class Quotient:
    """Quotient of a graded space by a degreewise span, with normal forms.

    Representatives are the non-pivot coordinates of the row-reduced
    relation span, so projection, section and normal form are canonical.
    """

    def __init__(self, ambient: GradedSpace, relations: dict[int, list[tuple[Fraction, ...]]]):
        self.ambient = ambient
        self._reduced: dict[int, tuple[Matrix, list[int], list[int]]] = {}
        dims, labels = {}, {}
        for n in ambient.degrees():
            rel_rows = relations.get(n, [])
            mat = Matrix(rel_rows, ncols=ambient.dim(n))
            red, pivots = mat.rref()
            keep = [j for j in range(ambient.dim(n)) if j not in pivots]
            self._reduced[n] = (red, pivots, keep)
            dims[n] = len(keep)
            labels[n] = tuple(f"[{ambient.label(n, j)}]" for j in keep)
        self.space = GradedSpace(dims, labels)
        prj_blocks, sec_blocks = {}, {}
        for n in ambient.degrees():
            red, pivots, keep = self._reduced[n]
            cols = []
            for j in range(ambient.dim(n)):
                cols.append(self._normal_coords(n, j, red, pivots, keep))
            prj_blocks[n] = from_columns(cols, nrows=len(keep))
            sec_cols = []
            for j in keep:
                v = [Q(0)] * ambient.dim(n)
                v[j] = Q(1)
                sec_cols.append(v)
            sec_blocks[n] = from_columns(sec_cols, nrows=ambient.dim(n))
        self.project = GradedMap(ambient, self.space, 0, prj_blocks)
        self.section = GradedMap(self.space, ambient, 0, sec_blocks)

    def _normal_coords(self, n, j, red, pivots, keep):
        # image of the j-th ambient basis vector in quotient coordinates
        out = [Q(0)] * len(keep)
        if j in pivots:
            r = pivots.index(j)
            for pos, jj in enumerate(keep):
                out[pos] = -red.rows[r][jj]
        else:
            out[keep.index(j)] = Q(1)
        return out

    def normal_form(self) -> GradedMap:
        return self.section.compose(self.project)

    def relation_span(self, n: int) -> list[tuple[Fraction, ...]]:
        """Rows spanning the killed subspace in degree n, in reduced form."""
        if n not in self._reduced:
            return []
        red, _, _ = self._reduced[n]
        return [row for row in red.rows if any(c != 0 for c in row)]

    def induce_endo(self, f: GradedMap, check: bool = True) -> GradedMap:
        """Induced map on the quotient of an endomorphism preserving relations."""
        induced = self.project.compose(f).compose(self.section)
        if check:
            lhs = self.project.compose(f)
            if not (induced.compose(self.project) - lhs).is_zero():
                raise ValueError("map does not preserve the relation span")
        return induced


def kernel_presentation(f: GradedMap) -> tuple[GradedSpace, GradedMap]:
    """Degreewise kernel of f with its inclusion into the source."""
    dims, blocks = {}, {}
    for n in f.source.degrees():
        k = f.block(n).kernel()
        dims[n] = k.ncols
        blocks[n] = k
    space = GradedSpace(dims)
    include = GradedMap(space, f.source, 0,
                        {n: blocks[n] for n in space.degrees()})
    return space, include


def braiding(x: GradedSpace, y: GradedSpace) -> GradedMap:
    """X (x) Y -> Y (x) X, x (x) y |-> (-1)^{|x||y|} y (x) x."""
    src = tensor_space(x, y)
    tgt = tensor_space(y, x)
    blocks = {}
    for n in src.degrees():
        cols = []
        for p, i, j in tensor_slices(x, y, n):
            q = n - p
            vec = [Q(0)] * tgt.dim(n)
            sign = Q(-1) if (p * q) % 2 else Q(1)
            vec[tensor_index(y, x, n, q, j, i)] = sign
            cols.append(vec)
        blocks[n] = from_columns(cols, nrows=tgt.dim(n))
    return GradedMap(src, tgt, 0, blocks)
