"""Linear solvers whose unknowns are the entries of a graded map.

Constraints are supplied as a callback computing a residual vector from a
candidate map.  Since every constraint in this package is (affine) linear
in the map's entries, probing the callback on each elementary matrix map
recovers the full system, which is then solved exactly.
"""

from __future__ import annotations

from collections.abc import Callable
from fractions import Fraction

from .graded import GradedMap, GradedSpace
from .matrix import Matrix, Q, from_columns, zeros

__all__ = [
    "map_solution_space",
    "map_affine_solve",
    "combine_maps",
    "flatten_map",
    "membership_coords",
    "affine_solve",
    "vector_solution_space",
]


def affine_solve(n_unknowns: int, residual: Callable[[list[Fraction]], list[Fraction]]):
    """One coefficient vector with residual = 0, residual affine; or None."""
    base = residual([Q(0)] * n_unknowns)
    if n_unknowns == 0:
        return () if all(x == 0 for x in base) else None
    cols = []
    for k in range(n_unknowns):
        probe = [Q(0)] * n_unknowns
        probe[k] = Q(1)
        cols.append([a - b for a, b in zip(residual(probe), base)])
    system = from_columns(cols, nrows=len(base))
    return system.solve([-x for x in base])


def vector_solution_space(n_unknowns: int,
                          residual: Callable[[list[Fraction]], list[Fraction]]):
    """Basis of the kernel of a linear homogeneous residual on coefficients."""
    base = residual([Q(0)] * n_unknowns)
    if any(x != 0 for x in base):
        raise ValueError("residual is not homogeneous")
    if n_unknowns == 0:
        return []
    cols = []
    for k in range(n_unknowns):
        probe = [Q(0)] * n_unknowns
        probe[k] = Q(1)
        cols.append(residual(probe))
    system = from_columns(cols, nrows=len(cols[0]))
    ker = system.kernel()
    return [ker.column(j) for j in range(ker.ncols)]

Residual = Callable[[GradedMap], list[Fraction]]


def _unknown_slots(source: GradedSpace, target: GradedSpace, degree: int):
    slots = []
    for p in source.degrees():
        t, s = target.dim(p + degree), source.dim(p)
        for r in range(t):
            for c in range(s):
                slots.append((p, r, c))
    return slots


def _elementary(source: GradedSpace, target: GradedSpace, degree: int, slot) -> GradedMap:
    p, r, c = slot
    rows = [[Q(0)] * source.dim(p) for _ in range(target.dim(p + degree))]
    rows[r][c] = Q(1)
    return GradedMap(source, target, degree, {p: Matrix(rows, ncols=source.dim(p))})


def map_solution_space(source: GradedSpace, target: GradedSpace, degree: int,
                       residual: Residual) -> list[GradedMap]:
    """Basis of {f : residual(f) = 0} for a linear homogeneous residual."""
    slots = _unknown_slots(source, target, degree)
    zero = GradedMap.zero(source, target, degree)
    base = residual(zero)
    if any(x != 0 for x in base):
        raise ValueError("residual is not homogeneous; use map_affine_solve")
    if not slots:
        return []
    cols = [residual(_elementary(source, target, degree, s)) for s in slots]
    system = from_columns(cols, nrows=len(cols[0]))
    out = []
    for j in range(system.kernel().ncols):
        coeffs = system.kernel().column(j)
        out.append(_assemble(source, target, degree, slots, coeffs))
    return out


def map_affine_solve(source: GradedSpace, target: GradedSpace, degree: int,
                     residual: Residual) -> GradedMap | None:
    """One f with residual(f) = 0, residual affine in f; None if none exists."""
    slots = _unknown_slots(source, target, degree)
    zero = GradedMap.zero(source, target, degree)
    base = residual(zero)
    if not slots:
        return zero if all(x == 0 for x in base) else None
    cols = [
        [a - b for a, b in zip(residual(_elementary(source, target, degree, s)), base)]
        for s in slots
    ]
    system = from_columns(cols, nrows=len(base))
    sol = system.solve([-x for x in base])
    if sol is None:
        return None
    return _assemble(source, target, degree, slots, sol)


def _assemble(source, target, degree, slots, coeffs) -> GradedMap:
    blocks: dict[int, list[list[Fraction]]] = {}
    for (p, r, c), v in zip(slots, coeffs):
        if p not in blocks:
            blocks[p] = [[Q(0)] * source.dim(p) for _ in range(target.dim(p + degree))]
        blocks[p][r][c] = v
    return GradedMap(source, target, degree,
                     {p: Matrix(rows, ncols=source.dim(p)) for p, rows in blocks.items()})


def combine_maps(maps: list[GradedMap], coeffs) -> GradedMap:
    if not maps:
        raise ValueError("no maps to combine")
    out = GradedMap.zero(maps[0].source, maps[0].target, maps[0].degree)
    for f, c in zip(maps, coeffs):
        if c != 0:
            out = out + f.scale(c)
    return out


def flatten_map(f: GradedMap) -> tuple[Fraction, ...]:
    out = []
    for p in f.source.degrees():
        b = f.block(p)
        for row in b.rows:
            out.extend(row)
    return tuple(out)


def membership_coords(f: GradedMap, basis: list[GradedMap]):
    """Coordinates of f against a list of same-type maps, or None."""
    if not basis:
        return None if not f.is_zero() else ()
    cols = [flatten_map(b) for b in basis]
    target = flatten_map(f)
    system = from_columns(cols, nrows=len(target)) if target else zeros(0, len(cols))
    return system.solve(target)
