"""Dense exact matrices over the rationals.

Everything downstream (graded maps, quotient presentations, linear solves
for derivations, duals and ext classes) reduces to row reduction of dense
matrices with Fraction entries.  Pivoting picks the first nonzero entry in
column order, so reduced forms, kernels and solution sets are deterministic
functions of the input.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

Q = Fraction

__all__ = [
    "Q",
    "Matrix",
    "zeros",
    "identity",
    "from_rows",
    "from_columns",
    "sgn",
]


def sgn(exponent: int) -> Fraction:
    """(-1)^exponent as an exact rational."""
    return Q(-1) if exponent % 2 else Q(1)


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"not an exact rational: {x!r}")


class Matrix:
    """Immutable dense matrix of Fractions.

    Rows are stored as tuples; the matrix acts on coordinate columns, so a
    map between based spaces with m-dimensional target and n-dimensional
    source is an m-by-n matrix.
    """

    __slots__ = ("rows", "nrows", "ncols")

    def __init__(self, rows: Iterable[Iterable[Fraction]], ncols: int | None = None):
        data = tuple(tuple(_frac(x) for x in row) for row in rows)
        if data:
            widths = {len(r) for r in data}
            if len(widths) != 1:
                raise ValueError("ragged rows")
            width = widths.pop()
            if ncols is not None and ncols != width:
                raise ValueError("ncols does not match row width")
            ncols = width
        elif ncols is None:
            ncols = 0
        self.rows = data
        self.nrows = len(data)
        self.ncols = ncols

    # -- construction helpers -------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Matrix)
            and self.shape == other.shape
            and self.rows == other.rows
        )

    def __hash__(self):
        return hash((self.shape, self.rows))

    def __repr__(self):
        return f"Matrix({self.nrows}x{self.ncols})"

    def entry(self, i: int, j: int) -> Fraction:
        return self.rows[i][j]

    def column(self, j: int) -> tuple[Fraction, ...]:
        return tuple(row[j] for row in self.rows)

    def columns(self) -> list[tuple[Fraction, ...]]:
        return [self.column(j) for j in range(self.ncols)]

    def transpose(self) -> "Matrix":
        if self.nrows == 0:
            # transpose of 0 x k is k x 0
            return Matrix(((),) * self.ncols, ncols=0) if self.ncols else Matrix([], ncols=0)
        return Matrix(zip(*self.rows), ncols=self.nrows)

    def is_zero(self) -> bool:
        return all(x == 0 for row in self.rows for x in row)

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other: "Matrix") -> "Matrix":
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} + {other.shape}")
        return Matrix(
            (a + b for a, b in zip(r1, r2)) for r1, r2 in zip(self.rows, other.rows)
        ) if self.nrows else self

    def __sub__(self, other: "Matrix") -> "Matrix":
        return self + other.scale(Q(-1))

    def scale(self, c: Fraction) -> "Matrix":
        c = _frac(c)
        return Matrix(((c * x for x in row) for row in self.rows), ncols=self.ncols)

    def __neg__(self) -> "Matrix":
        return self.scale(Q(-1))

    def __mul__(self, other: "Matrix") -> "Matrix":
        if self.ncols != other.nrows:
            raise ValueError(f"shape mismatch {self.shape} * {other.shape}")
        cols = other.transpose().rows
        return Matrix(
            (
                (sum((a * b for a, b in zip(row, col)), Q(0)) for col in cols)
                for row in self.rows
            ),
            ncols=other.ncols,
        )

    def apply(self, vec: Sequence[Fraction]) -> tuple[Fraction, ...]:
        if len(vec) != self.ncols:
            raise ValueError(f"vector length {len(vec)} != ncols {self.ncols}")
        return tuple(sum((a * _frac(b) for a, b in zip(row, vec)), Q(0)) for row in self.rows)

    def hstack(self, other: "Matrix") -> "Matrix":
        if self.nrows != other.nrows:
            raise ValueError("row count mismatch in hstack")
        return Matrix(
            (r1 + r2 for r1, r2 in zip(self.rows, other.rows)),
            ncols=self.ncols + other.ncols,
        )

    def vstack(self, other: "Matrix") -> "Matrix":
        if self.ncols != other.ncols:
            raise ValueError("column count mismatch in vstack")
        return Matrix(self.rows + other.rows, ncols=self.ncols)

    def submatrix(self, row_idx: Sequence[int], col_idx: Sequence[int]) -> "Matrix":
        return Matrix(
            ((self.rows[i][j] for j in col_idx) for i in row_idx), ncols=len(col_idx)
        )

    # -- elimination -----------------------------------------------------------

    def rref(self) -> tuple["Matrix", list[int]]:
        """Reduced row echelon form and the list of pivot columns."""
        rows = [list(r) for r in self.rows]
        pivots: list[int] = []
        r = 0
        for c in range(self.ncols):
            pivot_row = None
            for i in range(r, len(rows)):
                if rows[i][c] != 0:
                    pivot_row = i
                    break
            if pivot_row is None:
                continue
            rows[r], rows[pivot_row] = rows[pivot_row], rows[r]
            inv = 1 / rows[r][c]
            rows[r] = [x * inv for x in rows[r]]
            for i in range(len(rows)):
                if i != r and rows[i][c] != 0:
                    f = rows[i][c]
                    rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
            pivots.append(c)
            r += 1
            if r == len(rows):
                break
        return Matrix(rows, ncols=self.ncols), pivots

    def rank(self) -> int:
        return len(self.rref()[1])

    def kernel(self) -> "Matrix":
        """Matrix whose columns are a basis of the null space."""
        red, pivots = self.rref()
        free = [j for j in range(self.ncols) if j not in pivots]
        cols = []
        for j in free:
            v = [Q(0)] * self.ncols
            v[j] = Q(1)
            for r, p in enumerate(pivots):
                v[p] = -red.rows[r][j]
            cols.append(v)
        return from_columns(cols, nrows=self.ncols)

    def column_space_pivots(self) -> list[int]:
        """Indices of columns forming a basis of the column space."""
        return self.rref()[1]

    def solve(self, target: Sequence[Fraction]) -> tuple[Fraction, ...] | None:
        """One solution x of self*x = target, or None if inconsistent.

        Free variables are set to zero, so the solution is deterministic.
        """
        target = [_frac(t) for t in target]
        if len(target) != self.nrows:
            raise ValueError("target length mismatch")
        aug = self.hstack(from_columns([target], nrows=self.nrows))
        red, pivots = aug.rref()
        if self.ncols in pivots:
            return None
        x = [Q(0)] * self.ncols
        for r, p in enumerate(pivots):
            x[p] = red.rows[r][self.ncols]
        return tuple(x)

    def solve_matrix(self, target: "Matrix") -> "Matrix | None":
        """X with self*X = target, or None.  Columns solved independently."""
        cols = []
        for j in range(target.ncols):
            x = self.solve(target.column(j))
            if x is None:
                return None
            cols.append(x)
        return from_columns(cols, nrows=self.ncols)

    def inverse(self) -> "Matrix | None":
        if self.nrows != self.ncols:
            return None
        aug = self.hstack(identity(self.nrows))
        red, pivots = aug.rref()
        if pivots != list(range(self.nrows)):
            return None
        return red.submatrix(range(self.nrows), range(self.nrows, 2 * self.nrows))


def zeros(nrows: int, ncols: int) -> Matrix:
    return Matrix(((Q(0) for _ in range(ncols)) for _ in range(nrows)), ncols=ncols)


def identity(n: int) -> Matrix:
    return Matrix(((Q(1) if i == j else Q(0) for j in range(n)) for i in range(n)), ncols=n)


def from_rows(rows: Sequence[Sequence[Fraction]], ncols: int | None = None) -> Matrix:
    return Matrix(rows, ncols=ncols)


def from_columns(cols: Sequence[Sequence[Fraction]], nrows: int | None = None) -> Matrix:
    if not cols:
        if nrows is None:
            raise ValueError("need nrows for an empty column list")
        return zeros(nrows, 0)
    n = len(cols[0])
    if nrows is not None and nrows != n:
        raise ValueError("nrows does not match column length")
    return Matrix(zip(*cols), ncols=len(cols)) if n else Matrix([], ncols=len(cols))
