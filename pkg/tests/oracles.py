"""Independent oracles used to freeze expected values.

Each oracle recomputes a quantity by a route different from the package:
sympy for plain linear algebra, brute-force enumeration for structure
constants, and hand-derived closed forms where those exist.  Tests compare
package output against these, then freeze the agreed numbers as literals.
"""

from __future__ import annotations

from fractions import Fraction

import sympy


def sym(m) -> sympy.Matrix:
    return sympy.Matrix(m.nrows, m.ncols, lambda i, j: sympy.Rational(m.entry(i, j)))


def rank(m) -> int:
    return sym(m).rank()


def nullity(m) -> int:
    return m.ncols - sym(m).rank()


def solve_exact(m, target):
    """One solution of m*x = target via sympy, or None."""
    a = sym(m)
    b = sympy.Matrix([sympy.Rational(t) for t in target])
    try:
        sol, params = a.gauss_jordan_solve(b)
    except ValueError:
        return None
    sol = sol.subs({p: 0 for p in params})
    out = []
    for x in sol:
        r = sympy.Rational(x)
        out.append(Fraction(int(r.p), int(r.q)))
    return tuple(out)


def cohomology_dims(complex_) -> dict[int, int]:
    """dim H^n = dim ker d^n - rank d^(n-1), straight from sympy ranks."""
    out = {}
    degs = set(complex_.degrees()) | {n + 1 for n in complex_.degrees()}
    for n in sorted(degs):
        dn = complex_.d.block(n)
        prev = complex_.d.block(n - 1)
        h = (dn.ncols - sym(dn).rank()) - sym(prev).rank()
        if h:
            out[n] = h
    return out


def derivation_solution_dim(degrees, mult, n) -> int:
    """Dimension of degree-n derivations of a finite graded algebra.

    `degrees[b]` is the degree of basis element b, `mult[(a, b)]` the dict
    {c: coeff} describing the product.  Assembles the graded Leibniz
    constraints D(ab) = D(a)b + (-1)^{n|a|} a D(b) directly with sympy
    symbols, bypassing the package's solver entirely.
    """
    m = len(degrees)
    slots = [(a, b) for a in range(m) for b in range(m)
             if degrees[b] == degrees[a] + n]
    if not slots:
        return 0
    u = sympy.symbols(f"u0:{len(slots)}")
    var = {s: u[i] for i, s in enumerate(slots)}

    def d_of(a):
        out = {}
        for b in range(m):
            if (a, b) in var:
                out[b] = out.get(b, 0) + var[(a, b)]
        return out

    eqs = []
    for a in range(m):
        for b in range(m):
            lhs = {}
            for c, coeff in mult.get((a, b), {}).items():
                for e, v in d_of(c).items():
                    lhs[e] = lhs.get(e, 0) + coeff * v
            rhs = {}
            for e, v in d_of(a).items():
                for f, coeff in mult.get((e, b), {}).items():
                    rhs[f] = rhs.get(f, 0) + coeff * v
            sign = -1 if (n * degrees[a]) % 2 else 1
            for e, v in d_of(b).items():
                for f, coeff in mult.get((a, e), {}).items():
                    rhs[f] = rhs.get(f, 0) + sign * coeff * v
            for f in set(lhs) | set(rhs):
                eqs.append(lhs.get(f, 0) - rhs.get(f, 0))
    mat, _ = sympy.linear_eq_to_matrix(eqs, list(u))
    return len(slots) - mat.rank()
