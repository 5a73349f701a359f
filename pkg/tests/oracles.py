"""Independent oracles for freezing expected values.

Exact rational-arithmetic integrals of monomials over polygons and
segments, via the divergence theorem and binomial expansion.  Deliberately
free of the library's quadrature/triangulation code so the two paths can
check each other.
"""

from fractions import Fraction
from math import comb


def polygon_monomial_integral(coords, p: int, q: int) -> Fraction:
    """Exact integral of x^p y^q over a CCW polygon.

    Divergence theorem with F = (x^{p+1} y^q / (p+1), 0): the area integral
    equals the sum over edges of int x^{p+1} y^q n_x ds, and on the edge
    (x0,y0)->(x1,y1) one has n_x ds = dy dt for t in [0,1].
    """
    total = Fraction(0)
    n = len(coords)
    for i in range(n):
        x0, y0 = (Fraction(v) for v in coords[i])
        x1, y1 = (Fraction(v) for v in coords[(i + 1) % n])
        dx, dy = x1 - x0, y1 - y0
        if dy == 0:
            continue
        acc = Fraction(0)
        for a in range(p + 2):
            ca = comb(p + 1, a) * x0 ** (p + 1 - a) * dx ** a
            for b in range(q + 1):
                cb = comb(q, b) * y0 ** (q - b) * dy ** b
                acc += Fraction(ca * cb, a + b + 1)
        total += acc * dy
    return total / (p + 1)


def segment_monomial_integral(a, b, p: int, q: int) -> float:
    """Exact line integral of x^p y^q ds over the segment a-b.

    Rational except for the final length factor.
    """
    x0, y0 = (Fraction(v) for v in a)
    x1, y1 = (Fraction(v) for v in b)
    dx, dy = x1 - x0, y1 - y0
    acc = Fraction(0)
    for i in range(p + 1):
        ci = comb(p, i) * x0 ** (p - i) * dx ** i
        for j in range(q + 1):
            cj = comb(q, j) * y0 ** (q - j) * dy ** j
            acc += Fraction(ci * cj, i + j + 1)
    length = float(dx * dx + dy * dy) ** 0.5
    return float(acc) * length


def polygon_poly2d_integral(coords, coeff_terms) -> float:
    """Exact integral of sum c * x^p y^q given [(c, p, q), ...] terms."""
    total = Fraction(0)
    for c, p, q in coeff_terms:
        total += Fraction(c) * polygon_monomial_integral(coords, p, q)
    return float(total)
