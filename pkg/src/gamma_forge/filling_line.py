"""The canonical contracting homotopy of the Bar complex of the half-line.

Chains here have nonnegative integer vertices. ``sigma`` uses the closed
form; ``sigma_recursive`` builds the same operator from cones so the two
can be checked against each other.
"""

from functools import lru_cache

from gamma_forge.chain_complex import Chain, ChainBuilder, boundary, cone


def _sigma_simplex(s):
    n = len(s) - 1
    if n == -1:
        return {(0,): 1}
    if n == 0:
        m = s[0]
        return {(k - 1, k): 1 for k in range(1, m + 1)}
    head, a, b = s[:-1], s[-2], s[-1]
    if b > a:
        sign, lo, hi = (-1) ** n, a + 1, b
    elif b < a:
        sign, lo, hi = (-1) ** (n - 1), b + 1, a
    else:
        return {}
    return {head + (k - 1, k): sign for k in range(lo, hi + 1)}


def sigma(c):
    """Closed-form filler; sigma d + d sigma = id on the augmented complex."""
    acc = ChainBuilder(c.degree + 1)
    for s, k in c.terms.items():
        for t, sign in _sigma_simplex(s).items():
            acc.add(t, k * sign)
    return acc.build()


@lru_cache(maxsize=None)
def _sigma_rec_simplex(s):
    n = len(s) - 1
    if n <= 0:
        return Chain(_sigma_simplex(s), n + 1)
    alpha = Chain.simplex(s)
    rest = alpha - sigma_recursive(boundary(alpha))
    return cone(s[0], rest)


def sigma_recursive(c):
    """sigma_n = s_{x0} (id - sigma_{n-1} d), seeded by the degree -1 and 0 cases."""
    acc = ChainBuilder(c.degree + 1)
    for s, k in c.terms.items():
        acc.add_chain(_sigma_rec_simplex(s), k)
    return acc.build()


def line_diameter(vertices):
    vs = list(vertices)
    return max(vs) - min(vs) if vs else 0
