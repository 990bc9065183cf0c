"""Contracting homotopies of Bar and Rips complexes built from regular sequences.

``mu_omega`` fills a chain along one regular sequence (projection onto the
sequence, the line filler, and a prism correction); ``mu_xy`` averages it
over all regular sequences from x to y. ``RetractionEta`` pushes Bar
chains into the Rips complex, and ``RipsContraction`` assembles the
base-pointed contraction h^x degree by degree.

Both ``RetractionEta`` and ``RipsContraction`` memoize per simplex after
translating it so that its first vertex is the identity; this makes them
exactly equivariant and lets translates share work.
"""

import math
from fractions import Fraction

import numpy as np

from gamma_forge.bicombing import fit_decay
from gamma_forge.chain_complex import (
    Chain,
    ChainBuilder,
    ChainError,
    boundary,
    diameter,
    fill_cycle,
    is_admissible,
    is_degenerate,
)
from gamma_forge.filling_line import _sigma_simplex
from gamma_forge.group_model import BoundaryError, distinguished_geodesic, gromov_product

ONE = Fraction(1)


class SequenceProjection:
    """Nearest-point projection onto a regular sequence, smallest index on ties."""

    def __init__(self, sequence, ball):
        self.sequence = sequence
        self.vertices = tuple(sequence.vertices)
        self.ball = ball
        self._rows = np.stack([ball.dist_row(v) for v in self.vertices])
        self._p = {}

    def p(self, z):
        k = self._p.get(z)
        if k is None:
            k = int(np.argmin(self._rows[:, z]))  # argmin returns the first minimum
            self._p[z] = k
        return k

    def pi(self, z):
        return self.vertices[self.p(z)]


def project(omega, z, ball):
    proj = SequenceProjection(omega, ball)
    k = proj.p(z)
    return k, proj.vertices[k]


def _mu_simplex(proj, s, acc, k):
    verts = proj.vertices
    if not s:
        acc.add((verts[0],), k)
        return
    ps = tuple(proj.p(z) for z in s)
    if not is_degenerate(ps):
        for t, sign in _sigma_simplex(ps).items():
            acc.add(tuple(verts[i] for i in t), k * sign)
    img = tuple(verts[i] for i in ps)
    for i in range(len(s)):
        acc.add(img[: i + 1] + s[i:], k if i % 2 == 0 else -k)


def mu_omega(omega, c, ball, projection=None):
    """(iota o sigma o p + h(pi, id)) applied to ``c``."""
    proj = projection or SequenceProjection(omega, ball)
    acc = ChainBuilder(c.degree + 1)
    for s, k in c.terms.items():
        _mu_simplex(proj, s, acc, k)
    return acc.build()


class Averager:
    """mu^{x,y} for a fixed bicombing, caching projections per sequence."""

    def __init__(self, bicombing):
        self.bicombing = bicombing
        self.ball = bicombing.ball
        self._proj = {}

    def projections(self, x, y):
        key = (x, y)
        if key not in self._proj:
            seqs = self.bicombing.regular_sequences(x, y)
            self._proj[key] = [(s.weight, SequenceProjection(s, self.ball)) for s in seqs]
        return self._proj[key]

    def mu(self, x, y, c):
        acc = ChainBuilder(c.degree + 1)
        if c.degree == -1:
            acc.add((x,), c.coeff(()))
            return acc.build()
        for w, proj in self.projections(x, y):
            for s, k in c.terms.items():
                _mu_simplex(proj, s, acc, k * w)
        return acc.build()


def mu_xy(bicombing, x, y, c):
    return Averager(bicombing).mu(x, y, c)


def truncate(y, r, c, ball):
    """Keep the simplices supported in B(y, r)."""
    row = ball.dist_row(y)
    acc = {s: k for s, k in c.terms.items() if all(0 <= row[v] <= r for v in s)}
    return Chain._raw(acc, c.degree)


def mu_l1_bounds(averager, x, y, simplex):
    """(measured l1, proof-level bound) for mu_n^{x,y} on one simplex."""
    ball = averager.ball
    c = Chain.simplex(simplex)
    val = averager.mu(x, y, c).l1()
    n = len(simplex) - 1
    if n == 0:
        bound = ball.dist(x, simplex[0]) + 1
    else:
        bound = diameter(simplex, ball.dist) + 24 * averager.bicombing.delta + (n + 1)
    return val, bound


def basepoint_sensitivity(averager, x, xp, y, r, simplex=None):
    """||pi_{y,r}(mu^{x,y} - mu^{x',y}) pi_{y,r}(alpha)||_1 and the gap (x|x')_y - r.

    With ``simplex=None`` alpha is the vertex [y] (degree-zero statement).
    """
    ball = averager.ball
    c = Chain.simplex((y,)) if simplex is None else Chain.simplex(simplex)
    c = truncate(y, r, c, ball)
    diff = averager.mu(x, y, c) - averager.mu(xp, y, c)
    val = truncate(y, r, diff, ball).l1()
    return val, gromov_product(x, xp, y, ball) - r


def sensitivity_profile(averager, triples, r_values, simplex_of=None):
    """Bucket basepoint sensitivity by floor(gap); returns (buckets, fit)."""
    buckets = {}
    for x, xp, y in triples:
        for r in r_values:
            alpha = simplex_of(y) if simplex_of else None
            val, gap = basepoint_sensitivity(averager, x, xp, y, r, alpha)
            g = math.floor(gap)
            cur = buckets.setdefault(g, [Fraction(0), 0])
            cur[0] = max(cur[0], val)
            cur[1] += 1
    return buckets, fit_decay(buckets)


# ---------------------------------------------------------------- eta


class RetractionEta:
    """Equivariant chain map from Bar chains onto the Rips complex at scale R."""

    def __init__(self, ball, R, support_bound=1, cap_bound=16, fill_method="auto"):
        self.ball = ball
        self.R = int(R)
        self.support_bound = support_bound
        self.cap_bound = cap_bound
        self.fill_method = fill_method
        self._memo = {}
        self.propagation = 0
        self.coefficient_bound = Fraction(0)
        self.fills = 0

    def _canonical(self, s):
        ball = self.ball
        g = s[0]
        if g == 0:
            return 0, s
        gi = ball.inverse(g)
        if gi is None:
            raise BoundaryError(f"inverse of {ball.name(g)} leaves the ball")
        return g, tuple(ball.translate(gi, v) for v in s)

    def _compute(self, s):
        ball, R = self.ball, self.R
        n = len(s) - 1
        if n <= 0 or is_admissible(s, R, ball.dist):
            return Chain.simplex(s)
        if n == 1:
            a, b = s
            path = distinguished_geodesic(a, b, ball)
            d = len(path) - 1
            cuts = list(range(0, d, R)) + [d]
            acc = ChainBuilder(1)
            for i, j in zip(cuts, cuts[1:]):
                acc.add((path[i], path[j]), ONE)
            return acc.build()
        z = self.apply(boundary(Chain.simplex(s)))
        self.fills += 1
        return fill_cycle(z, R, self.support_bound, ball, cap_bound=self.cap_bound, method=self.fill_method)

    def simplex_image(self, s):
        g, cs = self._canonical(s)
        img = self._memo.get(cs)
        if img is None:
            img = self._compute(cs)
            self._memo[cs] = img
            self.coefficient_bound = max(self.coefficient_bound, img.max_abs())
            if img:
                supp = img.support()
                rows = [self.ball.dist_row(v) for v in cs]
                prop = max(min(int(r[w]) for r in rows) for w in supp)
                self.propagation = max(self.propagation, prop)
        if g == 0:
            return img
        return _translate_chain(self.ball, g, img)

    def apply(self, c):
        if c.degree <= 0:
            return c
        acc = ChainBuilder(c.degree)
        for s, k in c.terms.items():
            acc.add_chain(self.simplex_image(s), k)
        return acc.build()


def _translate_chain(ball, g, c):
    acc = {}
    for s, k in c.terms.items():
        acc[tuple(ball.translate(g, v) for v in s)] = k
    return Chain._raw(acc, c.degree)


def eta(c, R, ball):
    return RetractionEta(ball, R).apply(c)


# ---------------------------------------------------------------- h^x


class RipsContraction:
    """The family h^x of contracting homotopies of the Rips complex.

    ``apply(x, c)`` evaluates h^x on an R-admissible chain. Results are
    memoized on (first vertex)^-1-translates, so the family is equivariant
    by construction.
    """

    def __init__(self, bicombing, eta_map):
        self.bicombing = bicombing
        self.eta = eta_map
        self.ball = bicombing.ball
        self.R = eta_map.R
        self.averager = Averager(bicombing)
        self._memo = {}
        self.check_admissible = True

    def _simplex(self, x, s):
        ball = self.ball
        g = s[0]
        if g != 0:
            gi = ball.inverse(g)
            if gi is None:
                raise BoundaryError(f"inverse of {ball.name(g)} leaves the ball")
            cx = ball.multiply(gi, x)
            if cx is None:
                raise BoundaryError(
                    f"base point offset {ball.name(g)}^-1*{ball.name(x)} leaves the ball; enlarge the radius"
                )
            cs = tuple(ball.translate(gi, v) for v in s)
        else:
            cx, cs = x, s
        key = (cx, cs)
        img = self._memo.get(key)
        if img is None:
            alpha = Chain.simplex(cs)
            rest = alpha - self.apply(cx, boundary(alpha))
            img = self.eta.apply(self.averager.mu(cx, cs[0], rest))
            self._memo[key] = img
        if g == 0:
            return img
        return _translate_chain(ball, g, img)

    def apply(self, x, c):
        if c.degree == -1:
            return Chain.simplex((x,), c.coeff(()))
        acc = ChainBuilder(c.degree + 1)
        for s, k in c.terms.items():
            if self.check_admissible and not is_admissible(s, self.R, self.ball.dist):
                raise ChainError(f"h^x is defined on R-admissible chains; got {s}")
            acc.add_chain(self._simplex(x, s), k)
        return acc.build()

    def operator(self, x):
        return lambda c: self.apply(x, c)


def h_x(contraction, x, c):
    return contraction.apply(x, c)


def homotopy_defect(h, c):
    """d h + h d - id applied to ``c`` (zero for a contracting homotopy)."""
    lhs = boundary(h(c))
    if c.degree >= 0:
        lhs = lhs + h(boundary(c))
    return lhs - c
