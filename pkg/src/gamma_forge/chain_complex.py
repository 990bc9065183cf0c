"""Normalized Bar and Rips chains with exact rational coefficients.

A simplex is a tuple of hashable, orderable vertices (ball indices for
group chains, nonnegative ints on the line). Tuples with two equal
consecutive vertices are degenerate and are identified with zero. The
empty tuple spans degree -1, so the boundary of a 0-chain is its
augmentation.
"""

import itertools
import json
import math
from fractions import Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


class ChainError(ValueError):
    pass


class FillError(ChainError):
    pass


def is_degenerate(simplex):
    return any(a == b for a, b in zip(simplex, simplex[1:]))


class Chain:
    """Sparse map from non-degenerate simplices to nonzero rationals."""

    __slots__ = ("terms", "degree")

    def __init__(self, terms=None, degree=None):
        clean = {}
        if terms:
            for s, c in terms.items():
                s = tuple(s)
                if c and not is_degenerate(s):
                    clean[s] = Fraction(c)
        if degree is None:
            if not clean:
                raise ChainError("an empty chain needs an explicit degree")
            degree = len(next(iter(clean))) - 1
        for s in clean:
            if len(s) != degree + 1:
                raise ChainError(f"simplex {s} does not have degree {degree}")
        self.terms = clean
        self.degree = degree

    @classmethod
    def _raw(cls, terms, degree):
        # trusted constructor: terms already normalized
        out = cls.__new__(cls)
        out.terms = terms
        out.degree = degree
        return out

    @classmethod
    def simplex(cls, vertices, coeff=1):
        vertices = tuple(vertices)
        return cls({vertices: coeff}, len(vertices) - 1)

    @classmethod
    def zero(cls, degree):
        return cls._raw({}, degree)

    @classmethod
    def unit(cls, coeff=1):
        """The degree -1 generator times ``coeff``."""
        return cls({(): coeff}, -1)

    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(sorted(self.terms.items()))

    def items(self):
        return self.terms.items()

    def coeff(self, simplex):
        return self.terms.get(tuple(simplex), ZERO)

    def __eq__(self, other):
        if not isinstance(other, Chain):
            return NotImplemented
        if not self.terms and not other.terms:
            return True
        return self.degree == other.degree and self.terms == other.terms

    def __hash__(self):
        return hash((self.degree, frozenset(self.terms.items())))

    def _check(self, other):
        if self.terms and other.terms and self.degree != other.degree:
            raise ChainError(f"degree mismatch {self.degree} vs {other.degree}")

    def __add__(self, other):
        self._check(other)
        out = dict(self.terms)
        for s, c in other.terms.items():
            v = out.get(s, ZERO) + c
            if v:
                out[s] = v
            else:
                out.pop(s, None)
        deg = self.degree if self.terms or not other.terms else other.degree
        return Chain._raw(out, deg)

    def __neg__(self):
        return Chain._raw({s: -c for s, c in self.terms.items()}, self.degree)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, k):
        k = Fraction(k)
        if not k:
            return Chain.zero(self.degree)
        return Chain._raw({s: c * k for s, c in self.terms.items()}, self.degree)

    def __mul__(self, k):
        return self.scale(k)

    __rmul__ = __mul__

    def l1(self):
        return sum((abs(c) for c in self.terms.values()), ZERO)

    def support(self):
        return frozenset(v for s in self.terms for v in s)

    def max_abs(self):
        return max((abs(c) for c in self.terms.values()), default=ZERO)

    def __repr__(self):
        if not self.terms:
            return f"Chain(0, degree={self.degree})"
        body = " + ".join(f"{c}*{list(s)}" for s, c in sorted(self.terms.items()))
        return f"Chain({body})"


class ChainBuilder:
    """Mutable accumulator used in hot loops."""

    __slots__ = ("acc", "degree")

    def __init__(self, degree):
        self.acc = {}
        self.degree = degree

    def add(self, simplex, coeff):
        if not coeff or is_degenerate(simplex):
            return
        v = self.acc.get(simplex, ZERO) + coeff
        if v:
            self.acc[simplex] = v
        else:
            del self.acc[simplex]

    def add_chain(self, chain, k=ONE):
        if k:
            for s, c in chain.terms.items():
                self.add(s, c * k)

    def build(self):
        return Chain._raw(self.acc, self.degree)


def combine(pairs, degree):
    """Linear combination sum(k * chain)."""
    acc = ChainBuilder(degree)
    for k, ch in pairs:
        acc.add_chain(ch, Fraction(k))
    return acc.build()


def boundary(c):
    if c.degree < 0:
        raise ChainError("degree -1 chains have no boundary")
    acc = ChainBuilder(c.degree - 1)
    for s, k in c.terms.items():
        for i in range(len(s)):
            acc.add(s[:i] + s[i + 1:], k if i % 2 == 0 else -k)
    return acc.build()


def augmentation(c):
    if c.degree != 0:
        raise ChainError("augmentation is defined on 0-chains")
    return sum(c.terms.values(), ZERO)


def cone(x, c):
    """Prepend ``x`` to every simplex."""
    acc = ChainBuilder(c.degree + 1)
    for s, k in c.terms.items():
        acc.add((x,) + s, k)
    return acc.build()


_PERM_CACHE = {}


def _signed_perms(n):
    if n not in _PERM_CACHE:
        out = []
        for p in itertools.permutations(range(n)):
            inv = sum(1 for i in range(n) for j in range(i + 1, n) if p[i] > p[j])
            out.append((p, -1 if inv % 2 else 1))
        _PERM_CACHE[n] = out
    return _PERM_CACHE[n]


def antisymmetrize(c):
    """Signed average over vertex permutations, weight 1/(n+1)!."""
    if c.degree <= 0:
        return c
    n = c.degree + 1
    w = Fraction(1, math.factorial(n))
    perms = _signed_perms(n)
    acc = ChainBuilder(c.degree)
    for s, k in c.terms.items():
        if len(set(s)) < n:
            continue
        for p, sign in perms:
            acc.add(tuple(s[i] for i in p), k * w * sign)
    return acc.build()


def map_vertices(f, c):
    """Push a chain forward along a vertex map."""
    acc = ChainBuilder(c.degree)
    for s, k in c.terms.items():
        acc.add(tuple(f(v) for v in s), k)
    return acc.build()


def prism(phi, psi, c):
    """h(phi, psi)[x0..xn] = sum_i (-1)^i [phi(x0..xi), psi(xi..xn)]."""
    if c.degree < 0:
        return Chain.zero(0)
    acc = ChainBuilder(c.degree + 1)
    for s, k in c.terms.items():
        a = tuple(phi(v) for v in s)
        b = tuple(psi(v) for v in s)
        for i in range(len(s)):
            acc.add(a[: i + 1] + b[i:], k if i % 2 == 0 else -k)
    return acc.build()


def diameter(vertices, dist):
    vs = list(vertices)
    return max((dist(a, b) for a, b in itertools.combinations(vs, 2)), default=0)


def is_admissible(simplex, R, dist):
    return all(dist(a, b) <= R for a, b in itertools.combinations(set(simplex), 2))


def chain_admissible(c, R, dist):
    return all(is_admissible(s, R, dist) for s in c.terms)


def is_cycle(c):
    if c.degree < 0:
        return True
    return not boundary(c)


# ---------------------------------------------------------------- filling


def _rips_tuples(vertices, length, R, dist, cap):
    vs = sorted(vertices)
    near = {v: [w for w in vs if w != v and dist(v, w) <= R] for v in vs}
    out = []

    def grow(prefix, allowed):
        if len(out) > cap:
            return
        if len(prefix) == length:
            out.append(tuple(prefix))
            return
        last = prefix[-1]
        for w in vs:
            if w == last or w not in allowed:
                continue
            prefix.append(w)
            grow(prefix, allowed & (set(near[w]) | {w}))
            prefix.pop()

    for v in vs:
        grow([v], set(near[v]) | {v})
    return out


def _eliminate(z, candidates):
    pivots = {}
    for cand in candidates:
        col = {}
        k = ONE
        for i in range(len(cand)):
            face = cand[:i] + cand[i + 1:]
            if is_degenerate(face):
                continue
            v = col.get(face, ZERO) + (k if i % 2 == 0 else -k)
            if v:
                col[face] = v
            else:
                col.pop(face, None)
        combo = {cand: ONE}
        while col:
            r = min(col)
            piv = pivots.get(r)
            if piv is None:
                pivots[r] = (col, combo)
                break
            pcol, pcombo = piv
            f = col[r] / pcol[r]
            for s, v in pcol.items():
                nv = col.get(s, ZERO) - f * v
                if nv:
                    col[s] = nv
                else:
                    col.pop(s, None)
            for s, v in pcombo.items():
                nv = combo.get(s, ZERO) - f * v
                if nv:
                    combo[s] = nv
                else:
                    combo.pop(s, None)
    residual = dict(z.terms)
    sol = {}
    while residual:
        r = min(residual)
        piv = pivots.get(r)
        if piv is None:
            return None
        pcol, pcombo = piv
        f = residual[r] / pcol[r]
        for s, v in pcol.items():
            nv = residual.get(s, ZERO) - f * v
            if nv:
                residual[s] = nv
            else:
                residual.pop(s, None)
        for s, v in pcombo.items():
            nv = sol.get(s, ZERO) + f * v
            if nv:
                sol[s] = nv
            else:
                sol.pop(s, None)
    return sol


def fill_cycle(z, R, support_bound, ball, cap_bound=16, candidate_cap=200_000, method="auto", check=True):
    """An R-admissible chain whose boundary is the cycle ``z``.

    ``method='auto'`` first tries a cone from the smallest vertex within R
    of the whole support, then exact elimination over restricted-support
    candidates; ``'eliminate'`` skips the cone. The support bound doubles
    on failure up to ``cap_bound``.
    """
    dist = ball.dist
    if not z:
        return Chain.zero(z.degree + 1)
    if z.degree == -1:
        raise ChainError("fill a degree -1 class with a vertex, not fill_cycle")
    if not is_cycle(z):
        raise ChainError("fill_cycle received a chain that is not a cycle")
    if not chain_admissible(z, R, dist):
        raise ChainError("fill_cycle received a chain that is not R-admissible")
    supp = sorted(z.support())
    bound = max(0, support_bound)
    while True:
        verts = set()
        for v in supp:
            verts.update(int(w) for w in ball.ball_around(v, bound))
        beta = None
        if method == "auto":
            for c in sorted(verts):
                if all(dist(c, v) <= R for v in supp):
                    beta = cone(c, z)
                    break
        if beta is None:
            cands = _rips_tuples(verts, z.degree + 2, R, dist, candidate_cap)
            if len(cands) <= candidate_cap:
                sol = _eliminate(z, cands)
                if sol is not None:
                    beta = Chain(sol, z.degree + 1)
        if beta is not None:
            if check and boundary(beta) != z:
                raise FillError("internal: filler boundary mismatch")
            return beta
        if bound >= cap_bound:
            raise FillError(
                f"no R-admissible filler within support bound {bound}; "
                "increase the bound or the ball radius"
            )
        bound = max(1, 2 * bound)


# ---------------------------------------------------------------- JSON


def chain_to_json(c, name=str):
    terms = []
    for s, k in sorted(c.terms.items()):
        terms.append({"vertices": [name(v) for v in s], "coeff": f"{k.numerator}/{k.denominator}"})
    return {"degree": c.degree, "terms": terms}


def chain_from_json(obj, lookup=lambda w: w):
    if isinstance(obj, str):
        obj = json.loads(obj)
    terms = {}
    for t in obj["terms"]:
        s = tuple(lookup(w) for w in t["vertices"])
        terms[s] = terms.get(s, ZERO) + Fraction(t["coeff"])
    return Chain(terms, obj["degree"])
