"""A concrete bicombing by uniform geodesic descent with optional flower averaging.

``phi(x, y, k)`` starts from the point mass at x and repeatedly spreads
each atom uniformly over its neighbours one step closer to y. Whenever
the current sphere radius is a multiple of the spacing ``ell`` (and still
above ``k * ell``) the distribution is first averaged over small
"flowers" on that sphere. The snapshot on the sphere of radius
``k * ell`` is phi_k. Weights are exact rationals throughout.

This is a stand-in satisfying the convexity, sphere, equivariance and
sum-to-one axioms exactly; the exponential stability in the base point
is measured by ``decay_profile`` rather than assumed.
"""

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from gamma_forge.group_model import BoundaryError, GroupError, geod_set, gromov_product

ONE = Fraction(1)


class SequenceBudgetError(GroupError):
    def __init__(self, count, budget, support_sizes):
        self.count, self.budget, self.support_sizes = count, budget, support_sizes
        super().__init__(
            f"{count} regular sequences exceed budget {budget} (support sizes per level: {support_sizes})"
        )


@dataclass(frozen=True)
class Distribution:
    weights: dict
    anchor: tuple
    k: int

    def support(self):
        return frozenset(self.weights)

    def total(self):
        return sum(self.weights.values(), Fraction(0))

    def translate(self, g, ball):
        return Distribution({ball.translate(g, z): c for z, c in self.weights.items()},
                            (ball.translate(g, self.anchor[0]), ball.translate(g, self.anchor[1])), self.k)


@dataclass(frozen=True)
class RegularSequence:
    vertices: tuple
    weight: Fraction

    @property
    def length(self):
        return len(self.vertices) - 1


def l1_difference(p, q):
    keys = set(p) | set(q)
    return sum((abs(p.get(z, 0) - q.get(z, 0)) for z in keys), Fraction(0))


class Bicombing:
    """Descent bicombing on a Cayley ball.

    ``ell`` is the sphere spacing, ``delta`` the configured hyperbolicity
    constant, ``flower_tol`` the distance to the geodesic hull allowed for
    flower petals (use the audited thinness; 0 on trees keeps flowers
    trivial) and ``tau_supp`` the tolerance used when reporting geodesic
    proximity.
    """

    name = "descent+flower"

    def __init__(self, ball, ell, delta, flower=True, flower_tol=0, tau_supp=None, sequence_budget=200_000):
        if ell < 1:
            raise GroupError("spacing ell must be at least 1")
        if delta < 1:
            raise GroupError("configured delta must be a positive integer")
        self.ball = ball
        self.ell = int(ell)
        self.delta = int(delta)
        self.flower = bool(flower)
        self.flower_tol = int(flower_tol)
        self.tau_supp = 2 * self.delta if tau_supp is None else int(tau_supp)
        self.sequence_budget = sequence_budget
        self._traj = {}
        self._seqs = {}

    def describe(self):
        return {
            "bicombing": self.name if self.flower else "descent",
            "ell": self.ell,
            "delta_config": self.delta,
            "flower": self.flower,
            "flower_tol": self.flower_tol,
            "tau_supp": self.tau_supp,
        }

    # elementary moves ---------------------------------------------------

    def star_step(self, weights, y):
        """Spread every atom uniformly over neighbours one step closer to y."""
        ball = self.ball
        dy = ball.dist_row(y)
        out = {}
        for z, c in weights.items():
            r = dy[z]
            if r < 1:
                raise GroupError("star_step needs every atom at distance >= 1 from y")
            down = sorted({int(w) for w in ball.nbr[z] if w >= 0 and dy[w] == r - 1})
            if not down:
                raise BoundaryError(f"no descent from {ball.name(z)} toward {ball.name(y)} inside the ball")
            share = c / len(down)
            for w in down:
                out[w] = out.get(w, 0) + share
        return out

    def flower_smooth(self, weights, y):
        """Average each atom over nearby sphere points close to the geodesic hull."""
        if not self.flower or not weights:
            return dict(weights)
        ball = self.ball
        dy = ball.dist_row(y)
        radii = {int(dy[z]) for z in weights}
        if len(radii) != 1:
            raise GroupError("flower_smooth needs support on a single sphere")
        r = radii.pop()
        hull = geod_set(set(weights) | {y}, ball)
        hull_idx = np.fromiter(sorted(hull), dtype=np.int64)
        out = {}
        for z, c in weights.items():
            dz = ball.dist_row(z)
            cand = np.flatnonzero((dz >= 0) & (dz <= 2 * self.delta) & (dy == r))
            petals = []
            for w in cand:
                w = int(w)
                if self.flower_tol == 0:
                    ok = w in hull
                else:
                    ok = int(ball.dist_row(w)[hull_idx].min()) <= self.flower_tol
                if ok:
                    petals.append(w)
            if z not in petals:
                petals.append(z)
            share = c / len(petals)
            for w in petals:
                out[w] = out.get(w, 0) + share
        return out

    # phi ----------------------------------------------------------------

    def _trajectory(self, x, y):
        key = (x, y)
        if key in self._traj:
            return self._traj[key]
        ball = self.ball
        ball.check_safe(x, y)
        d = ball.dist(x, y)
        snaps = {}
        cur = {x: ONE}
        r = d
        while r >= self.ell:
            if r % self.ell == 0:
                if r < d:
                    snaps[r // self.ell] = cur
                if r == self.ell:
                    break
                cur = self.flower_smooth(cur, y)
            cur = self.star_step(cur, y)
            r -= 1
        self._traj[key] = (d, snaps)
        return d, snaps

    def coeffs(self, x, y, k):
        """The weights c_k^{x,y} as a dict vertex -> Fraction."""
        if k < 1:
            raise GroupError("k must be >= 1")
        d, snaps = self._trajectory(x, y)
        if d <= k * self.ell:
            return {x: ONE}
        return snaps[k]

    def phi(self, x, y, k):
        return Distribution(dict(self.coeffs(x, y, k)), (x, y), k)

    def levels(self, x, y):
        """Number m of steps in a regular sequence from x to y."""
        d = self.ball.dist(x, y)
        return 0 if d == 0 else -(-d // self.ell)

    def regular_sequences(self, x, y):
        key = (x, y)
        if key in self._seqs:
            return self._seqs[key]
        m = self.levels(x, y)
        if m == 0:
            out = [RegularSequence((x,), ONE)]
        else:
            # x_{m-k} ranges over Supp phi_k for k = m-1 .. 1
            levels = [sorted(self.coeffs(x, y, k).items()) for k in range(m - 1, 0, -1)]
            count = math.prod(len(l) for l in levels) if levels else 1
            if count > self.sequence_budget:
                raise SequenceBudgetError(count, self.sequence_budget, [len(l) for l in levels])
            out = []
            for combo in itertools.product(*levels):
                w = ONE
                for _, c in combo:
                    w *= c
                out.append(RegularSequence((x,) + tuple(v for v, _ in combo) + (y,), w))
        self._seqs[key] = out
        return out

    # audits ---------------------------------------------------------------

    def check_distribution(self, x, y, k):
        """Exact axioms for one phi_k; returns a dict of verdicts."""
        ball = self.ball
        c = self.coeffs(x, y, k)
        d = ball.dist(x, y)
        total_ok = sum(c.values(), Fraction(0)) == 1 and all(v > 0 for v in c.values())
        if d <= k * self.ell:
            sphere_ok = c == {x: ONE}
            prox = 0
        else:
            dy = ball.dist_row(y)
            sphere_ok = all(dy[z] == k * self.ell for z in c)
            hull = np.fromiter(sorted(geod_set({x, y}, ball)), dtype=np.int64)
            prox = max(int(ball.dist_row(z)[hull].min()) for z in c)
        return {"sum_one": total_ok, "sphere": sphere_ok, "proximity": prox,
                "proximity_ok": prox <= self.tau_supp}

    def check_sequences(self, x, y):
        ball = self.ball
        seqs = self.regular_sequences(x, y)
        total = sum((s.weight for s in seqs), Fraction(0))
        path = ball.dist_row  # alias
        from gamma_forge.group_model import distinguished_geodesic

        geo = np.array(distinguished_geodesic(x, y, ball), dtype=np.int64)
        m = self.levels(x, y)
        d = ball.dist(x, y)
        geometry_ok = True
        prox = 0
        dy = ball.dist_row(y)
        for s in seqs:
            v = s.vertices
            if len(set(v)) != len(v) or s.length != m or m > max(d, 0):
                geometry_ok = False
            for k in range(1, len(v)):
                if dy[v[k]] != (m - k) * self.ell:
                    geometry_ok = False
            if len(v) > 1 and ball.dist(v[0], v[1]) > self.ell:
                geometry_ok = False
            prox = max(prox, max(int(path(z)[geo].min()) for z in v))
        return {"weight_sum_one": total == 1, "geometry": geometry_ok, "count": len(seqs),
                "proximity": prox, "proximity_ok": prox <= self.tau_supp}


# ---------------------------------------------------------------- decay


@dataclass
class DecayProfile:
    buckets: dict = field(default_factory=dict)  # gap -> [max_l1 (Fraction), count]
    lambda1_hat: float = None
    C1_hat: float = None
    covered: bool = True
    note: str = ""

    def rows(self):
        return [(g, float(v), n) for g, (v, n) in sorted(self.buckets.items())]

    def summary(self):
        return {"lambda1_hat": self.lambda1_hat, "C1_hat": self.C1_hat, "covered": self.covered,
                "note": self.note}


def merge_buckets(a, b):
    out = {g: list(v) for g, v in a.items()}
    for g, (v, n) in b.items():
        if g in out:
            out[g] = [max(out[g][0], v), out[g][1] + n]
        else:
            out[g] = [v, n]
    return out


def fit_decay(buckets):
    """Log-linear fit over positive-gap buckets with positive values.

    Returns (lambda_hat, C_hat, covered, note). C_hat is the smallest
    constant covering the positive-gap buckets at the fitted rate; covered
    reports whether that bound also dominates every other bucket.
    """
    pts = [(g, float(v)) for g, (v, _) in buckets.items() if g > 0 and v > 0]
    if not any(g > 0 for g in buckets):
        return None, None, False, "no positive-gap samples"
    if not pts:
        return None, 0.0, True, "all positive-gap buckets vanish"
    if len(pts) == 1:
        lam = 1.0
    else:
        gs = np.array([p[0] for p in pts], dtype=float)
        ls = np.log([p[1] for p in pts])
        slope = np.polyfit(gs, ls, 1)[0]
        lam = float(min(1.0, max(np.exp(slope), 1e-12)))
    C = max(v / lam ** g for g, v in pts)
    covered = all(float(v) <= C * lam ** g * (1 + 1e-12) + 1e-15 for g, (v, _) in buckets.items())
    return lam, C, covered, "fitted"


def decay_profile(bicombing, k_range, samples=2000, seed=0, exhaustive=False, core_radius=None):
    """Bucket ||phi_k(x,y) - phi_k(x',y)||_1 by floor((x|x')_y - k*ell)."""
    ball = bicombing.ball
    if core_radius is None:
        core_radius = ball.radius // 2
    core = [int(v) for v in ball.core(core_radius)]
    if not core:
        raise GroupError("empty ball")
    if exhaustive:
        triples = [(a, b, c) for a in core for b in core for c in core if a <= b]
    else:
        rng = random.Random(seed)
        triples = [(rng.choice(core), rng.choice(core), rng.choice(core)) for _ in range(samples)]
    buckets = {}
    for x, xp, y in triples:
        gp = gromov_product(x, xp, y, ball)
        for k in k_range:
            gap = math.floor(gp - k * bicombing.ell)
            diff = l1_difference(bicombing.coeffs(x, y, k), bicombing.coeffs(xp, y, k))
            cur = buckets.get(gap)
            if cur is None:
                buckets[gap] = [diff, 1]
            else:
                cur[0] = max(cur[0], diff)
                cur[1] += 1
    lam, C, covered, note = fit_decay(buckets)
    return DecayProfile(buckets, lam, C, covered, note)
