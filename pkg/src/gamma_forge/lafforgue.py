"""Continuous-metric models, the conjugated operators Phi^{x,t} and the operator F_{x,t}.

Alternating Rips chains are handled in two coordinate systems. The exact
one uses u_a = sum over permutations of sign * [permuted a] for each
sorted clique a, so every operator has rational entries. The orthonormal
wedge basis is e_a = u_a / sqrt((n+1)!); floating matrices are produced
from the exact ones by this diagonal change of basis followed by the
diagonal weight exp(t * w(a)), where w(a) is the smallest metric distance
from the base point to a vertex of a.
"""

import csv
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from gamma_forge import _kernels
from gamma_forge.chain_complex import Chain, ChainBuilder, _signed_perms
from gamma_forge.group_model import GroupError, distinguished_geodesic, parse_word
from gamma_forge.homotopy import homotopy_defect
from gamma_forge.spectral import WindowedOperator, singular_values, schatten_from_values

ZERO = Fraction(0)
ONE = Fraction(1)
EXPONENT_CAP = 600.0


class LafforgueError(GroupError):
    pass


def generator_count(ball):
    """Size of the symmetric generating set (valence of the Cayley graph)."""
    return int(np.sum(np.asarray(ball.nbr[0]) >= 0))


# ---------------------------------------------------------------- metrics


class MetricModel:
    """A metric on ball indices given by a callable with optional dense cache."""

    def __init__(self, name, ball, func, exact=True):
        self.name = name
        self.ball = ball
        self._func = func
        self.exact = exact
        self._rows = {}

    def __call__(self, i, j):
        return self._func(i, j)

    def row(self, i):
        r = self._rows.get(i)
        if r is None:
            r = np.array([float(self._func(i, j)) for j in range(self.ball.size)])
            self._rows[i] = r
        return r

    def matrix(self, idx=None):
        idx = range(self.ball.size) if idx is None else idx
        return np.array([[float(self._func(i, j)) for j in idx] for i in idx])

    @classmethod
    def word(cls, ball):
        m = cls("word", ball, lambda i, j: ball.dist(i, j))
        m.row = lambda i: ball.dist_row(i).astype(float)
        return m

    @classmethod
    def scaled(cls, ball, k):
        k = Fraction(k)
        m = cls(f"scale:{k}", ball, lambda i, j: k * ball.dist(i, j))
        m.row = lambda i: float(k) * ball.dist_row(i).astype(float)
        return m

    @classmethod
    def from_table(cls, ball, table, name="table"):
        """``table`` maps (i, j) with i <= j to nonnegative rationals."""

        def f(i, j):
            if i == j:
                return ZERO
            key = (i, j) if i <= j else (j, i)
            if key not in table:
                raise LafforgueError(f"metric table has no entry for ({ball.name(i)}, {ball.name(j)})")
            return table[key]

        return cls(name, ball, f)

    @classmethod
    def from_csv(cls, ball, path):
        """Rows ``x_word,y_word,value`` with values written as p/q."""
        table = {}
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#") or row[0] == "x_word":
                    continue
                x, y = ball.element(parse_word(row[0])), ball.element(parse_word(row[1]))
                key = (x, y) if x <= y else (y, x)
                table[key] = Fraction(row[2].strip())
        return cls.from_table(ball, table, name=f"file:{path}")

    @classmethod
    def combine(cls, m0, m1, s):
        s = Fraction(s)
        m = cls(f"({1 - s})*{m0.name}+({s})*{m1.name}", m0.ball, lambda i, j: (1 - s) * m0(i, j) + s * m1(i, j))
        m.row = lambda i: float(1 - s) * m0.row(i) + float(s) * m1.row(i)
        return m


def parse_metric(spec, ball):
    """``word``, ``scale:k`` or ``file:path``."""
    if spec == "word":
        return MetricModel.word(ball)
    if spec.startswith("scale:"):
        return MetricModel.scaled(ball, Fraction(spec[6:]))
    if spec.startswith("file:"):
        return MetricModel.from_csv(ball, spec[5:])
    raise LafforgueError(f"unknown metric {spec!r}; use word, scale:k or file:path")


def quasi_isometry(metric, ball, samples=2000, seed=0):
    """Measured (lambda3_hat, additive) with metric <= lambda3 * d + additive on safe pairs.

    lambda3_hat is the largest ratio metric/d over sampled pairs; the
    additive constant is then the smallest one covering every sample.
    """
    core = [int(v) for v in ball.core(ball.radius // 2)]
    rng = random.Random(seed)
    pairs = [(rng.choice(core), rng.choice(core)) for _ in range(samples)]
    pairs = [(a, b) for a, b in pairs if a != b]
    if not pairs:
        return 1.0, 0.0
    lam = max(float(metric(a, b)) / ball.dist(a, b) for a, b in pairs)
    add = max(float(metric(a, b)) - lam * ball.dist(a, b) for a, b in pairs)
    return lam, max(0.0, add)


def additivity_defect(metric, ball, samples=500, seed=0):
    """Largest metric(x,z) + metric(z,y) - metric(x,y) with z on the distinguished geodesic."""
    core = [int(v) for v in ball.core(ball.radius // 2)]
    rng = random.Random(seed)
    worst = 0.0
    for _ in range(samples):
        x, y = rng.choice(core), rng.choice(core)
        for z in distinguished_geodesic(x, y, ball):
            worst = max(worst, float(metric(x, z) + metric(z, y) - metric(x, y)))
    return worst


@dataclass
class RhoProfile:
    values: dict
    decay: str
    quadruples: int = 0

    def at(self, r):
        keys = [k for k in self.values if k >= r]
        return self.values[min(keys)] if keys else 0.0


def rho_profile(metric, ball, core_radius=None, max_sep=None):
    """Sup of the four-point continuity defect over safe edge pairs, per separation."""
    if ball.radius < 3:
        raise LafforgueError("rho_profile needs a ball of radius >= 3")
    core_radius = ball.radius // 2 if core_radius is None else core_radius
    idx = [int(v) for v in ball.core(core_radius)]
    pos = {v: i for i, v in enumerate(idx)}
    dword = ball.dense()[np.ix_(idx, idx)] if ball.size <= 4500 else np.stack([ball.dist_row(v)[idx] for v in idx])
    dhat = np.stack([metric.row(v)[idx] for v in idx])
    edges = np.array([(pos[a], pos[b]) for a, b in ball.edges if a in pos and b in pos], dtype=np.int32)
    # both orientations of each edge are needed for the y-pair
    edges = np.concatenate([edges, edges[:, ::-1]])
    safe = np.ones((len(idx), len(idx)), dtype=bool)
    max_sep = int(dword.max()) if max_sep is None else max_sep
    best = _kernels.rho_scan(dhat, dword, edges, safe, max_sep)
    # sup over separation >= r is the suffix maximum
    suffix = np.maximum.accumulate(best[::-1])[::-1]
    values = {r: float(v) for r, v in enumerate(suffix)}
    return RhoProfile(values, classify_decay(values), int(len(edges)) ** 2)


def classify_decay(values):
    pts = [(r, v) for r, v in sorted(values.items()) if r >= 1]
    if not pts:
        return "flat"
    if pts[-1][1] == 0:
        first = min(r for r, v in pts if v == 0)
        return f"vanishes from r={first}"
    pos = [(r, v) for r, v in pts if v > 0]
    if len(pos) < 3 or pos[0][1] <= pos[-1][1] * (1 + 1e-9):
        return "flat"
    r = np.array([p[0] for p in pos], dtype=float)
    lv = np.log([p[1] for p in pos])
    exp_res = np.polyfit(r, lv, 1, full=True)[1]
    pol_res = np.polyfit(np.log1p(r), lv, 1, full=True)[1]
    e = float(exp_res[0]) if len(exp_res) else 0.0
    p = float(pol_res[0]) if len(pol_res) else 0.0
    return "exponential" if e <= p else "polynomial"


# ---------------------------------------------------------------- wedges


def rips_cliques(vertices, R, dist, max_size=None):
    """Sorted tuples of distinct vertices with pairwise distance <= R."""
    vs = sorted(int(v) for v in vertices)
    near = {v: {w for w in vs if w > v and dist(v, w) <= R} for v in vs}
    out = []

    def grow(prefix, cand):
        out.append(tuple(prefix))
        if max_size is not None and len(prefix) >= max_size:
            return
        for w in sorted(cand):
            prefix.append(w)
            grow(prefix, cand & near[w])
            prefix.pop()

    for v in vs:
        grow([v], near[v])
    out.sort(key=lambda k: (len(k), k))
    return out


def max_clique_size(ball, R):
    """Largest Rips clique through the identity (the same everywhere by transitivity)."""
    hood = [int(v) for v in ball.ball_around(0, R)]
    return max(len(k) for k in rips_cliques(hood, R, ball.dist) if 0 in k)


def lift(key):
    """u_key as a Bar chain."""
    n = len(key)
    return Chain._raw({tuple(key[i] for i in p): Fraction(sign) for p, sign in _signed_perms(n)}, n - 1)


def alternate(c):
    """u-coordinates of pi_alt(c): coefficient of u_b is the signed average over orderings of b."""
    out = {}
    n = c.degree + 1
    w = Fraction(1, math.factorial(n)) if n > 0 else ONE
    for s, k in c.terms.items():
        if len(set(s)) < n:
            continue
        order = sorted(range(n), key=lambda i: s[i])
        key = tuple(s[i] for i in order)
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if order[i] > order[j])
        v = out.get(key, ZERO) + (k * w if inv % 2 == 0 else -k * w)
        if v:
            out[key] = v
        else:
            out.pop(key, None)
    return out


def wedge_boundary(key):
    """u-coordinates of the boundary of u_key (a factor n+1 appears)."""
    n = len(key) - 1
    if n == 0:
        return {}
    f = Fraction(n + 1)
    return {key[:i] + key[i + 1:]: (f if i % 2 == 0 else -f) for i in range(n + 1)}


def _add(acc, col, k):
    for key, v in col.items():
        nv = acc.get(key, ZERO) + v * k
        if nv:
            acc[key] = nv
        else:
            acc.pop(key, None)


class AltContraction:
    """pi_alt o h^x in u-coordinates, memoized per (x, clique)."""

    def __init__(self, contraction, top_size):
        self.contraction = contraction
        self.ball = contraction.ball
        self.R = contraction.R
        self.top_size = top_size
        self._memo = {}

    def column(self, x, key):
        if len(key) >= self.top_size:
            return {}
        mk = (x, key)
        col = self._memo.get(mk)
        if col is None:
            col = alternate(self.contraction.apply(x, lift(key)))
            self._memo[mk] = col
        return col


class MixedAltContraction:
    """(1-s) K0 + s K1 for two alternating contractions."""

    def __init__(self, k0, k1, s):
        self.k0, self.k1, self.s = k0, k1, Fraction(s)
        self.ball, self.R = k0.ball, k0.R
        self.top_size = min(k0.top_size, k1.top_size)

    def column(self, x, key):
        out = {}
        _add(out, self.k0.column(x, key), 1 - self.s)
        _add(out, self.k1.column(x, key), self.s)
        return out


def _apply(col_fn, vec):
    out = {}
    for key, v in vec.items():
        _add(out, col_fn(key), v)
    return out


def exact_columns(alt, x, window):
    """Exact u-coordinate columns of d + K d K on ``window`` (K = alt at x)."""
    K = lambda k: alt.column(x, k)
    cols = {}
    for key in window:
        out = dict(wedge_boundary(key))
        _add(out, _apply(K, _apply(wedge_boundary, K(key))), ONE)
        cols[key] = out
    return cols


def exact_H_columns(alt, x, window):
    K = lambda k: alt.column(x, k)
    return {key: _apply(K, _apply(wedge_boundary, K(key))) for key in window}


def square_on_interior(cols):
    """Columns of A^2 for keys whose image stays inside the window; also returns the interior list."""
    interior = [k for k, col in cols.items() if all(b in cols for b in col)]
    return {k: _apply(lambda b: cols[b], cols[k]) for k in interior}, interior


def wedge_weight(metric_row, key):
    return min(metric_row[v] for v in key)


def conjugate(columns, weights, t, scale=None):
    """Diagonal conjugation of sparse columns: entry (b, a) times exp(t (w(b) - w(a))).

    ``weights`` maps keys to w; ``scale`` optionally maps keys to basis
    normalizations (entries also get scale(b)/scale(a)).
    """
    out = {}
    for a, col in columns.items():
        wa = weights(a)
        sa = scale(a) if scale else 1.0
        new = {}
        for b, v in col.items():
            ex = t * (weights(b) - wa)
            if abs(ex) > EXPONENT_CAP:
                raise LafforgueError(f"exponent {ex:.1f} exceeds the cap; use a smaller t or window")
            new[b] = float(v) * math.exp(ex) * ((scale(b) / sa) if scale else 1.0)
        out[a] = new
    return out


def orthonormal_scale(key):
    return math.sqrt(math.factorial(len(key)))


# ---------------------------------------------------------------- module


@dataclass
class LaffModule:
    R: int
    x: int
    t: float
    metric_name: str
    window: list
    exact_cols: dict
    F: WindowedOperator
    weights: dict
    interior: list
    checks: dict = field(default_factory=dict)

    def defect_vector(self):
        """Expected Id - F^2 on degree-0 interior columns: e^{-t w(x0)} at e_x."""
        return {k: math.exp(-self.t * self.weights[k]) for k in self.interior if len(k) == 1}


def default_t(ball, metric, margin=0.5, lam3=None):
    if lam3 is None:
        lam3, _ = quasi_isometry(metric, ball)
    return math.log(generator_count(ball)) / lam3 + margin


def window_wedges(ball, center, radius, R):
    verts = ball.ball_around(center, radius)
    return rips_cliques(verts, R, ball.dist)


def lafforgue_F(contraction, metric, x, t, window, alt=None, toy=False, delta_config=1, check=True):
    """Assemble F_{x,t} on ``window`` (a list of sorted cliques).

    ``contraction`` is a RipsContraction (or anything with apply(x, chain)
    and attributes ball, R); pass ``alt`` to reuse an AltContraction.
    """
    if alt is None:
        alt = AltContraction(contraction, max_clique_size(contraction.ball, contraction.R))
    ball, R = alt.ball, alt.R
    if R < 12 * delta_config and not toy:
        raise LafforgueError(f"R={R} is below 12*delta={12 * delta_config}; pass toy=True to override")
    window = list(window)
    cols = exact_columns(alt, x, window)
    row = metric.row(x)
    weights = {}

    def w(k):
        v = weights.get(k)
        if v is None:
            v = float(wedge_weight(row, k))
            weights[k] = v
        return v

    fl = conjugate(cols, w, t, scale=orthonormal_scale)
    F = _to_operator(fl, window, ball)
    sq, interior = square_on_interior(cols)
    mod = LaffModule(R, x, t, metric.name, window, cols, F, weights, interior)
    if check:
        mod.checks = check_module(mod, alt, x, sq)
    return mod


def _to_operator(fl_cols, window, ball):
    in_w = set(window)
    extra = sorted({b for col in fl_cols.values() for b in col if b not in in_w}, key=lambda k: (len(k), k))
    rows = list(window) + extra
    index = {k: i for i, k in enumerate(rows)}
    data = np.zeros((len(rows), len(window)))
    safe = np.ones(len(window), dtype=bool)
    for j, a in enumerate(window):
        for b, v in fl_cols[a].items():
            data[index[b], j] = v
            if b not in in_w:
                safe[j] = False
    return WindowedOperator(rows, window, data, safe, ball.dist)


def check_module(mod, alt, x, sq=None):
    """Exact and floating checks of Id - F^2 = p_x and H^2 = 0 on the interior."""
    cols = mod.exact_cols
    if sq is None:
        sq, _ = square_on_interior(cols)
    exact_fail = 0
    for k in mod.interior:
        want = {(x,): ONE} if len(k) == 1 else {}
        got = {k: ONE}
        _add(got, sq[k], -ONE)
        if got != want:
            exact_fail += 1
    H = exact_H_columns(alt, x, mod.window)
    h_interior = [k for k, col in H.items() if all(b in H for b in col)]
    h2_fail = sum(1 for k in h_interior if _apply(lambda b: H[b], H[k]))
    # floating defect on the interior
    F = mod.F
    n = len(F.cols)
    pos = {k: i for i, k in enumerate(F.cols)}
    ii = np.array([pos[k] for k in mod.interior], dtype=np.int64)
    M = F.data
    defect = -(M @ M[:n][:, ii])
    defect[ii, np.arange(len(ii))] += 1.0
    expected = np.zeros_like(defect)
    xi = F.row_index().get((x,))
    for c, k in enumerate(mod.interior):
        if len(k) == 1 and xi is not None:
            expected[xi, c] = math.exp(-mod.t * mod.weights[k])
    resid = float(np.abs(defect - expected).max()) if defect.size else 0.0
    clean = np.where(np.abs(defect) > 1e-9, defect, 0.0)
    rank = singular_values(clean).rank(rel_tol=1e-9) if clean.size else 0
    Fw = M[:n][np.ix_(ii, ii)]
    return {
        "interior": len(mod.interior),
        "window": n,
        "exact_defect_failures": exact_fail,
        "H_squared_failures": h2_fail,
        "H_interior": len(h_interior),
        "defect_rank": rank,
        "defect_residual": resid,
        "selfadjoint_error": float(np.abs(Fw - Fw.T).max()) if Fw.size else 0.0,
        "odd": bool(all((len(a) - len(b)) % 2 for b, col in mod.exact_cols.items() for a in col)),
    }


def commutator(mod_x, mod_gx):
    """F_x - F_{gx} on the common window; unitarily equivalent to [pi(g), F_x] up to the shift."""
    rows = list(dict.fromkeys(mod_x.F.rows + mod_gx.F.rows))
    index = {k: i for i, k in enumerate(rows)}
    data = np.zeros((len(rows), len(mod_x.F.cols)))
    for op, sign in ((mod_x.F, 1.0), (mod_gx.F, -1.0)):
        if op.cols != mod_x.F.cols:
            raise LafforgueError("commutator needs both modules on the same window")
        for i, k in enumerate(op.rows):
            data[index[k]] += sign * op.data[i]
    return WindowedOperator(rows, mod_x.F.cols, data, mod_x.F.safe & mod_gx.F.safe, mod_x.F.dist)


def commutator_table(mod_x, mod_gx, p_grid):
    op = commutator(mod_x, mod_gx)
    spec = singular_values(np.where(np.abs(op.data) > 1e-14, op.data, 0.0))
    return op, spec, {p: schatten_from_values(spec.values, p) for p in p_grid}


def phi_matrix(contraction, metric, x, t, simplices):
    """Phi^{x,t} on Bar simplices with first-vertex weights: {alpha: {beta: coeff}}."""
    row = metric.row(x)
    out = {}
    for s in simplices:
        img = contraction.apply(x, Chain.simplex(s))
        out[s] = {b: float(v) * math.exp(t * (row[b[0]] - row[s[0]])) for b, v in img.terms.items()}
    return out


# ---------------------------------------------------------------- paths


class MixedContraction:
    """(1-s) h0 + s h1 as a chain map family."""

    def __init__(self, h0, h1, s):
        self.h0, self.h1, self.s = h0, h1, Fraction(s)
        self.ball = h0.ball
        self.R = h0.R

    def apply(self, x, c):
        return self.h0.apply(x, c) * (1 - self.s) + self.h1.apply(x, c) * self.s


def homotopy_path(h0, h1, m0, m1, x, t, window, steps=4, test_chains=(), toy=True, delta_config=1):
    """Sample the metric path and the homotopy path, reassembling F at each sample."""
    ball = h0.ball
    top = max_clique_size(ball, h0.R)
    a0, a1 = AltContraction(h0, top), AltContraction(h1, top)
    samples = []
    prev = None
    for i in range(steps + 1):
        s = Fraction(i, steps)
        metric = MetricModel.combine(m0, m1, s)
        alt = MixedAltContraction(a0, a1, s)
        mixed = MixedContraction(h0, h1, s)
        identity_fail = 0
        for c in test_chains:
            if homotopy_defect(lambda ch: mixed.apply(x, ch), c):
                identity_fail += 1
        mod = lafforgue_F(None, metric, x, t, window, alt=alt, toy=toy, delta_config=delta_config)
        step = None
        if prev is not None:
            step = float(np.linalg.norm(_aligned_difference(prev.F, mod.F), 2))
        samples.append({"s": str(s), "defect_rank": mod.checks["defect_rank"],
                        "exact_defect_failures": mod.checks["exact_defect_failures"],
                        "identity_failures": identity_fail, "step_norm": step})
        prev = mod
    return samples


def _aligned_difference(A, B):
    rows = list(dict.fromkeys(A.rows + B.rows))
    index = {k: i for i, k in enumerate(rows)}
    out = np.zeros((len(rows), len(A.cols)))
    for op, sign in ((A, 1.0), (B, -1.0)):
        for i, k in enumerate(op.rows):
            out[index[k]] += sign * op.data[i]
    return out


def random_rips_chains(ball, R, degree, count, seed=0, core_radius=3, terms=2):
    """Random R-admissible chains with small integer coefficients."""
    rng = random.Random(seed)
    core = [int(v) for v in ball.core(core_radius)]
    out = []
    while len(out) < count:
        acc = ChainBuilder(degree)
        for _ in range(terms):
            s = [rng.choice(core)]
            while len(s) < degree + 1:
                cand = [int(w) for w in ball.ball_around(s[0], R) if all(ball.dist(int(w), v) <= R for v in s)]
                s.append(rng.choice(cand))
            acc.add(tuple(s), Fraction(rng.randint(-3, 3) or 1))
        c = acc.build()
        if c:
            out.append(c)
    return out
