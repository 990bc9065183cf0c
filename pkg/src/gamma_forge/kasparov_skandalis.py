"""Radial vectors, flower loci and the Clifford-multiplication operator F_x.

All set-valued data (U_T, V^x_T) and the radial vector xi^x_T are exact;
xi is built from the bicombing's first-level coefficients c_1^{x,y}.
Wedge vectors are dicts from sorted vertex tuples to coefficients in the
orthonormal wedge basis; the empty tuple stands for the degree -1 vacuum.
"""

import bisect
import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from gamma_forge.bicombing import fit_decay
from gamma_forge.group_model import BoundaryError, GroupError, geod_set, gromov_product
from gamma_forge.lafforgue import generator_count, rips_cliques
from gamma_forge.spectral import WindowedOperator, schatten_from_values, singular_values, stabilized_p

ZERO = Fraction(0)
ONE = Fraction(1)
H0 = "H0"


class KSError(GroupError):
    pass


# ---------------------------------------------------------------- closed-form arithmetic


def summability_exponent(delta, n_gens):
    """20 delta log(1+|S|) (1+|S|)^(2 delta): the p above which the module is p-summable."""
    return 20 * delta * math.log(1 + n_gens) * (1 + n_gens) ** (2 * delta)


def bicombing_rate_bound(delta, n_gens):
    return (1 - (1 + n_gens) ** (-2 * delta)) ** (1 / (10 * delta))


def implication_holds(delta, n_gens, p):
    """lambda_1^p < 1/(1+|S|)."""
    return bicombing_rate_bound(delta, n_gens) ** p < 1 / (1 + n_gens)


# ---------------------------------------------------------------- wedge algebra


def wedge_with(y, key):
    """(sign, key') with e_y ^ e_key = sign * e_key', or None when y is in key."""
    pos = bisect.bisect_left(key, y)
    if pos < len(key) and key[pos] == y:
        return None
    return (-1 if pos % 2 else 1), key[:pos] + (y,) + key[pos:]


def contract_with(y, key):
    """(sign, key') for the interior product of e_y with e_key, or None."""
    pos = bisect.bisect_left(key, y)
    if pos == len(key) or key[pos] != y:
        return None
    return (-1 if pos % 2 else 1), key[:pos] + key[pos + 1:]


def clifford(xi, vec):
    """cl(xi) = mu(xi) + mu(xi)^* applied to a wedge vector."""
    out = {}
    for key, c in vec.items():
        for y, a in xi.items():
            hit = contract_with(y, key) if y in key else wedge_with(y, key)
            if hit is None:
                continue
            sign, k2 = hit
            v = out.get(k2, 0) + sign * a * c
            if v:
                out[k2] = v
            else:
                out.pop(k2, None)
    return out


def norm_squared(xi):
    return sum((v * v for v in xi.values()), ZERO)


# ---------------------------------------------------------------- geometry


@dataclass
class RadialData:
    T: tuple
    x: int
    U: frozenset
    V: frozenset
    xi: dict
    zeta: dict
    xi_over_V: dict = None

    @property
    def in_U(self):
        return self.x in self.U


class KSGeometry:
    """U_T, V^x_T and xi^x_T for one bicombing and scale R."""

    def __init__(self, bicombing, R, delta_config=1, toy=False):
        self.bicombing = bicombing
        self.ball = bicombing.ball
        self.R = int(R)
        self.delta = int(delta_config)
        self.toy = toy
        if self.R < 48 * self.delta and not toy:
            raise KSError(f"R={self.R} is below 48*delta={48 * self.delta}; pass toy=True to override")
        if bicombing.ell > self.R:
            raise KSError("the spacing ell must not exceed R")
        self._U = {}
        self._V = {}
        self._xi = {}

    def margin_ok(self, T, x=0):
        """B(z, R) fits in the ball and pairs (x, y in U_T) stay boundary-safe."""
        extra = int(self.ball.lengths[x])
        return all(int(self.ball.lengths[z]) + self.R + extra <= self.ball.radius for z in T)

    def u_set(self, T):
        T = tuple(sorted(set(T)))
        if not T:
            raise KSError("T must be nonempty")
        got = self._U.get(T)
        if got is None:
            if not self.margin_ok(T):
                raise BoundaryError(f"B(z, {self.R}) leaves the ball for some z in T")
            # {y : diam(T + y) <= R}, which is empty once diam(T) > R
            if any(self.ball.dist(a, b) > self.R for a, b in itertools.combinations(T, 2)):
                got = frozenset()
            else:
                got = None
                for z in T:
                    near = self._near(z)
                    got = near if got is None else got & near
            self._U[T] = got
        return got

    def _near(self, z):
        got = self._U.get((z,))
        if got is None:
            row = self.ball.dist_row(z)
            got = frozenset(int(v) for v in np.flatnonzero((row >= 0) & (row <= self.R)))
            self._U[(z,)] = got
        return got

    def c1(self, x, y):
        return self.bicombing.coeffs(x, y, 1)

    def v_set(self, x, T):
        U = self.u_set(T)
        if x in U:
            raise KSError("V^x_T is only defined when x is outside U_T")
        key = (x, U)
        got = self._V.get(key)
        if got is None:
            got = frozenset(y for y in U if not set(self.c1(x, y)) <= U)
            self._V[key] = got
        return got

    def xi(self, x, T, over=None):
        """sum over y in A of (sum over z outside A of c_1^{x,y}(z)) e_y, with A = over or U_T."""
        A = self.u_set(T) if over is None else frozenset(over)
        key = (x, A)
        got = self._xi.get(key)
        if got is None:
            got = self._xi_over(x, A)
            self._xi[key] = got
        return dict(got)

    def _xi_over(self, x, A):
        out = {}
        for y in sorted(A):
            w = sum((c for z, c in self.c1(x, y).items() if z not in A), ZERO)
            if w:
                out[y] = w
        return out

    def radial_data(self, T, x):
        T = tuple(sorted(set(T)))
        U = self.u_set(T)
        if x in U:
            return RadialData(T, x, U, frozenset(), {}, {x: 1.0})
        V = self.v_set(x, T)
        xi = self.xi(x, T)
        nrm = math.sqrt(norm_squared(xi))
        zeta = {y: float(v) / nrm for y, v in xi.items()} if xi else {}
        return RadialData(T, x, U, V, xi, zeta, self.xi(x, T, over=V))

    def block_of(self, x, T):
        U = self.u_set(T)
        return H0 if x in U else self.v_set(x, T)

    def check_radial(self, T, x):
        """Exact verdicts for one T: diameter of V, support, norm and the V-sum identity."""
        d = self.radial_data(T, x)
        if d.in_U:
            return {"in_U": True}
        diam = max((self.ball.dist(a, b) for a in d.V for b in d.V), default=0)
        return {
            "in_U": False,
            "V_diam": diam,
            "V_diam_ok": diam <= 22 * self.delta,
            "support_in_V": set(d.xi) <= d.V,
            "norm_ge_one": (not d.xi) or norm_squared(d.xi) >= 1,
            "xi_equals_V_sum": d.xi == d.xi_over_V,
        }

    def flower_invariance(self, T, x, y):
        """Check that V for T, T+{y} and T-{y} agree and x stays outside."""
        T = tuple(sorted(set(T)))
        V = self.v_set(x, T)
        if y not in V:
            raise KSError("y must lie in V^x_T")
        plus = tuple(sorted(set(T) | {y}))
        minus = tuple(sorted(set(T) - {y}))
        out = {"outside_plus": x not in self.u_set(plus)}
        out["V_plus_equal"] = out["outside_plus"] and self.v_set(x, plus) == V
        if minus:
            out["outside_minus"] = x not in self.u_set(minus)
            out["V_minus_equal"] = out["outside_minus"] and self.v_set(x, minus) == V
        else:
            out["outside_minus"] = out["V_minus_equal"] = True
        out["ok"] = all(out.values())
        return out


def scan_flower_loci(geom, x, candidates, max_size=3):
    """Exhaustive V-diameter and invariance scan over Rips sets T drawn from ``candidates``."""
    return scan_sets(geom, x, rips_cliques(candidates, geom.R, geom.ball.dist, max_size=max_size))


def line_sets(ball, lo, hi, R):
    """Rips sets in Z given by min, max and one middle point, as ball indices.

    U_T and V^x_T on the line only see the extremes of T, and removing one
    point exposes at most one new extreme, so these sets cover every case.
    """
    gen = ball.spec.generators[0]
    inv = ball.spec.inverses[gen]

    def at(k):
        return ball.element((gen,) * k if k >= 0 else (inv,) * (-k))

    out = set()
    for a in range(lo, hi + 1):
        for b in range(a, min(hi, a + R) + 1):
            for c in range(a, b + 1):
                out.add(tuple(sorted({at(a), at(b), at(c)})))
    return sorted(out)


def scan_sets(geom, x, sets):
    """Same as scan_flower_loci but over an explicit list of vertex sets."""
    worst = 0
    checked = inv_checked = 0
    violations = []
    for T in sets:
        if not geom.margin_ok(T, x) or x in geom.u_set(T):
            continue
        rd = geom.check_radial(T, x)
        checked += 1
        worst = max(worst, rd["V_diam"])
        for k in ("V_diam_ok", "support_in_V", "norm_ge_one", "xi_equals_V_sum"):
            if not rd[k]:
                violations.append({"T": T, "check": k})
        for y in sorted(geom.v_set(x, T)):
            if geom.margin_ok((y,), x) and not geom.flower_invariance(T, x, y)["ok"]:
                violations.append({"T": T, "y": y, "check": "invariance"})
            inv_checked += 1
    compliant = geom.R >= 48 * geom.delta and not geom.toy
    return {"sets": checked, "invariance_pairs": inv_checked, "max_V_diam": worst,
            "bound_22delta": 22 * geom.delta, "violations": violations, "compliant": compliant,
            "status": "exact" if compliant else "measured"}


def check_geodesic_depth(ball, R, delta):
    """Every u on a geodesic between y, y' in B(e, R) has d(u, e) <= R - min(d(u,y), d(u,y')) + 2 delta."""
    hood = [int(v) for v in ball.ball_around(0, R)]
    worst = None
    for i, y in enumerate(hood):
        for yp in hood[i:]:
            for u in geod_set({y, yp}, ball):
                r = min(ball.dist(u, y), ball.dist(u, yp))
                slack = R - r + 2 * delta - ball.dist(u, 0)
                worst = slack if worst is None else min(worst, slack)
    return {"pairs": len(hood) * (len(hood) + 1) // 2, "min_slack": worst, "ok": worst is None or worst >= 0}


# ---------------------------------------------------------------- operator


@dataclass
class KSModule:
    R: int
    x: int
    window: list
    blocks: dict
    F: WindowedOperator
    columns: dict
    checks: dict = field(default_factory=dict)


def _column(geom, x, key, cache):
    """Exact pieces for one wedge: (block, xi, unnormalized cl(xi) e_key)."""
    T = key
    U = geom.u_set(T)
    if x in U:
        xi = {x: ONE}
        block = H0
    else:
        block = geom.v_set(x, T)
        xi = cache.get(block)
        if xi is None:
            xi = geom.xi(x, T)
            cache[block] = xi
    return block, xi, clifford(xi, {key: ONE})


def ks_F(geom, x, window, check=True):
    """Block-assemble F_x on ``window`` (sorted Rips cliques)."""
    window = list(window)
    xi_cache = {}
    blocks = {}
    cols = {}
    exact = {}
    for key in window:
        block, xi, img = _column(geom, x, key, xi_cache)
        blocks.setdefault(block, []).append(key)
        exact[key] = (block, xi, img)
        nrm = math.sqrt(norm_squared(xi)) if xi else 0.0
        cols[key] = {k: float(v) / nrm for k, v in img.items() if k != ()} if nrm else {}
    in_w = set(window)
    extra = sorted({b for c in cols.values() for b in c if b not in in_w}, key=lambda k: (len(k), k))
    rows = window + extra
    index = {k: i for i, k in enumerate(rows)}
    data = np.zeros((len(rows), len(window)))
    safe = np.ones(len(window), dtype=bool)
    for j, key in enumerate(window):
        for b, v in cols[key].items():
            data[index[b], j] = v
            if b not in in_w:
                safe[j] = False
    F = WindowedOperator(rows, window, data, safe, geom.ball.dist)
    mod = KSModule(geom.R, x, window, blocks, F, cols)
    if check:
        mod.checks = check_ks(geom, mod, exact, xi_cache)
    return mod


def check_ks(geom, mod, exact, xi_cache):
    x = mod.x
    clifford_fail = 0
    invariance_fail = 0
    xi_mismatch = 0
    unsafe_blocks = 0
    for key, (block, xi, img) in exact.items():
        sq = clifford(xi, img)
        if sq != {key: norm_squared(xi)}:
            clifford_fail += 1
        if block != H0 and geom.xi(x, key) != xi:
            xi_mismatch += 1
        for b in img:
            if b == ():
                continue
            try:
                if geom.block_of(x, b) != block:
                    invariance_fail += 1
            except BoundaryError:
                unsafe_blocks += 1
    F = mod.F
    n = len(F.cols)
    M = F.data
    W = M[:n]
    ii = np.flatnonzero(F.safe)
    sq = M @ W[:, ii]
    ident = np.zeros_like(sq)
    ident[ii, np.arange(len(ii))] = 1.0
    want = ident.copy()
    xi_idx = F.row_index().get((x,))
    if xi_idx is not None and xi_idx < n and F.safe[xi_idx]:
        want[xi_idx, list(ii).index(xi_idx)] = 0.0
    resid = float(np.abs(sq - want).max()) if sq.size else 0.0
    inner = W[np.ix_(ii, ii)]
    asym = float(np.abs(inner - inner.T).max()) if inner.size else 0.0
    fx = float(np.abs(M[:, xi_idx]).max()) if xi_idx is not None and xi_idx < n else 0.0
    norm = float(singular_values(W).norm()) if W.size else 0.0
    defect = ident - sq
    defect[np.abs(defect) < 1e-12] = 0.0
    rank = singular_values(defect).rank() if defect.size else 0
    return {
        "window": n,
        "interior": int(len(ii)),
        "blocks": len(mod.blocks),
        "clifford_failures": clifford_fail,
        "block_invariance_failures": invariance_fail,
        "xi_block_mismatch": xi_mismatch,
        "unsafe_block_images": unsafe_blocks,
        "square_residual": resid,
        "selfadjoint_error": asym,
        "F_ex_norm": fx,
        "norm": norm,
        "f2_defect_rank": rank,
    }


def ks_commutator(mod_x, mod_gx):
    rows = list(dict.fromkeys(mod_x.F.rows + mod_gx.F.rows))
    index = {k: i for i, k in enumerate(rows)}
    data = np.zeros((len(rows), len(mod_x.window)))
    for op, sign in ((mod_x.F, 1.0), (mod_gx.F, -1.0)):
        for i, k in enumerate(op.rows):
            data[index[k]] += sign * op.data[i]
    return WindowedOperator(rows, mod_x.window, data, mod_x.F.safe & mod_gx.F.safe, mod_x.F.dist)


def zeta_sensitivity(geom, triples):
    """Bucket ||zeta^x_T - zeta^x'_T|| by floor((x|x')_T), (x|x')_T = min over z in T."""
    buckets = {}
    for x, xp, T in triples:
        a, b = geom.radial_data(T, x).zeta, geom.radial_data(T, xp).zeta
        diff = math.sqrt(sum((a.get(k, 0.0) - b.get(k, 0.0)) ** 2 for k in set(a) | set(b)))
        gp = min(gromov_product(x, xp, z, geom.ball) for z in T)
        g = math.floor(gp)
        cur = buckets.setdefault(g, [0.0, 0])
        cur[0] = max(cur[0], diff)
        cur[1] += 1
    return buckets, fit_decay(buckets)


def summability_audit(geom, x, generators, radii, p_grid, center=None):
    """Commutator Schatten sums on growing windows plus the closed-form bounds."""
    ball = geom.ball
    center = x if center is None else center
    n_gens = generator_count(ball)
    tables = []
    per_window = []
    for rad in radii:
        window = rips_cliques(ball.ball_around(center, rad), geom.R, ball.dist)
        mx = ks_F(geom, x, window, check=False)
        total = {p: 0.0 for p in p_grid}
        block_norms = []
        for g in generators:
            gx = ball.multiply(g, x)
            if gx is None:
                raise BoundaryError("g*x leaves the ball")
            mg = ks_F(geom, gx, window, check=False)
            op = ks_commutator(mx, mg)
            spec = singular_values(op)
            block_norms.append(spec.norm())
            for p in p_grid:
                total[p] += schatten_from_values(spec.values, p) ** p
        table = {p: total[p] ** (1.0 / p) if total[p] else 0.0 for p in p_grid}
        tables.append(table)
        per_window.append({"radius": rad, "window": len(window), "max_norm": max(block_norms, default=0.0),
                           "schatten": {str(p): v for p, v in table.items()}})
    p_star = summability_exponent(geom.delta, n_gens)
    stab = stabilized_p(tables, p_grid)
    return {
        "windows": per_window,
        "closed_form_p": p_star,
        "lambda1": bicombing_rate_bound(geom.delta, n_gens),
        "implication_at_bound": implication_holds(geom.delta, n_gens, p_star * (1 + 1e-12)),
        "stabilized_p": stab,
        "stabilized_within_bound": stab is not None and stab <= p_star,
        "stabilization_note": "finite-window proxy: smallest grid p changing < 1% between the last two windows",
        "schatten": [{"p": p, "value": tables[-1][p] if tables else None,
                      "stabilized": stab is not None and p >= stab} for p in p_grid],
    }


def random_triples(geom, count, seed=0, core_radius=None):
    ball = geom.ball
    core_radius = max(0, ball.radius - geom.R - geom.bicombing.ell) if core_radius is None else core_radius
    core = [int(v) for v in ball.core(core_radius)]
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        z = rng.choice(core)
        T = tuple(sorted({z} | {int(w) for w in rng.sample(list(ball.ball_around(z, geom.R)), 1)}))
        if not geom.margin_ok(T):
            continue
        out.append((rng.choice(core), rng.choice(core), T))
    return out
