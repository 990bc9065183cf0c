"""Windowed operators on wedge bases and their spectral audits.

A ``WindowedOperator`` is a finite matrix whose columns are indexed by a
window of basis keys (sorted vertex tuples) and whose rows cover every
key hit by those columns. Columns whose image stays inside the window are
marked safe; products and squares are only trusted on safe columns.

Singular values are computed per connected block of the sparsity pattern
from the Gram matrix, with the cyclic Jacobi kernel on small blocks and
LAPACK on large ones.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from gamma_forge import _kernels

DEFAULT_TOL = 1e-10


class SpectralError(ArithmeticError):
    pass


def wedge_degree(key):
    return len(key) - 1


def wedge_lead(key):
    return key[0]


class WindowedOperator:
    """Dense real matrix between listed bases, with propagation bookkeeping.

    ``rows`` starts with ``cols`` when the operator maps the window to
    itself (``square_window``), so ``data[:len(cols)]`` is the window block.
    """

    def __init__(self, rows, cols, data, safe=None, dist=None, lead=wedge_lead, label=""):
        self.rows = list(rows)
        self.cols = list(cols)
        self.data = np.asarray(data, dtype=float)
        if self.data.shape != (len(self.rows), len(self.cols)):
            raise SpectralError(f"matrix shape {self.data.shape} does not match bases")
        self.safe = np.ones(len(self.cols), dtype=bool) if safe is None else np.asarray(safe, dtype=bool)
        self.dist = dist
        self.lead = lead
        self.label = label
        self._row_index = None

    @property
    def shape(self):
        return self.data.shape

    def row_index(self):
        if self._row_index is None:
            self._row_index = {k: i for i, k in enumerate(self.rows)}
        return self._row_index

    @property
    def square_window(self):
        return self.rows[: len(self.cols)] == self.cols

    def window_block(self):
        if not self.square_window:
            raise SpectralError("rows do not start with the column window")
        return self.data[: len(self.cols)]

    def propagation(self):
        """(row_idx, col_idx, r) for every nonzero entry, r = d(lead row, lead col)."""
        if self.dist is None:
            raise SpectralError("propagation needs a distance function")
        ri, ci = np.nonzero(self.data)
        r = np.array([self.dist(self.lead(self.rows[i]), self.lead(self.cols[j])) for i, j in zip(ri, ci)],
                     dtype=np.int64)
        return ri, ci, r

    def propagation_histogram(self):
        _, _, r = self.propagation()
        vals, counts = np.unique(r, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def with_data(self, data, label=None):
        return WindowedOperator(self.rows, self.cols, data, self.safe, self.dist, self.lead,
                                self.label if label is None else label)

    def restrict_columns(self, mask):
        mask = np.asarray(mask, dtype=bool)
        cols = [k for k, m in zip(self.cols, mask) if m]
        return WindowedOperator(self.rows, cols, self.data[:, mask], self.safe[mask], self.dist, self.lead,
                                self.label)

    def degree_blocks(self):
        """{(row degree, col degree): (row indices, col indices)}."""
        rdeg = np.array([wedge_degree(k) for k in self.rows])
        cdeg = np.array([wedge_degree(k) for k in self.cols])
        out = {}
        for m in np.unique(rdeg):
            for n in np.unique(cdeg):
                ri, ci = np.flatnonzero(rdeg == m), np.flatnonzero(cdeg == n)
                if np.any(self.data[np.ix_(ri, ci)]):
                    out[(int(m), int(n))] = (ri, ci)
        return out


def materialize(oracle, window, dist=None, lead=wedge_lead, label="", extra_rows=None):
    """Evaluate ``oracle(key) -> {key: value}`` on every window key.

    Rows are the window followed by any other hit keys in sorted order.
    A column is safe when its image lies inside the window.
    """
    cols = list(window)
    in_window = set(cols)
    images = [oracle(k) for k in cols]
    extra = set(extra_rows or ())
    for img in images:
        extra.update(k for k, v in img.items() if v and k not in in_window)
    rows = cols + sorted(extra - in_window)
    index = {k: i for i, k in enumerate(rows)}
    data = np.zeros((len(rows), len(cols)))
    safe = np.ones(len(cols), dtype=bool)
    for j, img in enumerate(images):
        for k, v in img.items():
            if not v:
                continue
            data[index[k], j] += float(v)
            if k not in in_window:
                safe[j] = False
    return WindowedOperator(rows, cols, data, safe, dist, lead, label)


def propagation_split(op, r):
    """The component of exact propagation r."""
    ri, ci, prop = op.propagation()
    keep = prop == r
    data = np.zeros_like(op.data)
    data[ri[keep], ci[keep]] = op.data[ri[keep], ci[keep]]
    return op.with_data(data, label=f"{op.label}(r={r})")


def propagation_components(op):
    ri, ci, prop = op.propagation()
    out = {}
    for r in np.unique(prop):
        keep = prop == r
        data = np.zeros_like(op.data)
        data[ri[keep], ci[keep]] = op.data[ri[keep], ci[keep]]
        out[int(r)] = op.with_data(data, label=f"{op.label}(r={int(r)})")
    return out


def schur_bound(sup_coeff, r, n, R, n_gens, m=None):
    """sup|c| * |S|^r * (1+|S|)^((n+m)R/2); m defaults to n+1."""
    if sup_coeff == 0:
        return 0.0
    m = n + 1 if m is None else m
    return float(sup_coeff) * n_gens ** r * (1 + n_gens) ** ((n + m) * R / 2)


def counting_bound(r, n, R, n_gens):
    return n_gens ** r * (1 + n_gens) ** ((n + 1) * R)


def schur_report(op, R, n_gens):
    """Measured norm vs schur_bound for every propagation component and degree block."""
    rows = []
    for r, comp in sorted(propagation_components(op).items()):
        for (m, n), (ri, ci) in sorted(comp.degree_blocks().items()):
            block = comp.data[np.ix_(ri, ci)]
            norm = float(np.linalg.norm(block, 2)) if block.size else 0.0
            bound = schur_bound(np.abs(block).max(), r, n, R, n_gens, m)
            rows.append({"r": r, "row_degree": m, "col_degree": n, "norm": norm, "bound": bound,
                         "ok": norm <= bound * (1 + 1e-12)})
    return rows


def count_check(keys, R, n_gens, dist, lead=wedge_lead):
    """Max over alpha of |{beta : d'(alpha, beta) = r}| against the counting bound.

    Returns a list of (r, degree of beta, measured max, bound) rows.
    """
    keys = list(keys)
    leads = np.array([lead(k) for k in keys])
    degs = np.array([wedge_degree(k) for k in keys])
    uniq = sorted(set(leads.tolist()))
    dmat = {a: {b: dist(a, b) for b in uniq} for a in uniq}
    out = {}
    for a in uniq:
        rs = np.array([dmat[a][b] for b in leads.tolist()])
        for m in np.unique(degs):
            sel = degs == m
            vals, counts = np.unique(rs[sel], return_counts=True)
            for r, c in zip(vals, counts):
                key = (int(r), int(m))
                out[key] = max(out.get(key, 0), int(c))
    rows = []
    for (r, m), c in sorted(out.items()):
        # beta of degree m counted against the n = m - 1 form of the bound
        bound = counting_bound(r, m - 1, R, n_gens)
        rows.append({"r": r, "degree": m, "count": c, "bound": bound, "ok": c <= bound})
    return rows


# ---------------------------------------------------------------- spectra


@dataclass
class SingularSpectrum:
    values: np.ndarray
    method: str
    residual: float
    tol: float = DEFAULT_TOL
    blocks: list = field(default_factory=list)

    def __len__(self):
        return len(self.values)

    def rank(self, rel_tol=1e-7, abs_tol=1e-12):
        # values come from a Gram matrix, so zeros only resolve to about sqrt(eps) * norm
        if not len(self.values):
            return 0
        cut = max(abs_tol, rel_tol * float(self.values[0]))
        return int(np.sum(self.values > cut))

    def norm(self):
        return float(self.values[0]) if len(self.values) else 0.0


def _components(a):
    """Connected components of the bipartite row/column graph of nonzeros."""
    nr, nc = a.shape
    parent = list(range(nr + nc))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    ri, ci = np.nonzero(a)
    for i, j in zip(ri.tolist(), ci.tolist()):
        x, y = find(i), find(nr + j)
        if x != y:
            parent[x] = y
    groups = {}
    for i in ri.tolist():
        groups.setdefault(find(i), (set(), set()))[0].add(i)
    for j in ci.tolist():
        groups.setdefault(find(nr + j), (set(), set()))[1].add(j)
    return [(sorted(r), sorted(c)) for r, c in groups.values()]


def singular_values(op, tol=DEFAULT_TOL, jacobi_cap=400, dense_cap=4000):
    """Descending singular values of a matrix or WindowedOperator."""
    a = op.data if isinstance(op, WindowedOperator) else np.asarray(op, dtype=float)
    vals = []
    methods = set()
    residual = 0.0
    blocks = []
    for rows, cols in _components(a):
        block = a[np.ix_(rows, cols)]
        gram = block.T @ block if block.shape[1] <= block.shape[0] else block @ block.T
        k = gram.shape[0]
        if k > dense_cap:
            raise SpectralError(f"block of size {k} exceeds the dense cap {dense_cap}")
        if k <= jacobi_cap:
            ev, off, sweeps = _kernels.sym_eigvals(gram, tol=1e-15)
            methods.add("jacobi" if _kernels.BACKEND == "numba" else "eigvalsh")
            scale = max(1.0, float(np.abs(gram).max()))
            if off > tol * scale * k:
                raise SpectralError(f"Jacobi did not converge: off-diagonal residual {off:.3e}")
            residual = max(residual, off / scale)
        else:
            ev = np.linalg.eigvalsh(gram)
            methods.add("eigvalsh")
        ev = np.clip(ev, 0.0, None)
        vals.extend(np.sqrt(ev).tolist())
        blocks.append((len(rows), len(cols)))
    vals = np.array(sorted(vals, reverse=True))
    frob2 = float(np.sum(a * a))
    trace_err = abs(float(np.sum(vals ** 2)) - frob2) / max(frob2, 1e-300)
    if frob2 and trace_err > 1e3 * tol:
        raise SpectralError(f"trace identity failed: relative error {trace_err:.3e}")
    return SingularSpectrum(vals, "+".join(sorted(methods)) or "empty", max(residual, trace_err if frob2 else 0.0),
                            tol, blocks)


def schatten_from_values(values, p):
    values = np.asarray(values, dtype=float)
    if not len(values) or values[0] == 0:
        return 0.0
    top = values[0]
    # scale by the largest value so high powers do not underflow
    return float(top * np.sum((values / top) ** p) ** (1.0 / p))


def trace_power(op, power):
    """trace((A^T A)^power) by repeated products."""
    a = op.data if isinstance(op, WindowedOperator) else np.asarray(op, dtype=float)
    gram = a.T @ a if a.shape[1] <= a.shape[0] else a @ a.T
    acc = np.eye(gram.shape[0])
    for _ in range(power):
        acc = acc @ gram
    return float(np.trace(acc))


def schatten(op, p, spectrum=None, cross_check=True):
    """(sum sigma_i^p)^(1/p); for even p <= 8 also compared to the trace power.

    Returns (value, cross_check_relative_error or None).
    """
    spec = spectrum if spectrum is not None else singular_values(op)
    val = schatten_from_values(spec.values, p)
    err = None
    if cross_check and float(p).is_integer() and int(p) % 2 == 0 and 2 <= p <= 8:
        tr = trace_power(op, int(p) // 2)
        ref = tr ** (1.0 / p) if tr > 0 else 0.0
        err = abs(val - ref) / max(ref, 1e-300) if ref else abs(val)
    return val, err


def schatten_table(op, p_grid, spectrum=None):
    spec = spectrum if spectrum is not None else singular_values(op)
    return {p: schatten_from_values(spec.values, p) for p in p_grid}


def stabilized_p(tables, p_grid, rel=0.01):
    """Smallest p whose value changes by < rel between the last two windows."""
    if len(tables) < 2:
        return None
    prev, last = tables[-2], tables[-1]
    for p in sorted(p_grid):
        a, b = prev[p], last[p]
        if b == 0 and a == 0:
            return p
        if b and abs(b - a) / abs(b) < rel:
            return p
    return None


# ---------------------------------------------------------------- Fredholm


@dataclass
class SelfadjointPath:
    F: np.ndarray
    F_tilde: np.ndarray
    T: np.ndarray

    def at(self, t):
        n = self.F.shape[0]
        eye = np.eye(n)
        left = eye + 0.5 * t * (self.F - self.F_tilde)
        right = eye + 0.5 * t * (self.F_tilde - self.F)
        return left @ self.F @ right


def selfadjointify(F, tol=DEFAULT_TOL):
    """Canonical path from an involution F to a selfadjoint involution."""
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    eye = np.eye(n)
    defect = np.linalg.norm(F @ F - eye, 2) if n else 0.0
    if defect > tol * max(1.0, np.linalg.norm(F, 2) ** 2):
        raise SpectralError(f"F^2 - Id has norm {defect:.3e} above tolerance")
    Fs = F.T
    T = np.linalg.inv(eye + 0.25 * (F - Fs) @ (Fs - F))
    F_tilde = (0.25 * (F @ Fs - Fs @ F) + 0.5 * (F + Fs)) @ T
    return SelfadjointPath(F, F_tilde, T)


def fredholm_audit(F, grading=None, interior=None, commutators=None, p_grid=(2, 4, 8, 16, 32, 64), tol=DEFAULT_TOL):
    """Defect rank, selfadjointness and commutator Schatten table for a window.

    ``F`` is a WindowedOperator over a square window (or a square array);
    ``interior`` masks the columns where products are exact.
    """
    if isinstance(F, WindowedOperator):
        M = F.data
        n = len(F.cols)
        interior = F.safe if interior is None else np.asarray(interior, dtype=bool)
        degs = np.array([wedge_degree(k) for k in F.cols]) if grading is None else np.asarray(grading)
    else:
        M = np.asarray(F, dtype=float)
        n = M.shape[1]
        interior = np.ones(n, dtype=bool) if interior is None else np.asarray(interior, dtype=bool)
        degs = np.zeros(n, dtype=int) if grading is None else np.asarray(grading)
    window = M[:n]
    sq_cols = M @ window[:, interior]
    ident = np.zeros_like(sq_cols)
    idx = np.flatnonzero(interior)
    ident[idx, np.arange(len(idx))] = 1.0
    defect = ident - sq_cols
    dspec = singular_values(defect) if defect.size else SingularSpectrum(np.zeros(0), "empty", 0.0)
    scale = max(1.0, float(np.abs(M).max()) ** 2)
    rank = dspec.rank(rel_tol=tol, abs_tol=tol * scale)
    inner = window[np.ix_(interior, interior)]
    asym = float(np.abs(inner - inner.T).max()) if inner.size else 0.0
    # odd operators flip the parity of the degree
    ri, ci = np.nonzero(window)
    odd = bool(np.all((degs[ri] - degs[ci]) % 2 == 1)) if len(ri) else True
    report = {
        "defect_rank": rank,
        "defect_norm": dspec.norm(),
        "selfadjoint_error": asym,
        "odd": odd,
        "tag": "Fredholm" if asym <= tol * scale else "weak Fredholm",
        "interior_columns": int(interior.sum()),
        "window": int(n),
        "commutators": {},
    }
    for name, op in (commutators or {}).items():
        spec = singular_values(op)
        report["commutators"][name] = {str(p): schatten_from_values(spec.values, p) for p in p_grid}
    return report


# ---------------------------------------------------------------- dumps


def write_spectrum_csv(path, spectra):
    """``spectra`` maps block id -> SingularSpectrum or array of values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block_id", "index", "sigma"])
        for bid, spec in spectra.items():
            vals = spec.values if isinstance(spec, SingularSpectrum) else spec
            for i, v in enumerate(vals):
                w.writerow([bid, i, repr(float(v))])


def write_triplets(path, op):
    a = op.data if isinstance(op, WindowedOperator) else np.asarray(op)
    with open(path, "w") as fh:
        for i, j in zip(*np.nonzero(a)):
            fh.write(f"{i} {j} {float(a[i, j])!r}\n")



def read_triplets(path):
    """Inverse of write_triplets: ``row col value`` lines, ``#`` comments allowed."""
    entries = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 3:
                raise SpectralError(f"line {n}: expected 'row col value'")
            entries.append((int(parts[0]), int(parts[1]), float(parts[2])))
    if not entries:
        return np.zeros((0, 0))
    shape = (max(e[0] for e in entries) + 1, max(e[1] for e in entries) + 1)
    a = np.zeros(shape)
    for i, j, v in entries:
        a[i, j] += v
    return a
