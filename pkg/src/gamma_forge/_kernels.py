"""Hot numeric loops, compiled with numba when available.

Every kernel has a pure-numpy twin. Setting ``GAMMA_FORGE_PURE_NUMPY=1``
in the environment (before import) selects the numpy versions; so does a
missing or broken numba install. Both versions are importable directly as
``NUMBA_KERNELS`` / ``NUMPY_KERNELS`` for benchmarking.
"""

import os

import numpy as np

_FLAG = os.environ.get("GAMMA_FORGE_PURE_NUMPY", "").strip().lower()
_WANT_NUMPY = _FLAG not in ("", "0", "false", "no")

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


# ---------------------------------------------------------------- numpy twins


def _bfs_row_np(nbr, src):
    n = nbr.shape[0]
    dist = np.full(n, -1, dtype=np.int32)
    dist[src] = 0
    frontier = np.array([src], dtype=np.int64)
    level = 0
    while frontier.size:
        level += 1
        cand = nbr[frontier].ravel()
        cand = cand[cand >= 0]
        cand = np.unique(cand)
        cand = cand[dist[cand] < 0]
        dist[cand] = level
        frontier = cand
    return dist


def _all_pairs_np(nbr):
    n = nbr.shape[0]
    out = np.empty((n, n), dtype=np.int32)
    for i in range(n):
        out[i] = _bfs_row_np(nbr, i)
    return out


def _rho_scan_np(dhat, dword, edges, safe, max_sep):
    # best[s] = max defect over edge pairs whose separation is exactly s
    best = np.zeros(max_sep + 1)
    a, b = edges[:, 0], edges[:, 1]
    for k in range(edges.shape[0]):
        x, xp = a[k], b[k]
        ok = safe[x, a] & safe[x, b] & safe[xp, a] & safe[xp, b]
        sep = np.minimum(np.minimum(dword[x, a], dword[x, b]),
                         np.minimum(dword[xp, a], dword[xp, b]))
        val = np.abs(dhat[x, a] - dhat[xp, a] - dhat[x, b] + dhat[xp, b])
        sep = np.minimum(sep[ok], max_sep)
        val = val[ok]
        if sep.size:
            np.maximum.at(best, sep, val)
    return best


def _triangle_thinness_np(dist, paths, lengths):
    t = paths.shape[0]
    out = np.zeros(t, dtype=np.int32)
    for k in range(t):
        edges = [paths[k, j, : lengths[k, j]] for j in range(3)]
        worst = 0
        for j in range(3):
            others = np.concatenate([edges[(j + 1) % 3], edges[(j + 2) % 3]])
            gap = dist[np.ix_(edges[j], others)].min(axis=1).max()
            worst = max(worst, int(gap))
        out[k] = worst
    return out


def _sym_eigvals_np(a, tol, max_sweeps):
    vals = np.linalg.eigvalsh(a)
    return vals, 0.0, 0


# ---------------------------------------------------------------- numba kernels

if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _bfs_row_nb(nbr, src):
        n, s = nbr.shape
        dist = np.full(n, -1, dtype=np.int32)
        queue = np.empty(n, dtype=np.int64)
        dist[src] = 0
        queue[0] = src
        head, tail = 0, 1
        while head < tail:
            u = queue[head]
            head += 1
            for j in range(s):
                v = nbr[u, j]
                if v >= 0 and dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue[tail] = v
                    tail += 1
        return dist

    @numba.njit(cache=True)
    def _all_pairs_nb(nbr):
        n = nbr.shape[0]
        out = np.empty((n, n), dtype=np.int32)
        for i in range(n):
            out[i] = _bfs_row_nb(nbr, i)
        return out

    @numba.njit(cache=True)
    def _rho_scan_nb(dhat, dword, edges, safe, max_sep):
        best = np.zeros(max_sep + 1)
        m = edges.shape[0]
        for i in range(m):
            x, xp = edges[i, 0], edges[i, 1]
            for j in range(m):
                y, yp = edges[j, 0], edges[j, 1]
                if not (safe[x, y] and safe[x, yp] and safe[xp, y] and safe[xp, yp]):
                    continue
                sep = min(min(dword[x, y], dword[x, yp]), min(dword[xp, y], dword[xp, yp]))
                if sep > max_sep:
                    sep = max_sep
                val = abs(dhat[x, y] - dhat[xp, y] - dhat[x, yp] + dhat[xp, yp])
                if val > best[sep]:
                    best[sep] = val
        return best

    @numba.njit(cache=True)
    def _triangle_thinness_nb(dist, paths, lengths):
        t = paths.shape[0]
        out = np.zeros(t, dtype=np.int32)
        for k in range(t):
            worst = 0
            for j in range(3):
                o1 = (j + 1) % 3
                o2 = (j + 2) % 3
                for a in range(lengths[k, j]):
                    p = paths[k, j, a]
                    best = 1 << 30
                    for b in range(lengths[k, o1]):
                        d = dist[p, paths[k, o1, b]]
                        if d < best:
                            best = d
                    for b in range(lengths[k, o2]):
                        d = dist[p, paths[k, o2, b]]
                        if d < best:
                            best = d
                    if best > worst:
                        worst = best
            out[k] = worst
        return out

    @numba.njit(cache=True)
    def _sym_eigvals_nb(a, tol, max_sweeps):
        # cyclic Jacobi rotations on a copy of the symmetric matrix
        m = a.copy()
        n = m.shape[0]
        scale = 0.0
        for i in range(n):
            for j in range(n):
                scale += m[i, j] * m[i, j]
        scale = np.sqrt(scale)
        off = 0.0
        sweeps = 0
        for sweep in range(max_sweeps):
            off = 0.0
            for i in range(n):
                for j in range(i + 1, n):
                    off += m[i, j] * m[i, j]
            off = np.sqrt(2.0 * off)
            sweeps = sweep
            if off <= tol * max(scale, 1e-300):
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = m[p, q]
                    if abs(apq) < 1e-300:
                        continue
                    theta = (m[q, q] - m[p, p]) / (2.0 * apq)
                    if theta >= 0:
                        t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                    else:
                        t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = t * c
                    for k in range(n):
                        mkp = m[k, p]
                        mkq = m[k, q]
                        m[k, p] = c * mkp - s * mkq
                        m[k, q] = s * mkp + c * mkq
                    for k in range(n):
                        mpk = m[p, k]
                        mqk = m[q, k]
                        m[p, k] = c * mpk - s * mqk
                        m[q, k] = s * mpk + c * mqk
        vals = np.empty(n)
        for i in range(n):
            vals[i] = m[i, i]
        return np.sort(vals), off, sweeps


NUMPY_KERNELS = {
    "bfs_row": _bfs_row_np,
    "all_pairs": _all_pairs_np,
    "rho_scan": _rho_scan_np,
    "triangle_thinness": _triangle_thinness_np,
    "sym_eigvals": _sym_eigvals_np,
}

NUMBA_KERNELS = None
if _HAVE_NUMBA:
    NUMBA_KERNELS = {
        "bfs_row": _bfs_row_nb,
        "all_pairs": _all_pairs_nb,
        "rho_scan": _rho_scan_nb,
        "triangle_thinness": _triangle_thinness_nb,
        "sym_eigvals": _sym_eigvals_nb,
    }

BACKEND = "numpy" if (_WANT_NUMPY or NUMBA_KERNELS is None) else "numba"
_ACTIVE = NUMPY_KERNELS if BACKEND == "numpy" else NUMBA_KERNELS


def bfs_row(nbr, src):
    """Graph distances from ``src``; ``nbr`` is an (n, s) table, -1 = no edge."""
    return _ACTIVE["bfs_row"](np.ascontiguousarray(nbr, dtype=np.int32), int(src))


def all_pairs(nbr):
    return _ACTIVE["all_pairs"](np.ascontiguousarray(nbr, dtype=np.int32))


def rho_scan(dhat, dword, edges, safe, max_sep):
    """Max four-point defect per exact separation (clamped at ``max_sep``)."""
    return _ACTIVE["rho_scan"](
        np.ascontiguousarray(dhat, dtype=np.float64),
        np.ascontiguousarray(dword, dtype=np.int32),
        np.ascontiguousarray(edges, dtype=np.int32),
        np.ascontiguousarray(safe, dtype=np.bool_),
        int(max_sep),
    )


def triangle_thinness(dist, paths, lengths):
    return _ACTIVE["triangle_thinness"](
        np.ascontiguousarray(dist, dtype=np.int32),
        np.ascontiguousarray(paths, dtype=np.int32),
        np.ascontiguousarray(lengths, dtype=np.int32),
    )


def sym_eigvals(a, tol=1e-14, max_sweeps=60):
    """Ascending eigenvalues of a real symmetric matrix.

    Returns ``(values, off_norm, sweeps)``; the numpy twin defers to LAPACK
    and reports zero off-diagonal mass.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.shape[0] == 0:
        return np.zeros(0), 0.0, 0
    return _ACTIVE["sym_eigvals"](a, float(tol), int(max_sweeps))
