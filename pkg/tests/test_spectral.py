import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gamma_forge import _kernels
from gamma_forge.lafforgue import wedge_boundary
from gamma_forge.spectral import (
    SpectralError,
    WindowedOperator,
    fredholm_audit,
    materialize,
    propagation_components,
    propagation_split,
    read_triplets,
    schatten,
    schatten_from_values,
    schur_bound,
    selfadjointify,
    singular_values,
    stabilized_p,
    trace_power,
    write_spectrum_csv,
    write_triplets,
)

line_dist = lambda a, b: abs(a - b)


def test_materialize_trivial_oracles():
    window = [(0,), (1,), (2,)]
    assert not np.any(materialize(lambda k: {}, window).data)
    ident = materialize(lambda k: {k: 1}, window)
    assert np.array_equal(ident.data, np.eye(3)) and ident.safe.all()


def test_boundary_matrix_on_triangle():
    window = [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]
    op = materialize(wedge_boundary, window)
    want = np.zeros((7, 7))
    # u-coordinates: d u_(a,b) = 2(u_b - u_a), d u_(0,1,2) = 3(u_12 - u_02 + u_01)
    for j, (a, b) in zip((3, 4, 5), ((0, 1), (0, 2), (1, 2))):
        want[b, j], want[a, j] = 2, -2
    want[5, 6], want[4, 6], want[3, 6] = 3, -3, 3
    assert np.array_equal(op.data, want)
    assert not np.any(op.data @ op.data)


def test_materialize_extra_rows_unsafe():
    op = materialize(lambda k: {(k[0] + 1,): 1.0}, [(0,), (1,)])
    assert op.rows == [(0,), (1,), (2,)]
    assert list(op.safe) == [True, False]


def test_propagation_split():
    diag = WindowedOperator([(0,), (1,)], [(0,), (1,)], np.diag([2.0, 3.0]), dist=line_dist)
    assert diag.propagation_histogram() == {0: 2}
    rng = np.random.default_rng(0)
    keys = [(i,) for i in range(6)]
    op = WindowedOperator(keys, keys, rng.normal(size=(6, 6)), dist=line_dist)
    parts = propagation_components(op)
    assert np.array_equal(sum(p.data for p in parts.values()), op.data)
    assert np.array_equal(propagation_split(op, 2).data, parts[2].data)


def test_schur_bound_values():
    assert schur_bound(0, 3, 1, 2, 4) == 0
    assert schur_bound(1.5, 2, 1, 2, 4) == pytest.approx(1.5 * 16 * 5 ** 3)


def test_rank_one_and_projection():
    u, v = np.array([1.0, 2.0, 2.0]), np.array([3.0, 4.0])
    s = singular_values(np.outer(u, v))
    assert s.values[0] == pytest.approx(15.0)
    # zeros resolve only to about sqrt(eps) * norm through the Gram matrix
    assert np.all(s.values[1:] <= 1e-7 * s.values[0]) and s.rank() == 1
    q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(6, 3)))
    proj = singular_values(q @ q.T)
    assert np.allclose(proj.values[:3], 1.0) and proj.rank() == 3


def test_against_characteristic_polynomial():
    rng = np.random.default_rng(7)
    for _ in range(20):
        T = rng.normal(size=(5, 5))
        # roots of det(lambda - T^T T), an independent route to the spectrum
        roots = np.sort(np.real(np.roots(np.poly(T.T @ T))))[::-1]
        want = np.sqrt(np.clip(roots, 0, None))
        assert np.allclose(singular_values(T).values, want, rtol=1e-7, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 10 ** 6))
def test_spectrum_properties(n, m, seed):
    a = np.random.default_rng(seed).normal(size=(n, m))
    s = singular_values(a)
    assert np.all(np.diff(s.values) <= 1e-12) and np.all(s.values >= 0)
    assert np.sum(s.values ** 2) == pytest.approx(np.sum(a * a), rel=1e-9)
    assert s.norm() == pytest.approx(np.linalg.norm(a, 2), rel=1e-9)


def test_block_components_used():
    a = np.zeros((4, 4))
    a[0, 1], a[2, 3] = 2.0, 5.0
    s = singular_values(a)
    assert list(s.values) == [5.0, 2.0]
    assert len(s.blocks) == 2


def test_schatten_examples():
    assert schatten_from_values([3.0], 7) == pytest.approx(3.0)
    a = np.random.default_rng(2).normal(size=(5, 4))
    val, err = schatten(a, 2)
    assert val == pytest.approx(np.linalg.norm(a))
    for p in (4, 6, 8):
        val, err = schatten(a, p)
        assert err < 1e-10
        assert val <= trace_power(a, p // 2) ** (1 / p) * (1 + 1e-12)
    assert schatten_from_values([], 2) == 0.0


def test_stabilized_p():
    tables = [{2: 10.0, 4: 5.0}, {2: 12.0, 4: 5.01}]
    assert stabilized_p(tables, [2, 4]) == 4
    assert stabilized_p(tables[:1], [2, 4]) is None


def test_selfadjointify_examples():
    F = np.array([[1.0, 1.0], [0.0, -1.0]])
    path = selfadjointify(F)
    Ft = path.F_tilde
    assert np.allclose(Ft, Ft.T, atol=1e-15) and np.allclose(Ft @ Ft, np.eye(2), atol=1e-15)
    for t in (0.0, 0.5, 1.0):
        Fti = path.at(t)
        assert np.allclose(Fti @ Fti, np.eye(2), atol=1e-12)
    assert np.allclose(path.at(0.0), F)
    assert np.allclose(path.at(1.0), Ft)
    S = np.diag([1.0, -1.0, -1.0])
    q, _ = np.linalg.qr(np.random.default_rng(3).normal(size=(3, 3)))
    sym = q @ S @ q.T
    p = selfadjointify(sym)
    for t in (0.0, 0.3, 1.0):
        assert np.allclose(p.at(t), sym, atol=1e-12)
    with pytest.raises(SpectralError):
        selfadjointify(np.array([[2.0]]))


def test_fredholm_audit_tags():
    assert fredholm_audit(np.zeros((1, 1)))["defect_rank"] == 1
    sym = np.array([[0.0, 1.0], [1.0, 0.0]])
    rep = fredholm_audit(sym, grading=[0, 1])
    assert rep["tag"] == "Fredholm" and rep["defect_rank"] == 0 and rep["odd"]
    weak = np.array([[0.0, 2.0], [0.5, 0.0]])
    rep = fredholm_audit(weak, grading=[0, 1], commutators={"g": np.eye(2)})
    assert rep["tag"] == "weak Fredholm" and rep["defect_rank"] == 0
    assert rep["commutators"]["g"]["2"] == pytest.approx(np.sqrt(2))


def test_kernel_backends_agree():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(30, 30))
    g = a @ a.T
    ev_nb, off, _ = _kernels.NUMBA_KERNELS["sym_eigvals"](g, 1e-15, 100)
    ev_np, _, _ = _kernels.NUMPY_KERNELS["sym_eigvals"](g, 1e-15, 100)
    assert np.allclose(np.sort(ev_nb), np.sort(ev_np), rtol=1e-10)
    nbr = np.array([[1, -1], [0, 2], [1, -1]], dtype=np.int32)
    assert list(_kernels.NUMBA_KERNELS["bfs_row"](nbr, 0)) == list(_kernels.NUMPY_KERNELS["bfs_row"](nbr, 0))


def test_csv_and_triplets(tmp_path):
    a = np.array([[0.0, 1.5], [2.0, 0.0], [0.0, 0.0]])
    write_triplets(tmp_path / "m.txt", a)
    back = read_triplets(tmp_path / "m.txt")
    assert np.array_equal(back, a[:2])
    write_spectrum_csv(tmp_path / "s.csv", {0: singular_values(a)})
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "block_id,index,sigma" and len(lines) == 3
