import itertools
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gamma_forge.bicombing import Bicombing, decay_profile, fit_decay, l1_difference, merge_buckets
from gamma_forge.group_model import CayleyBall, GroupError, build_ball, distinguished_geodesic, preset


def z2_ball(radius):
    """A fake Cayley ball of Z^2 (not a rewriting system) for star_step spreading."""
    pts = sorted(((i, j) for i in range(-radius, radius + 1) for j in range(-radius, radius + 1)
                  if abs(i) + abs(j) <= radius), key=lambda p: (abs(p[0]) + abs(p[1]), p))
    index = {p: k for k, p in enumerate(pts)}
    words = [("a" if i > 0 else "A",) * abs(i) + ("b" if j > 0 else "B",) * abs(j) for i, j in pts]
    nbr = np.full((len(pts), 4), -1, dtype=np.int32)
    for k, (i, j) in enumerate(pts):
        for m, (di, dj) in enumerate(((1, 0), (-1, 0), (0, 1), (0, -1))):
            nbr[k, m] = index.get((i + di, j + dj), -1)
    return CayleyBall(None, radius, words, nbr), index


def test_star_step_spreads_on_z2():
    ball, idx = z2_ball(4)
    bic = Bicombing(ball, 1, 1, flower=False)
    half = Fraction(1, 2)
    out = bic.star_step({idx[(1, 1)]: Fraction(1)}, idx[(0, 0)])
    assert out == {idx[(1, 0)]: half, idx[(0, 1)]: half}
    out = bic.star_step({idx[(2, 0)]: Fraction(1)}, idx[(0, 0)])
    assert out == {idx[(1, 0)]: Fraction(1)}


def test_star_step_tree_point_mass(f2_ball, f2_bicombing):
    b = f2_ball
    assert f2_bicombing.star_step({b.element("aba"): Fraction(1)}, 0) == {b.element("ab"): Fraction(1)}
    assert f2_bicombing.star_step({b.element("b"): Fraction(1)}, 0) == {0: Fraction(1)}
    with pytest.raises(GroupError):
        f2_bicombing.star_step({0: Fraction(1)}, 0)


@settings(max_examples=40)
@given(st.dictionaries(st.integers(1, 40), st.fractions(min_value=0, max_value=3, max_denominator=6), min_size=1,
                       max_size=5))
def test_star_step_preserves_mass(weights):
    ball, _ = z2_ball(5)
    bic = Bicombing(ball, 1, 1, flower=False)
    out = bic.star_step(weights, 0)
    assert sum(out.values()) == sum(weights.values())


@settings(max_examples=40)
@given(st.integers(2, 4), st.lists(st.integers(0, 10 ** 6), min_size=1, max_size=4))
def test_flower_preserves_mass_and_sphere(r, picks):
    ball = build_ball(preset("pslz"), 8)
    bic = Bicombing(ball, 2, 1, flower_tol=1)
    sphere = [int(v) for v in np.flatnonzero(ball.lengths == r)]
    weights = {sphere[p % len(sphere)]: Fraction(1, len(picks)) for p in picks}
    weights = {k: Fraction(1, len(weights)) for k in weights}
    out = bic.flower_smooth(weights, 0)
    assert sum(out.values()) == 1
    assert all(ball.lengths[z] == r for z in out)


def test_flowers_trivial_on_tree(f2_small):
    on = Bicombing(f2_small, 2, 1, flower=True)
    off = Bicombing(f2_small, 2, 1, flower=False)
    core = [int(v) for v in f2_small.core(3)]
    for x, y in itertools.product(core, core):
        for k in range(1, 4):
            assert on.coeffs(x, y, k) == off.coeffs(x, y, k)


def test_phi_examples(f2_ball, f2_bicombing):
    b = f2_ball
    x, y = b.element("ab"), b.element("a")
    assert f2_bicombing.coeffs(x, y, 1) == {x: 1}
    assert f2_bicombing.coeffs(b.element("aba"), 0, 1) == {b.element("ab"): 1}


def test_short_pairs_single_sequence(f2_ball, f2_bicombing):
    b = f2_ball
    x, y = b.element("ab"), b.element("a")
    seqs = f2_bicombing.regular_sequences(x, y)
    assert [(s.vertices, s.weight) for s in seqs] == [((x, y), 1)]


def test_tree_sequences_are_subsampled_geodesics(f2_ball, f2_bicombing):
    rng = random.Random(5)
    core = [int(v) for v in f2_ball.core(4)]
    for _ in range(100):
        x, y = rng.choice(core), rng.choice(core)
        seqs = f2_bicombing.regular_sequences(x, y)
        assert len(seqs) == 1 and seqs[0].weight == 1
        path = distinguished_geodesic(y, x, f2_ball)
        m = f2_bicombing.levels(x, y)
        want = tuple([x] + [path[k * 2] for k in range(m - 1, 0, -1)] + [y]) if m else (x,)
        assert seqs[0].vertices == want


def test_axioms_on_pslz(pslz_ball):
    bic = Bicombing(pslz_ball, 2, 1, flower_tol=1)
    core = [int(v) for v in pslz_ball.core(3)]
    for x, y in itertools.product(core, core):
        for k in range(1, max(bic.levels(x, y), 1) + 1):
            d = bic.check_distribution(x, y, k)
            assert d["sum_one"] and d["sphere"]
        s = bic.check_sequences(x, y)
        assert s["weight_sum_one"] and s["geometry"]


def test_decay_tree(f2_small):
    bic = Bicombing(f2_small, 2, 1)
    prof = decay_profile(bic, range(1, 3), samples=400, seed=2)
    for gap, value, count in prof.rows():
        assert value <= 2
        if gap > 0:
            assert value == 0


def test_decay_same_basepoint(f2_bicombing):
    assert l1_difference(f2_bicombing.coeffs(5, 9, 1), f2_bicombing.coeffs(5, 9, 1)) == 0


def test_fit_decay_recovers_rate():
    buckets = {g: [Fraction(3) * Fraction(1, 2) ** g, 1] for g in range(1, 6)}
    lam, C, covered, _ = fit_decay(buckets)
    assert lam == pytest.approx(0.5) and C == pytest.approx(3) and covered
    assert fit_decay({-1: [1, 1]})[2] is False


def test_merge_buckets():
    assert merge_buckets({1: [2, 3]}, {1: [1, 1], 2: [5, 1]}) == {1: [2, 4], 2: [5, 1]}


def test_bad_parameters(f2_small):
    with pytest.raises(GroupError):
        Bicombing(f2_small, 0, 1)
    with pytest.raises(GroupError):
        Bicombing(f2_small, 2, 0)
