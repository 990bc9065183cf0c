import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gamma_forge.bicombing import Bicombing, RegularSequence
from gamma_forge.chain_complex import Chain, ChainError, boundary, chain_admissible
from gamma_forge.group_model import gromov_product
from gamma_forge.homotopy import (
    Averager,
    RetractionEta,
    RipsContraction,
    SequenceProjection,
    basepoint_sensitivity,
    eta,
    homotopy_defect,
    mu_l1_bounds,
    mu_omega,
    mu_xy,
    project,
    truncate,
)

seeds = st.integers(0, 10 ** 6)


def rand_chain(rng, core, degree, terms=2):
    return Chain({tuple(rng.choice(core) for _ in range(degree + 1)): rng.randint(-3, 3) for _ in range(terms)},
                 degree)


def translate(ball, g, c):
    return Chain({tuple(ball.multiply(g, v) for v in s): k for s, k in c.terms.items()}, c.degree)


def test_project_examples(f2_ball):
    b = f2_ball
    e, a, aa, aaa = (b.element(w) for w in ("e", "a", "aa", "aaa"))
    omega = RegularSequence((e, a, aa, aaa), Fraction(1))
    assert project(omega, aa, b) == (2, aa)
    # ab hangs off a
    assert project(omega, b.element("ab"), b) == (1, a)
    # ties resolve to the smallest index: e and aa are both at distance 1 from a
    omega2 = RegularSequence((e, aa), Fraction(1))
    assert project(omega2, a, b) == (0, e)


def test_mu_omega_low_degrees(f2_ball):
    b = f2_ball
    e, a, aa, aab = (b.element(w) for w in ("e", "a", "aa", "aab"))
    omega = RegularSequence((e, a, aa), Fraction(1))
    assert mu_omega(omega, Chain.unit(), b) == Chain.simplex((e,))
    # p(aab) = 2, so the image walks the sequence then jumps to z
    want = Chain({(e, a): 1, (a, aa): 1, (aa, aab): 1}, 1)
    assert mu_omega(omega, Chain.simplex((aab,)), b) == want


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_mu_contracting(f2_ball, f2_bicombing, seed):
    rng = random.Random(seed)
    core = [int(v) for v in f2_ball.core(3)]
    avg = Averager(f2_bicombing)
    x, y = rng.choice(core), rng.choice(core)
    n = rng.randint(-1, 3)
    c = Chain.unit(rng.randint(1, 3)) if n == -1 else rand_chain(rng, core, n)
    assert not homotopy_defect(lambda ch: avg.mu(x, y, ch), c)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_mu_contracting_pslz(pslz_ball, seed):
    bic = Bicombing(pslz_ball, 2, 1, flower_tol=1)
    rng = random.Random(seed)
    core = [int(v) for v in pslz_ball.core(3)]
    x, y = rng.choice(core), rng.choice(core)
    n = rng.randint(0, 3)
    assert not homotopy_defect(lambda ch: mu_xy(bic, x, y, ch), rand_chain(rng, core, n))


def test_mu_l1_bounds(f2_ball, f2_bicombing):
    avg = Averager(f2_bicombing)
    rng = random.Random(4)
    core = [int(v) for v in f2_ball.core(3)]
    for _ in range(200):
        x, y = rng.choice(core), rng.choice(core)
        n = rng.randint(0, 2)
        s = tuple(rng.choice(core) for _ in range(n + 1))
        if len(set(s)) < len(s):
            continue
        val, bound = mu_l1_bounds(avg, x, y, s)
        assert val <= bound


def test_tree_mu_is_single_sequence(f2_ball, f2_bicombing):
    rng = random.Random(9)
    core = [int(v) for v in f2_ball.core(3)]
    for _ in range(50):
        x, y = rng.choice(core), rng.choice(core)
        (omega,) = f2_bicombing.regular_sequences(x, y)
        c = rand_chain(rng, core, rng.randint(0, 2))
        assert mu_xy(f2_bicombing, x, y, c) == mu_omega(omega, c, f2_ball)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_mu_linear(f2_ball, f2_bicombing, seed):
    rng = random.Random(seed)
    core = [int(v) for v in f2_ball.core(3)]
    avg = Averager(f2_bicombing)
    x, y = rng.choice(core), rng.choice(core)
    c1, c2 = rand_chain(rng, core, 1), rand_chain(rng, core, 1)
    assert avg.mu(x, y, c1 * 3 - c2) == avg.mu(x, y, c1) * 3 - avg.mu(x, y, c2)


def test_projection_coarse_lipschitz(f2_small):
    bic = Bicombing(f2_small, 2, 1)
    core = [int(v) for v in f2_small.core(3)]
    for x, y in [(core[5], core[-1]), (core[-7], core[2]), (core[0], core[-3])]:
        for omega in bic.regular_sequences(x, y):
            proj = SequenceProjection(omega, f2_small)
            for z, zp in itertools.combinations(core, 2):
                assert f2_small.dist(proj.pi(z), proj.pi(zp)) <= f2_small.dist(z, zp) + 24 * bic.delta


def test_truncate(f2_ball):
    c = Chain({(0, 1): 1, (1, 5): 2}, 1)
    assert truncate(0, 8, c, f2_ball) == c
    assert truncate(1, 0, Chain({(1,): 1, (2,): 1}, 0), f2_ball) == Chain.simplex((1,))


def test_basepoint_sensitivity(f2_ball, f2_bicombing):
    avg = Averager(f2_bicombing)
    rng = random.Random(11)
    core = [int(v) for v in f2_ball.core(3)]
    for _ in range(150):
        x, xp, y = rng.choice(core), rng.choice(core), rng.choice(core)
        r = rng.randint(0, 4)
        val, gap = basepoint_sensitivity(avg, x, xp, y, r)
        assert val <= 2 * (f2_ball.dist(x, y) + 1)
        assert basepoint_sensitivity(avg, x, x, y, r)[0] == 0
        if r < gromov_product(x, xp, y, f2_ball):
            assert val == 0


def test_eta_examples(f2_ball):
    b = f2_ball
    e, a2, a4 = b.element("e"), b.element("aa"), b.element("aaaa")
    assert eta(Chain.simplex((e, a4)), 2, b) == Chain({(e, a2): 1, (a2, a4): 1}, 1)
    c = Chain.simplex((e, b.element("a"), b.element("ab")))
    assert eta(c, 2, b) == c


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_eta_chain_map(f2_ball, seed):
    rng = random.Random(seed)
    core = [int(v) for v in f2_ball.core(3)]
    et = RetractionEta(f2_ball, 2)
    c = rand_chain(rng, core, rng.randint(1, 3))
    img = et.apply(c)
    assert boundary(img) == et.apply(boundary(c))
    assert chain_admissible(img, 2, f2_ball.dist)


def test_h_low_degrees(f2_ball, f2_contraction):
    b = f2_ball
    x = b.element("ab")
    assert f2_contraction.apply(x, Chain.unit()) == Chain.simplex((x,))
    avg = Averager(f2_contraction.bicombing)
    for w in ("e", "aB", "ba", "bb"):
        x0 = b.element(w)
        assert f2_contraction.apply(x, Chain.simplex((x0,))) == avg.mu(x, x0, Chain.simplex((x0,)))


def rips_chain(rng, ball, core, R, degree):
    s = [rng.choice(core)]
    while len(s) < degree + 1:
        s.append(rng.choice([int(w) for w in ball.ball_around(s[0], R)
                             if all(ball.dist(int(w), v) <= R for v in s)]))
    return Chain.simplex(tuple(s), rng.randint(1, 3))


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_h_contracting_and_equivariant(f2_ball, f2_contraction, seed):
    rng = random.Random(seed)
    core = [int(v) for v in f2_ball.core(2)]
    x = rng.choice(core)
    c = rips_chain(rng, f2_ball, core, 2, rng.randint(0, 3))
    assert not homotopy_defect(lambda ch: f2_contraction.apply(x, ch), c)
    g = rng.choice([int(v) for v in f2_ball.core(1)])
    moved = f2_contraction.apply(f2_ball.multiply(g, x), translate(f2_ball, g, c))
    assert moved == translate(f2_ball, g, f2_contraction.apply(x, c))


def test_h_rejects_long_simplices(f2_ball, f2_contraction):
    with pytest.raises(ChainError):
        f2_contraction.apply(0, Chain.simplex((0, f2_ball.element("aaa"))))


def test_h_contracting_pslz(pslz_ball):
    bic = Bicombing(pslz_ball, 2, 1, flower_tol=1)
    h = RipsContraction(bic, RetractionEta(pslz_ball, 2))
    rng = random.Random(2)
    core = [int(v) for v in pslz_ball.core(2)]
    for _ in range(80):
        x = rng.choice(core)
        c = rips_chain(rng, pslz_ball, core, 2, rng.randint(0, 3))
        assert not homotopy_defect(lambda ch: h.apply(x, ch), c)
