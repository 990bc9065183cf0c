from hypothesis import given
from hypothesis import strategies as st

from gamma_forge.chain_complex import Chain, boundary
from gamma_forge.filling_line import line_diameter, sigma, sigma_recursive
from gamma_forge.homotopy import homotopy_defect


def line_chains(degree):
    simplex = st.tuples(*[st.integers(0, 8)] * (degree + 1))
    return st.dictionaries(simplex, st.integers(-4, 4), max_size=4).map(lambda d: Chain(d, degree))


any_line_chain = st.integers(-1, 3).flatmap(
    lambda n: st.integers(-3, 3).map(Chain.unit) if n == -1 else line_chains(n))


def test_sigma_examples():
    assert sigma(Chain.unit()) == Chain.simplex((0,))
    assert sigma(Chain.simplex((3,))) == Chain({(0, 1): 1, (1, 2): 1, (2, 3): 1}, 1)
    assert sigma(Chain.simplex((1, 3))) == Chain.simplex((1, 2, 3), -1)
    c = Chain.simplex((1, 3))
    assert boundary(sigma(c)) + sigma(boundary(c)) == c


@given(any_line_chain)
def test_sigma_contracting(c):
    assert not homotopy_defect(sigma, c)


@given(any_line_chain)
def test_closed_form_matches_recursion(c):
    assert sigma(c) == sigma_recursive(c)


@given(st.integers(0, 3).flatmap(line_chains))
def test_sigma_stays_in_hull(c):
    # vertices of sigma(alpha) lie between 0 and the largest vertex of alpha
    for s in sigma(c).support() if c else ():
        assert 0 <= s <= max(c.support())


def test_line_diameter():
    assert line_diameter([4, 1, 7]) == 6
    assert line_diameter([]) == 0
