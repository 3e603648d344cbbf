import itertools

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import random_fine_balanced
from sem_model.classify import (
    Verdict,
    check_fine_balance,
    classify_2x2,
    decompose,
    discriminant_2x2,
    reduce_to_definite,
    worst_quadruple,
)
from sem_model.core import EMLaw, Flavor, PopulationCounts, PreferenceMatrix, RateVector, em_law
from sem_model.dynamics import terminal_expectation
from sem_model.errors import NotFineBalanced, WrongDimension


def bern_from(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return EMLaw("bernoulli", 1 - (1 - a)[:, None] * (1 - b)[None, :])


def literal_fine_balance(law, tol=1e-9):
    """Every quadruple checked with scalar loops."""
    p = law.pi
    k = law.k
    scale = p.max() if law.flavor is Flavor.POISSON else 1.0
    for i, j, i2, j2 in itertools.product(range(k), repeat=4):
        if law.flavor is Flavor.POISSON:
            lhs, rhs = p[i, j] + p[i2, j2], p[i, j2] + p[i2, j]
        else:
            lhs, rhs = (1 - p[i, j]) * (1 - p[i2, j2]), (1 - p[i, j2]) * (1 - p[i2, j])
        if abs(lhs - rhs) > tol * scale:
            return False
    return True


rates = st.floats(0.0, 0.95)
probs = st.floats(0.05, 1.0)


class TestFineBalance:
    def test_examples(self):
        assert check_fine_balance(EMLaw("poisson", [[4, 5], [5, 6]]))
        assert not check_fine_balance(EMLaw("poisson", [[1, 1], [1, 2]]))
        assert check_fine_balance(bern_from([0.1, 0.7], [0.3, 0.9]))

    def test_anchor_is_not_enough(self):
        # every minor through (0, 0) vanishes because row 0 and column 0 are all ones,
        # but the (1, 2) x (1, 2) minor does not
        law = EMLaw("bernoulli", [[1, 1, 1], [1, 0.5, 0.2], [1, 0.2, 0.5]])
        assert not check_fine_balance(law)
        assert not literal_fine_balance(law)
        quad, v = worst_quadruple(law)
        assert v > 0.2 and 0 not in quad

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from(list(Flavor)), st.integers(2, 3), st.integers(0, 2**32 - 1))
    def test_matches_literal_loops(self, flavor, k, seed):
        rng = np.random.default_rng(seed)
        if rng.random() < 0.5:
            law = random_fine_balanced(rng, flavor, k)
        else:
            hi = 3.0 if flavor is Flavor.POISSON else 1.0
            law = EMLaw(flavor, rng.uniform(0.05, hi, (k, k)))
        assert check_fine_balance(law) == literal_fine_balance(law)


class TestDecompose:
    def test_poisson_example(self):
        dec = decompose(EMLaw("poisson", [[4, 5], [5, 6]]))
        assert dec.alpha_bar == (4, 5) and dec.beta_bar == (0, 1)
        assert dec.male_relabeling == (0, 1)

    def test_bernoulli_all_ones(self):
        dec = decompose(EMLaw("bernoulli", np.ones((3, 3))))
        assert dec.alpha_bar == (1, 1, 1) and dec.beta_bar == (1, 1, 1)

    def test_not_fine_balanced(self):
        with pytest.raises(NotFineBalanced) as err:
            decompose(EMLaw("poisson", [[1, 1], [1, 2]]))
        assert err.value.quadruple is not None and err.value.violation == pytest.approx(0.5)  # |3 - 2| / max|pi|

    def test_min_column_relabeled(self):
        law = EMLaw("poisson", [[3, 1], [4, 2]])
        dec = decompose(law)
        assert dec.male_relabeling == (1, 0)
        assert min(dec.beta_bar) >= 0
        np.testing.assert_allclose(dec.reconstruct(), law.pi, atol=1e-12)

    def test_bernoulli_row_with_ones(self):
        law = bern_from([1.0, 0.4], [0.2, 0.6])
        dec = decompose(law)
        np.testing.assert_allclose(dec.reconstruct(), law.pi, atol=1e-12)
        assert all(0 <= v <= 1 for v in dec.alpha_bar + dec.beta_bar)

    @settings(max_examples=150, deadline=None)
    @given(st.lists(st.floats(0.0, 4.0), min_size=3, max_size=3), st.lists(st.floats(0.0, 4.0), min_size=3, max_size=3))
    def test_poisson_round_trip(self, a, b):
        pi = np.add.outer(a, b)
        assume(pi.min() > 1e-6)
        law = EMLaw("poisson", pi)
        dec = decompose(law)
        assert min(dec.alpha_bar) >= 0 and min(dec.beta_bar) >= 0
        np.testing.assert_allclose(dec.reconstruct(), pi, atol=1e-12 * max(1, pi.max()))

    @settings(max_examples=150, deadline=None)
    @given(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3), st.lists(rates, min_size=3, max_size=3))
    def test_bernoulli_round_trip(self, a, b):
        law = bern_from(a, b)
        dec = decompose(law)
        assert all(0 <= v <= 1 for v in dec.alpha_bar + dec.beta_bar)
        np.testing.assert_allclose(dec.reconstruct(), law.pi, atol=1e-12)


class TestReduce:
    def test_poisson_example(self):
        prefs, rv = reduce_to_definite(EMLaw("poisson", [[4, 5], [5, 6]]))
        np.testing.assert_array_equal(prefs.p, np.ones((2, 2)))
        assert tuple(rv.alpha) == (4, 5) and tuple(rv.beta) == (0, 1)

    def test_constant(self):
        _, rv = reduce_to_definite(EMLaw("poisson", np.full((3, 3), 2.5)))
        assert tuple(rv.alpha) == (2.5,) * 3 and tuple(rv.beta) == (0,) * 3

    def test_bernoulli_round_trip(self):
        law = bern_from([0.1, 0.7], [0.3, 0.9])
        prefs, rv = reduce_to_definite(law)
        np.testing.assert_allclose(em_law(prefs, rv).pi, law.pi, atol=1e-12)

    def test_rejects(self):
        with pytest.raises(NotFineBalanced):
            reduce_to_definite(EMLaw("bernoulli", [[0.2, 0.5], [0.5, 0.2]]))


class TestTrichotomy:
    def test_examples(self):
        assert classify_2x2(EMLaw("poisson", [[1, 2], [2, 1]])).verdict is Verdict.HETEROGAMOUS
        t = classify_2x2(EMLaw("bernoulli", [[0.2, 0.5], [0.5, 0.2]]))
        assert t.verdict is Verdict.HETEROGAMOUS
        assert t.discriminant == pytest.approx(0.25 - 0.64)
        assert classify_2x2(EMLaw("poisson", [[4, 5], [5, 6]])).verdict is Verdict.PANMICTIC

    def test_wrong_dimension(self):
        with pytest.raises(WrongDimension):
            classify_2x2(EMLaw("poisson", np.ones((3, 3))))
        with pytest.raises(WrongDimension):
            discriminant_2x2(EMLaw("bernoulli", np.full((3, 3), 0.5)))

    def test_constant_preferences_poisson_always_panmictic(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            law = em_law(PreferenceMatrix(np.full((2, 2), rng.uniform(0.1, 1))),
                         RateVector("poisson", rng.uniform(0.1, 3, 2), rng.uniform(0, 3, 2)))
            assert check_fine_balance(law)
            assert classify_2x2(law).verdict is Verdict.PANMICTIC

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.1, 0.95), st.lists(rates, min_size=2, max_size=2), st.lists(rates, min_size=2, max_size=2))
    def test_constant_preferences_bernoulli(self, c, a, b):
        a = [max(v, 0.01) for v in a]
        law = em_law(PreferenceMatrix(np.full((2, 2), c)), RateVector("bernoulli", a, b))
        product = (a[0] - a[1]) * (b[0] - b[1])
        # this equivalence holds only when the preference is below 1
        if abs(product) > 1e-6:
            assert not check_fine_balance(law)
        elif product == 0:
            assert check_fine_balance(law)

    @pytest.mark.parametrize("p11,p22", [(0.1, 0.75), (0.2, 0.79), (0.05, 0.9)])
    def test_cross_flavor_divergence(self, p11, p22):
        prefs = PreferenceMatrix([[p11, 0.5], [0.5, p22]])
        po = em_law(prefs, RateVector("poisson", [0, 0], [1, 1]))
        be = em_law(prefs, RateVector("bernoulli", [0, 0], [1, 1]))
        assert classify_2x2(po).verdict is Verdict.HETEROGAMOUS
        assert classify_2x2(be).verdict is Verdict.HOMOGAMOUS

    @pytest.mark.parametrize("p11,p12", [(0.1, 0.5), (0.3, 0.4), (0.01, 0.2)])
    def test_homogamy_without_same_type_preference(self, p11, p12):
        prefs = PreferenceMatrix([[p11, p12], [p12, 1.0]])
        for flavor in Flavor:
            law = em_law(prefs, RateVector(flavor, [0, 0], [1, 1]))
            assert classify_2x2(law).verdict is Verdict.HOMOGAMOUS

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from(list(Flavor)), st.lists(probs, min_size=4, max_size=4),
           st.tuples(st.integers(1, 3), st.integers(1, 3)), st.integers(0, 2))
    def test_sound_against_recursion(self, flavor, vals, x, shift):
        scale = 3.0 if flavor is Flavor.POISSON else 1.0
        law = EMLaw(flavor, np.array(vals).reshape(2, 2) * scale)
        y = (x[0] + shift, x[1] - shift) if x[1] - shift >= 1 else x
        pop = PopulationCounts(x, y)
        gap = terminal_expectation(pop, law)[0, 0] - x[0] * y[0] / pop.n
        verdict = classify_2x2(law).verdict
        if verdict is Verdict.PANMICTIC:
            assert abs(gap) <= 1e-9
        else:
            assert np.sign(gap) == (1 if verdict is Verdict.HOMOGAMOUS else -1)
