import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hypergeometric_fraction, random_fine_balanced, small_populations, thinned_pattern_law
from sem_model.core import EMLaw, Flavor, PairTypeMatrix, PopulationCounts, enumerate_states, enumerate_tables
from sem_model.errors import FineBalanceViolated, InvalidHorizon, NotATable
from sem_model.exact import (
    FirstFiringCDF,
    PmfOverTables,
    expected_qt_definite,
    expected_qt_finebalanced,
    lambda_ij,
    lambda_matrix,
    qt_distribution_definite,
    qt_distribution_finebalanced,
    qt_pmf_definite,
    qt_pmf_finebalanced,
    terminal_distribution_definite,
    terminal_pmf_definite,
)

M = PairTypeMatrix.from_rows
POP11 = PopulationCounts((1, 1), (1, 1))


def constant_cdfs(k, f, g):
    return FirstFiringCDF([lambda t, f=f: f if t > 0 else 0.0] * k, [lambda t, g=g: g if t > 0 else 0.0] * k)


def step_cdfs():
    """A CDF that is neither exponential nor geometric: uniform on [0, 2]
    for females, a point mass at 1.5 for males of type 1."""
    unif = lambda t: min(max(t / 2.0, 0.0), 1.0)  # noqa: E731
    point = lambda t: 1.0 if t >= 1.5 else 0.0  # noqa: E731
    slow = lambda t: -math.expm1(-0.3 * t)  # noqa: E731
    return FirstFiringCDF([unif, slow], [point, unif])


class TestTerminal:
    def test_examples(self):
        assert terminal_pmf_definite(POP11, M([[1, 0], [0, 1]])) == pytest.approx(0.5, abs=1e-15)
        assert terminal_pmf_definite(PopulationCounts((2, 0), (1, 1)), M([[1, 1], [0, 0]])) == pytest.approx(1.0)
        pop = PopulationCounts((2, 1), (2, 1))
        assert terminal_pmf_definite(pop, M([[2, 0], [0, 1]])) == pytest.approx(1 / 3, abs=1e-15)
        assert terminal_pmf_definite(pop, M([[1, 1], [1, 0]])) == pytest.approx(2 / 3, abs=1e-15)

    def test_not_a_table(self):
        with pytest.raises(NotATable):
            terminal_pmf_definite(POP11, M([[1, 0], [0, 0]]))

    @pytest.mark.parametrize("pop", list(small_populations(2, 4)) + list(small_populations(3, 2)))
    def test_matches_fractions(self, pop):
        for m in enumerate_tables(pop):
            assert terminal_pmf_definite(pop, m) == pytest.approx(float(hypergeometric_fraction(pop, m)), abs=1e-13)

    def test_large_population_stays_finite(self):
        pop = PopulationCounts((300, 200), (250, 250))
        m = M([[150, 150], [100, 100]])
        p = terminal_pmf_definite(pop, m)
        assert 0 < p < 1


class TestLambda:
    def test_direct_formula(self):
        assert lambda_ij(constant_cdfs(2, 0.5, 0.5), 0, 1, 1.0) == 0.75

    def test_poisson(self):
        c = FirstFiringCDF.poisson_cdfs([1.0, 2.0], [0.5, 0.0])
        assert lambda_ij(c, 1, 0, 0.7) == pytest.approx(1 - math.exp(-2.5 * 0.7), abs=1e-15)

    def test_bernoulli(self):
        c = FirstFiringCDF.bernoulli_cdfs([0.2, 0.5], [0.3, 1.0])
        assert lambda_ij(c, 0, 0, 3) == pytest.approx(1 - 0.8**3 * 0.7**3, abs=1e-15)
        assert lambda_ij(c, 1, 1, 1) == 1.0
        with pytest.raises(InvalidHorizon):
            lambda_ij(c, 0, 0, 1.5)

    def test_negative_time(self):
        with pytest.raises(InvalidHorizon):
            lambda_ij(FirstFiringCDF.poisson_cdfs([1, 1], [1, 1]), 0, 0, -1)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 5), st.floats(0, 5))
    def test_monotone(self, s, t):
        c = step_cdfs()
        lo, hi = sorted((s, t))
        for i in range(2):
            for j in range(2):
                a, b = lambda_ij(c, i, j, lo), lambda_ij(c, i, j, hi)
                assert 0 <= a <= b <= 1


class TestTimeT:
    def test_examples(self):
        zero = PairTypeMatrix.zeros(2)
        c = FirstFiringCDF.poisson_cdfs([1, 2], [3, 4])
        assert qt_pmf_definite(POP11, c, 0.0, zero) == pytest.approx(1.0, abs=1e-15)
        assert qt_pmf_definite(POP11, constant_cdfs(2, 0.5, 0.0), 1.0, M([[1, 0], [0, 0]])) == pytest.approx(0.125)
        ones = constant_cdfs(2, 1.0, 0.0)
        pop = PopulationCounts((2, 1), (1, 2))
        for m in enumerate_states(pop):
            expected = terminal_pmf_definite(pop, m) if m.in_tables(pop) else 0.0
            assert qt_pmf_definite(pop, ones, 1.0, m) == pytest.approx(expected, abs=1e-15)

    def test_outside_state_space_is_zero(self):
        c = FirstFiringCDF.poisson_cdfs([1, 2], [3, 4])
        assert qt_pmf_definite(POP11, c, 1.0, M([[2, 0], [0, 0]])) == 0.0

    def test_expected_value_example(self):
        pop = PopulationCounts((2, 1), (1, 2))
        c = constant_cdfs(2, 0.5, 0.0)
        assert expected_qt_definite(pop, c, 1.0, 0, 0) == pytest.approx(1 / 3)
        dist = qt_distribution_definite(pop, c, 1.0)
        assert dist.mean()[0, 0] == pytest.approx(1 / 3, abs=1e-12)
        assert expected_qt_definite(pop, c, 0.0, 0, 0) == 0.0

    @pytest.mark.parametrize("pop", [PopulationCounts((2, 1), (1, 2)), PopulationCounts((2, 2), (3, 1)),
                                     PopulationCounts((1, 1, 1), (0, 2, 1))])
    @pytest.mark.parametrize("t", [0.3, 1.0, 1.6, 4.0])
    def test_against_permutation_thinning(self, pop, t):
        cdfs = step_cdfs() if pop.k == 2 else FirstFiringCDF.poisson_cdfs([1, 0.2, 0.5], [0.1, 0.4, 2])
        brute = thinned_pattern_law(pop, lambda_matrix(cdfs, t))
        for m in enumerate_states(pop):
            assert qt_pmf_definite(pop, cdfs, t, m) == pytest.approx(brute.get(m, 0.0), abs=1e-13)

    @pytest.mark.parametrize("pop", list(small_populations(2, 3)))
    def test_sums_and_means(self, pop):
        cdfs = step_cdfs()
        for t in np.linspace(0, 3, 7):
            dist = qt_distribution_definite(pop, cdfs, t)
            assert dist.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
            for i in range(2):
                for j in range(2):
                    assert dist.mean()[i, j] == pytest.approx(expected_qt_definite(pop, cdfs, t, i, j), abs=1e-12)

    def test_monotone_in_t(self):
        pop = PopulationCounts((2, 2), (1, 3))
        cdfs = step_cdfs()
        zero = PairTypeMatrix.zeros(2)
        grid = np.linspace(0, 4, 17)
        at_zero = [qt_pmf_definite(pop, cdfs, t, zero) for t in grid]
        absorbed = [sum(qt_pmf_definite(pop, cdfs, t, m) for m in enumerate_tables(pop)) for t in grid]
        assert all(a >= b - 1e-15 for a, b in zip(at_zero, at_zero[1:]))
        assert all(a <= b + 1e-15 for a, b in zip(absorbed, absorbed[1:]))


class TestFineBalanced:
    LAW = EMLaw("poisson", [[4, 5], [5, 6]])

    def test_poisson_mean(self):
        for t in (0.1, 1.0, 3.0):
            mean = qt_distribution_finebalanced(POP11, self.LAW, t).mean()
            assert mean[0, 0] == pytest.approx(0.5 * (1 - math.exp(-4 * t)), abs=1e-14)
            np.testing.assert_allclose(expected_qt_finebalanced(POP11, self.LAW, t), mean, atol=1e-14)

    def test_no_pair_yet(self):
        # total exit rate from the empty state is (4 + 5 + 5 + 6) / 2 = 10
        assert qt_pmf_finebalanced(POP11, self.LAW, 1.0, PairTypeMatrix.zeros(2)) == pytest.approx(math.exp(-10), rel=1e-12)

    def test_bernoulli_one_round(self):
        law = EMLaw("bernoulli", np.ones((2, 2)))
        pop = PopulationCounts((2, 1), (1, 2))
        for m in enumerate_tables(pop):
            assert qt_pmf_finebalanced(pop, law, 1, m) == pytest.approx(terminal_pmf_definite(pop, m))

    def test_rejects_unbalanced(self):
        with pytest.raises(FineBalanceViolated):
            qt_pmf_finebalanced(POP11, EMLaw("poisson", [[1, 1], [1, 2]]), 1.0, PairTypeMatrix.zeros(2))
        with pytest.raises(FineBalanceViolated):
            qt_pmf_finebalanced(POP11, EMLaw("bernoulli", [[0.2, 0.5], [0.5, 0.2]]), 1, PairTypeMatrix.zeros(2))

    def test_bernoulli_needs_integer_time(self):
        law = random_fine_balanced(np.random.default_rng(0), Flavor.BERNOULLI, 2)
        with pytest.raises(InvalidHorizon):
            qt_pmf_finebalanced(POP11, law, 1.5, PairTypeMatrix.zeros(2))

    def test_matches_definite_with_decomposed_rates(self):
        rng = np.random.default_rng(5)
        a, b = rng.uniform(0.1, 2, 2), rng.uniform(0, 2, 2)
        law = EMLaw("poisson", a[:, None] + b[None, :])
        cdfs = FirstFiringCDF.poisson_cdfs(a, b)
        pop = PopulationCounts((2, 1), (1, 2))
        for m in enumerate_states(pop):
            assert qt_pmf_finebalanced(pop, law, 0.8, m) == pytest.approx(qt_pmf_definite(pop, cdfs, 0.8, m), abs=1e-14)


class TestPmfContainer:
    def test_validation(self):
        with pytest.raises(ValueError):
            PmfOverTables([M([[1, 0], [0, 1]])], [0.9])
        with pytest.raises(ValueError):
            PmfOverTables([M([[1, 0], [0, 1]]), M([[1, 0], [0, 1]])], [0.5, 0.5])

    def test_tv_and_mean(self):
        d = terminal_distribution_definite(POP11)
        assert d.tv(d) == 0.0
        assert d.tv({M([[1, 0], [0, 1]]): 1.0}) == pytest.approx(0.5)
        np.testing.assert_allclose(d.mean(), [[0.5, 0.5], [0.5, 0.5]])
