import math

import numpy as np
import pytest

import corrdecay as cd
from corrdecay.stochastic import (
    PSequence,
    coupling_matrix,
    poly_tail_bound,
    sample_h,
    stretched_tail_bound,
    wilson_upper,
    word_h,
)
from oracles import geometric_power_sum


def random_dominated_pair(rng, max_len=50):
    """q arbitrary nonnegative; p a random rightward redistribution of q."""
    n = int(rng.integers(2, max_len + 1))
    q = rng.random(n)
    q /= q.sum()
    p = np.zeros(n)
    for j in range(n):
        w = rng.random(n - j)
        w /= w.sum()
        p[j:] += q[j] * w
    return p, q


class TestCouplingMatrix:
    def test_identity_when_equal(self, rng):
        q = rng.random(8)
        m = coupling_matrix(q, q)
        assert np.allclose(m.s, np.eye(8), atol=1e-14)

    def test_hand_example(self):
        m = coupling_matrix([0.5, 0.5], [0.7, 0.3])
        assert m.s[0, 0] == pytest.approx(5.0 / 7.0, rel=1e-14)
        assert m.s[1, 0] == pytest.approx(2.0 / 7.0, rel=1e-14)
        assert m.s[1, 1] == pytest.approx(1.0, rel=1e-14)
        assert m.s[0, 1] == 0.0

    def test_zero_column_convention(self):
        m = coupling_matrix([0.3, 0.3, 0.4], [0.6, 0.0, 0.4])
        assert m.s[1, 1] == 1.0  # delta_{k,j} on the q = 0 column

    def test_randomized_identities(self, rng):
        for _ in range(300):
            p, q = random_dominated_pair(rng)
            m = coupling_matrix(p, q)
            assert np.max(np.abs(m.row_defects())) <= 1e-12
            assert np.max(np.abs(m.column_sums() - 1.0)) <= 1e-12
            assert np.all((m.s >= -1e-15) & (m.s <= 1.0 + 1e-15))

    def test_dominance_violation(self):
        with pytest.raises(cd.errors.NotDominated) as exc:
            coupling_matrix([0.6, 0.4], [0.4, 0.6])
        assert exc.value.k == 0


class TestWordH:
    def test_values(self):
        assert word_h([], 5) == 0
        assert word_h([3], 5) == 8
        assert word_h([0, 2, 7], 5) == 24

    def test_concatenation_additive(self, rng):
        for _ in range(20):
            u = list(rng.integers(0, 9, size=rng.integers(0, 6)))
            v = list(rng.integers(0, 9, size=rng.integers(0, 6)))
            assert word_h(u + v, 4) == word_h(u, 4) + word_h(v, 4)


class TestSampleH:
    def test_always_empty_word(self):
        pseq = PSequence(p_minus1=1.0 - 1e-9, p0=1e-9, p=np.array([]), N=3)
        emp = sample_h(pseq, 10_000, seed=1, n_max=20)
        assert emp.tail[0] <= 2e-4  # h = 0 almost surely

    def test_golden_atom(self, golden_tower_formal):
        pseq = golden_tower_formal.pseq()
        emp = sample_h(pseq, 200_000, seed=3, n_max=50)
        p_hat = 1.0 - emp.tail[0]  # P(h = 0) estimate
        sigma = math.sqrt(pseq.p_minus1 * (1 - pseq.p_minus1) / 200_000)
        assert abs(p_hat - pseq.p_minus1) <= 3.0 * sigma + 1e-12

    def test_word_length_moment(self, golden_tower_formal):
        pseq = golden_tower_formal.pseq()
        emp = sample_h(pseq, 200_000, seed=5, n_max=50)
        mean = (1.0 - pseq.p_minus1) / pseq.p_minus1
        sigma = math.sqrt((1.0 - pseq.p_minus1) / pseq.p_minus1**2 / 200_000)
        assert abs(emp.mean_word_length - mean) <= 3.0 * sigma

    def test_deterministic_and_chunk_invariant(self, golden_tower_formal):
        pseq = golden_tower_formal.pseq()
        a = sample_h(pseq, 50_000, seed=11, n_max=30)
        b = sample_h(pseq, 50_000, seed=11, n_max=30)
        assert np.array_equal(a.tail, b.tail)

    def test_seed_changes_stream(self, golden_tower_formal):
        pseq = golden_tower_formal.pseq()
        a = sample_h(pseq, 50_000, seed=11, n_max=30)
        c = sample_h(pseq, 50_000, seed=12, n_max=30)
        assert not np.array_equal(a.tail, c.tail)


class TestPolyTailBound:
    def test_reference_constants(self):
        tb = poly_tail_bound(1.0, 2.0, 0.0, 1, 0.5)
        assert tb.constants["C1"] == pytest.approx(4.0, rel=1e-12)
        assert tb.constants["C1prime"] == pytest.approx(12.0, rel=1e-12)
        for n in (2, 6, 20):
            assert tb.bound(n) == pytest.approx(24.0 / n + 0.5 ** (n / 2.0), rel=1e-12)

    def test_series_against_closed_form(self):
        from corrdecay.stochastic import _power_series_k_beta

        for r in (0.3, 0.5, 0.9, 0.997):
            assert _power_series_k_beta(2.0, r) == pytest.approx(
                geometric_power_sum(2, r), rel=1e-11
            )
            assert _power_series_k_beta(3.0, r) == pytest.approx(
                geometric_power_sum(3, r), rel=1e-11
            )

    def test_bound_can_exceed_one(self):
        tb = poly_tail_bound(1.0, 2.0, 0.0, 1, 0.5)
        assert tb.bound(1) > 1.0  # raw bound, not clipped to probabilities

    def test_golden_parameter_chain(self):
        # paper formula: C1 = C_tau e^R (1 - p_minus1)^-1 beta/(beta-1)
        tb = poly_tail_bound(1.0, 2.0, 0.1, 5, 1.0 / 384.0)
        expected_c1 = math.exp(0.1) * (384.0 / 383.0) * 2.0
        assert tb.constants["C1"] == pytest.approx(expected_c1, rel=1e-12)

    def test_monotone_in_c_tau(self):
        tb1 = poly_tail_bound(1.0, 2.0, 0.1, 5, 0.01)
        tb2 = poly_tail_bound(2.0, 2.0, 0.1, 5, 0.01)
        ns = np.arange(1, 100)
        assert np.all(tb2.bound(ns) >= tb1.bound(ns))

    def test_nonincreasing(self):
        tb = poly_tail_bound(2.0, 1.7, 0.2, 4, 0.03)
        ns = np.arange(0, 500)
        assert np.all(np.diff(tb.bound(ns)) <= 1e-15)

    def test_beta_must_exceed_one(self):
        with pytest.raises(cd.errors.NotIntegrable):
            poly_tail_bound(1.0, 1.0, 0.0, 1, 0.5)


class TestStretchedTailBound:
    def test_reference_constants(self):
        tb = stretched_tail_bound(1.0, 1.0, 1.0, 0.0, 1, 0.5)
        assert tb.constants["c_w"] == pytest.approx(6.0, rel=1e-12)
        assert tb.constants["C1"] == pytest.approx(24.0, rel=1e-12)
        assert tb.constants["B"] == pytest.approx(1.0 / 48.0, rel=1e-9)
        assert tb.constants["r"] <= 0.75 + 1e-12

    def test_c_agamma_convention(self):
        from corrdecay.stochastic import stretched_constant_c_agamma

        assert stretched_constant_c_agamma(1.0, 1.0) == 1.0  # 0^0 = 1, max(1, 1/A)
        assert stretched_constant_c_agamma(0.25, 1.0) == 4.0
        assert stretched_constant_c_agamma(1.0, 0.5) == pytest.approx(4.0)  # 2 * (2q)^q, q=1

    def test_word_collapse_near_one(self):
        tb = stretched_tail_bound(1.0, 1.0, 0.5, 0.0, 1, 0.99)
        n = np.arange(1, 60)
        vals = tb.bound(n)
        geo_term = np.exp(math.log1p(-0.99) * n / 2.0)
        # words are almost surely empty: the geometric length term carries
        # the curve and the stretched part stays a bounded prefactor
        assert np.all(vals >= geo_term)
        assert np.all(vals - geo_term <= tb.constants["Cprime"] + 1e-9)

    def test_nonincreasing(self):
        tb = stretched_tail_bound(1.5, 0.7, 0.5, 0.3, 3, 0.02)
        ns = np.arange(0, 500)
        assert np.all(np.diff(tb.bound(ns)) <= 1e-15)

    def test_monotone_in_c_tau(self):
        tb1 = stretched_tail_bound(1.0, 1.0, 0.5, 0.1, 5, 0.01)
        tb2 = stretched_tail_bound(2.0, 1.0, 0.5, 0.1, 5, 0.01)
        ns = np.arange(1, 200)
        assert np.all(tb2.bound(ns) >= tb1.bound(ns) - 1e-15)

    def test_no_feasible_rate(self):
        with pytest.raises(cd.errors.NoFeasibleRate):
            stretched_tail_bound(1.0, 1.0, 0.5, 0.0, 1, 0.0)

    def test_monte_carlo_dominance_small(self, golden_tower_formal):
        pseq = golden_tower_formal.pseq()
        tb = stretched_tail_bound(math.e, 1.0, 0.5, 0.0, pseq.N, pseq.p_minus1)
        emp = sample_h(pseq, 100_000, seed=9, n_max=100)
        assert np.all(emp.wilson <= tb.bound(emp.n))


class TestWilson:
    def test_envelope_covers_proportion(self):
        up = wilson_upper(np.array([50.0]), 100)
        assert up[0] > 0.5
        assert wilson_upper(np.array([0.0]), 100)[0] > 0.0
        assert wilson_upper(np.array([100.0]), 100)[0] <= 1.0 + 1e-12
