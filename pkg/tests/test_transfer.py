import math

import numpy as np
import pytest

import corrdecay as cd
from corrdecay.grid import GridObservable, integrate, integrate_product
from corrdecay.transfer import apply_n, apply_once, correlation_ue, decay_trace, invariant_density
from oracles import ulam_density

GRID = 1024


def obs(f, grid=GRID):
    return GridObservable.from_function(f, grid)


class TestApplyOnce:
    def test_constant_fixed(self, doubling):
        out = apply_once(doubling, GridObservable.constant(1.0, GRID))
        assert np.max(np.abs(out.values - 1.0)) == 0.0

    def test_affine_halves(self, doubling):
        phi = obs(lambda x: x - 0.5)
        out = apply_once(doubling, phi)
        assert np.max(np.abs(out.values - 0.5 * (out.nodes - 0.5))) < 1e-15
        assert out.error_budget <= 2.0 / GRID

    def test_cosine_cancels(self, doubling):
        out = apply_once(doubling, obs(lambda x: np.cos(2.0 * np.pi * x)))
        assert np.max(np.abs(out.values)) < 1e-14

    def test_mass_conserved_exactly(self, doubling, moebius, rng):
        for spec in (doubling, moebius):
            for _ in range(5):
                phi = GridObservable(np.exp(rng.normal(size=GRID + 1) * 0.0 + np.sin(
                    2.0 * np.pi * np.linspace(0, 1, GRID + 1) + rng.uniform(0, 6))))
                out = apply_once(spec, phi)
                assert abs(integrate(out) - integrate(phi)) < 1e-14

    def test_mass_conservation_truncated(self, lsv):
        spec, _, _ = lsv
        phi = GridObservable.constant(1.0, GRID)
        out = apply_once(spec, phi)
        assert abs(integrate(out) - integrate(phi)) <= 1e-10 + cd.truncation_error_bound(
            spec, phi.sup_norm()
        )

    def test_log_seminorm_contraction(self, doubling, moebius, rng):
        # |P psi|_log <= K + lambda^-eta |psi|_log + grid slack, 100 random psi
        x = np.linspace(0.0, 1.0, GRID + 1)
        for spec in (doubling, moebius):
            lam_term = spec.lam**-spec.eta
            for _ in range(100):
                amp = rng.uniform(0.05, 0.5)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                freq = rng.integers(1, 4)
                psi = GridObservable(np.exp(amp * np.sin(2.0 * np.pi * freq * x + phase)))
                before = cd.log_holder_seminorm(psi)
                after = cd.log_holder_seminorm(apply_once(spec, psi))
                slack = 4.0 * before * psi.spacing**psi.eta
                assert after <= spec.K + lam_term * before + slack


class TestApplyN:
    def test_geometric_contraction(self, doubling):
        phi = obs(lambda x: x - 0.5)
        out = apply_n(doubling, phi, 10)
        assert np.max(np.abs(out.values - 2.0**-10 * (out.nodes - 0.5))) <= out.error_budget
        assert out.error_budget < 1e-2

    def test_constant_any_spec(self, moebius):
        out = apply_n(moebius, GridObservable.constant(3.0, GRID), 7)
        assert abs(integrate(out) - 3.0) < 1e-12

    def test_budget_ceiling(self, doubling):
        phi = obs(lambda x: x - 0.5)
        with pytest.raises(cd.errors.ErrorBudgetExceeded):
            apply_n(doubling, phi, 50, budget_ceiling=1e-6)

    def test_certificate_dominates(self, moebius):
        cert = cd.ue_certificate(moebius.lam, moebius.K, moebius.eta)
        phi = obs(lambda x: np.sin(2.0 * np.pi * x))
        phi.values -= integrate(phi)
        semi0 = cd.holder_seminorm(phi)
        current = phi
        for n in range(1, 31):
            current = apply_once(moebius, current)
            norm_est = current.sup_norm() + cd.holder_seminorm(current)
            assert norm_est <= cert.C * cert.gamma**n * semi0 + current.error_budget


class TestInvariantDensity:
    def test_doubling_lebesgue(self, doubling):
        rho = invariant_density(doubling, 1e-12, GRID)
        assert np.max(np.abs(rho.values - 1.0)) < 1e-12

    def test_piecewise_affine_lebesgue(self):
        spec = cd.UEMapSpec(
            branches=(
                cd.maps.affine_branch([0.0, 0.3]),
                cd.maps.affine_branch([0.3, 1.0]),
            ),
            lam=1.0 / 0.7,
            K=0.0,
            eta=1.0,
        )
        rho = invariant_density(spec, 1e-12, GRID)
        assert np.max(np.abs(rho.values - 1.0)) < 1e-11

    def test_moebius_against_ulam_oracle(self, moebius):
        rho = invariant_density(moebius, 1e-9, 4096)
        assert abs(integrate(rho) - 1.0) < 1e-10
        residual = np.max(np.abs(apply_once(moebius, rho).values - rho.values))
        assert residual <= 1e-8
        cert = cd.ue_certificate(moebius.lam, moebius.K, moebius.eta)
        assert np.all(rho.values >= math.exp(-cert.R) - 1e-12)
        assert np.all(rho.values <= math.exp(cert.R) + 1e-12)
        assert cd.log_holder_seminorm(rho) <= cert.R
        oracle = ulam_density(moebius, 4096)
        cell_means = 0.5 * (rho.values[:-1] + rho.values[1:])
        assert np.max(np.abs(cell_means - oracle)) <= 1e-4

    def test_no_convergence_raises(self, moebius):
        with pytest.raises(cd.errors.NoConvergence):
            invariant_density(moebius, 1e-9, GRID, max_iter=2)


class TestSeminorms:
    def test_affine_slope(self):
        assert cd.holder_seminorm(obs(lambda x: x - 0.5)) == pytest.approx(1.0)

    def test_constant_zero(self):
        assert cd.holder_seminorm(GridObservable.constant(4.0, GRID)) == 0.0

    def test_sqrt_peak_at_origin(self):
        phi = GridObservable.from_function(np.sqrt, 1024)
        # adjacent pair at the origin realises (sqrt h)/h = h^(-1/2) = 32
        assert cd.holder_seminorm(phi) == pytest.approx(32.0, rel=1e-12)

    def test_fractional_eta_uses_all_pairs(self):
        phi = obs(lambda x: x, 256)
        # Hoelder-1/2 quotient of identity peaks at the far pair: 1/1^0.5
        assert cd.holder_seminorm(phi, eta=0.5) == pytest.approx(1.0, rel=1e-12)

    def test_log_constant(self):
        assert cd.log_holder_seminorm(GridObservable.constant(5.0, GRID)) == 0.0

    def test_log_exponential_affine(self):
        phi = obs(lambda x: np.exp(x))
        assert cd.log_holder_seminorm(phi) == pytest.approx(1.0, rel=1e-9)

    def test_log_rational(self):
        phi = obs(lambda x: 1.0 + 0.5 * x)
        assert cd.log_holder_seminorm(phi) == pytest.approx(0.5, rel=1e-3)

    def test_log_requires_positive(self):
        with pytest.raises(cd.errors.InvalidParameter):
            cd.log_holder_seminorm(obs(lambda x: x - 0.5))


class TestCorrelation:
    def test_constant_psi_vanishes(self, doubling):
        rho = invariant_density(doubling, 1e-12, GRID)
        phi = obs(lambda x: np.sin(2.0 * np.pi * x))
        c = correlation_ue(doubling, rho, phi, GridObservable.constant(1.0, GRID), 3)
        assert abs(c) < 1e-10

    def test_doubling_variance_decay(self, doubling):
        rho = invariant_density(doubling, 1e-12, GRID)
        phi = obs(lambda x: x - 0.5)
        for n in (1, 5, 10):
            c = correlation_ue(doubling, rho, phi, phi, n)
            assert c == pytest.approx(2.0**-n / 12.0, rel=1e-12)

    def test_nonlinear_bound_with_k_mu(self, moebius):
        rho = invariant_density(moebius, 1e-10, GRID)
        l_mu = cd.log_holder_seminorm(rho)
        k_mu = cd.k_mu_constant(moebius.lam, moebius.K, moebius.eta, l_mu)
        cert = cd.ue_certificate(moebius.lam, k_mu, moebius.eta)
        phi = obs(lambda x: np.sin(2.0 * np.pi * x))
        psi = obs(lambda x: np.cos(2.0 * np.pi * x))
        mean = integrate_product(phi, rho)
        semi = cd.holder_seminorm(GridObservable(phi.values - mean))
        for n in (1, 3, 6, 10):
            c = correlation_ue(moebius, rho, phi, psi, n)
            assert abs(c) <= cert.C * cert.gamma**n * semi * psi.sup_norm() + 1e-6


class TestDecayTrace:
    def test_rows_and_bound(self, doubling, override_cert):
        phi = obs(lambda x: x - 0.5)
        rows = decay_trace(doubling, override_cert, phi, 10)
        assert [r["n"] for r in rows] == list(range(1, 11))
        for r in rows:
            assert r["measured"] <= r["bound"]
            assert r["measured"] == pytest.approx(1.5 * 2.0 ** -r["n"], rel=1e-9)
