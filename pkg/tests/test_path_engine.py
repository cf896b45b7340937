import numpy as np
import pytest

from sfrbsde.errors import EmbeddingError
from sfrbsde.frac_kernel import (
    CoefficientSet,
    DeterministicFn,
    HurstModel,
    QuadratureSpec,
    norm_sq,
)
from sfrbsde.grids import TimeGrid
from sfrbsde.path_engine import (
    RngSpec,
    bm_paths,
    check_lemma_var_bound,
    circulant_eigenvalues,
    fbm_cholesky,
    fbm_circulant,
    fbm_increment_autocov,
    make_ensemble,
    simulate_eta,
    wiener_integral_det,
)

from oracles import discrete_wiener_variance, fbm_cov

H75 = HurstModel(0.75)
RNG = RngSpec(seed=42)
ONE = DeterministicFn.const(1.0)
ZERO = DeterministicFn.const(0.0)
IDENT = DeterministicFn.linear(1.0)

N_PATHS = 20_000


@pytest.fixture(scope="module")
def ensemble_t2():
    """Matched (B, BH) on 8 steps over [0, 2] (contains t = 1 and t = 2)."""
    return make_ensemble(TimeGrid(T=2.0, n_steps=8), H75, N_PATHS, RNG)


@pytest.fixture(scope="module")
def ensemble_t1():
    return make_ensemble(TimeGrid(T=1.0, n_steps=128), H75, N_PATHS, RNG)


def var_se(sample_var, n):
    return sample_var * np.sqrt(2.0 / (n - 1))


class TestFbmCholesky:
    def test_single_step_marginal(self):
        grid = TimeGrid(T=1.0, n_steps=2)  # minimal grid; check marginal at T
        ens = fbm_cholesky(grid, H75, 100_000, RNG)
        v = ens.BH[:, -1].var(ddof=1)
        assert abs(v - 1.0) <= 3 * var_se(1.0, 100_000)

    def test_cov_at_1_2(self, ensemble_t2):
        BH = ensemble_t2.BH
        # nodes t=1 and t=2 are indices 4 and 8 on the 8-step grid over [0,2]
        emp = np.mean(BH[:, 4] * BH[:, 8])
        want = np.sqrt(2.0)
        se = np.sqrt(np.mean((BH[:, 4] * BH[:, 8] - emp) ** 2) / (N_PATHS - 1))
        assert abs(emp - want) <= 3 * se

    def test_self_similar_scaling(self, ensemble_t2):
        t = ensemble_t2.grid.nodes[1:]
        rescaled = ensemble_t2.BH[:, 1:] / t[None, :] ** H75.h
        variances = rescaled.var(axis=0, ddof=1)
        z = np.abs(variances - 1.0) / var_se(1.0, N_PATHS)
        assert z.max() <= 3.5

    def test_covariance_grid(self, ensemble_t2):
        t = ensemble_t2.grid.nodes[1:]
        ana = 0.5 * (t[:, None] ** 1.5 + t[None, :] ** 1.5
                     - np.abs(t[:, None] - t[None, :]) ** 1.5)
        emp = np.cov(ensemble_t2.BH[:, 1:].T)
        se = np.sqrt((np.outer(np.diag(ana), np.diag(ana)) + ana**2) / (N_PATHS - 1))
        assert np.abs((emp - ana) / se).max() <= 3.0

    def test_starts_at_zero(self, ensemble_t2):
        assert np.all(ensemble_t2.BH[:, 0] == 0.0)
        assert np.all(ensemble_t2.B[:, 0] == 0.0)


class TestFbmCirculant:
    def test_increment_autocov_lag0(self):
        dt = 0.25
        assert fbm_increment_autocov(0, H75, dt) == pytest.approx(dt**1.5, rel=1e-14)

    def test_lag1_correlation_formula(self):
        want = (2**1.5 - 2.0) / 2.0
        got = fbm_increment_autocov(1, H75) / fbm_increment_autocov(0, H75)
        assert got == pytest.approx(want, rel=1e-14)

    def test_lag1_correlation_empirical(self):
        grid = TimeGrid(T=1.0, n_steps=64)
        ens = fbm_circulant(grid, H75, N_PATHS, RNG)
        inc = np.diff(ens.BH, axis=1)
        got = np.mean(inc[:, 20] * inc[:, 21]) / fbm_increment_autocov(0, H75, grid.dt)
        want = (2**1.5 - 2.0) / 2.0
        assert abs(got - want) <= 4.0 / np.sqrt(N_PATHS)

    def test_telescoping_variance(self):
        grid = TimeGrid(T=2.0, n_steps=32)
        ens = fbm_circulant(grid, H75, 50_000, RNG)
        v = ens.BH[:, -1].var(ddof=1)
        want = 2.0**1.5
        assert abs(v - want) <= 3 * var_se(want, 50_000)

    def test_eigenvalues_nonnegative(self):
        for h in (0.55, 0.75, 0.95):
            eig = circulant_eigenvalues(256, HurstModel(h), 1.0 / 256)
            assert eig.min() >= 0.0

    def test_negative_eigenvalue_guard(self, monkeypatch):
        import sfrbsde.path_engine as pe

        monkeypatch.setattr(pe, "fbm_increment_autocov",
                            lambda lag, hurst, dt=1.0: np.where(
                                np.asarray(lag) == 0, -1.0, 0.0))
        with pytest.raises(EmbeddingError):
            circulant_eigenvalues(16, H75, 0.1)

    def test_methods_agree_in_moments(self):
        grid = TimeGrid(T=1.0, n_steps=16)
        a = fbm_cholesky(grid, H75, N_PATHS, RngSpec(seed=11))
        b = fbm_circulant(grid, H75, N_PATHS, RngSpec(seed=12))
        va = a.BH[:, 1:].var(axis=0, ddof=1)
        vb = b.BH[:, 1:].var(axis=0, ddof=1)
        se = np.sqrt(var_se(va, N_PATHS) ** 2 + var_se(vb, N_PATHS) ** 2)
        assert np.abs((va - vb) / se).max() <= 4.0
        mean_se = np.sqrt((va + vb) / N_PATHS)
        assert np.abs((a.BH[:, 1:].mean(axis=0) - b.BH[:, 1:].mean(axis=0)) / mean_se).max() <= 4.0


class TestBmPaths:
    def test_terminal_variance(self, ensemble_t2):
        v = ensemble_t2.B[:, -1].var(ddof=1)
        assert abs(v - 2.0) <= 3 * var_se(2.0, N_PATHS)

    def test_min_covariance(self, ensemble_t2):
        B = ensemble_t2.B
        prod = B[:, 2] * B[:, 6]  # t=0.5, t=1.5: Cov = 0.5
        se = prod.std(ddof=1) / np.sqrt(N_PATHS)
        assert abs(prod.mean() - 0.5) <= 3 * se

    def test_independent_of_fbm(self, ensemble_t2):
        corr = np.corrcoef(ensemble_t2.B[:, -1], ensemble_t2.BH[:, -1])[0, 1]
        assert abs(corr) <= 3.0 / np.sqrt(N_PATHS)


class TestWienerIntegral:
    def test_constant_telescopes(self, ensemble_t2):
        # telescopes to BH(T); summation order differs from plain subtraction
        # only at the last ulp
        got = wiener_integral_det(ONE, ensemble_t2, "BH")
        assert np.allclose(got, ensemble_t2.BH[:, -1], rtol=1e-12, atol=1e-13)

    def test_zero_integrand(self, ensemble_t2):
        assert np.all(wiener_integral_det(ZERO, ensemble_t2, "B") == 0.0)

    def test_zero_mean(self, ensemble_t1):
        for which in ("B", "BH"):
            vals = wiener_integral_det(IDENT, ensemble_t1, which)
            assert abs(vals.mean()) <= 3 * vals.std(ddof=1) / np.sqrt(N_PATHS)

    def test_isometry_against_kernel_norm(self, ensemble_t1):
        vals = wiener_integral_det(IDENT, ensemble_t1, "BH")
        emp = vals.var(ddof=1)
        want = norm_sq(IDENT, 1.0, H75, QuadratureSpec())
        assert abs(emp - want) <= 3 * var_se(want, N_PATHS) + abs(
            discrete_wiener_variance(ensemble_t1.grid.nodes[:-1],
                                     ensemble_t1.grid.nodes, 0.75) - want
        )

    def test_discrete_variance_matches_exact_covariance(self, ensemble_t2):
        # exact finite-sum variance from the fBm covariance, no asymptotics
        nodes = ensemble_t2.grid.nodes
        xi = nodes[:-1]
        want = discrete_wiener_variance(xi, nodes, 0.75)
        vals = wiener_integral_det(IDENT, ensemble_t2, "BH")
        emp = vals.var(ddof=1)
        assert abs(emp - want) <= 3 * var_se(want, N_PATHS)


class TestLemmaVarBound:
    def test_constant_integrand(self, ensemble_t1):
        rep = check_lemma_var_bound(ONE, ensemble_t1)
        # lhs is T^2H = 1; rhs = 0.75 + 0.75
        assert rep.lhs == pytest.approx(1.0, abs=0.05)
        assert rep.rhs == pytest.approx(1.5, rel=1e-9)
        assert rep.holds

    def test_zero_integrand(self, ensemble_t1):
        rep = check_lemma_var_bound(ZERO, ensemble_t1)
        assert rep.lhs == 0.0
        assert rep.rhs == pytest.approx(0.75, rel=1e-9)
        assert rep.holds

    def test_linear_integrand(self, ensemble_t1):
        rep = check_lemma_var_bound(IDENT, ensemble_t1)
        assert rep.rhs == pytest.approx(0.75 / 3.0 + 0.75, rel=1e-9)
        assert rep.lhs == pytest.approx(2.0 / 7.0, abs=0.02)
        assert rep.holds


@pytest.fixture(scope="module")
def coeffs():
    grid = TimeGrid(T=1.0, n_steps=128)
    return CoefficientSet.build(ONE, ONE, ONE, grid, H75)


class TestSimulateEta:

    def test_deterministic_case(self):
        # noise channels silenced by zeroing the draws: eta = eps^2H int b
        grid = TimeGrid(T=1.0, n_steps=64)
        coeffs = CoefficientSet.build(ONE, ONE, ONE, grid, H75)
        ens = make_ensemble(grid, H75, 4, RNG)
        ens.B[:] = 0.0
        ens.BH[:] = 0.0
        eta = simulate_eta(coeffs, ens, 0.5, eta0=0.0)
        want = 0.5**1.5 * grid.nodes
        assert np.allclose(eta, want[None, :], atol=1e-12)

    def test_variance_scaling(self, coeffs, ensemble_t1):
        coeffs_nodrift = CoefficientSet.build(ZERO, ONE, ONE, coeffs.grid, H75)
        eta = simulate_eta(coeffs_nodrift, ensemble_t1, 0.5, eta0=0.0)
        v = eta[:, -1].var(ddof=1)
        want = 0.5**1.5 * 2.0
        assert abs(v - want) <= 3 * var_se(want, N_PATHS) + 0.01 * want

    def test_epsilon_one_is_unscaled(self, coeffs, ensemble_t1):
        eta = simulate_eta(coeffs, ensemble_t1, 1.0, eta0=0.25)
        drift = coeffs.b_int_table
        noise = np.cumsum(np.diff(ensemble_t1.B, axis=1), axis=1) + np.cumsum(
            np.diff(ensemble_t1.BH, axis=1), axis=1
        )
        want = 0.25 + drift[None, :]
        want = want.repeat(eta.shape[0], axis=0)
        want[:, 1:] += noise
        assert np.allclose(eta, want, atol=1e-12)

    def test_common_random_numbers_exact(self):
        grid = TimeGrid(T=1.0, n_steps=32)
        coeffs = CoefficientSet.build(ZERO, ONE, DeterministicFn.const(0.0), grid, H75)
        ens = make_ensemble(grid, H75, 256, RNG)
        e1 = simulate_eta(coeffs, ens, 0.6)
        e2 = simulate_eta(coeffs, ens, 0.15)
        ratio1 = e1[:, 1:] / 0.6**0.75
        ratio2 = e2[:, 1:] / 0.15**0.75
        assert np.allclose(ratio1, ratio2, rtol=1e-12, atol=1e-14)

    def test_epsilon_range_enforced(self, coeffs, ensemble_t1):
        for bad in (0.0, 1.5, -0.2):
            with pytest.raises(ValueError):
                simulate_eta(coeffs, ensemble_t1, bad)


class TestDeterminism:
    def test_bitwise_reproducible(self):
        grid = TimeGrid(T=1.0, n_steps=32)
        a = make_ensemble(grid, H75, 512, RngSpec(seed=7))
        b = make_ensemble(grid, H75, 512, RngSpec(seed=7))
        assert np.array_equal(a.B, b.B) and np.array_equal(a.BH, b.BH)

    def test_path_prefix_stable_under_count(self):
        # per-path sub-streams: the first k paths do not depend on n_paths
        grid = TimeGrid(T=1.0, n_steps=32)
        small = make_ensemble(grid, H75, 64, RngSpec(seed=7))
        large = make_ensemble(grid, H75, 256, RngSpec(seed=7))
        assert np.array_equal(small.BH, large.BH[:64])
        assert np.array_equal(small.B, large.B[:64])

    def test_workers_do_not_change_results(self):
        grid = TimeGrid(T=1.0, n_steps=32)
        a = make_ensemble(grid, H75, 600, RngSpec(seed=9), workers=1)
        b = make_ensemble(grid, H75, 600, RngSpec(seed=9), workers=4)
        assert np.array_equal(a.BH, b.BH) and np.array_equal(a.B, b.B)

    def test_seed_changes_paths(self):
        grid = TimeGrid(T=1.0, n_steps=16)
        a = make_ensemble(grid, H75, 16, RngSpec(seed=1))
        b = make_ensemble(grid, H75, 16, RngSpec(seed=2))
        assert not np.allclose(a.BH, b.BH)
