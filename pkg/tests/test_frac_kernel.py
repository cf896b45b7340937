import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfrbsde.errors import (
    CoefficientError,
    QuadratureConvergenceError,
    SingularKernelError,
)
from sfrbsde.frac_kernel import (
    CoefficientSet,
    DeterministicFn,
    HurstModel,
    QuadratureSpec,
    c0_const,
    c1_lower_bound,
    inner_product,
    kernel_transform,
    norm_sq,
    rho,
    sigma2_hat,
)
from sfrbsde.grids import TimeGrid

from oracles import (
    IP_USQ_SINU_H06_T1,
    S2HAT_SINUSOIDAL_H075_T1,
    brute_force_inner_product,
    brute_force_norm_sq,
    monomial_norm_sq,
)

H75 = HurstModel(0.75)
QUAD = QuadratureSpec()
ONE = DeterministicFn.const(1.0)
ZERO = DeterministicFn.const(0.0)
IDENT = DeterministicFn.linear(1.0)


def build_coeffs(sigma2=ONE, sigma1=ONE, b=ZERO, T=1.0, n=64, hurst=H75, quad=QUAD):
    return CoefficientSet.build(b, sigma1, sigma2, TimeGrid(T=T, n_steps=n), hurst, quad)


class TestHurstModel:
    def test_bounds_enforced(self):
        for bad in (0.5, 1.0, 0.3, 1.2):
            with pytest.raises(ValueError):
                HurstModel(bad)

    def test_exponents(self):
        h = HurstModel(0.6)
        assert h.two_h == pytest.approx(1.2)
        assert -1 < h.two_h - 2 < 0


class TestRho:
    def test_direct_value(self):
        assert rho(2.0, 1.0, H75) == pytest.approx(0.375, abs=1e-15)

    def test_symmetry_case(self):
        assert rho(1.0, 2.0, H75) == pytest.approx(0.375, abs=1e-15)

    def test_high_precision_oracle(self):
        import mpmath as mp

        mp.mp.dps = 30
        want = float(mp.mpf("0.6") * mp.mpf("0.2") * mp.mpf("0.25") ** mp.mpf("-0.8"))
        assert rho(1.25, 1.0, HurstModel(0.6)) == pytest.approx(want, rel=1e-14)

    def test_diagonal_rejected(self):
        with pytest.raises(SingularKernelError):
            rho(1.0, 1.0, H75)
        with pytest.raises(SingularKernelError):
            rho(np.array([1.0, 2.0]), np.array([1.0, 3.0]), H75)

    @given(st.floats(0.01, 10.0), st.floats(0.01, 5.0), st.floats(0.51, 0.99))
    @settings(max_examples=50, deadline=None)
    def test_symmetric_and_positive(self, t, gap, h):
        model = HurstModel(h)
        a, b = rho(t + gap, t, model), rho(t, t + gap, model)
        assert a == b
        assert a > 0


class TestInnerProduct:
    def test_constant_closed_form(self):
        assert inner_product(ONE, ONE, 1.0, H75, QUAD) == pytest.approx(1.0, rel=1e-10)

    def test_zero_function(self):
        assert inner_product(ZERO, IDENT, 1.0, H75, QUAD) == 0.0

    def test_monomial_closed_form(self):
        # hand derivation: <id, id>_t = t^(2H+2)/(2H+2); 2/7 at H=0.75, t=1
        got = inner_product(IDENT, IDENT, 1.0, H75, QUAD)
        assert got == pytest.approx(2.0 / 7.0, rel=1e-10)
        assert got == pytest.approx(monomial_norm_sq(1.0, 0.75), rel=1e-10)

    def test_brute_force_oracle_agreement(self):
        got = inner_product(IDENT, IDENT, 1.0, H75, QUAD)
        oracle = brute_force_inner_product(lambda u: u, lambda u: u, 1.0, 0.75)
        assert got == pytest.approx(oracle, abs=1e-6)

    def test_mpmath_frozen_value(self):
        xi = DeterministicFn(fn=lambda t: t**2, name="t^2")
        eta = DeterministicFn(fn=np.sin, name="sin")
        got = inner_product(xi, eta, 1.0, HurstModel(0.6), QUAD)
        assert got == pytest.approx(IP_USQ_SINU_H06_T1, rel=1e-8)

    def test_refinement_failure_raises(self):
        rough = DeterministicFn(fn=lambda t: np.sin(200.0 * t**2), name="rough")
        tight = QuadratureSpec(panels=16, tol=1e-14)
        with pytest.raises(QuadratureConvergenceError) as err:
            inner_product(rough, rough, 1.0, H75, tight)
        assert err.value.coarse != err.value.fine

    @given(st.floats(-2, 2), st.floats(-2, 2))
    @settings(max_examples=20, deadline=None)
    def test_bilinearity(self, a, b):
        xi1, xi2 = IDENT, DeterministicFn(fn=np.cos, name="cos")
        eta = DeterministicFn(fn=lambda t: 1.0 + 0.5 * t, name="affine")
        combo = DeterministicFn(fn=lambda t: a * t + b * np.cos(t), name="combo")
        lhs = inner_product(combo, eta, 1.0, H75, QUAD)
        rhs = a * inner_product(xi1, eta, 1.0, H75, QUAD) + b * inner_product(
            xi2, eta, 1.0, H75, QUAD
        )
        assert lhs == pytest.approx(rhs, abs=1e-9)

    @given(
        st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)),
        st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)),
        st.floats(0.55, 0.95),
    )
    @settings(max_examples=25, deadline=None)
    def test_cauchy_schwarz(self, c1, c2, h):
        model = HurstModel(h)
        xi = DeterministicFn(fn=lambda t: c1[0] + c1[1] * t + c1[2] * t**2)
        eta = DeterministicFn(fn=lambda t: c2[0] + c2[1] * t + c2[2] * t**2)
        ip = inner_product(xi, eta, 1.0, model, QUAD)
        assert ip**2 <= norm_sq(xi, 1.0, model, QUAD) * norm_sq(eta, 1.0, model, QUAD) + 1e-9


class TestNormSq:
    @pytest.mark.parametrize("h", [0.6, 0.75, 0.9])
    @pytest.mark.parametrize("t", [0.25, 1.0, 2.0])
    @pytest.mark.parametrize("c", [1.0, 3.0])
    def test_constant_closed_form(self, h, t, c):
        got = norm_sq(DeterministicFn.const(c), t, HurstModel(h), QUAD)
        assert got == pytest.approx(c**2 * t ** (2 * h), rel=1e-8)

    def test_zero(self):
        assert norm_sq(ZERO, 1.0, H75, QUAD) == 0.0

    def test_monotone_in_t(self):
        xi = DeterministicFn(fn=lambda t: 1.0 + t, name="pos")
        values = [norm_sq(xi, t, H75, QUAD) for t in (0.25, 0.5, 1.0, 2.0)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_brute_force_oracle(self):
        xi = DeterministicFn(fn=lambda t: np.exp(-t), name="decay")
        got = norm_sq(xi, 1.5, HurstModel(0.65), QUAD)
        oracle = brute_force_norm_sq(lambda u: np.exp(-u), 1.5, 0.65)
        assert got == pytest.approx(oracle, abs=1e-6)


class TestSigma2Hat:
    def test_constant_closed_form(self):
        coeffs = build_coeffs()
        assert sigma2_hat(1.0, coeffs) == pytest.approx(0.75, rel=1e-12)

    def test_constant_closed_form_t4(self):
        coeffs = build_coeffs(T=4.0)
        assert sigma2_hat(4.0, coeffs) == pytest.approx(1.5, rel=1e-12)

    def test_zero_sigma2(self):
        coeffs = build_coeffs(sigma2=ZERO)
        assert sigma2_hat(1.0, coeffs) == 0.0

    def test_sinusoidal_mpmath_oracle(self):
        coeffs = build_coeffs(sigma2=DeterministicFn.sinusoidal(1.0, 1.0))
        assert sigma2_hat(1.0, coeffs) == pytest.approx(S2HAT_SINUSOIDAL_H075_T1, rel=1e-9)

    def test_graded_mesh_scheme_agrees(self):
        quad = QuadratureSpec(panels=2048, scheme="graded-mesh", tol=1e-5)
        coeffs = build_coeffs(sigma2=DeterministicFn.sinusoidal(1.0, 1.0), quad=quad)
        got = kernel_transform(coeffs.sigma2, 1.0, H75, quad)
        assert got == pytest.approx(S2HAT_SINUSOIDAL_H075_T1, abs=1e-5)


class TestCoefficientSet:
    def test_sigma_abs_sq_pure_brownian(self):
        coeffs = build_coeffs(sigma2=ZERO)
        assert coeffs.sigma_abs_sq(0.7) == pytest.approx(0.7, rel=1e-12)
        assert coeffs.lam(0.7) == pytest.approx(1.0, rel=1e-12)

    def test_sigma_abs_sq_pure_fractional(self):
        coeffs = build_coeffs(sigma1=ZERO)
        assert coeffs.sigma_abs_sq(1.0) == pytest.approx(1.0, rel=1e-8)
        # the finite-difference oracle selects the factor-2 form: 2H t^(2H-1)
        assert coeffs.lambda_factor == 2.0
        assert coeffs.lam(1.0) == pytest.approx(1.5, rel=1e-10)

    def test_sigma_abs_sq_sum(self):
        coeffs = build_coeffs()
        assert coeffs.sigma_abs_sq(1.0) == pytest.approx(2.0, rel=1e-8)

    def test_fd_consistency_recorded(self):
        coeffs = build_coeffs(sigma2=DeterministicFn.sinusoidal(1.0, 1.0), n=128)
        assert coeffs.fd_rel_error <= 1e-3

    def test_strictly_increasing_table(self):
        coeffs = build_coeffs(sigma2=DeterministicFn.sinusoidal(2.0, 1.0))
        assert np.all(np.diff(coeffs.sigma_abs_sq_table) > 0)
        assert np.all(coeffs.lam_table[1:] > 0)

    def test_vanishing_sigma_rejected(self):
        crossing = DeterministicFn(fn=lambda t: np.sin(2 * np.pi * t), name="crossing")
        with pytest.raises(CoefficientError):
            build_coeffs(sigma2=crossing)

    def test_tables_readonly(self):
        coeffs = build_coeffs()
        with pytest.raises(ValueError):
            coeffs.lam_table[0] = 99.0

    def test_export_tables(self, tmp_path):
        coeffs = build_coeffs(n=8)
        path = coeffs.export_tables(tmp_path / "tables.csv")
        header = path.read_text().splitlines()[0]
        assert header == "t,norm_sq,sigma2_hat,sigma_abs_sq,lambda"


class TestC1:
    def test_constant_sigma2(self):
        coeffs = build_coeffs(n=256)
        # ratio H t^(2H-1) is increasing, so the min sits at t0
        assert c1_lower_bound(coeffs, 0.25) == pytest.approx(0.375, rel=1e-6)

    def test_t0_equal_T(self):
        coeffs = build_coeffs(n=256)
        assert c1_lower_bound(coeffs, 1.0) == pytest.approx(0.75, rel=1e-9)

    def test_scale_invariance(self):
        a = c1_lower_bound(build_coeffs(n=128), 0.25)
        b = c1_lower_bound(build_coeffs(sigma2=DeterministicFn.const(3.0), n=128), 0.25)
        assert a == pytest.approx(b, rel=1e-12)

    def test_invalid_t0(self):
        coeffs = build_coeffs()
        with pytest.raises(ValueError):
            c1_lower_bound(coeffs, 0.0)


class TestC0:
    def test_values(self):
        assert c0_const(H75, 1.0) == pytest.approx(0.75)
        assert c0_const(H75, 4.0) == pytest.approx(1.5)

    @given(st.floats(0.51, 0.99))
    @settings(max_examples=20, deadline=None)
    def test_unit_horizon(self, h):
        assert c0_const(HurstModel(h), 1.0) == pytest.approx(h)


class TestQuadratureSpec:
    def test_panel_floor(self):
        with pytest.raises(ValueError):
            QuadratureSpec(panels=4)

    def test_scheme_validated(self):
        with pytest.raises(ValueError):
            QuadratureSpec(scheme="monte-carlo")

    def test_doubling_converged(self):
        lo = inner_product(IDENT, IDENT, 1.0, H75, QuadratureSpec(panels=128, tol=1.0))
        hi = inner_product(IDENT, IDENT, 1.0, H75, QuadratureSpec(panels=256, tol=1.0))
        assert abs(hi - lo) < 1e-8
