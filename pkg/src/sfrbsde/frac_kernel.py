"""Fractional covariance kernel, Hilbert norms and the sigma machinery.

For a Hurst index H in (1/2, 1) the kernel is

    rho(t, s) = H(2H-1) |t-s|^(2H-2),

with the scalar product  <xi, eta>_t = int_0^t int_0^t rho(u,v) xi(u) eta(v) du dv
and  ||xi||_t^2 = <xi, xi>_t.  The diagonal singularity |u-v|^(2H-2) is
integrable; the production scheme removes it with the substitution
w = (u-v)^(2H-1) per axis, which maps

    int_0^u rho(u, v) g(v) dv  =  H u^s  *  int_0^1 g(u (1 - x^(1/s))) dx,
    s = 2H - 1,

so the transformed integrand is bounded and the rule is exact for constant g.

Everything here is deterministic; after a `CoefficientSet` is built all of
its tables are read-only, so concurrent readers are safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    CoefficientError,
    ConsistencyError,
    QuadratureConvergenceError,
    SingularKernelError,
)
from .grids import TimeGrid

SCHEME_POWER = "power-substitution"
SCHEME_GRADED = "graded-mesh"

# Central finite differences of |sigma|^2_t near t=0 cannot resolve the
# t^(2H-1) cusp to 1e-3 relative accuracy at any uniform resolution (the
# relative error at node k scales like 1/k^2 independent of the step), so
# the lambda consistency check starts at this node index.
_FD_CHECK_FIRST_NODE = 8
_FD_CHECK_RTOL = 1e-3


@dataclass(frozen=True)
class HurstModel:
    """Hurst parameter H in the open interval (1/2, 1) and derived exponents."""

    h: float

    def __post_init__(self):
        if not (0.5 < self.h < 1.0):
            raise ValueError(f"H must lie in (0.5, 1), got {self.h!r}")

    @property
    def two_h(self) -> float:
        return 2.0 * self.h

    @property
    def increment_exponent(self) -> float:
        """s = 2H - 1 in (0, 1); |u-v|^(s-1) is the singular factor."""
        return 2.0 * self.h - 1.0


@dataclass(frozen=True)
class DeterministicFn:
    """A deterministic function of time on [0, T].

    `constant` marks the known-constant case (enables exact shortcuts in
    callers and tests), `antiderivative` is an optional closed-form
    primitive of `fn`.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "f"
    constant: float | None = None
    antiderivative: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(self.fn(t), dtype=float)
        return np.broadcast_to(out, t.shape).copy() if out.shape != t.shape else out

    @classmethod
    def const(cls, c: float, name: str | None = None) -> "DeterministicFn":
        return cls(
            fn=lambda t, c=c: np.full_like(np.asarray(t, dtype=float), c),
            name=name or f"const[{c}]",
            constant=float(c),
            antiderivative=lambda t, c=c: c * np.asarray(t, dtype=float),
        )

    @classmethod
    def linear(cls, c: float, name: str | None = None) -> "DeterministicFn":
        return cls(
            fn=lambda t, c=c: c * np.asarray(t, dtype=float),
            name=name or f"linear[{c}]",
            antiderivative=lambda t, c=c: 0.5 * c * np.asarray(t, dtype=float) ** 2,
        )

    @classmethod
    def sinusoidal(cls, c: float, period: float, name: str | None = None) -> "DeterministicFn":
        """c * (1 + sin(2 pi t / period) / 2); nonvanishing for c != 0."""
        w = 2.0 * np.pi / period
        return cls(
            fn=lambda t, c=c, w=w: c * (1.0 + 0.5 * np.sin(w * np.asarray(t, dtype=float))),
            name=name or f"sinusoidal[{c}]",
            antiderivative=lambda t, c=c, w=w: c
            * (np.asarray(t, dtype=float) - 0.5 * np.cos(w * np.asarray(t, dtype=float)) / w + 0.5 / w),
        )


@dataclass(frozen=True)
class QuadratureSpec:
    """Panel count per axis, singularity treatment and refinement tolerance."""

    panels: int = 256
    scheme: str = SCHEME_POWER
    tol: float = 1e-8

    def __post_init__(self):
        if self.panels < 8:
            raise ValueError(f"panel count must be >= 8, got {self.panels!r}")
        if self.scheme not in (SCHEME_POWER, SCHEME_GRADED):
            raise ValueError(f"unknown singularity scheme {self.scheme!r}")
        if not self.tol > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tol!r}")


def rho(t, s, hurst: HurstModel):
    """Kernel H(2H-1)|t-s|^(2H-2); symmetric, positive, singular on t == s."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise ValueError("rho is defined for nonnegative times")
    gap = np.abs(t - s)
    if np.any(gap == 0.0):
        raise SingularKernelError(
            "rho(t, s) diverges on the diagonal t == s; integrate it with a "
            "singularity-aware quadrature instead of point evaluation"
        )
    h = hurst.h
    out = h * (2.0 * h - 1.0) * gap ** (2.0 * h - 2.0)
    return float(out) if out.ndim == 0 else out


def _unit_graded_gl(panels: int, order: int = 4, grade: float = 3.0):
    """Composite Gauss-Legendre nodes/weights on [0,1], panels graded toward 0."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    edges = (np.arange(panels + 1) / panels) ** grade
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    w = (half[:, None] * gw[None, :]).ravel()
    return x, w


def _kernel_transform_power(g, t_values: np.ndarray, hurst: HurstModel, panels: int):
    """A_g(t) = int_0^t rho(t, v) g(v) dv for each t, via w = (t-v)^s.

    Vectorized over t: A_g(t) = H t^s sum_j w_j g(t (1 - x_j^(1/s))).
    """
    s = hurst.increment_exponent
    x, w = _unit_graded_gl(panels, grade=2.0)
    shrink = 1.0 - x ** (1.0 / s)
    vals = g(t_values[:, None] * shrink[None, :])
    return hurst.h * t_values**s * (vals @ w)


def _kernel_transform_graded(g, t_values: np.ndarray, hurst: HurstModel, panels: int):
    """Same transform by product integration on a mesh graded toward v = t.

    The singular factor is integrated exactly per panel; g is taken at panel
    midpoints. Lower order than the power substitution, kept as the second
    route behind the QuadratureSpec scheme switch.
    """
    s = hurst.increment_exponent
    q = 3.0
    frac = (np.arange(panels + 1) / panels) ** q  # gap = t * frac, graded toward 0
    out = np.empty_like(t_values)
    for i, t in enumerate(t_values):
        gaps = t * frac
        piece = gaps[1:] ** s - gaps[:-1] ** s  # int of s*u^(s-1) over the panel
        v_mid = t - 0.5 * (gaps[1:] + gaps[:-1])
        out[i] = hurst.h * float(piece @ g(v_mid))
    return out


def kernel_transform(g, t, hurst: HurstModel, quad: QuadratureSpec):
    """int_0^t rho(t, v) g(v) dv, scheme chosen by the QuadratureSpec."""
    t_values = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_values < 0):
        raise ValueError("kernel transform needs t >= 0")
    transform = (
        _kernel_transform_power if quad.scheme == SCHEME_POWER else _kernel_transform_graded
    )
    pos = t_values > 0
    out = np.zeros_like(t_values)
    if np.any(pos):
        out[pos] = transform(g, t_values[pos], hurst, quad.panels)
    return float(out[0]) if np.isscalar(t) or np.asarray(t).ndim == 0 else out


def _inner_product_once(xi, eta, t: float, hurst: HurstModel, quad: QuadratureSpec, panels: int):
    ux, uw = _unit_graded_gl(panels, grade=3.0)
    u = t * ux
    wu = t * uw
    spec = QuadratureSpec(panels=max(panels, 8), scheme=quad.scheme, tol=quad.tol)
    a_eta = kernel_transform(eta, u, hurst, spec)
    if eta is xi:
        return 2.0 * float(wu @ (xi(u) * a_eta))
    a_xi = kernel_transform(xi, u, hurst, spec)
    return float(wu @ (xi(u) * a_eta + eta(u) * a_xi))


def inner_product(xi, eta, t: float, hurst: HurstModel, quad: QuadratureSpec) -> float:
    """<xi, eta>_t, splitting the square into the two triangles around u = v.

    Computed at half and full panel counts; if the refinement moves the value
    by more than the tolerance (relative to scale) the call fails rather than
    returning a silently unconverged number.
    """
    if not t > 0:
        raise ValueError(f"inner product needs t in (0, T], got {t!r}")
    coarse = _inner_product_once(xi, eta, t, hurst, quad, max(quad.panels // 2, 8))
    fine = _inner_product_once(xi, eta, t, hurst, quad, quad.panels)
    if abs(fine - coarse) > quad.tol * max(1.0, abs(fine)):
        raise QuadratureConvergenceError(coarse, fine, quad.tol)
    return fine


def norm_sq(xi, t: float, hurst: HurstModel, quad: QuadratureSpec) -> float:
    """||xi||_t^2 = <xi, xi>_t >= 0."""
    value = inner_product(xi, xi, t, hurst, quad)
    return max(value, 0.0)


def sigma2_hat(t, coeffs: "CoefficientSet", quad: QuadratureSpec | None = None):
    """sigma2_hat(t) = int_0^t rho(t, v) sigma2(v) dv."""
    return kernel_transform(coeffs.sigma2, t, coeffs.hurst, quad or coeffs.quad)


def c0_const(hurst: HurstModel, t_horizon: float) -> float:
    """Variance-bound constant C0(H, T) = H T^(2H-1)."""
    if not t_horizon > 0:
        raise ValueError("time horizon must be positive")
    return hurst.h * t_horizon ** (2.0 * hurst.h - 1.0)


def _gl_panel_integrals(f, nodes: np.ndarray, order: int = 8):
    """Integral of f over each grid panel by fixed-order Gauss-Legendre."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    a, b = nodes[:-1], nodes[1:]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = mid[:, None] + half[:, None] * gx[None, :]
    return (f(x) * gw[None, :]).sum(axis=1) * half


@dataclass(frozen=True)
class CoefficientSet:
    """Deterministic coefficients b, sigma1, sigma2 with cached kernel tables.

    Tables live on the shared simulation grid and are reused by every
    Monte-Carlo path and PDE step:

      norm_sq_table[k]      = ||sigma2||^2_{t_k}
      sigma2_hat_table[k]   = sigma2_hat(t_k)
      sigma1_sq_int_table[k]= int_0^{t_k} sigma1(s)^2 ds
      sigma_abs_sq_table[k] = |sigma|^2_{t_k}      (eq. sum of the above two)
      lam_table[k]          = d/dt |sigma|^2 at t_k
      b_int_table[k]        = trapezoid int_0^{t_k} b(s) ds  (matches the
                              path engine's drift discretization)

    d/dt ||sigma2||^2_t has two closed-form candidates, sigma2*sigma2_hat and
    2*sigma2*sigma2_hat; construction finite-differences the quadrature table
    and adopts whichever matches (the factor-2 form, for every coefficient
    family exercised here), failing loudly if neither does.
    """

    b: DeterministicFn
    sigma1: DeterministicFn
    sigma2: DeterministicFn
    T: float
    hurst: HurstModel
    grid: TimeGrid
    quad: QuadratureSpec
    norm_sq_table: np.ndarray = field(repr=False)
    sigma2_hat_table: np.ndarray = field(repr=False)
    sigma1_sq_int_table: np.ndarray = field(repr=False)
    sigma_abs_sq_table: np.ndarray = field(repr=False)
    lam_table: np.ndarray = field(repr=False)
    b_int_table: np.ndarray = field(repr=False)
    lambda_factor: float = 2.0
    fd_rel_error: float = 0.0

    @classmethod
    def build(
        cls,
        b: DeterministicFn,
        sigma1: DeterministicFn,
        sigma2: DeterministicFn,
        grid: TimeGrid,
        hurst: HurstModel,
        quad: QuadratureSpec | None = None,
        table_panels: int = 64,
    ) -> "CoefficientSet":
        quad = quad or QuadratureSpec()
        t = grid.nodes
        interior = t[1:]

        sig2_on_grid = sigma2(interior)
        sig1_on_grid = sigma1(interior)
        degenerate2 = bool(np.all(sig2_on_grid == 0.0))
        degenerate1 = bool(np.all(sig1_on_grid == 0.0))
        # relative threshold: a coefficient crossing zero lands near but not
        # exactly on 0.0 in floating point
        tiny2 = 1e-12 * max(np.abs(sig2_on_grid).max(), 1.0)
        tiny1 = 1e-12 * max(np.abs(sig1_on_grid).max(), 1.0)
        if not degenerate2 and np.any(np.abs(sig2_on_grid) <= tiny2):
            raise CoefficientError(f"sigma2={sigma2.name} vanishes inside (0, T]")
        if not degenerate1 and np.any(np.abs(sig1_on_grid) <= tiny1):
            raise CoefficientError(f"sigma1={sigma1.name} vanishes inside (0, T]")
        if not np.all(np.isfinite(sig1_on_grid)) or not np.all(np.isfinite(sig2_on_grid)):
            raise CoefficientError("sigma coefficients must be finite on (0, T]")

        table_quad = QuadratureSpec(panels=table_panels, scheme=quad.scheme, tol=quad.tol)

        s2hat = np.zeros_like(t)
        s2hat[1:] = kernel_transform(sigma2, interior, hurst, table_quad)

        nsq = np.zeros_like(t)
        if not degenerate2:
            for k in range(1, len(t)):
                nsq[k] = _inner_product_once(
                    sigma2, sigma2, t[k], hurst, table_quad, table_quad.panels
                )

        sig1_sq_int = np.zeros_like(t)
        sig1_sq_int[1:] = np.cumsum(
            _gl_panel_integrals(lambda x: sigma1(x) ** 2, t)
        )

        abs_sq = sig1_sq_int + nsq

        factor, fd_err = cls._select_lambda_factor(t, abs_sq, sigma1, sigma2, s2hat)
        lam = sigma1(t) ** 2 + factor * sigma2(t) * s2hat

        if np.any(lam[1:] <= 0.0):
            raise CoefficientError(
                "d/dt |sigma|^2 must be positive on (0, T]; "
                f"min over the grid is {lam[1:].min():.3e}"
            )
        if np.any(np.diff(abs_sq) <= 0.0):
            raise CoefficientError("|sigma|^2_t is not strictly increasing on the grid")

        b_int = np.zeros_like(t)
        b_vals = b(t)
        b_int[1:] = np.cumsum(0.5 * (b_vals[1:] + b_vals[:-1]) * np.diff(t))

        for arr in (nsq, s2hat, sig1_sq_int, abs_sq, lam, b_int):
            arr.setflags(write=False)

        return cls(
            b=b,
            sigma1=sigma1,
            sigma2=sigma2,
            T=grid.T,
            hurst=hurst,
            grid=grid,
            quad=quad,
            norm_sq_table=nsq,
            sigma2_hat_table=s2hat,
            sigma1_sq_int_table=sig1_sq_int,
            sigma_abs_sq_table=abs_sq,
            lam_table=lam,
            b_int_table=b_int,
            lambda_factor=factor,
            fd_rel_error=fd_err,
        )

    @staticmethod
    def _select_lambda_factor(t, abs_sq, sigma1, sigma2, s2hat):
        """Pick the d/dt||sigma2||^2 factor validated by finite differences."""
        fd = (abs_sq[2:] - abs_sq[:-2]) / (t[2:] - t[:-2])
        mid = t[1:-1]
        first = max(_FD_CHECK_FIRST_NODE - 1, 0)
        sl = slice(first, None)
        if not fd[sl].size:
            return 2.0, 0.0
        base = sigma2(mid) * s2hat[1:-1]
        if np.all(base == 0.0):
            return 2.0, 0.0
        best_factor, best_err = None, np.inf
        for factor in (1.0, 2.0):
            cand = sigma1(mid) ** 2 + factor * base
            err = np.max(np.abs(cand[sl] - fd[sl]) / np.maximum(np.abs(fd[sl]), 1e-300))
            if err < best_err:
                best_factor, best_err = factor, err
        # the central difference itself carries O(dt^2 lambda''/lambda) error,
        # so the tight gate applies only once the grid resolves it; coarse
        # grids still disambiguate the factor (a wrong factor shows up as an
        # O(1) relative error)
        rtol = _FD_CHECK_RTOL if len(t) - 1 >= 128 else 0.2
        if best_err > rtol:
            raise ConsistencyError(
                "neither candidate closed form for d/dt||sigma2||^2 matches the "
                f"finite-difference oracle (best factor {best_factor}, rel err {best_err:.3e})"
            )
        return best_factor, float(best_err)

    # -- interpolating accessors -------------------------------------------------

    def sigma_abs_sq(self, t) -> np.ndarray | float:
        """|sigma|^2_t = int_0^t sigma1^2 + ||sigma2||^2_t from the cached table."""
        out = np.interp(np.asarray(t, dtype=float), self.grid.nodes, self.sigma_abs_sq_table)
        return float(out) if np.asarray(t).ndim == 0 else out

    def lam(self, t) -> np.ndarray | float:
        """d/dt |sigma|^2_t via the adopted closed form."""
        t_arr = np.asarray(t, dtype=float)
        s2h = kernel_transform(self.sigma2, t_arr, self.hurst, self.quad)
        out = self.sigma1(t_arr) ** 2 + self.lambda_factor * self.sigma2(t_arr) * np.asarray(s2h)
        return float(out) if t_arr.ndim == 0 else out

    def export_tables(self, path):
        """Kernel tables as CSV (debug aid): t, norm_sq, sigma2_hat, sigma_abs_sq, lambda."""
        from .runio import write_csv

        rows = zip(
            self.grid.nodes,
            self.norm_sq_table,
            self.sigma2_hat_table,
            self.sigma_abs_sq_table,
            self.lam_table,
        )
        return write_csv(path, ("t", "norm_sq", "sigma2_hat", "sigma_abs_sq", "lambda"), rows)


def sigma_abs_sq(t, coeffs: CoefficientSet, quad: QuadratureSpec | None = None):
    """eq-(2) value |sigma|^2_t; table-backed."""
    return coeffs.sigma_abs_sq(t)


def lam(t, coeffs: CoefficientSet, quad: QuadratureSpec | None = None):
    """d/dt |sigma|^2_t using the finite-difference-validated closed form."""
    return coeffs.lam(t)


def c1_lower_bound(coeffs: CoefficientSet, t0: float, quad: QuadratureSpec | None = None) -> float:
    """min over grid nodes in [t0, T] of sigma2_hat(t) / sigma2(t).

    The ratio tends to 0 as t -> 0 for constant sigma2, so the infimum is
    taken away from the origin; t0 must sit in (0, T].
    """
    if not 0 < t0 <= coeffs.T:
        raise ValueError(f"t0 must lie in (0, T], got {t0!r}")
    nodes = coeffs.grid.nodes
    mask = nodes >= t0 - 1e-12 * coeffs.T
    mask &= nodes > 0
    sig2 = coeffs.sigma2(nodes[mask])
    if np.any(sig2 == 0.0):
        raise CoefficientError("sigma2 vanishes on [t0, T]; C1 is undefined")
    ratio = coeffs.sigma2_hat_table[mask] / sig2
    c1 = float(ratio.min())
    if c1 <= 0:
        raise CoefficientError(f"C1 lower bound must be positive, got {c1!r}")
    return c1
