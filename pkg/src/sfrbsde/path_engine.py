"""Matched Brownian / fractional-Brownian path ensembles and Wiener integrals.

Paths are sampled on a shared uniform grid from per-path counter-based RNG
streams (Philox keyed by (master seed, purpose), counter block = path index),
so results are bit-reproducible regardless of how path generation is chunked
across workers.  B and B^H come from distinct purposes and are therefore
independent.

Two exact fBm samplers are provided: Cholesky factorization of the node
covariance (reference) and Davies-Harte circulant embedding of the increment
autocovariance (fast path for long grids).  Both target the covariance
(1/2)(t^2H + s^2H - |t-s|^2H).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import EmbeddingError, FactorizationError
from .frac_kernel import CoefficientSet, HurstModel
from .grids import TimeGrid

_PURPOSE_BM = 1
_PURPOSE_FBM = 2

# Cholesky is the correctness anchor; circulant embedding takes over where
# an n^2 factor row per path starts to hurt.
CHOLESKY_MAX_STEPS = 512


@dataclass(frozen=True)
class RngSpec:
    """Master seed plus stream id; one sub-stream per path."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.stream < 0:
            raise ValueError("stream id must be nonnegative")

    def generator(self, purpose: int, path: int) -> np.random.Generator:
        key = np.array([self.seed, purpose], dtype=np.uint64)
        counter = np.array([0, 0, 0, self.stream + path], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass
class PathEnsemble:
    """Monte-Carlo paths of (B, B^H) and optionally eta on a shared grid."""

    grid: TimeGrid
    n_paths: int
    rng: RngSpec
    hurst: HurstModel | None = None
    B: np.ndarray | None = None
    BH: np.ndarray | None = None
    eta: np.ndarray | None = None
    epsilon: float | None = None
    fbm_method: str | None = None

    def __post_init__(self):
        for name in ("B", "BH"):
            arr = getattr(self, name)
            if arr is not None:
                if arr.shape != (self.n_paths, self.grid.n_nodes):
                    raise ValueError(f"{name} has shape {arr.shape}, expected "
                                     f"{(self.n_paths, self.grid.n_nodes)}")
                if np.any(arr[:, 0] != 0.0):
                    raise ValueError(f"{name} paths must start at 0")

    def with_eta(self, eta: np.ndarray, epsilon: float) -> "PathEnsemble":
        return replace(self, eta=eta, epsilon=epsilon)


def _fill_rows(fill_chunk, n_paths: int, workers: int = 1):
    """Run fill_chunk(lo, hi) over path ranges, optionally on threads.

    Each chunk writes disjoint rows keyed by absolute path index, so the
    result is identical for any worker count or schedule.
    """
    if workers <= 1 or n_paths < 256:
        fill_chunk(0, n_paths)
        return
    chunk = -(-n_paths // workers)
    bounds = [(lo, min(lo + chunk, n_paths)) for lo in range(0, n_paths, chunk)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda ab: fill_chunk(*ab), bounds))


def bm_paths(grid: TimeGrid, n_paths: int, rng: RngSpec, workers: int = 1) -> PathEnsemble:
    """Standard Brownian paths: independent N(0, dt) increments, summed."""
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    n = grid.n_steps
    sqrt_dt = np.sqrt(grid.dt)
    B = np.zeros((n_paths, n + 1))

    def fill(lo, hi):
        for p in range(lo, hi):
            gen = rng.generator(_PURPOSE_BM, p)
            B[p, 1:] = np.cumsum(sqrt_dt * gen.standard_normal(n))

    _fill_rows(fill, n_paths, workers)
    return PathEnsemble(grid=grid, n_paths=n_paths, rng=rng, B=B)


def fbm_covariance(nodes: np.ndarray, hurst: HurstModel) -> np.ndarray:
    """Gamma_jk = (1/2)(t_j^2H + t_k^2H - |t_j - t_k|^2H)."""
    two_h = hurst.two_h
    t = np.asarray(nodes, dtype=float)
    return 0.5 * (t[:, None] ** two_h + t[None, :] ** two_h
                  - np.abs(t[:, None] - t[None, :]) ** two_h)


def fbm_cholesky(grid: TimeGrid, hurst: HurstModel, n_paths: int, rng: RngSpec,
                 workers: int = 1) -> PathEnsemble:
    """Exact fBm samples via lower-triangular factorization of the covariance."""
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    n = grid.n_steps
    cov = fbm_covariance(grid.nodes[1:], hurst)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(cov + 1e-12 * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(
                "fBm covariance is not positive definite even after adding "
                "1e-12 * I jitter once; aborting"
            ) from exc

    Z = np.empty((n_paths, n))

    def fill(lo, hi):
        for p in range(lo, hi):
            Z[p] = rng.generator(_PURPOSE_FBM, p).standard_normal(n)

    _fill_rows(fill, n_paths, workers)
    BH = np.zeros((n_paths, n + 1))
    BH[:, 1:] = Z @ chol.T
    return PathEnsemble(grid=grid, n_paths=n_paths, rng=rng, hurst=hurst, BH=BH,
                        fbm_method="cholesky")


def fbm_increment_autocov(lag, hurst: HurstModel, dt: float = 1.0):
    """gamma(k) = (1/2) dt^2H (|k+1|^2H - 2|k|^2H + |k-1|^2H)."""
    k = np.abs(np.asarray(lag, dtype=float))
    two_h = hurst.two_h
    out = 0.5 * dt**two_h * ((k + 1) ** two_h - 2 * k**two_h + np.abs(k - 1) ** two_h)
    return float(out) if out.ndim == 0 else out


def circulant_eigenvalues(n_steps: int, hurst: HurstModel, dt: float) -> np.ndarray:
    """Eigenvalues of the 2n circulant embedding of the increment autocovariance."""
    gamma = fbm_increment_autocov(np.arange(n_steps + 1), hurst, dt)
    first_row = np.concatenate([gamma[:-1], gamma[-1:], gamma[-2:0:-1]])
    eig = np.fft.fft(first_row).real
    if eig.min() < -1e-10:
        raise EmbeddingError(
            f"circulant embedding produced eigenvalue {eig.min():.3e} < -1e-10; "
            "this cannot happen for fBm increments and signals a bug"
        )
    return np.maximum(eig, 0.0)


def fbm_circulant(grid: TimeGrid, hurst: HurstModel, n_paths: int, rng: RngSpec,
                  workers: int = 1) -> PathEnsemble:
    """Davies-Harte sampling: stationary increments via circulant embedding."""
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    n = grid.n_steps
    m = 2 * n
    sqrt_eig = np.sqrt(circulant_eigenvalues(n, hurst, grid.dt))
    BH = np.zeros((n_paths, n + 1))

    def fill(lo, hi):
        # complex Hermitian-symmetric normals per path; FFT in path blocks
        block = 4096
        for start in range(lo, hi, block):
            stop = min(start + block, hi)
            y = np.empty((stop - start, m), dtype=complex)
            for p in range(start, stop):
                u = rng.generator(_PURPOSE_FBM, p).standard_normal(m)
                row = y[p - start]
                row[0] = u[0]
                row[n] = u[1]
                row[1:n] = (u[2::2] + 1j * u[3::2]) / np.sqrt(2.0)
                row[m - 1:n:-1] = np.conj(row[1:n])
            incr = (np.fft.fft(sqrt_eig * y, axis=1).real / np.sqrt(m))[:, :n]
            BH[start:stop, 1:] = np.cumsum(incr, axis=1)

    _fill_rows(fill, n_paths, workers)
    return PathEnsemble(grid=grid, n_paths=n_paths, rng=rng, hurst=hurst, BH=BH,
                        fbm_method="circulant")


def make_ensemble(grid: TimeGrid, hurst: HurstModel, n_paths: int, rng: RngSpec,
                  method: str = "auto", workers: int = 1) -> PathEnsemble:
    """Matched (B, B^H) draws from independent purposes under one seed."""
    if method == "auto":
        method = "cholesky" if grid.n_steps <= CHOLESKY_MAX_STEPS else "circulant"
    if method == "cholesky":
        frac = fbm_cholesky(grid, hurst, n_paths, rng, workers)
    elif method == "circulant":
        frac = fbm_circulant(grid, hurst, n_paths, rng, workers)
    else:
        raise ValueError(f"unknown fbm method {method!r}")
    bm = bm_paths(grid, n_paths, rng, workers)
    return PathEnsemble(grid=grid, n_paths=n_paths, rng=rng, hurst=hurst,
                        B=bm.B, BH=frac.BH, fbm_method=frac.fbm_method)


def wiener_integral_det(xi, ensemble: PathEnsemble, which: str = "BH") -> np.ndarray:
    """Per-path forward sum  sum_k xi(t_k) (W_{k+1} - W_k).

    For deterministic xi the Skorohod correction vanishes, so this converges
    to the Ito-Skorohod integral: mean 0, variance int xi^2 ds for B and
    ||xi||_T^2 for B^H.
    """
    if which not in ("B", "BH"):
        raise ValueError("which must be 'B' or 'BH'")
    W = ensemble.B if which == "B" else ensemble.BH
    if W is None:
        raise ValueError(f"ensemble carries no {which} paths")
    weights = np.asarray(xi(ensemble.grid.nodes[:-1]), dtype=float)
    return np.diff(W, axis=1) @ weights


@dataclass(frozen=True)
class VarBoundReport:
    """Empirical left side vs the C0 bound, with its Monte-Carlo margin."""

    lhs: float
    rhs: float
    stderr: float
    holds: bool


def check_lemma_var_bound(xi, ensemble: PathEnsemble) -> VarBoundReport:
    """E[(int |xi| dB^H)^2] <= C0 int xi^2 ds + C0 T^2, C0 = H T^(2H-1)."""
    if ensemble.hurst is None:
        raise ValueError("ensemble carries no Hurst model")
    from .frac_kernel import c0_const, _gl_panel_integrals

    grid = ensemble.grid
    abs_xi = lambda t: np.abs(np.asarray(xi(t), dtype=float))
    integral = wiener_integral_det(abs_xi, ensemble, "BH")
    sq = integral**2
    lhs = float(sq.mean())
    stderr = float(sq.std(ddof=1) / np.sqrt(ensemble.n_paths))
    c0 = c0_const(ensemble.hurst, grid.T)
    xi_sq_int = float(_gl_panel_integrals(lambda t: np.asarray(xi(t)) ** 2, grid.nodes).sum())
    rhs = c0 * xi_sq_int + c0 * grid.T**2
    return VarBoundReport(lhs=lhs, rhs=rhs, stderr=stderr, holds=lhs <= rhs + 3.0 * stderr)


def simulate_eta(coeffs: CoefficientSet, ensemble: PathEnsemble, epsilon: float,
                 eta0: float = 0.0) -> np.ndarray:
    """Forward process on the grid:

        eta^eps_t = eta0 + eps^2H int_0^t b ds
                         + eps^H sum sigma1(t_k) dB_k
                         + eps^H sum sigma2(t_k) dBH_k.

    eps = 1 recovers the unscaled process.  All eps values reuse the same
    (B, BH) draws, so sweeps are common-random-number coupled by design.
    """
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon!r}")
    if ensemble.B is None or ensemble.BH is None:
        raise ValueError("ensemble must carry matched B and BH paths")
    grid = ensemble.grid
    two_h = coeffs.hurst.two_h
    left = grid.nodes[:-1]
    s1 = np.asarray(coeffs.sigma1(left), dtype=float)
    s2 = np.asarray(coeffs.sigma2(left), dtype=float)
    eta = np.empty((ensemble.n_paths, grid.n_nodes))
    eta[:, 0] = eta0
    drift = epsilon**two_h * coeffs.b_int_table[1:]
    noise = np.cumsum(np.diff(ensemble.B, axis=1) * s1, axis=1)
    noise += np.cumsum(np.diff(ensemble.BH, axis=1) * s2, axis=1)
    eta[:, 1:] = eta0 + drift + epsilon**coeffs.hurst.h * noise
    return eta
