"""Experiment configuration: flat key=value files, presets, validation.

The file format is intentionally primitive — one `key = value` per line,
`#` comments — so configs stay language-neutral and diff-friendly.  Parsing
validates every field and reports ALL violations at once.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields
from typing import Callable

import numpy as np

from .bsde_solver import Generator, PdeConfig, TerminalCondition
from .errors import ConfigError
from .frac_kernel import CoefficientSet, DeterministicFn, HurstModel, QuadratureSpec
from .grids import TimeGrid
from .path_engine import RngSpec

OUT_DIR_ENV = "SFRBSDE_OUT"

_COEFF_PRESETS = ("constant", "linear", "sinusoidal")
_GENERATOR_PRESETS = ("benchmark", "zero", "constant", "linear_y")
_TERMINAL_PRESETS = ("square", "identity")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment parameters; see DEFAULTS for the documented values."""

    h: float = 0.75
    t_horizon: float = 1.0
    n_time: int = 256
    n_space: int = 256
    n_paths: int = 10_000
    eps_list: tuple = (0.5, 0.35, 0.25, 0.18, 0.125)
    beta: float = 0.25
    delta1: float = 0.01
    delta2: float = 0.0          # 0 means auto: 2 sqrt(max sup-MSE)
    t0: float = 0.0              # 0 means auto: t_horizon / 100
    seed: int = 42
    eta0: float = 1.0
    epsilon: float = 1.0         # used by `solve`
    t_probe: float = 0.5
    generator: str = "benchmark"
    gen_a: float = 0.5
    gen_b: float = 0.25
    gen_c: float = 0.25
    gen_d: float = 0.1
    terminal: str = "square"
    b: str = "constant:0"
    sigma1: str = "constant:1"
    sigma2: str = "constant:1"
    kappa: float = 6.0
    theta: float = 0.5
    picard_max_iter: int = 8
    picard_tol: float = 1e-10
    quad_panels: int = 256
    quad_scheme: str = "power-substitution"
    quad_tol: float = 1e-8
    fbm_method: str = "auto"
    out_dir: str = ""            # empty means $SFRBSDE_OUT or ./out
    workers: int = 0             # 0 means all available cores

    # -- derived builders ---------------------------------------------------------

    def hurst(self) -> HurstModel:
        return HurstModel(self.h)

    def grid(self) -> TimeGrid:
        return TimeGrid(T=self.t_horizon, n_steps=self.n_time)

    def quad(self) -> QuadratureSpec:
        return QuadratureSpec(panels=self.quad_panels, scheme=self.quad_scheme,
                              tol=self.quad_tol)

    def pde(self) -> PdeConfig:
        return PdeConfig(kappa=self.kappa, n_space=self.n_space, theta=self.theta,
                         picard_max_iter=self.picard_max_iter,
                         picard_tol=self.picard_tol)

    def rng(self) -> RngSpec:
        return RngSpec(seed=self.seed)

    def resolved_t0(self) -> float:
        return self.t0 if self.t0 > 0 else self.t_horizon / 100.0

    def resolved_delta2(self) -> float | None:
        return self.delta2 if self.delta2 > 0 else None

    def resolved_out_dir(self) -> str:
        return self.out_dir or os.environ.get(OUT_DIR_ENV, "out")

    def resolved_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def coefficient_fn(self, which: str) -> DeterministicFn:
        return parse_coefficient(getattr(self, which), self.t_horizon, name=which)

    def coefficient_set(self) -> CoefficientSet:
        return CoefficientSet.build(
            b=self.coefficient_fn("b"),
            sigma1=self.coefficient_fn("sigma1"),
            sigma2=self.coefficient_fn("sigma2"),
            grid=self.grid(),
            hurst=self.hurst(),
            quad=self.quad(),
        )

    def make_generator(self) -> Generator:
        return parse_generator(self.generator, self.t_horizon,
                               (self.gen_a, self.gen_b, self.gen_c, self.gen_d))

    def make_terminal(self) -> TerminalCondition:
        return TerminalCondition.square() if self.terminal == "square" \
            else TerminalCondition.identity()

    # -- serialization ------------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "eps_list":
                value = ",".join(repr(float(e)) for e in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def parse_coefficient(text: str, t_horizon: float, name: str = "coeff") -> DeterministicFn:
    """Presets: 'constant:c', 'linear:c' (c*t), 'sinusoidal:c'."""
    kind, _, arg = text.partition(":")
    kind = kind.strip()
    try:
        value = float(arg) if arg.strip() else 1.0
    except ValueError:
        raise ConfigError([f"{name}: cannot parse preset argument {arg!r}"])
    if kind == "constant":
        return DeterministicFn.const(value, name=f"{name}:{text}")
    if kind == "linear":
        return DeterministicFn.linear(value, name=f"{name}:{text}")
    if kind == "sinusoidal":
        return DeterministicFn.sinusoidal(value, t_horizon, name=f"{name}:{text}")
    raise ConfigError([f"{name}: unknown coefficient preset {kind!r} "
                       f"(legal: {', '.join(_COEFF_PRESETS)})"])


def benchmark_generator(T: float, a: float = 0.5, b: float = 0.25, c: float = 0.25,
                        d: float = 0.1) -> Generator:
    """f(s, x, y, z1, z2) = (1 + sin(2 pi s / T)) (a y + b z1 + c z2 + d).

    Squared-Lipschitz constant L = 4 (a^2 + b^2 + c^2): the modulation factor reaches
    2, so the squared constant carries its square.  The averaging-deviation
    functional is
    bounded (sin^2 window averages), and the time average is available in
    closed form for oracle tests.
    """
    w = 2.0 * np.pi / T

    def fn(t, x, y, z1, z2):
        y = np.asarray(y, dtype=float)
        return (1.0 + np.sin(w * t)) * (a * y + b * np.asarray(z1) + c * np.asarray(z2) + d)

    return Generator(fn=fn, name="benchmark", lipschitz_sq=4.0 * (a**2 + b**2 + c**2))


def benchmark_fbar(a: float = 0.5, b: float = 0.25, c: float = 0.25, d: float = 0.1):
    """Closed-form time average of the benchmark generator (sin averages to 0)."""

    def fn(x, y, z1, z2):
        return a * np.asarray(y, dtype=float) + b * np.asarray(z1) + c * np.asarray(z2) + d

    return fn


def parse_generator(text: str, t_horizon: float, bench_params) -> Generator:
    kind, _, arg = text.partition(":")
    kind = kind.strip()
    if kind == "benchmark":
        return benchmark_generator(t_horizon, *bench_params)
    if kind == "zero":
        return Generator.zero()
    if kind == "constant":
        v = float(arg) if arg.strip() else 0.0
        return Generator(fn=lambda t, x, y, z1, z2, v=v: np.full_like(np.asarray(y, dtype=float), v),
                         name=f"constant[{v}]", lipschitz_sq=0.0, time_dependent=False)
    if kind == "linear_y":
        r = float(arg) if arg.strip() else 0.1
        return Generator.linear_y(r)
    raise ConfigError([f"generator: unknown preset {kind!r} "
                       f"(legal: {', '.join(_GENERATOR_PRESETS)})"])


_INT_FIELDS = {"n_time", "n_space", "n_paths", "seed", "picard_max_iter",
               "quad_panels", "workers"}
_FLOAT_FIELDS = {"h", "t_horizon", "beta", "delta1", "delta2", "t0", "eta0",
                 "epsilon", "t_probe", "gen_a", "gen_b", "gen_c", "gen_d",
                 "kappa", "theta", "picard_tol", "quad_tol"}
_STR_FIELDS = {"generator", "terminal", "b", "sigma1", "sigma2", "quad_scheme",
               "fbm_method", "out_dir"}


def _validate(cfg: ExperimentConfig) -> list[str]:
    bad = []
    if not (0.5 < cfg.h < 1.0):
        bad.append(f"h: H must lie in (0.5, 1), got {cfg.h!r}")
    if not cfg.t_horizon > 0:
        bad.append(f"t_horizon: must be > 0, got {cfg.t_horizon!r}")
    if cfg.n_time < 2:
        bad.append(f"n_time: must be >= 2, got {cfg.n_time!r}")
    if cfg.n_space < 64:
        bad.append(f"n_space: must be >= 64, got {cfg.n_space!r}")
    if cfg.n_paths < 1000:
        bad.append(f"n_paths: must be >= 1000 for probabilistic checks, got {cfg.n_paths!r}")
    if not cfg.eps_list:
        bad.append("eps_list: must not be empty")
    else:
        if any(not 0 < e <= 1 for e in cfg.eps_list):
            bad.append(f"eps_list: all values must lie in (0, 1], got {cfg.eps_list!r}")
        if any(not a > b for a, b in zip(cfg.eps_list, cfg.eps_list[1:])):
            bad.append(f"eps_list: values must be strictly decreasing, got {cfg.eps_list!r}")
    if not (0.0 <= cfg.beta < 1.0):
        bad.append(f"beta: must lie in [0, 1), got {cfg.beta!r}")
    elif 0.5 < cfg.h < 1.0 and cfg.beta >= 1.0 / (2.0 * cfg.h):
        bad.append(f"beta: must satisfy beta < 1/(2H) = {1.0 / (2.0 * cfg.h):.6g}, "
                   f"got {cfg.beta!r}")
    if not cfg.delta1 > 0:
        bad.append(f"delta1: must be > 0, got {cfg.delta1!r}")
    if cfg.delta2 < 0:
        bad.append(f"delta2: must be >= 0 (0 selects auto), got {cfg.delta2!r}")
    if cfg.t0 < 0 or cfg.t0 > cfg.t_horizon:
        bad.append(f"t0: must lie in [0, T] (0 selects auto T/100), got {cfg.t0!r}")
    if not 0 <= cfg.seed < 2**64:
        bad.append(f"seed: must fit in 64 bits, got {cfg.seed!r}")
    if not 0 < cfg.epsilon <= 1:
        bad.append(f"epsilon: must lie in (0, 1], got {cfg.epsilon!r}")
    if not 0 <= cfg.t_probe < cfg.t_horizon:
        bad.append(f"t_probe: must lie in [0, T), got {cfg.t_probe!r}")
    if cfg.kappa < 4:
        bad.append(f"kappa: must be >= 4, got {cfg.kappa!r}")
    if not 0.0 <= cfg.theta <= 1.0:
        bad.append(f"theta: must lie in [0, 1], got {cfg.theta!r}")
    if cfg.picard_max_iter < 1:
        bad.append(f"picard_max_iter: must be >= 1, got {cfg.picard_max_iter!r}")
    if not cfg.picard_tol > 0:
        bad.append(f"picard_tol: must be > 0, got {cfg.picard_tol!r}")
    if cfg.quad_panels < 8:
        bad.append(f"quad_panels: must be >= 8, got {cfg.quad_panels!r}")
    if cfg.quad_scheme not in ("power-substitution", "graded-mesh"):
        bad.append(f"quad_scheme: must be power-substitution or graded-mesh, "
                   f"got {cfg.quad_scheme!r}")
    if not cfg.quad_tol > 0:
        bad.append(f"quad_tol: must be > 0, got {cfg.quad_tol!r}")
    if cfg.fbm_method not in ("auto", "cholesky", "circulant"):
        bad.append(f"fbm_method: must be auto, cholesky or circulant, got {cfg.fbm_method!r}")
    if cfg.workers < 0:
        bad.append(f"workers: must be >= 0 (0 selects all cores), got {cfg.workers!r}")
    for field_name in ("generator", "b", "sigma1", "sigma2"):
        try:
            if field_name == "generator":
                parse_generator(getattr(cfg, field_name), max(cfg.t_horizon, 1e-9),
                                (cfg.gen_a, cfg.gen_b, cfg.gen_c, cfg.gen_d))
            else:
                parse_coefficient(getattr(cfg, field_name), max(cfg.t_horizon, 1e-9),
                                  name=field_name)
        except (ConfigError, ValueError) as exc:
            bad.append(str(exc))
    if cfg.terminal not in _TERMINAL_PRESETS:
        bad.append(f"terminal: must be one of {', '.join(_TERMINAL_PRESETS)}, "
                   f"got {cfg.terminal!r}")
    return bad


def config_from_mapping(raw: dict) -> ExperimentConfig:
    """Typed, fully-validated config from string key/values; collects all errors."""
    known = {f.name for f in fields(ExperimentConfig)}
    violations = [f"unknown key {k!r}" for k in raw if k not in known]
    values = {}
    for key, text in raw.items():
        if key not in known:
            continue
        text = text.strip()
        try:
            if key == "eps_list":
                values[key] = tuple(float(tok) for tok in text.split(",") if tok.strip())
            elif key in _INT_FIELDS:
                values[key] = int(text)
            elif key in _FLOAT_FIELDS:
                values[key] = float(text)
            elif key in _STR_FIELDS:
                values[key] = text
        except ValueError:
            violations.append(f"{key}: cannot parse value {text!r}")
    # range-check whatever parsed so one pass reports every problem
    cfg = ExperimentConfig(**values)
    violations.extend(_validate(cfg))
    if violations:
        raise ConfigError(violations)
    return cfg


def parse_config(path) -> ExperimentConfig:
    """Parse a flat key=value file; unknown keys and every range violation
    are reported together."""
    raw = {}
    violations = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                violations.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
                continue
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key in raw:
                violations.append(f"line {lineno}: duplicate key {key!r}")
                continue
            raw[key] = value.strip()
    if violations:
        raise ConfigError(violations)
    return config_from_mapping(raw)
