from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    """Couplings, ancilla preparation, readout grids and Monte Carlo settings.

    All quantities are in shot-noise units (vacuum quadrature variance 1/2,
    hbar = 1). The effective couplings are ``kappa = sqrt(M) kappa1`` and
    ``gamma = sqrt(M) gamma1``; the interaction time is fixed by ``kappa_t``
    unless ``t_override`` is given.
    """

    M: int = 1000
    kappa1: float = 1.0
    gamma1: float = 10.0
    kappa_t: float = math.pi / 2
    t_override: Optional[float] = None
    ancilla_cutoff: int = 12
    pair_var: float = 0.5
    x_var: float = 0.05
    gdyne_noise: Optional[float] = None
    samples: int = 100_000
    seed: int = 0
    chunk: int = 65_536
    threads: int = 1
    grid_points: int = 121
    grid_halfwidth: float = 6.0
    homodyne_bins: int = 241
    homodyne_halfwidth_sd: float = 6.0
    max_exact_dim: int = 4096
    exact_M_cap: int = 6
    deficit_tol: float = 1e-3
    mass_tol: float = 1e-3
    store_outcomes: bool = False

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError("M must be a positive integer")
        if self.t_override is None and self.kappa1 <= 0:
            raise ConfigError("kappa1 must be positive when the time is set by kappa_t")
        if self.pair_var < 0.5 - 1e-12:
            raise ConfigError("pair ancilla variance below the vacuum level violates var_q var_p >= 1/4")
        if self.x_var <= 0:
            raise ConfigError("x ancilla variance must be positive")
        if self.samples < 1 or self.chunk < 1:
            raise ConfigError("samples and chunk must be positive")
        if self.ancilla_cutoff < 2:
            raise ConfigError("ancilla_cutoff must be at least 2")

    @property
    def kappa(self) -> float:
        return math.sqrt(self.M) * self.kappa1

    @property
    def gamma(self) -> float:
        return math.sqrt(self.M) * self.gamma1

    @property
    def t(self) -> float:
        if self.t_override is not None:
            return float(self.t_override)
        return self.kappa_t / self.kappa

    @property
    def gamma_t(self) -> float:
        return self.gamma * self.t

    @property
    def x_var_p(self) -> float:
        return 1.0 / (4.0 * self.x_var)

    def replace(self, **kw) -> "SchemeConfig":
        d = asdict(self)
        d.update(kw)
        return SchemeConfig(**d)

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    """Outcome of a simulated measurement.

    ``V`` is the empirical error matrix E[(beta_hat - beta)(beta_hat - beta)^T]
    and ``scaled_error`` is ``n_copies * tr(W V)``.
    """

    V: np.ndarray
    scaled_error: float
    scaled_error_se: float
    n_copies: int
    M: int
    bias: np.ndarray
    readout_mean: np.ndarray
    readout_cov: np.ndarray
    samples: int
    engine: str
    outcomes: Optional[np.ndarray] = None
    beta_hat: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "engine": self.engine,
            "M": self.M,
            "n_copies": self.n_copies,
            "samples": self.samples,
            "scaled_error": self.scaled_error,
            "scaled_error_se": self.scaled_error_se,
            "V": np.asarray(self.V).tolist(),
            "bias": np.asarray(self.bias).tolist(),
            "readout_mean": np.asarray(self.readout_mean).tolist(),
            "readout_cov": np.asarray(self.readout_cov).tolist(),
            "diagnostics": _jsonable(self.diagnostics),
            "config": _jsonable(self.config),
        }

    def outcomes_csv(self) -> str:
        if self.outcomes is None:
            raise ValueError("outcomes were not stored; set store_outcomes")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n_out = self.outcomes.shape[1]
        n_b = self.beta_hat.shape[1]
        w.writerow([f"readout_{i}" for i in range(n_out)] + [f"beta_hat_{j}" for j in range(n_b)])
        for row_o, row_b in zip(self.outcomes, self.beta_hat):
            w.writerow([repr(float(v)) for v in row_o] + [repr(float(v)) for v in row_b])
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj
