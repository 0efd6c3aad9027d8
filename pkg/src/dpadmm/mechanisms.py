"""Noise calibration and sampling for the Laplace and Gaussian mechanisms.

Noise scales are derived from the worst-case change of the local
subgradient between neighboring datasets (objective perturbation) or of
the released iterate itself (output perturbation). Sampling is
deterministic given the caller's random stream.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

LAPLACE = "laplace"
GAUSSIAN = "gaussian"
NONE = "none"

OBJECTIVE = "objective"
OUTPUT = "output"


class MechanismError(ValueError):
    pass


@dataclass(frozen=True)
class SensitivityRecord:
    """Worst-case L1/L2 change of the protected quantity between neighbors."""

    l1: float
    l2: float

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0:
            raise MechanismError("sensitivities must be nonnegative")
        if self.l2 > self.l1 * (1 + 1e-12):
            raise MechanismError("l2 sensitivity cannot exceed l1")


@dataclass(frozen=True)
class StepContext:
    """Identifies one local solve so iterate-dependent sensitivities can plug in."""

    t: int
    e: int
    p: int
    z: np.ndarray
    eta: float
    rho: float


SensitivitySource = Callable[[StepContext], SensitivityRecord]


def constant_sensitivity(record: SensitivityRecord) -> SensitivitySource:
    return lambda ctx: record


@dataclass
class MechanismConfig:
    """Which distribution to draw from, at what privacy level, injected where.

    ``epsilon_bar`` may be ``inf`` for the non-private mode, in which case
    no noise is drawn regardless of ``kind``.
    """

    kind: str
    epsilon_bar: float
    delta_bar: float = 0.0
    mode: str = OBJECTIVE
    sensitivity: SensitivitySource | SensitivityRecord | None = None

    def __post_init__(self):
        if isinstance(self.sensitivity, SensitivityRecord):
            self.sensitivity = constant_sensitivity(self.sensitivity)
        if self.kind not in (LAPLACE, GAUSSIAN, NONE):
            raise MechanismError(f"unknown mechanism kind {self.kind!r}")
        if self.mode not in (OBJECTIVE, OUTPUT):
            raise MechanismError(f"unknown perturbation mode {self.mode!r}")
        if self.epsilon_bar <= 0:
            raise MechanismError("epsilon_bar must be positive (inf for non-private)")
        if self.kind == GAUSSIAN:
            if not 0.0 < self.delta_bar < 1.0:
                raise MechanismError("gaussian mechanism requires delta_bar in (0, 1)")
            if 1.0 < self.epsilon_bar < math.inf:
                # the gaussian tail bound behind the calibration is proven
                # for per-step budgets at most 1
                warnings.warn(
                    "gaussian calibration is only justified for epsilon_bar <= 1",
                    stacklevel=2,
                )
        elif self.delta_bar != 0.0:
            raise MechanismError(f"{self.kind} mechanism forces delta_bar = 0")

    @property
    def is_private(self) -> bool:
        return self.kind != NONE and math.isfinite(self.epsilon_bar)

    @classmethod
    def non_private(cls) -> "MechanismConfig":
        return cls(kind=NONE, epsilon_bar=math.inf)


@dataclass(frozen=True)
class NoiseParameters:
    scale_or_sigma: float
    variance: float


def noise_parameters(config: MechanismConfig, sensitivity: SensitivityRecord) -> NoiseParameters:
    """Per-coordinate scale and variance of the calibrated distribution.

    Laplace: scale b = l1/eps, variance 2 b^2.
    Gaussian: sigma^2 = 2 ln(1.25/delta) (l2/eps)^2.
    """
    if not math.isfinite(config.epsilon_bar) or config.epsilon_bar <= 0:
        raise MechanismError("noise_parameters requires a finite positive epsilon_bar")
    if config.kind == LAPLACE:
        b = sensitivity.l1 / config.epsilon_bar
        return NoiseParameters(scale_or_sigma=b, variance=2.0 * b * b)
    if config.kind == GAUSSIAN:
        if config.delta_bar <= 0:
            raise MechanismError("gaussian mechanism requires delta_bar > 0")
        var = 2.0 * math.log(1.25 / config.delta_bar) * (sensitivity.l2 / config.epsilon_bar) ** 2
        return NoiseParameters(scale_or_sigma=math.sqrt(var), variance=var)
    raise MechanismError("no noise parameters for the non-private mechanism")


def _laplace_inverse_cdf(u: np.ndarray, scale: float) -> np.ndarray:
    # u uniform on (-1/2, 1/2); the two-sided exponential quantile function
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def sample_noise(
    config: MechanismConfig,
    sensitivity: SensitivityRecord,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """n IID zero-mean draws from the configured distribution.

    Laplace draws go through the inverse CDF of a uniform stream so the
    moments are reproducible from the stream alone; Gaussian draws scale
    a standard normal. Non-private configurations return zeros without
    consuming the stream.
    """
    if not config.is_private:
        return np.zeros(n)
    params = noise_parameters(config, sensitivity)
    if params.scale_or_sigma == 0.0:
        return np.zeros(n)
    if config.kind == LAPLACE:
        u = rng.random(n) - 0.5
        return _laplace_inverse_cdf(u, params.scale_or_sigma)
    return params.scale_or_sigma * rng.standard_normal(n)


def perturb_output(
    true_iterate: np.ndarray,
    config: MechanismConfig,
    sensitivity: SensitivityRecord,
    rng: np.random.Generator,
) -> np.ndarray:
    """Add calibrated noise to an already-solved iterate without projecting.

    The result can land outside the feasible set; that is the point of
    contrast with objective perturbation.
    """
    return true_iterate + sample_noise(config, sensitivity, true_iterate.shape[0], rng)


def empirical_dp_ratio(
    config: MechanismConfig,
    sensitivity: SensitivityRecord,
    output_shift: float,
    rng: np.random.Generator,
    draws: int = 10**5,
    bins: int = 50,
) -> float:
    """Worst binned log-likelihood ratio between two neighboring outputs.

    Simulates the scalar mechanism on two datasets whose true outputs
    differ by ``output_shift`` (at most the calibrated sensitivity),
    histograms both samples over shared equal-probability bins, and
    returns max |ln(h1/h2)| over bins populated on both sides. Up to
    sampling noise of order sqrt(bins/draws), the result is bounded by
    the privacy budget.
    """
    a = sample_noise(config, sensitivity, draws, rng)
    b = output_shift + sample_noise(config, sensitivity, draws, rng)
    pooled = np.concatenate([a, b])
    edges = np.quantile(pooled, np.linspace(0.0, 1.0, bins + 1))
    edges[0] -= 1e-12
    edges[-1] += 1e-12
    h1, _ = np.histogram(a, edges)
    h2, _ = np.histogram(b, edges)
    mask = (h1 > 0) & (h2 > 0)
    return float(np.abs(np.log(h1[mask] / h2[mask])).max())


TOTAL = "total"
PER_COORDINATE_MEAN = "per_coordinate_mean"


def noise_magnitude(draws: Iterable[np.ndarray], normalization: str = TOTAL) -> float:
    """Aggregate absolute noise injected in a round.

    ``total`` sums |xi| over every draw and coordinate; ``per_coordinate_mean``
    first averages each draw over its coordinates, then sums over draws.
    """
    if normalization == TOTAL:
        return float(sum(np.abs(d).sum() for d in draws))
    if normalization == PER_COORDINATE_MEAN:
        return float(sum(np.abs(d).mean() for d in draws))
    raise MechanismError(f"unknown normalization {normalization!r}")
