"""Asymptotic quantities for the plug-in Neyman allocation under a fixed
pilot size: the bias functional B_m of the sd-ratio estimator, the
inefficiency interval [1/c_m, c_m], the mixture asymptotic variance,
efficiency losses, and necessary pilot sizes."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .alloc import feasible_neyman
from .dgp import DgpSpec, sample_arm
from .errors import DegenerateDataError, InvalidParameterError, NotApplicableError


@dataclass(frozen=True)
class CmInterval:
    """Inefficiency interval [1/c_m, c_m] with its generating bias b_m.

    ``lower * upper == 1`` by construction; the interval always contains 1.
    """

    b_m: float
    c_m: float
    mc_se: float = 0.0
    draws: int = 0

    def __post_init__(self):
        if self.b_m < 1.0:
            raise InvalidParameterError("b_m must be >= 1")

    @property
    def lower(self) -> float:
        return 1.0 / self.c_m

    @property
    def upper(self) -> float:
        return self.c_m

    @property
    def length(self) -> float:
        return 2.0 * math.sqrt(self.b_m**2 - 1.0)


@dataclass(frozen=True)
class SubGaussianInterval:
    """First-order [1 - hw, 1 + hw] approximation of the inefficiency
    interval.  Unlike CmInterval it is symmetric about 1, not reciprocal."""

    lower: float
    upper: float
    half_width: float


@dataclass(frozen=True)
class LossReport:
    """Efficiency loss of the plug-in allocation vs. the balanced one, in
    difference (loss_diff) and ratio (loss_ratio) form."""

    loss_diff: float
    loss_ratio: float
    b_m: float
    sigma0: float
    sigma1: float


@dataclass(frozen=True)
class BmEstimate:
    b_m: float
    mc_se: float
    draws_used: int
    degenerate: int

    @property
    def degenerate_fraction(self) -> float:
        total = self.draws_used + self.degenerate
        return self.degenerate / total if total else 0.0


def avar(p: float, sigma0: float, sigma1: float) -> float:
    """Asymptotic variance sigma1^2/p + sigma0^2/(1-p) of the scaled
    difference-in-means estimator at a fixed share p."""
    if not 0 < p < 1:
        raise InvalidParameterError("p must be strictly interior to (0, 1)")
    if sigma0 <= 0 or sigma1 <= 0:
        raise InvalidParameterError("standard deviations must be positive")
    return sigma1**2 / p + sigma0**2 / (1.0 - p)


def gaussian_bm_oracle(m: int) -> float:
    """Closed-form bias for Gaussian outcomes and a balanced pilot of size m.

    The normalized sd-ratio is the square root of an F(d, d) variable with
    d = m/2 - 1, whose reciprocal symmetry gives
    b_m = Gamma((d+1)/2) Gamma((d-1)/2) / Gamma(d/2)^2.
    """
    if m < 6 or m % 2 != 0:
        raise InvalidParameterError("m must be even and >= 6")
    d = m / 2.0 - 1.0
    return float(
        math.exp(gammaln((d + 1) / 2) + gammaln((d - 1) / 2) - 2 * gammaln(d / 2))
    )


def cm_from_bm(b_m: float, mc_se: float = 0.0, draws: int = 0) -> CmInterval:
    """Interval endpoints via the quadratic formula c = b + sqrt(b^2 - 1)."""
    if b_m < 1.0:
        raise InvalidParameterError("b_m must be >= 1")
    c = b_m + math.sqrt(b_m**2 - 1.0)
    return CmInterval(b_m=b_m, c_m=c, mc_se=mc_se, draws=draws)


def _pilot_sds(
    spec: DgpSpec, m: int, draws: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw pilot arm standard deviations, shape (draws,) each."""
    if m < 4 or m % 2 != 0:
        raise InvalidParameterError("pilot size must be even and >= 4")
    half = m // 2
    y1 = sample_arm(spec, 1, (draws, half), rng)
    y0 = sample_arm(spec, 0, (draws, half), rng)
    s1 = np.std(y1, axis=1, ddof=1)
    s0 = np.std(y0, axis=1, ddof=1)
    return s0, s1


def estimate_bm(
    spec: DgpSpec, m: int, draws: int, rng: np.random.Generator
) -> BmEstimate:
    """Monte Carlo estimate of the bias functional b_m = E[(z + 1/z)/2] where
    z is the normalized ratio of pilot sd estimates.  Degenerate pilots
    (either sd estimate zero) are excluded and counted."""
    if draws < 1000:
        raise InvalidParameterError("need at least 1000 draws")
    s0, s1 = _pilot_sds(spec, m, draws, rng)
    ok = (s0 > 0) & (s1 > 0)
    n_ok = int(ok.sum())
    if n_ok == 0:
        raise DegenerateDataError("every simulated pilot was degenerate")
    z = (s1[ok] / spec.sigma1) / (s0[ok] / spec.sigma0)
    vals = 0.5 * (z + 1.0 / z)
    b = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n_ok))
    return BmEstimate(b_m=b, mc_se=se, draws_used=n_ok, degenerate=draws - n_ok)


def mixture_avar(
    spec: DgpSpec, m: int, draws: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo mean of s^2(p~) over simulated pilots, where p~ is the
    plug-in share with the 1/2 fallback on degenerate pilots."""
    if draws < 1000:
        raise InvalidParameterError("need at least 1000 draws")
    s0, s1 = _pilot_sds(spec, m, draws, rng)
    p = np.where((s0 > 0) & (s1 > 0), s1 / np.maximum(s1 + s0, 1e-300), 0.5)
    vals = spec.sigma1**2 / p + spec.sigma0**2 / (1.0 - p)
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(draws))


def subgaussian_cm(V: float, m: int, per_arm: bool = False) -> SubGaussianInterval:
    """First-order interval approximation from the kurtosis functional V.

    With ``per_arm`` the half-width is sqrt(V/m) with m observations per arm;
    otherwise m is the total size of a balanced pilot and the half-width is
    sqrt(2V/m).
    """
    if not (V > 0 and math.isfinite(V)):
        raise NotApplicableError("approximation requires finite positive V")
    if m < 1:
        raise InvalidParameterError("m must be >= 1")
    hw = math.sqrt(V / m) if per_arm else math.sqrt(2.0 * V / m)
    return SubGaussianInterval(lower=1.0 - hw, upper=1.0 + hw, half_width=hw)


def efficiency_losses(b_m: float, sigma0: float, sigma1: float) -> LossReport:
    """Exact difference- and ratio-form losses of the plug-in allocation."""
    if b_m < 1.0:
        raise InvalidParameterError("b_m must be >= 1")
    if sigma0 <= 0 or sigma1 <= 0:
        raise InvalidParameterError("standard deviations must be positive")
    ld = 2.0 * (b_m - 1.0) * sigma1 * sigma0 - (sigma1 - sigma0) ** 2
    lr = 0.5 + b_m * sigma1 * sigma0 / (sigma1**2 + sigma0**2)
    return LossReport(loss_diff=ld, loss_ratio=lr, b_m=b_m, sigma0=sigma0, sigma1=sigma1)


def loss_derivatives(b_m: float, rho: float) -> tuple[float, float]:
    """Derivatives of the two losses in rho under the normalization
    sigma0 = 1/sqrt(1+rho^2), sigma1 = rho/sqrt(1+rho^2)."""
    if rho <= 0:
        raise InvalidParameterError("rho must be positive")
    common = b_m * (1.0 - rho**2) / (1.0 + rho**2) ** 2
    return 2.0 * common, common


def required_pilot_asymptotic(
    kurt1: float, kurt0: float, ratio: float, per_arm: bool = False
) -> float:
    """Pilot size at which the sd ratio first exits the first-order
    inefficiency interval: V / (1 - ratio)^2 per arm, doubled for a total
    balanced pilot.  Infinite at exact homoskedasticity."""
    if kurt1 < 1 or kurt0 < 1:
        raise InvalidParameterError("kurtosis must be >= 1")
    if not math.isfinite(kurt1) or not math.isfinite(kurt0):
        raise NotApplicableError("approximation requires finite kurtoses")
    if ratio <= 0:
        raise InvalidParameterError("ratio must be positive")
    if ratio == 1.0:
        return math.inf
    v = 0.25 * (kurt1 + kurt0 - 2.0)
    m_hat = v / (1.0 - ratio) ** 2
    return m_hat if per_arm else 2.0 * m_hat


@dataclass(frozen=True)
class CmCurvePoint:
    m: int
    interval: CmInterval
    degenerate_fraction: float


def cm_curve(
    spec: DgpSpec, m_grid: list[int], draws: int, seed: int
) -> list[CmCurvePoint]:
    """Inefficiency intervals over a grid of pilot sizes.

    Each grid point uses its own substream derived from (seed, m), so the
    curve is deterministic regardless of evaluation order or worker count.
    """
    points = []
    for m in m_grid:
        rng = np.random.default_rng(np.random.SeedSequence((seed, m)))
        est = estimate_bm(spec, m, draws, rng)
        interval = cm_from_bm(max(est.b_m, 1.0), mc_se=est.mc_se, draws=est.draws_used)
        points.append(
            CmCurvePoint(m=m, interval=interval, degenerate_fraction=est.degenerate_fraction)
        )
    return points


def write_cm_curve_csv(points: list[CmCurvePoint], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "b_m", "c_lower", "c_upper", "mc_se", "degenerate_fraction"])
        for pt in points:
            writer.writerow(
                [
                    pt.m,
                    f"{pt.interval.b_m:.10g}",
                    f"{pt.interval.lower:.10g}",
                    f"{pt.interval.upper:.10g}",
                    f"{pt.interval.mc_se:.10g}",
                    f"{pt.degenerate_fraction:.10g}",
                ]
            )
