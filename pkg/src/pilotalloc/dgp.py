"""Data-generating processes for potential outcomes and their exact moments.

Each DGP draws independent potential outcomes for the two arms from a common
standardized error family, shifted and scaled per arm.  The mixture DGP used
in the regret analysis is the one exception: its treated arm is a three-point
atom plus Gaussian noise and is sampled directly rather than standardized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

RATIO_FLOOR = 0.05

NORMAL = "normal"
CHISQ1 = "chisq1"
PARETO = "pareto"
REGRET_MIXTURE = "regret_mixture"


@dataclass(frozen=True)
class ErrorLaw:
    """Standardized (mean 0, variance 1) error family for both arms.

    ``pareto`` carries the tail index ``shape`` (> 2 for finite variance);
    ``regret_mixture`` carries ``kappa`` and ``omega`` and applies only to the
    treated arm, the control arm being standard normal.
    """

    family: str
    shape: float | None = None
    kappa: float | None = None
    omega: float | None = None

    def __post_init__(self):
        if self.family not in (NORMAL, CHISQ1, PARETO, REGRET_MIXTURE):
            raise InvalidParameterError(f"unknown error family {self.family!r}")
        if self.family == PARETO:
            if self.shape is None or self.shape <= 2:
                raise InvalidParameterError(
                    "Pareto tail index must exceed 2 for finite variance"
                )
        if self.family == REGRET_MIXTURE:
            if self.kappa is None or self.kappa <= 1:
                raise InvalidParameterError("mixture kappa must exceed 1")
            if self.omega is None or self.omega <= 0:
                raise InvalidParameterError("mixture omega must be positive")

    @classmethod
    def normal(cls) -> "ErrorLaw":
        return cls(NORMAL)

    @classmethod
    def chisq1(cls) -> "ErrorLaw":
        return cls(CHISQ1)

    @classmethod
    def pareto(cls, shape: float) -> "ErrorLaw":
        return cls(PARETO, shape=shape)

    @classmethod
    def regret_mixture(cls, kappa: float, omega: float) -> "ErrorLaw":
        return cls(REGRET_MIXTURE, kappa=kappa, omega=omega)


@dataclass(frozen=True)
class DgpSpec:
    """Parametric DGP for the pair of potential outcomes.

    The correlation ``rho`` is carried for fidelity but no implemented
    quantity depends on it; arms are sampled independently.
    """

    mu0: float
    mu1: float
    sigma0: float
    sigma1: float
    error_law: ErrorLaw
    rho: float = 0.0
    # model identity, when built by make_model / make_regret_dgp (for serde)
    model_id: int | str | None = field(default=None, compare=False)
    ratio: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.sigma0 > 0 and self.sigma1 > 0):
            raise InvalidParameterError("arm standard deviations must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise InvalidParameterError("rho must lie in [-1, 1]")


@dataclass(frozen=True)
class Moments:
    """Exact second and fourth moments of a DGP.

    ``V`` is the kurtosis functional (kurt1 + kurt0 - 2) / 4 governing the
    first-order width of the inefficiency interval; infinite when either
    kurtosis is infinite.
    """

    sigma0: float
    sigma1: float
    kurt0: float
    kurt1: float
    V: float


@dataclass(frozen=True)
class PilotSample:
    """Pilot outcomes with arm labels, balanced half/half by construction."""

    outcomes: np.ndarray
    arms: np.ndarray

    def __post_init__(self):
        if len(self.outcomes) != len(self.arms):
            raise InvalidParameterError("outcomes and arms must have equal length")
        if self.m0 < 2 or self.m1 < 2:
            raise InvalidParameterError("each arm needs at least 2 observations")

    @property
    def m(self) -> int:
        return len(self.outcomes)

    @property
    def m0(self) -> int:
        return int(np.sum(self.arms == 0))

    @property
    def m1(self) -> int:
        return int(np.sum(self.arms == 1))

    def arm_outcomes(self, arm: int) -> np.ndarray:
        return self.outcomes[self.arms == arm]


_MODEL_LAWS = {
    1: ErrorLaw.normal(),
    2: ErrorLaw.chisq1(),
    3: ErrorLaw.pareto(3.0),
    4: ErrorLaw.pareto(4.0),
    5: ErrorLaw.pareto(5.0),
}


def make_model(model_id: int, ratio: float) -> DgpSpec:
    """Benchmark DGP: sigma1/sigma0 = ratio with sigma1^2 + sigma0^2 = 2.

    The treated mean is 0.075 and the control mean 0, so the true ATE is
    0.075 regardless of the ratio.
    """
    if model_id not in _MODEL_LAWS:
        raise InvalidParameterError(f"model_id must be 1..5, got {model_id}")
    if not RATIO_FLOOR <= ratio <= 1.0:
        raise InvalidParameterError(
            f"ratio must lie in [{RATIO_FLOOR}, 1], got {ratio}"
        )
    sigma0 = math.sqrt(2.0 / (1.0 + ratio**2))
    return DgpSpec(
        mu0=0.0,
        mu1=0.075,
        sigma0=sigma0,
        sigma1=ratio * sigma0,
        error_law=_MODEL_LAWS[model_id],
        model_id=model_id,
        ratio=ratio,
    )


def make_regret_dgp(kappa: float, omega: float) -> DgpSpec:
    """Mixture DGP whose treated arm is nearly degenerate for large kappa.

    Y(0) ~ N(0, 1); Y(1) = X + omega * W with X in {-1, 0, 1} taking the
    middle value with probability 1 - 1/kappa, and W standard normal
    independent of X.  True sigma1^2 = 1/kappa + omega^2.
    """
    law = ErrorLaw.regret_mixture(kappa, omega)  # validates kappa, omega
    return DgpSpec(
        mu0=0.0,
        mu1=0.0,
        sigma0=1.0,
        sigma1=math.sqrt(1.0 / kappa + omega**2),
        error_law=law,
        model_id="regret",
    )


def pareto_mean_sd(shape: float) -> tuple[float, float]:
    """Mean and standard deviation of Pareto(1, shape)."""
    mean = shape / (shape - 1.0)
    var = shape / ((shape - 1.0) ** 2 * (shape - 2.0))
    return mean, math.sqrt(var)


def _standardized_errors(law: ErrorLaw, size, rng: np.random.Generator) -> np.ndarray:
    if law.family == NORMAL:
        return rng.standard_normal(size)
    if law.family == CHISQ1:
        return (rng.chisquare(1, size) - 1.0) / math.sqrt(2.0)
    if law.family == PARETO:
        # inverse CDF: X = U^(-1/s), exact and one uniform per draw
        x = rng.random(size) ** (-1.0 / law.shape)
        mean, sd = pareto_mean_sd(law.shape)
        return (x - mean) / sd
    raise InvalidParameterError(f"no standardized form for family {law.family!r}")


def sample_arm(spec: DgpSpec, arm: int, size, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. outcomes from one arm's marginal law."""
    if arm not in (0, 1):
        raise InvalidParameterError("arm must be 0 or 1")
    law = spec.error_law
    if law.family == REGRET_MIXTURE:
        if arm == 0:
            return rng.standard_normal(size)
        p_atom = 0.5 / law.kappa
        x = rng.choice(
            np.array([-1.0, 0.0, 1.0]),
            size=size,
            p=[p_atom, 1.0 - 1.0 / law.kappa, p_atom],
        )
        return x + law.omega * rng.standard_normal(size)
    mu = spec.mu1 if arm == 1 else spec.mu0
    sigma = spec.sigma1 if arm == 1 else spec.sigma0
    return mu + sigma * _standardized_errors(law, size, rng)


def sample_pilot(spec: DgpSpec, m: int, rng: np.random.Generator) -> PilotSample:
    """Balanced pilot: exactly m/2 observations per arm, treated arm first."""
    if m < 4 or m % 2 != 0:
        raise InvalidParameterError(f"pilot size must be even and >= 4, got {m}")
    half = m // 2
    y1 = sample_arm(spec, 1, half, rng)
    y0 = sample_arm(spec, 0, half, rng)
    outcomes = np.concatenate([y1, y0])
    arms = np.concatenate([np.ones(half, dtype=int), np.zeros(half, dtype=int)])
    return PilotSample(outcomes=outcomes, arms=arms)


def pareto_kurtosis(shape: float) -> float:
    """Kurtosis of Pareto(1, shape); infinite unless shape > 4."""
    s = shape
    if s <= 4:
        return math.inf
    return 3.0 * (s - 2.0) * (3.0 * s**2 + s + 2.0) / (s * (s - 3.0) * (s - 4.0))


def true_moments(spec: DgpSpec) -> Moments:
    """Exact standard deviations, kurtoses and the V functional of a spec."""
    law = spec.error_law
    if law.family == NORMAL:
        kurt0 = kurt1 = 3.0
    elif law.family == CHISQ1:
        kurt0 = kurt1 = 15.0
    elif law.family == PARETO:
        kurt0 = kurt1 = pareto_kurtosis(law.shape)
    else:  # regret mixture: control is Gaussian, treated is atom + noise
        kurt0 = 3.0
        k, w = law.kappa, law.omega
        var1 = 1.0 / k + w**2
        fourth = 1.0 / k + 6.0 * w**2 / k + 3.0 * w**4
        kurt1 = fourth / var1**2
    if math.isinf(kurt0) or math.isinf(kurt1):
        v = math.inf
    else:
        v = 0.25 * (kurt1 + kurt0 - 2.0)
    return Moments(
        sigma0=spec.sigma0, sigma1=spec.sigma1, kurt0=kurt0, kurt1=kurt1, V=v
    )


def spec_to_json(spec: DgpSpec) -> dict:
    """JSON form {"model": 1..5 | "regret", "ratio"/"kappa"/"omega": ...}."""
    if spec.model_id is None:
        raise InvalidParameterError("only model-built specs serialize to JSON")
    if spec.model_id == "regret":
        law = spec.error_law
        return {"model": "regret", "kappa": law.kappa, "omega": law.omega}
    return {"model": spec.model_id, "ratio": spec.ratio}


def spec_from_json(obj: dict) -> DgpSpec:
    if "model" not in obj:
        raise InvalidParameterError("DGP JSON needs a 'model' key")
    if obj["model"] == "regret":
        return make_regret_dgp(float(obj["kappa"]), float(obj["omega"]))
    return make_model(int(obj["model"]), float(obj["ratio"]))
