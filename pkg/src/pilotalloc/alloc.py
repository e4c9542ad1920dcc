"""Pilot variance estimation, allocation rules, the variance-equality Wald
test, and main-wave treatment assignment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .dgp import PilotSample
from .errors import InsufficientPilotError, InvalidParameterError

BALANCED = "balanced"
SIMPLE = "simple"
INFEASIBLE_NEYMAN = "ina"
FNA = "fna"
TEST_THEN_FNA = "test"
ADDITIVE = "add"
EXPONENTIAL = "exp"

_KINDS = {BALANCED, SIMPLE, INFEASIBLE_NEYMAN, FNA, TEST_THEN_FNA, ADDITIVE, EXPONENTIAL}


@dataclass(frozen=True)
class VarEstimates:
    """Per-arm sample variances with divisor m_a - 1."""

    var0: float
    var1: float
    m0: int
    m1: int


@dataclass(frozen=True)
class AllocationRule:
    """Tagged allocation rule with its tuning parameter, if any."""

    kind: str
    p: float | None = None       # simple random assignment share
    alpha: float | None = None   # test level
    nu: float | None = None      # additive regularization
    tau: float | None = None     # exponential regularization

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidParameterError(f"unknown rule kind {self.kind!r}")
        if self.kind == SIMPLE and not (self.p is not None and 0 < self.p < 1):
            raise InvalidParameterError("simple random assignment needs p in (0, 1)")
        if self.kind == TEST_THEN_FNA and not (
            self.alpha is not None and 0 < self.alpha < 1
        ):
            raise InvalidParameterError("test rule needs alpha in (0, 1)")
        if self.kind == ADDITIVE and not (self.nu is not None and self.nu >= 0):
            raise InvalidParameterError("additive rule needs nu >= 0")
        if self.kind == EXPONENTIAL and not (
            self.tau is not None and 0 <= self.tau <= 1
        ):
            raise InvalidParameterError("exponential rule needs tau in [0, 1]")

    @property
    def needs_pilot(self) -> bool:
        return self.kind in (FNA, TEST_THEN_FNA, ADDITIVE, EXPONENTIAL)

    @property
    def needs_truth(self) -> bool:
        return self.kind == INFEASIBLE_NEYMAN

    def label(self) -> str:
        param = {
            SIMPLE: self.p,
            TEST_THEN_FNA: self.alpha,
            ADDITIVE: self.nu,
            EXPONENTIAL: self.tau,
        }.get(self.kind)
        return self.kind if param is None else f"{self.kind}-{param:g}"


@dataclass(frozen=True)
class WaldResult:
    """Variance-equality Wald statistic with its moment-based variance terms."""

    statistic: float
    vw0: float
    vw1: float
    degenerate: bool


def pilot_variances(pilot: PilotSample) -> VarEstimates:
    """Per-arm sample variances (divisor m_a - 1)."""
    y0 = pilot.arm_outcomes(0)
    y1 = pilot.arm_outcomes(1)
    if len(y0) < 2 or len(y1) < 2:
        raise InsufficientPilotError("each arm needs >= 2 observations")
    return VarEstimates(
        var0=float(np.var(y0, ddof=1)),
        var1=float(np.var(y1, ddof=1)),
        m0=len(y0),
        m1=len(y1),
    )


def feasible_neyman(v: VarEstimates) -> float:
    """Plug-in Neyman share; exactly 1/2 when either variance estimate is 0."""
    if v.var0 <= 0 or v.var1 <= 0:
        return 0.5
    s0, s1 = math.sqrt(v.var0), math.sqrt(v.var1)
    return s1 / (s1 + s0)


def infeasible_neyman(sigma0: float, sigma1: float) -> float:
    """Variance-minimizing share from the true standard deviations."""
    if sigma0 <= 0 or sigma1 <= 0:
        raise InvalidParameterError("standard deviations must be positive")
    return sigma1 / (sigma1 + sigma0)


def additive_reg(v: VarEstimates, nu: float) -> float:
    """Shrink toward 1/2 by cross-adding nu times the other arm's sd."""
    if nu < 0:
        raise InvalidParameterError("nu must be >= 0")
    if v.var0 <= 0 or v.var1 <= 0:
        return 0.5
    s0, s1 = math.sqrt(v.var0), math.sqrt(v.var1)
    return (s1 + s0 * nu) / ((s1 + s0) * (1.0 + nu))


def exponential_reg(v: VarEstimates, tau: float) -> float:
    """Shrink toward 1/2 by damping the sd ratio with exponent tau in [0, 1]."""
    if not 0 <= tau <= 1:
        raise InvalidParameterError("tau must lie in [0, 1]")
    if v.var0 <= 0 or v.var1 <= 0:
        return 0.5
    r = math.sqrt(v.var1 / v.var0)
    rt = r**tau
    return rt / (1.0 + rt)


def wald_test(pilot: PilotSample) -> WaldResult:
    """Two-sample Wald statistic for equality of arm variances.

    The numerator uses the (m_a - 1)-divisor variance estimates; the
    moment-matrix entries use divisor m/2.  Two-valued (e.g. binary)
    outcomes make Y^2 affine in Y, collapsing the moment matrix to rank
    one; such pilots, and any with a vanishing denominator, are reported
    as degenerate with statistic 0 so callers fall back to 1/2.
    """
    if pilot.m0 != pilot.m1:
        raise InvalidParameterError("Wald test requires a balanced pilot")
    half = pilot.m0

    def vw(y: np.ndarray) -> float:
        ybar = np.mean(y)
        y2bar = np.mean(y**2)
        d1 = y - ybar
        d2 = y**2 - y2bar
        s11 = np.mean(d2**2)
        s12 = np.mean(d1 * d2)
        s22 = np.mean(d1**2)
        g = -2.0 * ybar
        return float(s11 + 2.0 * g * s12 + g**2 * s22)

    y0 = pilot.arm_outcomes(0)
    y1 = pilot.arm_outcomes(1)
    vw0, vw1 = vw(y0), vw(y1)
    scale = 1.0 + float(np.mean(pilot.outcomes**2))
    affine = len(np.unique(y0)) <= 2 and len(np.unique(y1)) <= 2
    if affine or vw0 + vw1 <= 1e-12 * scale**2:
        return WaldResult(statistic=0.0, vw0=vw0, vw1=vw1, degenerate=True)
    var0 = float(np.var(y0, ddof=1))
    var1 = float(np.var(y1, ddof=1))
    stat = math.sqrt(half) * (var1 - var0) / math.sqrt(vw1 + vw0)
    return WaldResult(statistic=stat, vw0=vw0, vw1=vw1, degenerate=False)


def apply_rule(
    rule: AllocationRule,
    pilot: PilotSample | None = None,
    truth: tuple[float, float] | None = None,
) -> float:
    """Treatment share implied by a rule, given the inputs it requires."""
    if rule.needs_pilot and pilot is None:
        raise InvalidParameterError(f"rule {rule.kind!r} requires a pilot")
    if rule.needs_truth and truth is None:
        raise InvalidParameterError("infeasible Neyman requires true sigmas")

    if rule.kind == BALANCED:
        return 0.5
    if rule.kind == SIMPLE:
        return rule.p
    if rule.kind == INFEASIBLE_NEYMAN:
        return infeasible_neyman(*truth)

    v = pilot_variances(pilot)
    if rule.kind == FNA:
        return feasible_neyman(v)
    if rule.kind == ADDITIVE:
        return additive_reg(v, rule.nu)
    if rule.kind == EXPONENTIAL:
        return exponential_reg(v, rule.tau)
    # test-then-FNA: reject homoskedasticity -> plug-in share, else 1/2
    w = wald_test(pilot)
    if w.degenerate:
        return 0.5
    crit = float(ndtri(1.0 - rule.alpha / 2.0))
    return feasible_neyman(v) if abs(w.statistic) > crit else 0.5


def assign_block(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Complete randomization: exactly clamp(floor(n p), 1, n-1) treated,
    uniform over all such assignment vectors."""
    if n < 2:
        raise InvalidParameterError("main wave needs n >= 2")
    if not 0 < p < 1:
        raise InvalidParameterError("p must lie in (0, 1)")
    n1 = min(max(int(math.floor(n * p)), 1), n - 1)
    a = np.zeros(n, dtype=int)
    a[:n1] = 1
    return rng.permutation(a)


def diff_in_means(outcomes: np.ndarray, assignment: np.ndarray) -> float:
    """Mean treated outcome minus mean control outcome."""
    outcomes = np.asarray(outcomes, dtype=float)
    assignment = np.asarray(assignment)
    treated = assignment == 1
    if not treated.any() or treated.all():
        raise InvalidParameterError("both arms must be nonempty")
    return float(np.mean(outcomes[treated]) - np.mean(outcomes[~treated]))


def rule_to_json(rule: AllocationRule) -> dict:
    obj: dict = {"kind": rule.kind}
    for key in ("p", "alpha", "nu", "tau"):
        val = getattr(rule, key)
        if val is not None:
            obj[key] = val
    return obj


def rule_from_json(obj: dict) -> AllocationRule:
    if "kind" not in obj:
        raise InvalidParameterError("rule JSON needs a 'kind' key")
    known = {k: float(obj[k]) for k in ("p", "alpha", "nu", "tau") if k in obj}
    return AllocationRule(kind=obj["kind"], **known)
