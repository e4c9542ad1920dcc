"""Analysis of full-experiment data: grouped spread/kurtosis/quantile
statistics, cluster-level aggregation, bootstrap inefficiency-interval
curves, and necessary pilot sizes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline

from .asymp import CmCurvePoint, cm_from_bm, required_pilot_asymptotic
from .errors import DataInputError, DegenerateDataError, InvalidParameterError

DEGENERACY_REFUSAL = 0.5

DEFAULT_PROBS = (0.01, 0.05, 0.10, 0.50, 0.90, 0.95, 0.99)


@dataclass(frozen=True)
class EmpiricalDataset:
    """Rows of (outcome, arm label, weight, optional cluster)."""

    frame: pd.DataFrame  # columns: outcome, arm, weight[, cluster]

    def __post_init__(self):
        counts = self.frame.groupby("arm").size()
        if len(counts) < 2:
            raise DataInputError("need at least 2 distinct arm labels")
        small = counts[counts < 2]
        if not small.empty:
            raise DataInputError(
                f"arms with fewer than 2 rows: {sorted(small.index)}"
            )

    @property
    def has_clusters(self) -> bool:
        return "cluster" in self.frame.columns

    def arm(self, label: str) -> pd.DataFrame:
        sub = self.frame[self.frame["arm"] == label]
        if sub.empty:
            raise DataInputError(f"unknown arm label {label!r}")
        return sub


@dataclass(frozen=True)
class ArmStats:
    label: str
    n: int
    sd: float
    kurtosis: float | None      # None when the arm is constant
    quantiles: dict[float, float]


@dataclass(frozen=True)
class PairStats:
    treated: str
    control: str
    ratio: float | None         # None when the control arm is constant


@dataclass(frozen=True)
class GroupStats:
    arms: dict[str, ArmStats]
    pairs: list[PairStats] = field(default_factory=list)


def load_dataset(
    path,
    outcome: str = "outcome",
    arm: str = "arm",
    weight: str | None = None,
    cluster: str | None = None,
) -> EmpiricalDataset:
    """Read a CSV into a validated dataset, mapping column names as given."""
    try:
        raw = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataInputError(f"cannot read CSV {path}: {exc}") from exc

    wanted = {outcome: "outcome", arm: "arm"}
    if weight is not None:
        wanted[weight] = "weight"
    if cluster is not None:
        wanted[cluster] = "cluster"
    missing = [c for c in wanted if c not in raw.columns]
    if missing:
        raise DataInputError(f"columns not found in {path}: {missing}")

    frame = raw[list(wanted)].rename(columns=wanted).copy()
    frame["outcome"] = pd.to_numeric(frame["outcome"], errors="coerce")
    bad = frame.index[frame["outcome"].isna() | frame["arm"].isna()]
    if len(bad):
        # +2: header line plus 1-based numbering
        rows = [int(i) + 2 for i in bad[:20]]
        raise DataInputError(f"rows with missing outcome or arm: {rows}")
    if weight is not None:
        frame["weight"] = pd.to_numeric(frame["weight"], errors="coerce")
        if frame["weight"].isna().any() or (frame["weight"] <= 0).any():
            bad = frame.index[frame["weight"].isna() | (frame["weight"] <= 0)]
            rows = [int(i) + 2 for i in bad[:20]]
            raise DataInputError(f"rows with missing or nonpositive weight: {rows}")
    else:
        frame["weight"] = 1.0
    frame["arm"] = frame["arm"].astype(str)
    return EmpiricalDataset(frame=frame.reset_index(drop=True))


def weighted_sd(values: np.ndarray, weights: np.ndarray) -> float:
    """Frequency-weighted sample sd (divisor sum(w) - 1)."""
    w = np.asarray(weights, dtype=float)
    y = np.asarray(values, dtype=float)
    wsum = w.sum()
    if wsum <= 1:
        raise DataInputError("total weight must exceed 1 for a sample sd")
    mean = np.sum(w * y) / wsum
    return float(math.sqrt(np.sum(w * (y - mean) ** 2) / (wsum - 1.0)))


def weighted_kurtosis(values: np.ndarray, weights: np.ndarray) -> float | None:
    """m4 / m2^2 with weight-normalized central moments; None if constant."""
    w = np.asarray(weights, dtype=float)
    y = np.asarray(values, dtype=float)
    wsum = w.sum()
    mean = np.sum(w * y) / wsum
    d = y - mean
    m2 = np.sum(w * d**2) / wsum
    if m2 <= 0:
        return None
    m4 = np.sum(w * d**4) / wsum
    return float(m4 / m2**2)


def weighted_quantile(
    values: np.ndarray, weights: np.ndarray, probs
) -> dict[float, float]:
    """Linear interpolation between order statistics, generalized to weights
    via midpoint cumulative-weight positions."""
    y = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(y, kind="stable")
    y, w = y[order], w[order]
    if np.allclose(w, w[0]):
        qs = np.quantile(y, list(probs), method="linear")
        return {float(p): float(q) for p, q in zip(probs, qs)}
    cum = np.cumsum(w)
    pos = (cum - 0.5 * w) / cum[-1]
    qs = np.interp(list(probs), pos, y)
    return {float(p): float(q) for p, q in zip(probs, qs)}


def group_stats(
    data: EmpiricalDataset,
    pairs: list[tuple[str, str]],
    probs=DEFAULT_PROBS,
) -> GroupStats:
    """Weighted sd, kurtosis and quantiles per arm, plus sd ratios per
    (treated, control) pair.  Constant arms get degenerate markers."""
    labels = {lab for pair in pairs for lab in pair}
    arms: dict[str, ArmStats] = {}
    for lab in sorted(labels):
        sub = data.arm(lab)
        y = sub["outcome"].to_numpy()
        w = sub["weight"].to_numpy()
        arms[lab] = ArmStats(
            label=lab,
            n=len(sub),
            sd=weighted_sd(y, w),
            kurtosis=weighted_kurtosis(y, w),
            quantiles=weighted_quantile(y, w, probs),
        )
    pair_stats = []
    for treated, control in pairs:
        sd_t, sd_c = arms[treated].sd, arms[control].sd
        ratio = sd_t / sd_c if sd_c > 0 else None
        pair_stats.append(PairStats(treated=treated, control=control, ratio=ratio))
    return GroupStats(arms=arms, pairs=pair_stats)


def cluster_aggregate(data: EmpiricalDataset) -> EmpiricalDataset:
    """Collapse to one row per cluster: weighted mean outcome, summed
    weight.  Every cluster must belong to a single arm."""
    if not data.has_clusters:
        raise DataInputError("dataset has no cluster column")
    rows = []
    for cluster, sub in data.frame.groupby("cluster", sort=True):
        arms = sub["arm"].unique()
        if len(arms) != 1:
            raise DataInputError(
                f"cluster {cluster!r} spans multiple arms: {sorted(arms)}"
            )
        w = sub["weight"].to_numpy()
        y = sub["outcome"].to_numpy()
        rows.append(
            {
                "outcome": float(np.sum(w * y) / w.sum()),
                "arm": arms[0],
                "weight": float(w.sum()),
                "cluster": cluster,
            }
        )
    return EmpiricalDataset(frame=pd.DataFrame(rows))


def bootstrap_cm_curve(
    data: EmpiricalDataset,
    pair: tuple[str, str],
    m_grid: list[int],
    draws: int,
    rng: np.random.Generator,
) -> list[CmCurvePoint]:
    """Bootstrap the bias functional from the empirical distribution.

    For each grid m: draw m/2 observations per arm with replacement (weights
    as selection probabilities), normalize the resampled sd ratio by the
    full-sample sds, and average (z + 1/z)/2 over non-degenerate draws.
    Refuses when more than half the resamples at any m are degenerate.
    """
    treated, control = pair
    sub_t = data.arm(treated)
    sub_c = data.arm(control)
    y_t, w_t = sub_t["outcome"].to_numpy(), sub_t["weight"].to_numpy()
    y_c, w_c = sub_c["outcome"].to_numpy(), sub_c["weight"].to_numpy()
    sd_t = weighted_sd(y_t, w_t)
    sd_c = weighted_sd(y_c, w_c)
    if sd_t <= 0 or sd_c <= 0:
        raise DegenerateDataError("full-sample sd is zero for an arm")
    p_t = w_t / w_t.sum()
    p_c = w_c / w_c.sum()

    points = []
    for m in m_grid:
        if m < 4 or m % 2 != 0:
            raise InvalidParameterError("grid pilot sizes must be even and >= 4")
        half = m // 2
        res_t = rng.choice(y_t, size=(draws, half), replace=True, p=p_t)
        res_c = rng.choice(y_c, size=(draws, half), replace=True, p=p_c)
        s_t = np.std(res_t, axis=1, ddof=1)
        s_c = np.std(res_c, axis=1, ddof=1)
        ok = (s_t > 0) & (s_c > 0)
        frac_degen = 1.0 - ok.mean()
        if frac_degen > DEGENERACY_REFUSAL:
            raise DegenerateDataError(
                f"{frac_degen:.0%} of resamples at m={m} are degenerate for "
                f"pair {treated}/{control}; interval not estimable"
            )
        z = (s_t[ok] / sd_t) / (s_c[ok] / sd_c)
        vals = 0.5 * (z + 1.0 / z)
        b = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(ok.sum()))
        points.append(
            CmCurvePoint(
                m=m,
                interval=cm_from_bm(max(b, 1.0), mc_se=se, draws=int(ok.sum())),
                degenerate_fraction=float(frac_degen),
            )
        )
    return points


def required_pilot_exact(
    curve: list[CmCurvePoint], observed_ratio: float
) -> float | None:
    """Smallest pilot size (on a 1-unit lattice through natural cubic splines
    of the interval bounds) at which the observed sd ratio exits the
    interval; None if it never exits on the grid."""
    if observed_ratio <= 0:
        raise InvalidParameterError("observed ratio must be positive")
    if observed_ratio == 1.0:
        return None
    if len(curve) < 4:
        raise InvalidParameterError("need at least 4 grid points to interpolate")
    ms = np.array([pt.m for pt in curve], dtype=float)
    uppers = np.array([pt.interval.upper for pt in curve])
    lowers = np.array([pt.interval.lower for pt in curve])
    if np.any(np.diff(uppers) > 0):
        warnings.warn("interval upper bound is not monotone over the grid")
    upper_s = CubicSpline(ms, uppers, bc_type="natural")
    lower_s = CubicSpline(ms, lowers, bc_type="natural")
    lattice = np.arange(int(ms[0]), int(ms[-1]) + 1)
    outside = (observed_ratio > upper_s(lattice)) | (observed_ratio < lower_s(lattice))
    idx = np.argmax(outside) if outside.any() else None
    return float(lattice[idx]) if idx is not None else None


def required_pilot_from_data(
    data: EmpiricalDataset, pair: tuple[str, str]
) -> float:
    """Plug-in necessary pilot size from full-sample kurtoses and sd ratio,
    total balanced-pilot convention."""
    stats = group_stats(data, [pair], probs=())
    treated, control = pair
    k_t = stats.arms[treated].kurtosis
    k_c = stats.arms[control].kurtosis
    ratio = stats.pairs[0].ratio
    if k_t is None or k_c is None or ratio is None:
        raise DegenerateDataError("constant arm: kurtosis or ratio undefined")
    return required_pilot_asymptotic(k_t, k_c, ratio, per_arm=False)
