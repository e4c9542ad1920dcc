"""Acceptance gate: one test per headline requirement.

Each test prints a single PASS line on success (pytest reports FAIL
otherwise), so the -v output doubles as the acceptance checklist.  The
heavier Monte Carlo campaigns live here rather than in the unit suites.
"""

import math

import numpy as np
import pandas as pd
import pytest

from pilotalloc import (
    AllocationRule,
    DegenerateDataError,
    EmpiricalDataset,
    SimConfig,
    VarEstimates,
    additive_reg,
    apply_rule,
    assign_block,
    bootstrap_cm_curve,
    cm_from_bm,
    efficiency_losses,
    estimate_bm,
    exponential_reg,
    feasible_neyman,
    gaussian_bm_oracle,
    loss_derivatives,
    make_model,
    make_regret_dgp,
    mixture_avar,
    run_mse,
    wald_test,
)
from pilotalloc.dgp import PilotSample


def report(tag, detail):
    print(f"PASS [{tag}] {detail}")


def test_1_gaussian_interval_exactness():
    import time

    start = time.perf_counter()
    iv20 = cm_from_bm(gaussian_bm_oracle(20))
    iv50 = cm_from_bm(gaussian_bm_oracle(50))
    elapsed = time.perf_counter() - start
    assert round(iv20.lower, 2) == 0.70
    assert round(iv20.upper, 2) == 1.43
    assert round(iv50.lower, 2) == 0.81
    assert round(iv50.upper, 2) == 1.23
    assert elapsed < 1.0
    report(
        "gaussian interval exactness",
        f"C20=[{iv20.lower:.4f}, {iv20.upper:.4f}] "
        f"C50=[{iv50.lower:.4f}, {iv50.upper:.4f}] in {elapsed:.3f}s",
    )


def test_2_monte_carlo_bias_agreement():
    import time

    start = time.perf_counter()
    est = estimate_bm(make_model(1, 1.0), 20, 100_000, np.random.default_rng(101))
    oracle = gaussian_bm_oracle(20)
    assert abs(est.b_m - oracle) < 4 * est.mc_se

    chisq20 = estimate_bm(make_model(2, 1.0), 20, 100_000, np.random.default_rng(102))
    c20 = cm_from_bm(chisq20.b_m).upper
    assert c20 == pytest.approx(2.22, abs=0.10)
    chisq50 = estimate_bm(make_model(2, 1.0), 50, 100_000, np.random.default_rng(103))
    c50 = cm_from_bm(chisq50.b_m).upper
    assert c50 == pytest.approx(1.61, abs=0.08)
    pareto50 = estimate_bm(make_model(3, 1.0), 50, 100_000, np.random.default_rng(104))
    p50 = cm_from_bm(pareto50.b_m).upper
    assert p50 == pytest.approx(2.15, abs=0.15)
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    report(
        "monte carlo bias agreement",
        f"normal b20={est.b_m:.5f} (oracle {oracle:.5f}), "
        f"chi-square c20={c20:.3f} c50={c50:.3f}, heavy-tail c50={p50:.3f} "
        f"in {elapsed:.1f}s",
    )


# (model, m) -> expected MSE inflation of the plug-in rule at equal sds
INFLATION_TARGETS = {
    (1, 20): (1.029, 0.015),
    (2, 20): (1.17, 0.03),
    (3, 20): (1.26, 0.05),
    (4, 20): (1.20, 0.05),
    (5, 20): (1.17, 0.05),
    (1, 50): (1.015, 0.015),
    (2, 50): (1.064, 0.03),
    (3, 50): (1.13, 0.05),
    (4, 50): (1.11, 0.05),
    (5, 50): (1.086, 0.05),
}


def test_3_mse_inflation_at_equal_sds():
    import time

    start = time.perf_counter()
    observed = {}
    for m in (20, 50):
        config = SimConfig(
            cells=[(model, 1.0) for model in (1, 2, 3, 4, 5)],
            rules=[AllocationRule("fna"), AllocationRule("balanced")],
            m=m,
            n=1000,
            reps=30_000,
            seed=1300 + m,
            share_draws=True,
        )
        result = run_mse(config, threads=4)
        for model in (1, 2, 3, 4, 5):
            ratio = (
                result.row(model, 1.0, "fna").n_mse
                / result.row(model, 1.0, "balanced").n_mse
            )
            observed[(model, m)] = ratio
            target, tol = INFLATION_TARGETS[(model, m)]
            assert ratio == pytest.approx(target, abs=tol), (model, m, ratio)
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0
    lines = ", ".join(
        f"model{model}/m{m}={observed[(model, m)]:.3f}" for model, m in observed
    )
    report("mse inflation at equal sds", f"{lines} in {elapsed:.0f}s")


def test_4_low_ratio_mse_gain():
    config = SimConfig(
        cells=[(1, 0.05)],
        rules=[AllocationRule("fna"), AllocationRule("balanced")],
        m=20,
        n=1000,
        reps=20_000,
        seed=41,
        share_draws=True,
    )
    result = run_mse(config)
    ratio = result.row(1, 0.05, "fna").n_mse / result.row(1, 0.05, "balanced").n_mse
    assert 0.50 <= ratio <= 0.65
    report("low ratio mse gain", f"MSE ratio at sd ratio 0.05: {ratio:.3f}")


def test_5_simulation_matches_mixture_variance():
    config = SimConfig(
        cells=[(model, ratio) for model in (1, 2) for ratio in (0.5, 1.0)],
        rules=[AllocationRule("fna")],
        m=20,
        n=1000,
        reps=30_000,
        seed=55,
    )
    result = run_mse(config)
    details = []
    for model in (1, 2):
        for ratio in (0.5, 1.0):
            row = result.row(model, ratio, "fna")
            spec = make_model(model, ratio)
            value, se_mix = mixture_avar(spec, 20, 400_000, np.random.default_rng(56))
            combined = math.hypot(row.mc_se, se_mix)
            assert abs(row.n_mse - value) < 3 * combined, (model, ratio)
            details.append(f"model{model}/r{ratio:g}: {row.n_mse:.3f}~{value:.3f}")
    report("simulation matches mixture variance", ", ".join(details))


def test_6_necessary_pilot_size_reconciliation():
    from pilotalloc import required_pilot_asymptotic

    cases = [
        ((258.56, 66.56), 3.13, 35.52, 0.03),
        ((258.56, 309.89), 2.26, 177.10, 0.03),
        ((252.78, 156.33), 1.76, 355.02, 0.03),
        ((252.78, 218.92), 0.81, 6857.59, 0.10),
    ]
    details = []
    for (k1, k0), ratio, published, tol in cases:
        m_hat = required_pilot_asymptotic(k1, k0, ratio)
        assert m_hat == pytest.approx(published, rel=tol)
        details.append(f"{m_hat:.1f}~{published}")
    report("necessary pilot size reconciliation", ", ".join(details))


def _random_spec(rng):
    model = int(rng.integers(1, 6))
    ratio = float(rng.uniform(0.05, 1.0))
    return make_model(model, ratio)


def test_7_property_suites():
    rng = np.random.default_rng(777)
    cases = 1000

    # interval symmetry: lower * upper = 1 and 1 is always a member
    for b in 1.0 + rng.exponential(0.5, cases):
        iv = cm_from_bm(b)
        assert iv.lower * iv.upper == pytest.approx(1.0, rel=1e-9)
        assert iv.lower <= 1.0 <= iv.upper

    # estimated bias >= 1 and the mixture variance strictly beats the
    # large-pilot optimum, with the interval membership identity, on shared
    # streams over random specs
    for i in range(cases):
        spec = _random_spec(rng)
        m = int(2 * rng.integers(4, 21))
        seed = int(rng.integers(2**32))
        est = estimate_bm(spec, m, 1000, np.random.default_rng(seed))
        assert est.b_m >= 1.0
        value, se = mixture_avar(spec, m, 1000, np.random.default_rng(seed))
        optimum = (spec.sigma0 + spec.sigma1) ** 2
        assert value > optimum
        iv = cm_from_bm(max(est.b_m, 1.0))
        ratio = spec.sigma1 / spec.sigma0
        inside = iv.lower <= ratio <= iv.upper
        balanced = 2.0 * (spec.sigma0**2 + spec.sigma1**2)
        assert inside == (value >= balanced)

    # pilot-based rules: relabeling equivariance and scale invariance
    for i in range(cases):
        half = int(rng.integers(2, 9))
        y1 = rng.standard_normal(half) * rng.uniform(0.1, 10)
        y0 = rng.standard_normal(half) * rng.uniform(0.1, 10)
        c = float(rng.uniform(1e-3, 1e3))
        pilot = PilotSample(
            outcomes=np.concatenate([y1, y0]),
            arms=np.concatenate([np.ones(half, int), np.zeros(half, int)]),
        )
        swapped = PilotSample(
            outcomes=np.concatenate([y0, y1]),
            arms=np.concatenate([np.ones(half, int), np.zeros(half, int)]),
        )
        scaled = PilotSample(outcomes=pilot.outcomes * c, arms=pilot.arms)
        for rule in (
            AllocationRule("fna"),
            AllocationRule("add", nu=0.2),
            AllocationRule("exp", tau=0.7),
            AllocationRule("test", alpha=0.05),
        ):
            p = apply_rule(rule, pilot=pilot)
            assert p == pytest.approx(1.0 - apply_rule(rule, pilot=swapped), abs=1e-9)
            assert p == pytest.approx(apply_rule(rule, pilot=scaled), abs=1e-9)

    # regularizer interleaving and limit cases
    for i in range(cases):
        v = VarEstimates(
            var0=float(rng.uniform(1e-4, 1e4)),
            var1=float(rng.uniform(1e-4, 1e4)),
            m0=10,
            m1=10,
        )
        p = feasible_neyman(v)
        lo, hi = min(p, 0.5), max(p, 0.5)
        nu, tau = float(rng.uniform(0, 1)), float(rng.uniform(0, 1))
        assert lo - 1e-12 <= additive_reg(v, nu) <= hi + 1e-12
        assert lo - 1e-12 <= exponential_reg(v, tau) <= hi + 1e-12
        assert additive_reg(v, 0.0) == pytest.approx(p)
        assert exponential_reg(v, 1.0) == pytest.approx(p)
        assert exponential_reg(v, 0.0) == 0.5

    # variance-equality statistic: antisymmetry and binary degeneracy
    for i in range(cases):
        half = int(rng.integers(2, 9))
        y1 = rng.standard_normal(half)
        y0 = rng.standard_normal(half)
        pilot = PilotSample(
            outcomes=np.concatenate([y1, y0]),
            arms=np.concatenate([np.ones(half, int), np.zeros(half, int)]),
        )
        swapped = PilotSample(
            outcomes=np.concatenate([y0, y1]), arms=pilot.arms
        )
        assert wald_test(pilot).statistic == pytest.approx(
            -wald_test(swapped).statistic, abs=1e-9
        )
        binary = PilotSample(
            outcomes=rng.integers(0, 2, 2 * half).astype(float), arms=pilot.arms
        )
        assert wald_test(binary).degenerate

    # loss derivatives against central finite differences
    for i in range(cases):
        b = float(1.0 + rng.exponential(0.3))
        rho = float(rng.uniform(0.05, 3.0))
        h = 1e-5

        def loss(r):
            s0 = 1.0 / math.sqrt(1 + r**2)
            return efficiency_losses(b, s0, r * s0)

        fd_d = (loss(rho + h).loss_diff - loss(rho - h).loss_diff) / (2 * h)
        fd_r = (loss(rho + h).loss_ratio - loss(rho - h).loss_ratio) / (2 * h)
        d_d, d_r = loss_derivatives(b, rho)
        assert d_d == pytest.approx(fd_d, rel=1e-6, abs=1e-6)
        assert d_r == pytest.approx(fd_r, rel=1e-6, abs=1e-6)

    # Gaussian small-bias limit, per-arm size convention (3 grid points)
    for m in (100, 1000, 10_000):
        assert m * (gaussian_bm_oracle(2 * m) - 1.0) == pytest.approx(0.5, rel=0.05)

    # near-degenerate treated arm: the bias grows without bound in m
    regret = []
    for m in (10, 20, 40):
        spec = make_regret_dgp(kappa=float(m), omega=1.0 / m)
        regret.append(
            estimate_bm(spec, m, 20_000, np.random.default_rng(m)).b_m
        )
    assert regret[0] < regret[1] < regret[2]

    # block assignment: exact counts and uniformity over patterns
    for i in range(cases):
        n = int(rng.integers(2, 100))
        p = float(rng.uniform(1e-6, 1.0 - 1e-9))
        assert assign_block(n, p, rng).sum() == min(max(int(n * p), 1), n - 1)
    counts = {}
    for i in range(100_000):
        key = tuple(assign_block(5, 0.45, rng))
        counts[key] = counts.get(key, 0) + 1
    # chi-square over the 10 possible patterns, 99.99th percentile cutoff
    expected = sum(counts.values()) / 10
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert len(counts) == 10 and chi2 < 33.7

    # simulation engine: bitwise determinism across thread counts
    config = SimConfig(
        cells=[(1, 0.5), (2, 1.0)],
        rules=[AllocationRule("balanced"), AllocationRule("fna")],
        m=8,
        n=40,
        reps=200,
        seed=70,
    )
    assert run_mse(config, threads=1).summary_json() == run_mse(
        config, threads=3
    ).summary_json()

    report("property suites", f"{cases} randomized cases per family")


def test_8_bootstrap_validation():
    rng = np.random.default_rng(88)
    n = 100_000
    frame = pd.DataFrame(
        {
            "outcome": np.concatenate(
                [rng.standard_normal(n), rng.standard_normal(n)]
            ),
            "arm": ["t"] * n + ["c"] * n,
            "weight": 1.0,
        }
    )
    data = EmpiricalDataset(frame=frame)
    (point,) = bootstrap_cm_curve(data, ("t", "c"), [20], 20_000, rng)
    oracle = gaussian_bm_oracle(20)
    assert abs(point.interval.b_m - oracle) < 4 * point.interval.mc_se

    binary = np.zeros(n)
    binary[: n // 20] = 1.0  # a 95% constant binary arm
    degen = EmpiricalDataset(
        frame=pd.DataFrame(
            {
                "outcome": np.concatenate([binary, rng.standard_normal(n)]),
                "arm": ["t"] * n + ["c"] * n,
                "weight": 1.0,
            }
        )
    )
    with pytest.raises(DegenerateDataError):
        bootstrap_cm_curve(degen, ("t", "c"), [20], 4000, rng)
    report(
        "bootstrap validation",
        f"b20={point.interval.b_m:.5f} vs oracle {oracle:.5f}; "
        "refusal on 95%-constant binary arm",
    )
