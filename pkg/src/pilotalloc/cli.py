"""Command-line front end.

Subcommands: cm (inefficiency-interval curves), mse (two-wave MSE
campaigns), analyze (empirical dataset pipeline), recommend (allocation for
a real pilot), loss (efficiency-loss report).

Exit codes: 0 success, 2 invalid input or configuration, 3 statistical
degeneracy refusal.
"""

from __future__ import annotations

import argparse
import csv
import importlib.metadata
import importlib.resources
import json
import secrets
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import alloc, asymp, dgp, empirical, sim
from .errors import (
    DataInputError,
    DegenerateDataError,
    InvalidParameterError,
    NotApplicableError,
)

MANIFEST_SCHEMA_TAG = "pilotalloc.manifest/1"

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DEGENERATE = 3


def _version() -> str:
    try:
        return importlib.metadata.version("pilotalloc")
    except importlib.metadata.PackageNotFoundError:
        return "0.0.0+unknown"


def manifest_schema() -> dict:
    ref = importlib.resources.files("pilotalloc") / "manifest_schema.json"
    return json.loads(ref.read_text())


def write_manifest(
    out_dir: Path, command: str, flags: dict, seed: int, started: float,
    outputs: list[Path],
) -> Path:
    manifest = {
        "schema": MANIFEST_SCHEMA_TAG,
        "command": command,
        "flags": flags,
        "seed": seed,
        "version": _version(),
        "wall_time_s": round(time.monotonic() - started, 3),
        "outputs": [str(p) for p in outputs],
    }
    jsonschema.validate(manifest, manifest_schema())
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _parse_m_grid(text: str) -> list[int]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InvalidParameterError("m-grid range must be start:stop:step")
        start, stop, step = (int(p) for p in parts)
        grid = list(range(start, stop + 1, step))
    else:
        grid = [int(p) for p in text.split(",")]
    if not grid:
        raise InvalidParameterError("empty m grid")
    for m in grid:
        if m < 4 or m % 2 != 0:
            raise InvalidParameterError(f"grid pilot sizes must be even >= 4, got {m}")
    return grid


def _parse_pairs(text: str) -> list[tuple[str, str]]:
    pairs = []
    for chunk in text.split(","):
        if ":" not in chunk:
            raise InvalidParameterError("pairs must look like treated:control")
        treated, control = chunk.split(":", 1)
        pairs.append((treated.strip(), control.strip()))
    return pairs


def _load_empirical(args) -> empirical.EmpiricalDataset:
    return empirical.load_dataset(
        args.data,
        outcome=args.outcome_col,
        arm=args.arm_col,
        weight=args.weight_col,
        cluster=args.cluster_col,
    )


def cmd_cm(args, out_dir: Path, seed: int, started: float) -> int:
    m_grid = _parse_m_grid(args.m_grid)
    if (args.model is None) == (args.data is None):
        raise InvalidParameterError("give exactly one of --model or --data")
    if args.model is not None:
        spec = dgp.make_model(args.model, args.ratio)
        points = asymp.cm_curve(spec, m_grid, args.draws, seed)
    else:
        data = _load_empirical(args)
        pair = _parse_pairs(args.pair)[0]
        rng = np.random.default_rng(seed)
        points = empirical.bootstrap_cm_curve(data, pair, m_grid, args.draws, rng)
    curve_path = out_dir / "cm_curve.csv"
    asymp.write_cm_curve_csv(points, curve_path)
    write_manifest(out_dir, "cm", _flag_echo(args), seed, started, [curve_path])
    return EXIT_OK


def cmd_mse(args, out_dir: Path, seed: int, started: float) -> int:
    config = sim.load_config(args.config)
    result = sim.run_mse(config, threads=args.threads)
    csv_path = out_dir / "mse.csv"
    result.write_csv(csv_path)
    summary_path = out_dir / "mse_summary.json"
    summary_path.write_text(json.dumps(result.summary_json(), indent=2) + "\n")
    write_manifest(
        out_dir, "mse", _flag_echo(args), config.seed, started,
        [csv_path, summary_path],
    )
    return EXIT_OK


def cmd_analyze(args, out_dir: Path, seed: int, started: float) -> int:
    data = _load_empirical(args)
    if args.cluster:
        data = empirical.cluster_aggregate(data)
    pairs = _parse_pairs(args.pairs)
    stats = empirical.group_stats(data, pairs)

    stats_path = out_dir / "stats.csv"
    probs = sorted(next(iter(stats.arms.values())).quantiles)
    with open(stats_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "n", "sd", "kurtosis"] + [f"q{p:g}" for p in probs])
        for lab in sorted(stats.arms):
            arm = stats.arms[lab]
            writer.writerow(
                [lab, arm.n, f"{arm.sd:.10g}",
                 "" if arm.kurtosis is None else f"{arm.kurtosis:.10g}"]
                + [f"{arm.quantiles[p]:.10g}" for p in probs]
            )

    outputs = [stats_path]
    reports = []
    for pair, pstat in zip(pairs, stats.pairs):
        report: dict = {
            "pair": f"{pair[0]}:{pair[1]}",
            "sd_ratio": pstat.ratio,
            "exact_m": None,
            "asymptotic_m": None,
            "degenerate_fraction": None,
        }
        try:
            m_hat = empirical.required_pilot_from_data(data, pair)
            report["asymptotic_m"] = None if m_hat == float("inf") else m_hat
        except (DegenerateDataError, NotApplicableError) as exc:
            report["note"] = str(exc)
        if args.m_grid is not None and pstat.ratio is not None:
            m_grid = _parse_m_grid(args.m_grid)
            rng = np.random.default_rng(np.random.SeedSequence((seed, pairs.index(pair))))
            curve = empirical.bootstrap_cm_curve(data, pair, m_grid, args.draws, rng)
            curve_path = out_dir / f"cm_curve_{pair[0]}_{pair[1]}.csv"
            asymp.write_cm_curve_csv(curve, curve_path)
            outputs.append(curve_path)
            report["degenerate_fraction"] = max(pt.degenerate_fraction for pt in curve)
            if len(curve) >= 4:
                report["exact_m"] = empirical.required_pilot_exact(curve, pstat.ratio)
        reports.append(report)

    report_path = out_dir / "pilot_sizes.json"
    report_path.write_text(json.dumps(reports, indent=2) + "\n")
    outputs.append(report_path)
    write_manifest(out_dir, "analyze", _flag_echo(args), seed, started, outputs)
    return EXIT_OK


def _pilot_from_csv(path, outcome: str, arm: str) -> dgp.PilotSample:
    data = empirical.load_dataset(path, outcome=outcome, arm=arm)
    labels = sorted(data.frame["arm"].unique())
    if len(labels) != 2:
        raise DataInputError(f"pilot must have exactly 2 arms, got {labels}")
    if set(labels) == {"0", "1"}:
        control, treated = "0", "1"
    else:
        control, treated = labels  # alphabetical: first label is control
    arms = np.where(data.frame["arm"].to_numpy() == treated, 1, 0)
    return dgp.PilotSample(outcomes=data.frame["outcome"].to_numpy(), arms=arms)


def _rule_from_args(args) -> alloc.AllocationRule:
    return alloc.AllocationRule(
        kind=args.rule,
        p=args.p,
        alpha=args.alpha,
        nu=args.nu,
        tau=args.tau,
    )


def cmd_recommend(args, out_dir: Path, seed: int, started: float) -> int:
    pilot = _pilot_from_csv(args.pilot, args.outcome_col, args.arm_col)
    rule = _rule_from_args(args)
    truth = None
    if rule.needs_truth:
        if args.sigma0 is None or args.sigma1 is None:
            raise InvalidParameterError("ina rule needs --sigma0 and --sigma1")
        truth = (args.sigma0, args.sigma1)
    p = alloc.apply_rule(rule, pilot=pilot, truth=truth)
    rng = np.random.default_rng(seed)
    n1 = int(alloc.assign_block(args.n, p, rng).sum())

    v = alloc.pilot_variances(pilot)
    diagnostics: dict = {
        "var0": v.var0,
        "var1": v.var1,
        "m0": v.m0,
        "m1": v.m1,
    }
    if pilot.m0 == pilot.m1:
        w = alloc.wald_test(pilot)
        diagnostics["wald_statistic"] = w.statistic
        diagnostics["wald_degenerate"] = w.degenerate
    warning = False
    if v.var0 > 0 and v.var1 > 0:
        y0, y1 = pilot.arm_outcomes(0), pilot.arm_outcomes(1)
        k0 = empirical.weighted_kurtosis(y0, np.ones(len(y0)))
        k1 = empirical.weighted_kurtosis(y1, np.ones(len(y1)))
        v_hat = 0.25 * (k1 + k0 - 2.0)
        ratio = (v.var1 / v.var0) ** 0.5
        if v_hat > 0:
            approx = asymp.subgaussian_cm(v_hat, pilot.m, per_arm=False)
            warning = approx.lower <= ratio <= approx.upper
            diagnostics["cm_approx_lower"] = approx.lower
            diagnostics["cm_approx_upper"] = approx.upper
    out = {
        "rule": alloc.rule_to_json(rule),
        "p": p,
        "n": args.n,
        "n1": n1,
        "homoskedasticity_warning": warning,
        "diagnostics": diagnostics,
    }
    rec_path = out_dir / "recommendation.json"
    rec_path.write_text(json.dumps(out, indent=2) + "\n")
    write_manifest(out_dir, "recommend", _flag_echo(args), seed, started, [rec_path])
    return EXIT_OK


def cmd_loss(args, out_dir: Path, seed: int, started: float) -> int:
    report = asymp.efficiency_losses(args.bm, args.sigma0, args.sigma1)
    print(
        json.dumps(
            {
                "b_m": report.b_m,
                "sigma0": report.sigma0,
                "sigma1": report.sigma1,
                "loss_diff": report.loss_diff,
                "loss_ratio": report.loss_ratio,
            },
            indent=2,
        )
    )
    return EXIT_OK


def _flag_echo(args) -> dict:
    skip = {"func"}
    return {
        k: v for k, v in vars(args).items()
        if k not in skip and v is not None and not callable(v)
    }


def _add_schema_flags(parser, with_weight_cluster=True):
    parser.add_argument("--outcome-col", default="outcome")
    parser.add_argument("--arm-col", default="arm")
    if with_weight_cluster:
        parser.add_argument("--weight-col", default=None)
        parser.add_argument("--cluster-col", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pilotalloc",
        description="Pilot-based treatment allocation: inefficiency intervals, "
        "MSE simulations, empirical analysis and recommendations.",
    )
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed; a random one is drawn and recorded if omitted")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out-dir", default=".")
    sub = parser.add_subparsers(dest="command", required=True)

    p_cm = sub.add_parser("cm", help="inefficiency-interval curve")
    p_cm.add_argument("--model", type=int, choices=range(1, 6), default=None)
    p_cm.add_argument("--ratio", type=float, default=1.0)
    p_cm.add_argument("--data", default=None)
    p_cm.add_argument("--pair", default=None, help="treated:control for --data")
    p_cm.add_argument("--m-grid", required=True)
    p_cm.add_argument("--draws", type=int, default=10_000)
    _add_schema_flags(p_cm)
    p_cm.set_defaults(func=cmd_cm)

    p_mse = sub.add_parser("mse", help="two-wave MSE simulation campaign")
    p_mse.add_argument("--config", required=True)
    p_mse.set_defaults(func=cmd_mse)

    p_an = sub.add_parser("analyze", help="empirical dataset pipeline")
    p_an.add_argument("--data", required=True)
    p_an.add_argument("--pairs", required=True, help="treated:control[,t:c...]")
    p_an.add_argument("--cluster", action="store_true",
                      help="aggregate to cluster-level means first")
    p_an.add_argument("--m-grid", default=None)
    p_an.add_argument("--draws", type=int, default=10_000)
    _add_schema_flags(p_an)
    p_an.set_defaults(func=cmd_analyze)

    p_rec = sub.add_parser("recommend", help="allocation from a real pilot CSV")
    p_rec.add_argument("--pilot", required=True)
    p_rec.add_argument("--rule", default="fna",
                       choices=sorted(alloc._KINDS))
    p_rec.add_argument("--p", type=float, default=None)
    p_rec.add_argument("--alpha", type=float, default=None)
    p_rec.add_argument("--nu", type=float, default=None)
    p_rec.add_argument("--tau", type=float, default=None)
    p_rec.add_argument("--sigma0", type=float, default=None)
    p_rec.add_argument("--sigma1", type=float, default=None)
    p_rec.add_argument("--n", type=int, required=True)
    _add_schema_flags(p_rec, with_weight_cluster=False)
    p_rec.set_defaults(func=cmd_recommend)

    p_loss = sub.add_parser("loss", help="efficiency-loss report")
    p_loss.add_argument("--bm", type=float, required=True)
    p_loss.add_argument("--sigma0", type=float, required=True)
    p_loss.add_argument("--sigma1", type=float, required=True)
    p_loss.set_defaults(func=cmd_loss)
    return parser


def main(argv=None) -> int:
    started = time.monotonic()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    seed = args.seed if args.seed is not None else secrets.randbits(32)
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        return args.func(args, out_dir, seed, started)
    except DegenerateDataError as exc:
        print(f"degeneracy refusal: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (InvalidParameterError, DataInputError, NotApplicableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
