"""Command-line benchmark harness.

Subcommands:

* ``run``: one (scenario, technique) campaign, metrics to stdout and
  optionally full artifacts to a directory.
* ``table2``: the six-technique comparison on the stochastic tracking
  scenario, including the fixed filter running the true noise intensity.
* ``table3-properties``: the qualitative formation-flying claims, evaluated
  as PASS/FAIL lines (exit status 2 when any fails).
* ``sweep-q0``: sensitivity of steady-state accuracy to the initial noise
  intensity guess, over a log-spaced grid.

All randomness derives from (seed, run index), so repeated invocations with
the same arguments reproduce the emitted aggregate files byte for byte.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import CampaignResult, Technique, emit_results, run_campaign
from .scenarios import bundled_scenario_names, load_scenario
from .scenarios.particle import TRUTH_QTILDE

_TABLE2_VARIANTS = (
    # label, technique, config overrides
    ("ideal", Technique.SNC, {"qtilde0": TRUTH_QTILDE}),
    ("cm", Technique.CM, {}),
    ("imm", Technique.IMM, {"imm_qtilde_min": 1e-2, "imm_qtilde_max": 1.0}),
    ("imm_wide", Technique.IMM, {"imm_qtilde_min": 1e-3, "imm_qtilde_max": 100.0}),
    ("asnc", Technique.ASNC, {}),
    ("admc", Technique.ADMC, {}),
)


def _fmt(value: float | None, width: int = 11, prec: int = 4) -> str:
    if value is None:
        return " " * (width - 1) + "-"
    return f"{value:{width}.{prec}g}"


def _add_common(parser: argparse.ArgumentParser, default_runs: int) -> None:
    parser.add_argument("--runs", type=int, default=default_runs,
                        help=f"Monte-Carlo runs per campaign (default {default_runs})")
    parser.add_argument("--seed", type=int, default=None,
                        help="campaign seed (default: scenario's default_seed)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker processes (default 1)")
    parser.add_argument("--out", type=Path, default=None,
                        help="directory to write campaign artifacts into")


def _emit(result: CampaignResult, out: Path | None, subdir: str | None = None,
          include_series: bool = False) -> None:
    if out is None:
        return
    target = out / subdir if subdir else out
    emit_results(result, target, include_series=include_series)


def cmd_run(args: argparse.Namespace) -> int:
    config = load_scenario(args.scenario)
    result = run_campaign(
        config, args.technique, args.runs, args.seed,
        threads=args.threads, keep_series=args.series,
    )
    _emit(result, args.out, include_series=args.series)
    print(f"scenario {result.scenario}  technique {result.technique.value}  "
          f"runs {result.runs}  seed {result.seed}")
    for metric, (value, se) in result.aggregates().items():
        print(f"  {metric:<18s} {value:.10g}  (se {se:.3g})")
    stats = result.runtime_stats()
    if stats is not None:
        print(f"  {'runtime_per_call_s':<18s} {stats[0]:.3g}  (se {stats[1]:.3g})")
    return 0


def cmd_table2(args: argparse.Namespace) -> int:
    base = load_scenario(args.scenario)
    if base.kind != "particle" or base.truth_mode != "stochastic":
        raise ValueError("table2 expects a stochastic particle scenario")
    rows = []
    runtime_ideal = None
    for label, technique, overrides in _TABLE2_VARIANTS:
        config = base.replace(**overrides) if overrides else base
        result = run_campaign(config, technique, args.runs, args.seed,
                              threads=args.threads)
        _emit(result, args.out, subdir=label)
        agg = result.aggregates()
        stats = result.runtime_stats()
        runtime = stats[0] if stats else None
        if label == "ideal":
            runtime_ideal = runtime
        overhead = None
        if runtime is not None and runtime_ideal:
            overhead = 100.0 * (runtime - runtime_ideal) / runtime_ideal
        rows.append((label, agg, overhead, result.divergences))

    header = (f"{'technique':<10s}{'mae_x':>11s}{'mae_xdot':>11s}"
              f"{'q11_mae':>11s}{'q22_mae':>11s}{'overhead%':>11s}{'div':>5s}")
    print(f"stochastic tracking, {args.runs} runs, seed "
          f"{args.seed if args.seed is not None else base.default_seed}")
    print(header)
    for label, agg, overhead, div in rows:
        print(f"{label:<10s}"
              f"{_fmt(agg.get('mae_x', (None,))[0])}"
              f"{_fmt(agg.get('mae_xdot', (None,))[0])}"
              f"{_fmt(agg.get('q11_mae', (None,))[0])}"
              f"{_fmt(agg.get('q22_mae', (None,))[0])}"
              f"{_fmt(overhead, prec=3)}"
              f"{div:>5d}")
    return 0


def _property_line(name: str, ok: bool, detail: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return ok


def cmd_table3(args: argparse.Namespace) -> int:
    techniques = (Technique.CM, Technique.ASNC, Technique.ADMC)
    metrics: dict[tuple[str, str], dict] = {}
    for scenario in (args.scenario, args.maneuver_scenario):
        config = load_scenario(scenario)
        if config.kind != "formation":
            raise ValueError("table3-properties expects formation scenarios")
        for technique in techniques:
            result = run_campaign(config, technique, args.runs, args.seed,
                                  threads=args.threads)
            _emit(result, args.out, subdir=f"{config.truth_mode}_{technique.value}")
            agg = result.aggregates()
            metrics[(config.truth_mode, technique.value)] = {
                "pos": agg["mean_pos_err"][0],
                "vel": agg["mean_vel_err"][0],
                "cont": agg["contain3_pos"][0],
                "div": result.divergences,
            }
            print(f"[{config.name} {technique.value}] pos {agg['mean_pos_err'][0]:.3f} m  "
                  f"vel {agg['mean_vel_err'][0] * 1e3:.3f} mm/s  "
                  f"contain3 {agg['contain3_pos'][0]:.3f}  "
                  f"divergences {result.divergences}")

    no = {t.value: metrics[("none", t.value)] for t in techniques}
    imp = {t.value: metrics[("imperfect", t.value)] for t in techniques}
    ok = True
    ok &= _property_line(
        "containment",
        no["asnc"]["cont"] >= 0.95 and no["admc"]["cont"] >= 0.95
        and no["cm"]["cont"] < min(no["asnc"]["cont"], no["admc"]["cont"]),
        f"asnc {no['asnc']['cont']:.3f}, admc {no['admc']['cont']:.3f}, "
        f"cm {no['cm']['cont']:.3f}",
    )
    ok &= _property_line(
        "adaptive_beats_cm_position",
        no["asnc"]["pos"] < no["cm"]["pos"],
        f"asnc {no['asnc']['pos']:.2f} m vs cm {no['cm']['pos']:.2f} m",
    )
    ok &= _property_line(
        "colored_noise_advantage",
        no["admc"]["pos"] <= no["asnc"]["pos"],
        f"admc {no['admc']['pos']:.2f} m vs asnc {no['asnc']['pos']:.2f} m",
    )
    cm_ratio = imp["cm"]["vel"] / no["cm"]["vel"]
    asnc_ratio = imp["asnc"]["vel"] / no["asnc"]["vel"]
    admc_ratio = imp["admc"]["vel"] / no["admc"]["vel"]
    ok &= _property_line(
        "maneuver_robustness",
        cm_ratio >= 2.0 and asnc_ratio < 1.15 and admc_ratio < 1.15,
        f"velocity degradation cm {cm_ratio:.2f}x, asnc {asnc_ratio:.2f}x, "
        f"admc {admc_ratio:.2f}x",
    )
    return 0 if ok else 2


def cmd_sweep_q0(args: argparse.Namespace) -> int:
    base = load_scenario(args.scenario)
    points = [float(tok) for tok in args.points.split(",") if tok.strip()]
    if not points or any(p < 0 for p in points):
        raise ValueError("sweep points must be non-negative numbers")
    techniques = [Technique.parse(tok) for tok in args.techniques.split(",") if tok.strip()]

    print(f"{'technique':<10s}{'qtilde0':>12s}{'mae_x':>12s}{'mae_xdot':>12s}{'div':>5s}")
    lines = ["technique,qtilde0,mae_x,mae_xdot,divergences"]
    for technique in techniques:
        for q0 in points:
            config = base.replace(qtilde0=q0)
            result = run_campaign(config, technique, args.runs, args.seed,
                                  threads=args.threads)
            agg = result.aggregates()
            mae_x = agg.get("mae_x", (float("nan"),))[0]
            mae_v = agg.get("mae_xdot", (float("nan"),))[0]
            print(f"{technique.value:<10s}{q0:>12.3g}{mae_x:>12.5g}{mae_v:>12.5g}"
                  f"{result.divergences:>5d}")
            lines.append(
                f"{technique.value},{q0:.17g},{mae_x:.17g},{mae_v:.17g},"
                f"{result.divergences}"
            )
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "sweep.csv").write_text("\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qadapt",
        description="Monte-Carlo benchmarks for adaptive process-noise estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one campaign")
    p_run.add_argument("--scenario", required=True,
                       help="bundled scenario name or YAML path; bundled: "
                            + ", ".join(bundled_scenario_names()))
    p_run.add_argument("--technique", required=True,
                       help="one of " + ", ".join(t.value for t in Technique))
    p_run.add_argument("--series", action="store_true",
                       help="retain and emit full per-epoch series")
    _add_common(p_run, default_runs=100)
    p_run.set_defaults(func=cmd_run)

    p_t2 = sub.add_parser("table2", help="six-technique stochastic comparison")
    p_t2.add_argument("--scenario", default="particle_stochastic")
    _add_common(p_t2, default_runs=1000)
    p_t2.set_defaults(func=cmd_table2)

    p_t3 = sub.add_parser("table3-properties",
                          help="formation-flying qualitative properties")
    p_t3.add_argument("--scenario", default="formation_no_maneuver")
    p_t3.add_argument("--maneuver-scenario", default="formation_imperfect_maneuver")
    _add_common(p_t3, default_runs=200)
    p_t3.set_defaults(func=cmd_table3)

    p_sw = sub.add_parser("sweep-q0", help="initial-guess sensitivity sweep")
    p_sw.add_argument("--scenario", default="particle_deterministic")
    p_sw.add_argument("--techniques", default="snc,asnc",
                      help="comma-separated technique names")
    p_sw.add_argument("--points", default="1e-12,1e-8,1e-4,1,1e4,1e8",
                      help="comma-separated qtilde0 values")
    _add_common(p_sw, default_runs=25)
    p_sw.set_defaults(func=cmd_sweep_q0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
