"""Command-line entry point: one subcommand per experiment.

Every run writes ``<subcommand>.csv`` and ``<subcommand>.json`` to the output
directory. Both carry the config hash and master seed, and neither contains
timestamps, so identical inputs give byte-identical files.

Exit codes: 0 success, 2 invalid configuration, 3 runtime failure, 64 usage.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pydantic

from . import config as cfg
from .echo import fit_exponential_decay
from .errors import AFCError, ConfigurationError, ExtractionError, FitError, ValidationError
from .evo import SimulatorFitness, genome_dict, run_ga
from .metrics import eq1_efficiency, extract_metrics, trough_background
from .multipass import pass_scan
from .photon import simulate_counts, snr
from .simulator import baseline_sequence

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_USAGE = 0, 2, 3, 64

log = logging.getLogger("afcmem")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


class Run:
    """Resolved scenario plus output plumbing for one subcommand."""

    def __init__(self, name: str, scenario: cfg.Scenario, out_dir: Path):
        self.name = name
        self.scenario = scenario
        self.out_dir = out_dir
        self.hash = cfg.config_hash(scenario)

    def write(self, header: list[str], rows: list[list], results: dict) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.out_dir / f"{self.name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header + ["config_hash", "master_seed"])
            for row in rows:
                w.writerow([_cell(v) for v in row] + [self.hash, self.scenario.master_seed])
        summary = {
            "subcommand": self.name,
            "scenario": self.scenario.name,
            "config_hash": self.hash,
            "master_seed": self.scenario.master_seed,
            "results": _jsonable(results),
        }
        with open(self.out_dir / f"{self.name}.json", "w", newline="\n") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


def cmd_baseline(run: Run, args) -> dict:
    scn = run.scenario
    sim = cfg.build_simulator(scn)
    seq = cfg.build_sequence(scn)
    stored = sim.store(seq, passes=scn.multipass.passes)
    rep = stored.report
    rows = [[scn.multipass.passes, rep.efficiency, rep.echo_time_ns, rep.leakage_fraction, rep.echo_peak_amplitude]]
    run.write(["passes", "efficiency", "echo_time_ns", "leakage_fraction", "echo_peak_amplitude"], rows,
              {"passes": scn.multipass.passes, "efficiency": rep.efficiency, "echo_time_ns": rep.echo_time_ns,
               "leakage_fraction": rep.leakage_fraction})
    print(f"efficiency {rep.efficiency:.6f}")
    return {"efficiency": rep.efficiency}


def cmd_optimize(run: Run, args) -> dict:
    scn = run.scenario
    sim = cfg.build_simulator(scn)
    fitness = SimulatorFitness(sim, passes=scn.ga.passes)
    base_eff = sim.efficiency(baseline_sequence(), passes=scn.ga.passes)
    n_values = list(scn.ga.sweep) or [scn.ga.n_pulses]
    rows, runs = [], {}
    width = max(n_values)
    for n in n_values:
        ga = cfg.build_ga(scn, n_pulses=n)
        result = run_ga(ga, fitness, progress=lambda r, n=n: log.info(
            "n=%d generation %d best %.5f mean %.5f", n, r.index, r.best_fitness, r.mean_fitness))
        for rec in result.log.records:
            for i, (g, f) in enumerate(zip(rec.genomes, rec.fitnesses)):
                genes = list(g.genes[:-2]) + [""] * (2 * (width - n))
                rows.append([n, rec.index, i, f] + genes + [g.loop_duration_us, g.loop_count])
        best_seq = result.best_genome.decode(ga.pulse_separation_ns, ga.wait_ms)
        runs[n] = {
            "best_fitness": result.best_fitness,
            "best_efficiency": sim.efficiency(best_seq, passes=scn.ga.passes),
            "best_genome": genome_dict(result.best_genome),
            "best_per_generation": result.log.best_fitness,
            "mean_per_generation": result.log.mean_fitness,
        }
        print(f"n={n} best efficiency {runs[n]['best_efficiency']:.6f} (baseline {base_eff:.6f})")
    header = ["n_pulses", "generation", "individual", "fitness"]
    for k in range(width):
        header += [f"amplitude_v_{k + 1}", f"width_ns_{k + 1}"]
    header += ["loop_duration_us", "loop_count"]
    run.write(header, rows, {"baseline_efficiency": base_eff, "runs": runs})
    return runs


def cmd_comb_dump(run: Run, args) -> dict:
    scn = run.scenario
    sim = cfg.build_simulator(scn)
    seq = cfg.build_sequence(scn)
    passes = scn.multipass.passes
    spec = sim.spectrum(seq, passes=passes)
    spacing = 1e3 / seq.pulse_separation_ns
    results = {"passes": passes, "spacing_mhz": spacing, "window_mhz": scn.comb.window_mhz,
               "trough_background": trough_background(spec, spacing, scn.comb.window_mhz)}
    try:
        m = extract_metrics(spec, spacing, scn.comb.window_mhz, shape=scn.comb.shape)
        results["metrics"] = {"finesse_F": m.finesse_F, "depth_d": m.depth_d, "background_d0": m.background_d0,
                              "spacing_delta_mhz": m.spacing_delta_mhz, "teeth_count": m.teeth_count,
                              "eq1_efficiency": m.efficiency}
    except ExtractionError as exc:
        results["metrics"] = None
        results["extraction_error"] = str(exc)
    x = spec.grid.detuning
    rows = [[float(a), float(b)] for a, b in zip(x, spec.d)]
    run.write(["detuning_mhz", "optical_depth"], rows, results)
    print(f"wrote {len(rows)} spectrum points; trough background {results['trough_background']:.4f}")
    return results


def cmd_pass_scan(run: Run, args) -> dict:
    scn = run.scenario
    sim = cfg.build_simulator(scn)
    overlap = cfg.build_overlap(scn)
    rows, best = pass_scan(sim, cfg.build_sequence(scn), scn.multipass.scan, overlap)
    out = [[m, overlap.multiplier(m), overlap.contrast(m), e] for m, e in rows]
    run.write(["passes", "depth_multiplier", "contrast", "efficiency"], out,
              {"best_passes": best, "efficiency": dict(rows)})
    print(f"best pass count {best}")
    return {"best_passes": best}


def cmd_ts_scan(run: Run, args) -> dict:
    scn = run.scenario
    sim = cfg.build_simulator(scn)
    rows, tau = sim.storage_time_scan(cfg.build_sequence(scn), scn.ts_scan.storage_times_ns,
                                      passes=scn.ts_scan.passes)
    eta0, _ = fit_exponential_decay(*zip(*rows))
    run.write(["storage_time_ns", "efficiency"], [list(r) for r in rows],
              {"passes": scn.ts_scan.passes, "tau_ns": tau, "eta0": eta0})
    print(f"tau {tau:.1f} ns")
    return {"tau_ns": tau}


def cmd_photon_stats(run: Run, args) -> dict:
    counting = cfg.build_counting(run.scenario)
    rep = simulate_counts(counting)
    rows = []
    for k, s in enumerate(rep.settings):
        ratio = snr(rep, k) if s.echo.mean > 0 and s.echo.variance > 0 else float("nan")
        rows.append([s.mean_input, s.echo.mean, s.echo.variance, s.leakage.mean, s.leakage.variance,
                     s.covariance, ratio])
    fits = {}
    for name, fit in (("echo", rep.echo_fit), ("leakage", rep.leakage_fit)):
        fits[name] = None if fit is None else {"slope": fit.slope, "intercept": fit.intercept,
                                               "ci95": [fit.ci_low, fit.ci_high]}
    run.write(["mean_input", "echo_mean", "echo_variance", "leakage_mean", "leakage_variance",
               "covariance", "snr"], rows, {"n_events": counting.n_events, "fits": fits})
    if rep.echo_fit is not None:
        print(f"echo variance/mean slope {rep.echo_fit.slope:.4f}")
    return fits


def cmd_eq1(run: Run, args) -> dict:
    eta = eq1_efficiency(args.d, args.F, args.d0)
    run.write(["d", "F", "d0", "efficiency"], [[args.d, args.F, args.d0, eta]],
              {"d": args.d, "F": args.F, "d0": args.d0, "efficiency": eta})
    print(f"{eta:.3f}")
    return {"efficiency": eta}


COMMANDS = {
    "baseline": (cmd_baseline, "two-pulse preparation and storage"),
    "optimize": (cmd_optimize, "genetic optimisation of the pump sequence"),
    "comb-dump": (cmd_comb_dump, "absorption spectrum after preparation"),
    "pass-scan": (cmd_pass_scan, "efficiency versus number of passes"),
    "ts-scan": (cmd_ts_scan, "efficiency versus storage time"),
    "photon-stats": (cmd_photon_stats, "photon-counting statistics"),
    "eq1": (cmd_eq1, "analytic efficiency for given comb parameters"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="scenario YAML (default: $AFCMEM_CONFIG_DIR/default.yaml or packaged)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
                        help="override a config field, e.g. --set medium.d_peak=1.3")
    common.add_argument("--seed", type=int, help="master seed (same as --set master_seed=N)")
    common.add_argument("--out", help="output directory (default: output.dir from the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="afcmem", description="Atomic-frequency-comb memory experiments.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "eq1":
            p.add_argument("--d", type=float, required=True, help="tooth optical depth")
            p.add_argument("--F", type=float, required=True, help="finesse")
            p.add_argument("--d0", type=float, default=0.0, help="background optical depth")
    return parser


def _config_error_lines(exc: pydantic.ValidationError) -> list[str]:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"])
        lines.append(f"config error at {path}: {err['msg']}")
    return lines


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"master_seed={args.seed}")
    try:
        scenario = cfg.load_config(args.config, overrides)
        out_dir = Path(args.out or scenario.output.dir)
        run = Run(args.command, scenario, out_dir)
        COMMANDS[args.command][0](run, args)
    except pydantic.ValidationError as exc:
        for line in _config_error_lines(exc):
            print(line, file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, ValidationError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AFCError, FitError, OSError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
