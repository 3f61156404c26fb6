"""Command-line front end: ``fc-equiv [flags]``.

Exit status: 0 success, 2 usage error, 3 degenerate initialisation,
4 output error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional

from .errors import DegenerateInit, OutputError
from .export import emit_csv, emit_svg
from .harness import RunConfig, config_problems, property_sweep, run_equivalence

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE_INIT = 3
EXIT_IO = 4

FORMATS = ("csv", "svg", "both")


class UsageError(Exception):
    def __init__(self, problems: List[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class CliConfig:
    seed: int = 42
    eta: float = 0.05
    iters: int = 200
    variant: str = "weights"
    schedule_mode: str = "single"
    encoding: str = "pm1"
    r_denominator_reading: str = "squared"
    tolerance: float = 1e-12
    state_reference: str = "unit"
    output_path: str = "fc_run"
    format: str = "both"
    log_scale: bool = True
    sweep: Optional[int] = None

    def run_config(self) -> RunConfig:
        return RunConfig(seed=self.seed, eta=self.eta, iters=self.iters, variant=self.variant,
                         schedule_mode=self.schedule_mode, encoding=self.encoding,
                         r_denominator_reading=self.r_denominator_reading,
                         tolerance=self.tolerance, state_reference=self.state_reference)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError([message])


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fc-equiv",
                 description="Train BP and a front-contribution variant in lock-step "
                             "and record per-iteration output disagreement.")
    ap.add_argument("--variant", default="weights", help="weights | comp | state")
    ap.add_argument("--schedule", default=None,
                    help="single | xor | random (default: single, or xor for state)")
    ap.add_argument("--encoding", default="pm1", help="pm1 | 01")
    ap.add_argument("--eta", default="0.05")
    ap.add_argument("--iters", default="200")
    ap.add_argument("--seed", default="42")
    ap.add_argument("--tolerance", default="1e-12")
    ap.add_argument("--r-denominator", default="squared", help="squared | linear")
    ap.add_argument("--state-reference", default="unit", help="unit | raw")
    ap.add_argument("--format", default="both", help="csv | svg | both")
    ap.add_argument("--out", default="fc_run",
                    help="output path stem; .csv/.svg are appended")
    ap.add_argument("--log-scale", default="true", help="true | false")
    ap.add_argument("--sweep", default=None, help="run a property sweep over N seeds")
    return ap


def _number(problems, flag, raw, kind):
    try:
        return kind(raw)
    except ValueError:
        problems.append(f"{flag}: expected {kind.__name__}, got {raw!r}")
        return None


def parse_args(argv: List[str]) -> CliConfig:
    """Parse and validate ``argv``; raises UsageError listing every bad flag."""
    ns, unknown = _parser().parse_known_args(argv)
    problems = [f"unrecognised argument {u!r}" for u in unknown]
    eta = _number(problems, "--eta", ns.eta, float)
    iters = _number(problems, "--iters", ns.iters, int)
    seed = _number(problems, "--seed", ns.seed, int)
    tol = _number(problems, "--tolerance", ns.tolerance, float)
    sweep = None if ns.sweep is None else _number(problems, "--sweep", ns.sweep, int)
    if sweep is not None and sweep < 1:
        problems.append("--sweep must be >= 1")
    if ns.format not in FORMATS:
        problems.append(f"--format must be one of {', '.join(FORMATS)}")
    if ns.log_scale not in ("true", "false"):
        problems.append("--log-scale must be true or false")
    schedule = ns.schedule or ("xor" if ns.variant == "state" else "single")
    enc = ns.encoding
    # unparsable numbers were already reported; substitute valid stand-ins
    probe = argparse.Namespace(
        eta=eta if eta is not None else 1.0, iters=iters if iters is not None else 1,
        tolerance=tol if tol is not None else 1.0, variant=ns.variant,
        schedule_mode=schedule, encoding=enc, r_denominator_reading=ns.r_denominator,
        state_reference=ns.state_reference, sample_index=0)
    problems += [f"--{p}" for p in config_problems(probe)]
    if problems:
        raise UsageError(problems)
    return CliConfig(seed=seed, eta=eta, iters=iters, variant=ns.variant,
                     schedule_mode=schedule, encoding=enc,
                     r_denominator_reading=ns.r_denominator, tolerance=tol,
                     state_reference=ns.state_reference, output_path=ns.out,
                     format=ns.format, log_scale=ns.log_scale == "true", sweep=sweep)


def _stem(path: str) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".csv", ".svg", ".json") else p


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        for problem in exc.problems:
            print(f"fc-equiv: error: {problem}", file=sys.stderr)
        return EXIT_USAGE

    stem = _stem(cfg.output_path)
    try:
        if cfg.sweep is not None:
            summary = property_sweep(cfg.sweep, cfg.run_config())
            for line in summary.lines():
                print(line)
            payload = {"invariants": {k: {"checked": c, "failed": f}
                                      for k, (c, f) in summary.invariants.items()},
                       "gate_histogram": summary.gate_histogram,
                       "runs": [asdict(r) for r in summary.runs]}
            path = stem.with_name(stem.name + "_sweep.json")
            try:
                path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
            except OSError as exc:
                raise OutputError(path, exc) from exc
            return EXIT_OK

        report = run_equivalence(cfg.run_config())
        print(report.summary())
        if report.best_r_reading is not None:
            errs = ", ".join(f"{k}={v:.3e}" for k, v in report.r_reading_error.items())
            print(f"closed-form r deviation from BP: {errs}; best={report.best_r_reading}")
        if cfg.format in ("csv", "both"):
            emit_csv(report, stem.with_name(stem.name + ".csv"))
        if cfg.format in ("svg", "both"):
            emit_svg(report, stem.with_name(stem.name + ".svg"), cfg.log_scale)
    except DegenerateInit as exc:
        print(f"fc-equiv: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE_INIT
    except OutputError as exc:
        print(f"fc-equiv: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
