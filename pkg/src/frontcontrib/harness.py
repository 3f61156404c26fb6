"""Lock-step runs of sequential-order BP against a collapsed-network variant."""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .collapse import (R_READINGS, STATE_REFERENCES, VARIANTS, CollapsedState,
                       GateTransition, collapse, fc_step, r_update)
from .errors import FrontContributionError, UnsupportedBranch
from .model import (NetParams, Sample, Schedule, bp_step, forward, init_params,
                    make_schedule, relu)

SCHEDULES = ("single", "xor", "random")
ENCODINGS = ("pm1", "01")

# Identity tolerances, absolute unless noted.
COMPENSATION_TOL = 1e-12
PER_NODE_TOL = 1e-13
ANNIHILATION_REL_TOL = 1e-14
RECURRENCE_REL_TOL = 1e-14


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    eta: float = 0.05
    iters: int = 200
    variant: str = "weights"
    schedule_mode: str = "single"
    encoding: str = "pm1"
    r_denominator_reading: str = "squared"
    tolerance: float = 1e-12
    state_reference: str = "unit"
    sample_index: int = 0

    def __post_init__(self):
        problems = config_problems(self)
        if problems:
            raise ValueError("; ".join(problems))


def config_problems(cfg) -> List[str]:
    """Every violated constraint of a RunConfig-like object, in a stable order."""
    out = []
    if not cfg.eta > 0:
        out.append("eta must be > 0")
    elif not math.isfinite(cfg.eta):
        out.append("eta must be finite")
    if cfg.iters < 1:
        out.append("iters must be >= 1")
    if not cfg.tolerance > 0:
        out.append("tolerance must be > 0")
    if cfg.variant not in VARIANTS:
        out.append(f"variant must be one of {', '.join(VARIANTS)}")
    if cfg.schedule_mode not in SCHEDULES:
        out.append(f"schedule must be one of {', '.join(SCHEDULES)}")
    if cfg.encoding not in ENCODINGS:
        out.append(f"encoding must be one of {', '.join(ENCODINGS)}")
    if cfg.r_denominator_reading not in R_READINGS:
        out.append(f"r-denominator must be one of {', '.join(R_READINGS)}")
    if cfg.state_reference not in STATE_REFERENCES:
        out.append(f"state-reference must be one of {', '.join(STATE_REFERENCES)}")
    if cfg.variant == "comp" and cfg.schedule_mode != "single":
        out.append("variant comp only supports the single schedule")
    if not 0 <= cfg.sample_index < 4:
        out.append("sample-index must be in 0..3")
    return out


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    y_bp: float
    y_fc: float
    abs_err: float
    gate1: GateTransition
    gate2: GateTransition
    unsupported: bool
    params: NetParams                 # BP weights after the step
    p: float
    q: float
    r5: float
    r6: float
    output_identity_err: Optional[float] = None  # compensation identity residual after the step
    node_identity_err: Optional[float] = None  # worst per-node identity residual after the step
    annihilation_ok: Optional[bool] = None
    recurrence_rel: Optional[float] = None


@dataclass
class EquivalenceReport:
    rows: List[TraceRow]
    max_abs_err: float
    first_divergence_iter: Optional[int]
    gate_histogram: Dict[str, int]
    config: RunConfig
    unsupported_iters: List[int] = field(default_factory=list)
    r_reading_error: Dict[str, float] = field(default_factory=dict)
    r_unsupported: Dict[str, int] = field(default_factory=dict)
    best_r_reading: Optional[str] = None

    @property
    def unsupported_count(self) -> int:
        return len(self.unsupported_iters)

    @property
    def achieved_order(self) -> Optional[int]:
        """Decimal exponent of ``max_abs_err``; None for exact agreement."""
        if self.max_abs_err == 0.0:
            return None
        return math.floor(math.log10(self.max_abs_err))

    def summary(self) -> str:
        order = "exact" if self.achieved_order is None else f"1e{self.achieved_order}"
        first = "none" if self.first_divergence_iter is None else str(self.first_divergence_iter)
        return (f"variant={self.config.variant} seed={self.config.seed} "
                f"iters={len(self.rows)} max_abs_err={self.max_abs_err:.3e} "
                f"(order {order}) first_divergence={first} "
                f"unsupported={self.unsupported_count}")


def _gate_key(g1: GateTransition, g2: GateTransition) -> str:
    return f"{g1.value}/{g2.value}"


def _recurrence_rel(before: NetParams, after: NetParams, sample: Sample, eta: float,
                    dE_dY: float) -> Optional[float]:
    """Relative residual of the single-input pre-activation recurrence on node 1.

    Residual is scaled by the magnitude of the terms entering the sums, which is
    the size rounding acts on.  None when node 1 is not active on both sides.
    """
    s = before.w1 * sample.x1 + before.w2 * sample.x2
    s_new = after.w1 * sample.x1 + after.w2 * sample.x2
    if not (s > 0.0 and s_new > 0.0):
        return None
    step = eta * dE_dY * after.w5 * sample.norm2
    predicted = s - step
    scale = (abs(before.w1 * sample.x1) + abs(before.w2 * sample.x2)
             + abs(after.w1 * sample.x1) + abs(after.w2 * sample.x2) + abs(step))
    return abs(s_new - predicted) / scale if scale else 0.0


def _identities(variant, bp_after: NetParams, fc: CollapsedState, sample: Sample):
    """Compensation identity and per-node identity residuals after a step."""
    if variant == "state":
        return None, None, None
    t = forward(bp_after, sample)
    v1c, v2c = fc.reference_activations(sample)
    lhs = t.v1 * bp_after.w5 + t.v2 * bp_after.w6
    rhs = v1c * (fc.w5 + fc.p) + v2c * (fc.w6 + fc.q)
    out_err = abs(lhs - rhs)
    node_err = None
    if variant == "weights":
        node_err = max(abs((t.v1 - v1c) * bp_after.w5 - v1c * fc.p),
                   abs((t.v2 - v2c) * bp_after.w6 - v2c * fc.q))
    return out_err, node_err, lhs


def _annihilation(fc: CollapsedState, sample: Sample, gates, bp_after: NetParams) -> Optional[bool]:
    if fc.steps == 0:
        return None
    v1c, v2c = fc.reference_activations(sample)
    ok = None
    for gate, r, w, v_c in ((gates[0], fc.r5, bp_after.w5, v1c), (gates[1], fc.r6, bp_after.w6, v2c)):
        if gate is GateTransition.ACTIVE_DEAD:
            good = abs(r * v_c) <= ANNIHILATION_REL_TOL * abs(w * v_c)
            ok = good if ok is None else (ok and good)
    return ok


def build_schedule(config: RunConfig) -> Schedule:
    return make_schedule(config.schedule_mode, config.encoding, config.iters,
                         config.seed, config.sample_index)


def run_equivalence(config: RunConfig, params: Optional[NetParams] = None) -> EquivalenceReport:
    """Train BP and the configured FC variant side by side from one seeded init.

    ``params`` overrides the seeded initialisation (used for forcing gate cases
    in tests).
    """
    schedule = build_schedule(config)
    if params is None:
        params = init_params(config.seed, schedule.reference)
    fc = collapse(params, schedule.reference, config.eta, config.state_reference)
    bp = params
    rows: List[TraceRow] = []
    hist: Counter = Counter()
    unsupported: List[int] = []
    track_r = config.schedule_mode == "single" and config.variant != "state"
    r_err = {k: 0.0 for k in R_READINGS}
    r_bad = {k: 0 for k in R_READINGS}
    r_cfg = config.r_denominator_reading

    for n in range(config.iters):
        x = schedule.sample_at(n)
        bp_new, trace = bp_step(bp, x, config.eta)
        fc_new, out, step_gates = fc_step(fc, x, config.variant)
        err = abs(trace.y - out.y_fc)
        if out.unsupported:
            unsupported.append(n)
        hist[_gate_key(*step_gates)] += 1

        out_err, node_err, _ = (None, None, None) if out.unsupported else _identities(
            config.variant, bp_new, fc_new, x)
        annih = None if config.variant == "state" else _annihilation(fc_new, x, step_gates, bp_new)
        rec = _recurrence_rel(bp, bp_new, x, config.eta, trace.dE_dY)

        r5 = r6 = float("nan")
        if track_r:
            t_new = forward(bp_new, x)
            oracle5 = t_new.v1 * bp_new.w5 / fc_new.v1c
            oracle6 = t_new.v2 * bp_new.w6 / fc_new.v2c
            at = replace(fc_new, w5=bp_new.w5, w6=bp_new.w6)
            for reading in R_READINGS:
                try:
                    c5, c6 = r_update(at, x, out.y_fc - x.y_g, n + 1, reading)
                except UnsupportedBranch:
                    r_bad[reading] += 1
                    continue
                dev = max(abs(c5 - oracle5), abs(c6 - oracle6))
                r_err[reading] = max(r_err[reading], dev)
                if reading == r_cfg:
                    r5, r6 = c5, c6

        rows.append(TraceRow(
            iteration=n, y_bp=trace.y, y_fc=out.y_fc, abs_err=err,
            gate1=step_gates[0], gate2=step_gates[1], unsupported=out.unsupported,
            params=bp_new, p=fc_new.p, q=fc_new.q, r5=r5, r6=r6,
            output_identity_err=out_err, node_identity_err=node_err, annihilation_ok=annih, recurrence_rel=rec))
        bp, fc = bp_new, fc_new

    supported = [r for r in rows if not r.unsupported]
    max_err = max((r.abs_err for r in supported), default=0.0)
    first = next((r.iteration for r in supported if r.abs_err > config.tolerance), None)
    report = EquivalenceReport(rows, max_err, first, dict(sorted(hist.items())), config,
                               unsupported)
    if track_r:
        report.r_reading_error = r_err
        report.r_unsupported = r_bad
        report.best_r_reading = min(R_READINGS, key=lambda k: (r_bad[k], r_err[k]))
    return report


CANONICAL = RunConfig(seed=42, eta=0.05, iters=200, encoding="pm1")


def xor_experiment(variant: str) -> EquivalenceReport:
    """Canonical XOR run for one variant (seed 42, eta 0.05, 200 presentations, +-1 inputs).

    ``weights`` and ``comp`` train on a single XOR pattern repeated; ``state``
    cycles through all four.
    """
    mode = "xor" if variant == "state" else "single"
    return run_equivalence(replace(CANONICAL, variant=variant, schedule_mode=mode))


@dataclass
class SeedResult:
    seed: int
    eta: float
    max_abs_err: float = float("nan")
    unsupported: int = 0
    error: Optional[str] = None


@dataclass
class SweepSummary:
    runs: List[SeedResult]
    invariants: Dict[str, Tuple[int, int]]      # name -> (checked, failed)
    gate_histogram: Dict[str, int]
    unsupported_steps: int

    @property
    def all_passed(self) -> bool:
        return all(failed == 0 for _, failed in self.invariants.values()) and not any(
            r.error for r in self.runs)

    def lines(self) -> List[str]:
        out = [f"runs={len(self.runs)} errors={sum(1 for r in self.runs if r.error)} "
               f"unsupported_steps={self.unsupported_steps}"]
        for name, (checked, failed) in self.invariants.items():
            out.append(f"{name}: {'PASS' if failed == 0 else 'FAIL'} "
                       f"({checked - failed}/{checked})")
        for key, count in self.gate_histogram.items():
            out.append(f"gates {key}: {count}")
        return out


def sweep_eta(seed: int, eta_range: Tuple[float, float]) -> float:
    lo, hi = eta_range
    return float(np.random.default_rng([seed, 2]).uniform(lo, hi))


def _one(seed, base, eta_range):
    eta = sweep_eta(seed, eta_range)
    try:
        return seed, eta, run_equivalence(replace(base, seed=seed, eta=eta)), None
    except (FrontContributionError, ArithmeticError) as exc:
        return seed, eta, None, f"{type(exc).__name__}: {exc}"


def property_sweep(n_seeds: int, base: RunConfig,
                   eta_range: Tuple[float, float] = (1e-3, 1e-1),
                   workers: int = 1) -> SweepSummary:
    """Run ``base`` over seeds ``base.seed .. base.seed + n_seeds - 1`` with random eta.

    Sub-run failures are recorded per seed; the sweep itself never aborts.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    seeds = [base.seed + k for k in range(n_seeds)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda s: _one(s, base, eta_range), seeds))
    else:
        results = [_one(s, base, eta_range) for s in seeds]

    checks = {name: [0, 0] for name in (
        "equivalence", "compensation_identity", "per_node_identity",
        "annihilation", "recurrence_single_input")}
    hist: Counter = Counter()
    runs = []
    unsupported = 0

    def tally(name, ok):
        checks[name][0] += 1
        checks[name][1] += 0 if ok else 1

    for seed, eta, report, error in results:
        if report is None:
            runs.append(SeedResult(seed, eta, error=error))
            continue
        runs.append(SeedResult(seed, eta, report.max_abs_err, report.unsupported_count))
        unsupported += report.unsupported_count
        hist.update(report.gate_histogram)
        for row in report.rows:
            if row.unsupported:
                continue
            tally("equivalence", row.abs_err <= base.tolerance)
            if row.output_identity_err is not None:
                tally("compensation_identity", row.output_identity_err <= COMPENSATION_TOL)
            if row.node_identity_err is not None:
                tally("per_node_identity", row.node_identity_err <= PER_NODE_TOL)
            if row.annihilation_ok is not None:
                tally("annihilation", row.annihilation_ok)
            if row.recurrence_rel is not None:
                tally("recurrence_single_input", row.recurrence_rel <= RECURRENCE_REL_TOL)
    return SweepSummary(runs, {k: (v[0], v[1]) for k, v in checks.items()},
                        dict(sorted(hist.items())), unsupported)
