"""Front-contribution training of a 2-2-1 ReLU network, checked against backpropagation."""

from .collapse import (CollapsedState, FcOutput, GateTransition, accumulate_P, accumulate_Q,
                       classify_gate, collapse, comp_cross_input, comp_step, compensation,
                       fc_forward, fc_step, r_update, state_step)
from .errors import (DegenerateConstant, DegenerateInit, FrontContributionError,
                     OutputError, UnsupportedBranch, ZeroErrorSingularity)
from .harness import (EquivalenceReport, RunConfig, TraceRow, property_sweep,
                      run_equivalence, xor_experiment)
from .model import (ForwardTrace, NetParams, Sample, Schedule, bp_step, forward,
                    init_params, make_schedule, run_bp, xor_samples)

__all__ = [
    "CollapsedState", "FcOutput", "GateTransition", "accumulate_P", "accumulate_Q",
    "classify_gate", "collapse", "comp_cross_input", "comp_step", "compensation",
    "fc_forward", "fc_step", "r_update", "state_step",
    "DegenerateConstant", "DegenerateInit", "FrontContributionError", "OutputError",
    "UnsupportedBranch", "ZeroErrorSingularity",
    "EquivalenceReport", "RunConfig", "TraceRow", "property_sweep", "run_equivalence",
    "xor_experiment",
    "ForwardTrace", "NetParams", "Sample", "Schedule", "bp_step", "forward", "init_params",
    "make_schedule", "run_bp", "xor_samples",
]
