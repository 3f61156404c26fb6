"""Collapsed (front-contribution) side of the 2-2-1 network.

The first-layer weights are frozen at initialisation.  Their effect on the
output is carried instead by additive compensations ``p``/``q`` on the output
weights, so the network seen at inference is just ``y = v1c*r5 + v2c*r6`` with
``r5 = w5 + p`` and ``r6 = w6 + q``.

Three training variants are provided:

``weights``
    ``w5``/``w6`` are trained, ``p``/``q`` are recomputed every step relative
    to the frozen reference activation.
``comp``
    ``w5``/``w6`` stay frozen and ``p``/``q`` accumulate the whole update.
    Single repeated input only.
``state``
    No compensation; the hidden pre-activations are propagated through the
    sum/difference pair ``(s, S)`` and recombined for each new input.

The FC side tracks the skipped first-layer updates only through the running
sums ``sumA``/``sumB`` (``sum_k dE/dY_k * w5_k * x_k`` over active steps), the
quantity inside the ``A_n``/``B_n`` branch conditions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from .errors import DegenerateConstant, UnsupportedBranch, ZeroErrorSingularity
from .model import NetParams, Sample, relu

VARIANTS = ("weights", "comp", "state")
R_READINGS = ("squared", "linear")
STATE_REFERENCES = ("unit", "raw")

UNIT_INPUT = Sample(1.0, 1.0, 0.0)


class GateTransition(enum.Enum):
    ACTIVE_ACTIVE = "ActiveActive"
    ACTIVE_DEAD = "ActiveDead"
    DEAD_DEAD = "DeadDead"
    DEAD_ACTIVE = "DeadActive"

    @property
    def before(self) -> str:
        return "active" if self.value.startswith("Active") else "dead"

    @property
    def after(self) -> str:
        return "active" if self.value.endswith("Active") else "dead"


def classify_gate(s_before: float, s_after: float) -> GateTransition:
    if s_before > 0.0:
        return GateTransition.ACTIVE_ACTIVE if s_after > 0.0 else GateTransition.ACTIVE_DEAD
    return GateTransition.DEAD_ACTIVE if s_after > 0.0 else GateTransition.DEAD_DEAD


@dataclass(frozen=True)
class CollapsedState:
    w1c: float
    w2c: float
    w3c: float
    w4c: float
    v1c: float
    v2c: float
    w5: float
    w6: float
    eta: float
    reference: Sample
    p: float = 0.0
    q: float = 0.0
    P_acc: float = 0.0
    Q_acc: float = 0.0
    # (s, S) pair for the state variant, taken relative to ``pair_input``
    s1: float = 0.0
    s2: float = 0.0
    S1: float = 0.0
    S2: float = 0.0
    pair_input: Sample = UNIT_INPUT
    state_reference: str = "unit"
    sumA: Tuple[float, float] = (0.0, 0.0)
    sumB: Tuple[float, float] = (0.0, 0.0)
    prev_sumA: Tuple[float, float] = (0.0, 0.0)
    prev_sumB: Tuple[float, float] = (0.0, 0.0)
    steps: int = 0

    @property
    def r5(self) -> float:
        return self.w5 + self.p

    @property
    def r6(self) -> float:
        return self.w6 + self.q

    def frozen_pre(self, sample: Sample) -> Tuple[float, float]:
        return (self.w1c * sample.x1 + self.w2c * sample.x2,
                self.w3c * sample.x1 + self.w4c * sample.x2)

    def reference_activations(self, sample: Sample) -> Tuple[float, float]:
        if sample.x1 == self.reference.x1 and sample.x2 == self.reference.x2:
            return self.v1c, self.v2c
        s1c, s2c = self.frozen_pre(sample)
        return relu(s1c), relu(s2c)

    def drift(self, sample: Sample) -> Tuple[float, float]:
        """Change of each pre-activation on ``sample`` caused by the skipped updates."""
        a, b = self.sumA, self.sumB
        return (-self.eta * (a[0] * sample.x1 + a[1] * sample.x2),
                -self.eta * (b[0] * sample.x1 + b[1] * sample.x2))

    def current_pre(self, sample: Sample) -> Tuple[float, float]:
        """Pre-activations the full network would have now, rebuilt from frozen constants."""
        a, b = self.sumA, self.sumB
        eta = self.eta
        return ((self.w1c - eta * a[0]) * sample.x1 + (self.w2c - eta * a[1]) * sample.x2,
                (self.w3c - eta * b[0]) * sample.x1 + (self.w4c - eta * b[1]) * sample.x2)

    def inference_scalars(self) -> Tuple[float, float, float, float]:
        """What the collapsed network needs at inference on the reference input."""
        return (self.v1c, self.v2c, self.r5, self.r6)


@dataclass(frozen=True)
class FcOutput:
    y_fc: float
    r5: float
    r6: float
    gates: Tuple[GateTransition, GateTransition]
    unsupported: bool = False


def collapse(params: NetParams, reference: Sample, eta: float,
             state_reference: str = "unit") -> CollapsedState:
    """Freeze the first layer of ``params`` around ``reference``.

    Raises DegenerateConstant when either reference activation is zero.
    """
    if state_reference not in STATE_REFERENCES:
        raise ValueError(f"unknown state reference {state_reference!r}")
    s1c = params.w1 * reference.x1 + params.w2 * reference.x2
    s2c = params.w3 * reference.x1 + params.w4 * reference.x2
    v1c, v2c = relu(s1c), relu(s2c)
    if v1c == 0.0 or v2c == 0.0:
        raise DegenerateConstant(
            f"reference input kills hidden node(s): v1c={v1c!r}, v2c={v2c!r}")
    pair_input = UNIT_INPUT if state_reference == "unit" else reference
    x1, x2 = pair_input.x1, pair_input.x2
    return CollapsedState(
        w1c=params.w1, w2c=params.w2, w3c=params.w3, w4c=params.w4,
        v1c=v1c, v2c=v2c, w5=params.w5, w6=params.w6, eta=eta,
        reference=reference,
        s1=params.w1 * x1 + params.w2 * x2, S1=params.w1 * x1 - params.w2 * x2,
        s2=params.w3 * x1 + params.w4 * x2, S2=params.w3 * x1 - params.w4 * x2,
        pair_input=pair_input, state_reference=state_reference,
    )


# --- closed forms for one hidden node -----------------------------------------

def compensation_rate(w5: float, norm2: float, eta: float, dE_dY: float, v_c: float,
                      gate: GateTransition) -> float:
    """Per-step compensation ``p`` as a function of the updated output weight.

    This is the fresh-state form (current activation equal to ``v_c``).
    """
    if gate is GateTransition.DEAD_DEAD:
        return 0.0
    if gate is GateTransition.DEAD_ACTIVE:
        raise UnsupportedBranch("no compensation formula for a DeadActive transition")
    if v_c == 0.0:
        raise DegenerateConstant("reference activation is zero")
    if gate is GateTransition.ACTIVE_ACTIVE:
        return -eta * dE_dY * w5 * w5 * norm2 / v_c
    return -w5


def compensation_integral(w5: float, norm2: float, eta: float, dE_dY: float, v_c: float,
                          gate: GateTransition) -> float:
    """Antiderivative ``P(w5)`` of ``-p / (eta * dE/dY * v_c)`` with ``P(0) = 0``."""
    if gate is GateTransition.DEAD_DEAD:
        return 0.0
    if gate is GateTransition.DEAD_ACTIVE:
        raise UnsupportedBranch("no compensation formula for a DeadActive transition")
    if v_c == 0.0:
        raise DegenerateConstant("reference activation is zero")
    if gate is GateTransition.ACTIVE_ACTIVE:
        return w5 * w5 * w5 * norm2 / (3.0 * v_c * v_c)
    if dE_dY == 0.0:
        raise ZeroErrorSingularity("ActiveDead closed form needs dE/dY != 0")
    return w5 * w5 / (2.0 * eta * dE_dY * v_c)


# --- operations on the collapsed state ------------------------------------------

def _node_step(s: float, w: float, v_c: float, g: float, norm2: float):
    v = relu(s)
    w_new = w - g * v
    s_after = s - g * w_new * norm2 if s > 0.0 else s
    gate = classify_gate(s, s_after)
    if gate is GateTransition.DEAD_ACTIVE:
        raise UnsupportedBranch("DeadActive transition has no compensation formula")
    if gate is GateTransition.DEAD_DEAD:
        return 0.0, gate
    if v_c == 0.0:
        raise DegenerateConstant("reference activation is zero")
    if gate is GateTransition.ACTIVE_ACTIVE:
        return -g * w_new * w_new * norm2 / v_c, gate
    # dv' = -v: the node loses its whole current activation
    return -(w_new * (v / v_c)), gate


def comp_step(state: CollapsedState, sample: Sample, dE_dY: float):
    """Compensation produced by one update of the network, per hidden node.

    Starting from the state's current activation ``v`` the output weight moves to
    ``w5' = w5 - eta*dE/dY*v`` and the activation changes by ``dv'``; the returned
    ``p_step`` satisfies ``dv' * w5' = v1c * p_step``.  On a fresh state the
    ActiveDead branch is exactly ``-w5'``.

    Returns ``(p_step, q_step, (gate1, gate2))``.
    """
    s1, s2 = state.current_pre(sample)
    v1c, v2c = state.reference_activations(sample)
    g = state.eta * dE_dY
    n2 = sample.norm2
    p, g1 = _node_step(s1, state.w5, v1c, g, n2)
    q, g2 = _node_step(s2, state.w6, v2c, g, n2)
    return p, q, (g1, g2)


def _accumulate(state, sample, dE_dY, gate, node):
    v1c, v2c = state.reference_activations(sample)
    w, v_c = (state.w5, v1c) if node == 1 else (state.w6, v2c)
    return compensation_integral(w, sample.norm2, state.eta, dE_dY, v_c, gate)


def accumulate_P(state: CollapsedState, sample: Sample, dE_dY: float,
                 gate: GateTransition) -> float:
    """Closed-form accumulated compensation for node 1; ``state.w5`` is the updated weight."""
    return _accumulate(state, sample, dE_dY, gate, 1)


def accumulate_Q(state: CollapsedState, sample: Sample, dE_dY: float,
                 gate: GateTransition) -> float:
    return _accumulate(state, sample, dE_dY, gate, 2)


def compensation(state: CollapsedState, sample: Sample):
    """Total compensation making ``v_c*(w + p)`` equal the full network's node output.

    The branch is picked by the transition from the frozen reference
    pre-activation to the current one.  Returns ``(p, q, (gate1, gate2))``.
    """
    s1c, s2c = state.frozen_pre(sample)
    s1, s2 = state.current_pre(sample)
    d1, d2 = state.drift(sample)
    v1c, v2c = state.reference_activations(sample)
    out = []
    gates = []
    for sc, s, d, w, v_c in ((s1c, s1, d1, state.w5, v1c), (s2c, s2, d2, state.w6, v2c)):
        gate = classify_gate(sc, s)
        if gate is GateTransition.DEAD_ACTIVE:
            raise UnsupportedBranch("node dead at the frozen reference is active now")
        if gate is GateTransition.ACTIVE_ACTIVE:
            out.append(d * w / v_c)
        elif gate is GateTransition.ACTIVE_DEAD:
            out.append(-w)
        else:
            out.append(0.0)
        gates.append(gate)
    return out[0], out[1], (gates[0], gates[1])


def r_update(state: CollapsedState, sample: Sample, dE_dY: float, n: int,
             reading: str = "squared") -> Tuple[float, float]:
    """Closed-form effective weights ``(r5_n, r6_n)`` after ``n`` updates on one input.

    ``state`` must carry ``w5_n``/``w6_n`` and running sums that include step
    ``n`` (``prev_sum*`` hold the sums through step ``n-1``).  The branch
    conditions and denominators are evaluated exactly as displayed for the
    general n-iteration update; ``reading`` picks the input-norm exponent inside
    the denominator sum (``squared``: ``(x1^2+x2^2)^2``, ``linear``:
    ``x1^2+x2^2``), since the two displayed branches disagree on it.

    Raises UnsupportedBranch on a DeadActive pattern or a vanishing denominator.
    """
    if reading not in R_READINGS:
        raise ValueError(f"unknown reading {reading!r}")
    if n == 0:
        return state.w5, state.w6
    x1, x2 = sample.x1, sample.x2
    n2 = sample.norm2
    out = []
    nodes = ((state.w1c, state.w2c, state.sumA, state.prev_sumA, state.w5, state.v1c),
             (state.w3c, state.w4c, state.sumB, state.prev_sumB, state.w6, state.v2c))
    for wa, wb, acc, prev, w, v_c in nodes:
        a_prev = (wa + prev[0]) * x1 + (wb + prev[1]) * x2
        a_now = (wa + acc[0]) * x1 + (wb + acc[1]) * x2
        total = acc[0] * x1 + acc[1] * x2          # sum_k dE/dY_k w_k (x1^2 + x2^2)
        if reading == "squared":
            total *= n2
        gate = classify_gate(a_prev, a_now)
        if gate is GateTransition.DEAD_ACTIVE:
            raise UnsupportedBranch(f"r_update: DeadActive pattern at n={n}")
        if gate is GateTransition.DEAD_DEAD:
            out.append(w)
            continue
        if gate is GateTransition.ACTIVE_ACTIVE:
            denom = 3.0 * (v_c + total)
            num = w * w * w * n2
        else:
            denom = 2.0 * state.eta * dE_dY * (v_c + total)
            num = w * w
        if denom == 0.0:
            raise UnsupportedBranch(f"r_update: vanishing denominator at n={n}")
        out.append(w + num / denom)
    return out[0], out[1]


def comp_cross_input(state: CollapsedState, prev: Sample, next: Sample, dE_dY: float,
                     activations: Optional[Tuple[float, float]] = None) -> Tuple[float, float]:
    """Carry ``p``/``q`` from input ``prev`` over to input ``next``.

    ``state.w5``/``w6`` are the weights after the update on ``prev``.  The
    dividing activations default to the post-update activations on ``next``
    rebuilt from the state; pass ``activations`` to override them.
    """
    if activations is None:
        s1, s2 = state.current_pre(next)
        activations = (relu(s1), relu(s2))
    v1n, v2n = activations
    if v1n == 0.0 or v2n == 0.0:
        raise DegenerateConstant("activation on the next input is zero")
    g = state.eta * dE_dY
    dot = prev.dot(next)
    return (state.p - g * state.w5 * state.w5 * dot / v1n,
            state.q - g * state.w6 * state.w6 * dot / v2n)


def recombine(s: float, S: float, sample: Sample) -> Tuple[float, float]:
    """Map a sum/difference pair onto ``sample``: returns ``(s@, S@)``."""
    half_sum = (s + S) / 2.0
    half_diff = (s - S) / 2.0
    return (half_sum * sample.x1 + half_diff * sample.x2,
            half_sum * sample.x1 - half_diff * sample.x2)


def _same_input(a: Sample, b: Sample) -> bool:
    return a.x1 == b.x1 and a.x2 == b.x2


def state_pre(state: CollapsedState, sample: Sample) -> Tuple[float, float]:
    """Pre-activations on ``sample`` recovered from the propagated pairs."""
    if state.state_reference == "raw" and _same_input(state.pair_input, sample):
        return state.s1, state.s2
    return recombine(state.s1, state.S1, sample)[0], recombine(state.s2, state.S2, sample)[0]


def state_step(state: CollapsedState, sample: Sample, dE_dY: float) -> CollapsedState:
    """Advance the state variant by one presentation of ``sample``.

    In ``unit`` mode the pair stays relative to input (1, 1), where
    ``(s+S)/2`` and ``(s-S)/2`` are the first-layer weights themselves, so
    recombination is exact.  In ``raw`` mode the pair is re-expressed relative
    to each presented input and carried to the next one by recombination, which
    is only exact for unit-magnitude inputs.
    """
    g = state.eta * dE_dY
    x1, x2 = sample.x1, sample.x2
    s1x, s2x = state_pre(state, sample)
    w5n = state.w5 - g * relu(s1x)
    w6n = state.w6 - g * relu(s2x)
    pairs = []
    for s, S, sx, w in ((state.s1, state.S1, s1x, w5n), (state.s2, state.S2, s2x, w6n)):
        if state.state_reference == "unit":
            if sx > 0.0:
                c = g * w
                s, S = s - c * (x1 + x2), S - c * (x1 - x2)
        else:
            if not _same_input(state.pair_input, sample):
                s, S = recombine(s, S, sample)
            if sx > 0.0:
                c = g * w
                s, S = s - c * (x1 * x1 + x2 * x2), S - c * (x1 * x1 - x2 * x2)
        pairs.append((s, S))
    (s1, S1), (s2, S2) = pairs
    return replace(state, w5=w5n, w6=w6n, s1=s1, S1=S1, s2=s2, S2=S2,
                   pair_input=sample if state.state_reference == "raw" else state.pair_input,
                   steps=state.steps + 1)


def fc_forward(state: CollapsedState, sample: Sample, variant: str) -> FcOutput:
    """Output of the collapsed network on ``sample`` before any update."""
    if variant == "weights":
        p, q, gates = compensation(state, sample)
        v1c, v2c = state.reference_activations(sample)
        r5, r6 = state.w5 + p, state.w6 + q
        return FcOutput(v1c * r5 + v2c * r6, r5, r6, gates)
    if variant == "comp":
        v1c, v2c = state.reference_activations(sample)
        s1c, s2c = state.frozen_pre(sample)
        s1, s2 = state.current_pre(sample)
        gates = (classify_gate(s1c, s1), classify_gate(s2c, s2))
        return FcOutput(v1c * state.r5 + v2c * state.r6, state.r5, state.r6, gates)
    if variant == "state":
        s1x, s2x = state_pre(state, sample)
        s1c, s2c = state.frozen_pre(sample)
        gates = (classify_gate(s1c, s1x), classify_gate(s2c, s2x))
        return FcOutput(state.w5 * relu(s1x) + state.w6 * relu(s2x), state.w5, state.w6, gates)
    raise ValueError(f"unknown variant {variant!r}")


def _advance_sums(state, sample, dE_dY, w5n, w6n, s1, s2):
    a, b = state.sumA, state.sumB
    if s1 > 0.0:
        k = dE_dY * w5n
        a = (a[0] + k * sample.x1, a[1] + k * sample.x2)
    if s2 > 0.0:
        k = dE_dY * w6n
        b = (b[0] + k * sample.x1, b[1] + k * sample.x2)
    return replace(state, w5=w5n, w6=w6n, sumA=a, sumB=b,
                   prev_sumA=state.sumA, prev_sumB=state.sumB, steps=state.steps + 1)


def _weights_step(state, sample):
    try:
        out = fc_forward(state, sample, "weights")
    except UnsupportedBranch:
        # re-expand the node so training can go on; the row is flagged
        s1, s2 = state.current_pre(sample)
        s1c, s2c = state.frozen_pre(sample)
        gates = (classify_gate(s1c, s1), classify_gate(s2c, s2))
        out = FcOutput(state.w5 * relu(s1) + state.w6 * relu(s2),
                       float("nan"), float("nan"), gates, unsupported=True)
    e = out.y_fc - sample.y_g
    s1, s2 = state.current_pre(sample)
    g = state.eta * e
    w5n = state.w5 - g * relu(s1)
    w6n = state.w6 - g * relu(s2)
    new = _advance_sums(state, sample, e, w5n, w6n, s1, s2)
    s1a, s2a = new.current_pre(sample)
    step_gates = (classify_gate(s1, s1a), classify_gate(s2, s2a))
    try:
        p, q, _ = compensation(new, sample)
    except UnsupportedBranch:
        p, q = float("nan"), float("nan")
    P, Q = new.P_acc, new.Q_acc
    if e != 0.0 and not out.unsupported:
        P = accumulate_P(new, sample, e, step_gates[0])
        Q = accumulate_Q(new, sample, e, step_gates[1])
    return replace(new, p=p, q=q, P_acc=P, Q_acc=Q), out, step_gates


def _comp_step(state, sample):
    out = fc_forward(state, sample, "comp")
    e = out.y_fc - sample.y_g
    s1, s2 = state.current_pre(sample)
    v1, v2 = relu(s1), relu(s2)
    v1c, v2c = state.reference_activations(sample)
    # output weights the full network would hold now, recovered from r = w*v/v_c
    w5v = state.r5 * (v1c / v1) if v1 > 0.0 else state.w5
    w6v = state.r6 * (v2c / v2) if v2 > 0.0 else state.w6
    view = replace(state, w5=w5v, w6=w6v)
    p_step, q_step, step_gates = comp_step(view, sample, e)
    g = state.eta * e
    w5n, w6n = w5v - g * v1, w6v - g * v2
    p, q = state.p, state.q
    if v1 > 0.0:
        p = (w5n * (v1 / v1c) + p_step) - state.w5
    if v2 > 0.0:
        q = (w6n * (v2 / v2c) + q_step) - state.w6
    moved = _advance_sums(view, sample, e, w5n, w6n, s1, s2)
    P, Q = state.P_acc, state.Q_acc
    if e != 0.0:
        P += accumulate_P(moved, sample, e, step_gates[0])
        Q += accumulate_Q(moved, sample, e, step_gates[1])
    new = replace(moved, w5=state.w5, w6=state.w6, p=p, q=q, P_acc=P, Q_acc=Q)
    return new, out, step_gates


def _state_step(state, sample):
    out = fc_forward(state, sample, "state")
    e = out.y_fc - sample.y_g
    s1x, s2x = state_pre(state, sample)
    new = state_step(state, sample, e)
    g = state.eta * e
    n2 = sample.norm2
    step_gates = tuple(
        classify_gate(sx, sx - g * w * n2 if sx > 0.0 else sx)
        for sx, w in ((s1x, new.w5), (s2x, new.w6)))
    return new, out, step_gates


_STEPPERS = {"weights": _weights_step, "comp": _comp_step, "state": _state_step}


def fc_step(state: CollapsedState, sample: Sample, variant: str):
    """Present one sample to the collapsed network and train it.

    Returns ``(new_state, output_before_update, per_step_gates)``.  Steps that
    hit an unsupported branch are flagged on the output instead of raising.
    """
    try:
        stepper = _STEPPERS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}") from None
    return stepper(state, sample)
