"""The 2-2-1 ReLU network, its squared-error loss and sequential-order backpropagation.

Everything here is plain float arithmetic on immutable value types, so a run is
reproducible bit-for-bit from ``(params, schedule, eta, iters)``.  The update in
:func:`bp_step` is the ground truth every collapsed-network variant is compared
against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import DegenerateInit

ENCODINGS = ("pm1", "01", "free")
SCHEDULE_MODES = ("single", "xor", "random")


def relu(s: float) -> float:
    # s == 0 counts as dead, same convention as the update gate
    return s if s > 0.0 else 0.0


@dataclass(frozen=True)
class NetParams:
    w1: float
    w2: float
    w3: float
    w4: float
    w5: float
    w6: float

    def as_tuple(self) -> Tuple[float, ...]:
        return (self.w1, self.w2, self.w3, self.w4, self.w5, self.w6)

    def is_finite(self) -> bool:
        return all(np.isfinite(self.as_tuple()))


@dataclass(frozen=True)
class Sample:
    x1: float
    x2: float
    y_g: float
    encoding: str = "free"

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if not all(np.isfinite((self.x1, self.x2, self.y_g))):
            raise ValueError("sample values must be finite")

    @property
    def norm2(self) -> float:
        return self.x1 * self.x1 + self.x2 * self.x2

    def dot(self, other: "Sample") -> float:
        return self.x1 * other.x1 + self.x2 * other.x2


@dataclass(frozen=True)
class ForwardTrace:
    s1: float
    s2: float
    v1: float
    v2: float
    y: float
    dE_dY: float


def forward(params: NetParams, sample: Sample) -> ForwardTrace:
    s1 = params.w1 * sample.x1 + params.w2 * sample.x2
    s2 = params.w3 * sample.x1 + params.w4 * sample.x2
    v1 = relu(s1)
    v2 = relu(s2)
    y = params.w5 * v1 + params.w6 * v2
    return ForwardTrace(s1, s2, v1, v2, y, y - sample.y_g)


def bp_step(params: NetParams, sample: Sample, eta: float,
            simultaneous: bool = False) -> Tuple[NetParams, ForwardTrace]:
    """One backpropagation update; returns the new params and the pre-update trace.

    The default order updates the output weights first and feeds the *updated*
    ``w5'``/``w6'`` into the first-layer update.  ``simultaneous=True`` gives
    textbook BP (old output weights); it exists for comparison runs only.
    """
    if not eta > 0.0:
        raise ValueError("eta must be > 0")
    t = forward(params, sample)
    g = eta * t.dE_dY
    w5n = params.w5 - g * t.v1
    w6n = params.w6 - g * t.v2
    back5, back6 = (params.w5, params.w6) if simultaneous else (w5n, w6n)
    w1, w2, w3, w4 = params.w1, params.w2, params.w3, params.w4
    if t.s1 > 0.0:
        w1 = w1 - g * back5 * sample.x1
        w2 = w2 - g * back5 * sample.x2
    if t.s2 > 0.0:
        w3 = w3 - g * back6 * sample.x1
        w4 = w4 - g * back6 * sample.x2
    return NetParams(w1, w2, w3, w4, w5n, w6n), t


def xor_samples(encoding: str = "pm1") -> List[Sample]:
    """The four XOR patterns, ordered so the first one is the (1, 1) input."""
    if encoding == "pm1":
        rows = [(1.0, 1.0, -1.0), (1.0, -1.0, 1.0), (-1.0, 1.0, 1.0), (-1.0, -1.0, -1.0)]
    elif encoding == "01":
        rows = [(1.0, 1.0, 0.0), (1.0, 0.0, 1.0), (0.0, 1.0, 1.0), (0.0, 0.0, 0.0)]
    else:
        raise ValueError(f"XOR needs encoding pm1 or 01, got {encoding!r}")
    return [Sample(a, b, y, encoding) for a, b, y in rows]


@dataclass(frozen=True)
class Schedule:
    """Ordered training samples; iteration ``i`` sees ``samples[i % len(samples)]``.

    ``random`` schedules are drawn up front from a seeded generator, so indexing
    stays deterministic.
    """

    samples: Tuple[Sample, ...]
    mode: str = "single"
    encoding: str = "free"

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise ValueError("schedule must contain at least one sample")
        if self.mode not in SCHEDULE_MODES:
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.mode == "single" and any(s != self.samples[0] for s in self.samples):
            raise ValueError("single-repeated schedule must repeat one sample")

    @property
    def reference(self) -> Sample:
        return self.samples[0]

    def sample_at(self, i: int) -> Sample:
        return self.samples[i % len(self.samples)]


def make_schedule(mode: str, encoding: str = "pm1", iters: int = 1, seed: int = 0,
                  sample_index: int = 0) -> Schedule:
    base = xor_samples(encoding)
    if mode == "single":
        return Schedule((base[sample_index],), "single", encoding)
    if mode == "xor":
        return Schedule(tuple(base), "xor", encoding)
    if mode == "random":
        rng = np.random.default_rng([seed, 1])
        # first presentation fixed at base[0] so the frozen reference is well defined
        order = [0] + [int(k) for k in rng.integers(0, len(base), size=max(iters - 1, 0))]
        return Schedule(tuple(base[k] for k in order), "random", encoding)
    raise ValueError(f"unknown schedule mode {mode!r}")


def init_params(seed: int, reference: Sample, max_tries: int = 1000) -> NetParams:
    """Uniform [-1, 1] weights, redrawn until both hidden nodes are active on ``reference``."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        w = [float(v) for v in rng.uniform(-1.0, 1.0, size=6)]
        params = NetParams(*w)
        t = forward(params, reference)
        if t.v1 > 0.0 and t.v2 > 0.0:
            return params
    raise DegenerateInit(
        f"seed {seed}: no draw in {max_tries} gave both hidden nodes active on "
        f"({reference.x1}, {reference.x2})")


def run_bp(params: NetParams, schedule: Schedule, eta: float, iters: int,
           simultaneous: bool = False) -> List[Tuple[NetParams, ForwardTrace]]:
    if iters < 1:
        raise ValueError("iters must be >= 1")
    out = []
    for i in range(iters):
        params, trace = bp_step(params, schedule.sample_at(i), eta, simultaneous)
        out.append((params, trace))
    return out
