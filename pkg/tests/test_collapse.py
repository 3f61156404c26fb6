from dataclasses import fields, replace

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from frontcontrib.collapse import (GateTransition, accumulate_P, accumulate_Q, classify_gate,
                                   collapse, comp_cross_input, comp_step, compensation,
                                   compensation_integral, compensation_rate, fc_forward,
                                   fc_step, r_update, recombine, state_pre, state_step)
from frontcontrib.errors import DegenerateConstant, UnsupportedBranch, ZeroErrorSingularity
from frontcontrib.harness import RunConfig, run_equivalence
from frontcontrib.model import NetParams, Sample, bp_step, forward, init_params, xor_samples

AA, AD, DD, DA = (GateTransition.ACTIVE_ACTIVE, GateTransition.ACTIVE_DEAD,
                  GateTransition.DEAD_DEAD, GateTransition.DEAD_ACTIVE)

REF = NetParams(0.3, -0.2, 0.5, 0.1, 0.7, -0.4)
REF_SAMPLE = Sample(1.0, -1.0, 1.0)

unit = st.floats(-1.0, 1.0, allow_nan=False)
etas = st.floats(1e-3, 1e-1)
pos = st.floats(0.05, 1.0)


def fd(f, x, h):
    return (f(x + h) - f(x - h)) / (2.0 * h)


class TestClassifyGate:
    @pytest.mark.parametrize("before,after,gate", [
        (1.0, 0.5, AA), (1.0, -0.5, AD), (-1.0, -1.0, DD), (-1.0, 0.5, DA),
        (1.0, 0.0, AD), (0.0, 0.0, DD), (0.0, 1.0, DA),
    ])
    def test_examples(self, before, after, gate):
        assert classify_gate(before, after) is gate

    @given(st.floats(allow_nan=False), st.floats(allow_nan=False))
    def test_depends_only_on_signs(self, a, b):
        g = classify_gate(a, b)
        assert (g.before == "active") == (a > 0)
        assert (g.after == "active") == (b > 0)


class TestCollapse:
    def test_freezes_reference(self):
        st_ = collapse(REF, REF_SAMPLE, 0.1)
        t = forward(REF, REF_SAMPLE)
        assert (st_.v1c, st_.v2c) == (t.v1, t.v2)
        assert (st_.w1c, st_.w2c, st_.w3c, st_.w4c) == REF.as_tuple()[:4]
        assert (st_.r5, st_.r6) == (REF.w5, REF.w6)

    def test_dead_reference_rejected(self):
        with pytest.raises(DegenerateConstant):
            collapse(NetParams(-1, -1, 1, 1, 1, 1), Sample(1.0, 1.0, 0.0), 0.1)

    def test_parameter_count(self):
        st_ = collapse(REF, REF_SAMPLE, 0.1)
        assert len(st_.inference_scalars()) == 4
        assert len(fields(NetParams)) == 6


class TestCompStep:
    def test_zero_error(self):
        p, q, _ = comp_step(collapse(REF, REF_SAMPLE, 0.1), REF_SAMPLE, 0.0)
        assert (p, q) == (0.0, 0.0)

    def test_matches_bp_difference(self):
        # closed form on a fresh state against dv1' * w5' / v1c from the BP oracle
        state = collapse(REF, REF_SAMPLE, 0.1)
        e = forward(REF, REF_SAMPLE).dE_dY
        p, q, gates = comp_step(state, REF_SAMPLE, e)
        assert gates == (AA, AA)
        new, before = bp_step(REF, REF_SAMPLE, 0.1)
        after = forward(new, REF_SAMPLE)
        assert p == pytest.approx(-0.1 * e * new.w5 ** 2 * 2.0 / 0.5, rel=1e-14)
        assert p == pytest.approx((after.v1 - before.v1) * new.w5 / state.v1c, rel=1e-13)
        assert q == pytest.approx((after.v2 - before.v2) * new.w6 / state.v2c, rel=1e-13)

    def test_active_dead_annihilates(self):
        params = NetParams(0.05, 0.05, 0.5, 0.5, 1.0, 1.0)
        x = Sample(1.0, 1.0, -3.0)
        state = collapse(params, x, 0.1)
        e = forward(params, x).dE_dY
        p, q, gates = comp_step(state, x, e)
        new, _ = bp_step(params, x, 0.1)
        assert gates == (AD, AA)
        assert p == -new.w5
        assert (new.w5 + p) * state.v1c == 0.0

    def test_dead_dead_neutral(self):
        params = NetParams(0.5, 0.5, 0.5, 0.5, 1.0, 1.0)
        state = collapse(params, Sample(1.0, 1.0, 0.0), 0.1)
        p, q, gates = comp_step(state, Sample(-1.0, -1.0, 7.0), 3.0)
        assert gates == (DD, DD) and (p, q) == (0.0, 0.0)

    def test_degenerate_constant(self):
        state = replace(collapse(REF, REF_SAMPLE, 0.1), v1c=0.0)
        with pytest.raises(DegenerateConstant):
            comp_step(state, REF_SAMPLE, -0.81)

    @settings(max_examples=200)
    @given(pos, pos, pos, pos, unit, unit, pos, pos, unit, etas)
    def test_per_node_identity(self, a, b, c, d, e, f, x1, x2, yg, eta):
        # positive weights and inputs keep the reference active
        params = NetParams(a, b, c, d, e, f)
        x = Sample(x1, x2, yg)
        t = forward(params, x)
        state = collapse(params, x, eta)
        p, q, _ = comp_step(state, x, t.dE_dY)
        new, _ = bp_step(params, x, eta)
        after = forward(new, x)
        assert abs((after.v1 - t.v1) * new.w5 - t.v1 * p) <= 1e-13
        assert abs((after.v2 - t.v2) * new.w6 - t.v2 * q) <= 1e-13


class TestClosedForms:
    def test_zero_weight(self):
        for gate in (AA, AD, DD):
            assert compensation_integral(0.0, 2.0, 0.1, 0.3, 0.5, gate) == 0.0

    def test_dead_active_unsupported(self):
        with pytest.raises(UnsupportedBranch):
            compensation_rate(0.5, 2.0, 0.1, 0.3, 0.5, DA)
        with pytest.raises(UnsupportedBranch):
            compensation_integral(0.5, 2.0, 0.1, 0.3, 0.5, DA)

    def test_zero_error_singularity(self):
        with pytest.raises(ZeroErrorSingularity):
            compensation_integral(0.5, 2.0, 0.1, 0.0, 0.5, AD)

    def test_degenerate_constant(self):
        with pytest.raises(DegenerateConstant):
            compensation_integral(0.5, 2.0, 0.1, 0.3, 0.0, AA)

    @pytest.mark.parametrize("gate", [AA, AD])
    def test_finite_difference(self, gate):
        rng = np.random.default_rng(2024)
        checked = 0
        while checked < 100:
            w5, e = rng.uniform(-2, 2), rng.uniform(-2, 2)
            eta, vc, n2 = rng.uniform(1e-3, 1e-1), rng.uniform(0.05, 2), rng.uniform(0.1, 2)
            if abs(e) <= 1e-6 or abs(w5) < 1e-3:
                continue
            h = 1e-4 * abs(w5)      # relative step: truncation ~1e-8, rounding ~1e-12
            slope = fd(lambda w: compensation_integral(w, n2, eta, e, vc, gate), w5, h)
            target = -compensation_rate(w5, n2, eta, e, vc, gate) / (eta * e * vc)
            assert slope == pytest.approx(target, rel=1e-6)
            checked += 1

    def test_quadrature(self):
        state = collapse(REF, REF_SAMPLE, 0.1)
        e = forward(REF, REF_SAMPLE).dE_dY
        new, _ = bp_step(REF, REF_SAMPLE, 0.1)
        moved = replace(state, w5=new.w5)
        integral, _ = quad(lambda w: -compensation_rate(w, 2.0, 0.1, e, state.v1c, AA)
                           / (0.1 * e * state.v1c), 0.0, new.w5)
        assert accumulate_P(moved, REF_SAMPLE, e, AA) == pytest.approx(integral, rel=1e-6)

    def test_accumulate_q_uses_node_two(self):
        state = collapse(REF, REF_SAMPLE, 0.1)
        assert accumulate_Q(state, REF_SAMPLE, -0.81, AA) == pytest.approx(
            REF.w6 ** 3 * 2.0 / (3 * state.v2c ** 2), rel=1e-15)


class TestCompensation:
    def test_fresh_state_zero(self):
        state = collapse(REF, REF_SAMPLE, 0.1)
        p, q, gates = compensation(state, REF_SAMPLE)
        assert (p, q, gates) == (0.0, 0.0, (AA, AA))

    def test_dead_active_relative_to_reference(self):
        # node 1 dead on (-1, -1) under the frozen weights, active once drift flips it
        state = collapse(NetParams(0.5, 0.5, 0.5, -0.2, 1.0, 1.0), Sample(1.0, 1.0, 0.0), 0.1)
        moved = replace(state, sumA=(20.0, 20.0))
        with pytest.raises(UnsupportedBranch):
            compensation(moved, Sample(-1.0, -1.0, 0.0))


class TestRUpdate:
    def test_n_zero(self):
        state = collapse(REF, REF_SAMPLE, 0.1)
        assert r_update(state, REF_SAMPLE, -0.81, 0) == (REF.w5, REF.w6)

    def test_unknown_reading(self):
        with pytest.raises(ValueError):
            r_update(collapse(REF, REF_SAMPLE, 0.1), REF_SAMPLE, -0.81, 1, "cubic")

    def test_branch_two_on_active_dead(self):
        state = collapse(REF, REF_SAMPLE, 0.1)
        # literal sign: A_n adds the running sum, so a large negative sum kills node 1
        moved = replace(state, prev_sumA=(0.0, 0.0), sumA=(-1.0, 1.0), sumB=(0.0, 0.0),
                        prev_sumB=(0.0, 0.0))
        e = -0.81
        r5, r6 = r_update(moved, REF_SAMPLE, e, 1, "linear")
        total = -1.0 * 1.0 + 1.0 * -1.0
        assert r5 == pytest.approx(REF.w5 + REF.w5 ** 2 / (2 * 0.1 * e * (state.v1c + total)),
                                   rel=1e-15)
        assert r6 == pytest.approx(REF.w6 + REF.w6 ** 3 * 2.0 / (3 * state.v2c), rel=1e-15)

    def test_dead_active_raises(self):
        state = collapse(REF, REF_SAMPLE, 0.1)
        moved = replace(state, prev_sumA=(-1.0, 1.0), sumA=(0.0, 0.0))
        with pytest.raises(UnsupportedBranch):
            r_update(moved, REF_SAMPLE, -0.81, 2)

    def test_vanishing_denominator_raises(self):
        state = collapse(REF, REF_SAMPLE, 0.1)
        # v1c + sum = 0 while A stays positive
        moved = replace(state, sumA=(-0.125, 0.125), prev_sumA=(-0.125, 0.125),
                        v1c=0.25 * 1.0)
        with pytest.raises(UnsupportedBranch):
            r_update(moved, REF_SAMPLE, -0.81, 1, "linear")

    @pytest.mark.xfail(strict=True, reason="the literal n-step closed form disagrees with "
                                           "lock-step BP; the gap is measured by the harness")
    @pytest.mark.parametrize("reading", ["squared", "linear"])
    def test_matches_lockstep_oracle(self, reading):
        report = run_equivalence(RunConfig(iters=5, r_denominator_reading=reading))
        assert report.r_reading_error[reading] < 1e-12


class TestCrossInput:
    def test_orthogonal_inputs(self):
        state = replace(collapse(REF, REF_SAMPLE, 0.1), p=0.25, q=-0.5)
        p, q = comp_cross_input(state, Sample(1.0, 1.0, 0), Sample(1.0, -1.0, 0), 0.3,
                                activations=(0.5, 0.5))
        assert (p, q) == (0.25, -0.5)

    def test_repeated_input_reduces_to_comp_step(self):
        state = collapse(REF, REF_SAMPLE, 0.1)
        e = forward(REF, REF_SAMPLE).dE_dY
        new, _ = bp_step(REF, REF_SAMPLE, 0.1)
        moved = replace(state, w5=new.w5, w6=new.w6)
        p, q = comp_cross_input(moved, REF_SAMPLE, REF_SAMPLE, e,
                                activations=(state.v1c, state.v2c))
        p_step, q_step, _ = comp_step(state, REF_SAMPLE, e)
        assert p == pytest.approx(p_step, rel=1e-15)
        assert q == pytest.approx(q_step, rel=1e-15)

    def test_degenerate_activation(self):
        state = collapse(REF, REF_SAMPLE, 0.1)
        with pytest.raises(DegenerateConstant):
            comp_cross_input(state, REF_SAMPLE, REF_SAMPLE, 0.1, activations=(0.0, 1.0))

    def test_xor_pair_against_algebraic_solve(self):
        # {0,1} encoding: (1,1) then (1,0) have a non-zero inner product
        x, nxt = xor_samples("01")[:2]
        params = init_params(42, x)
        state = collapse(params, x, 0.05)
        e = forward(params, x).dE_dY
        new, _ = bp_step(params, x, 0.05)
        p, q, _ = comp_step(state, x, e)
        carried = replace(state, w5=new.w5, w6=new.w6, p=p, q=q)
        t_next = forward(new, nxt)
        c1, c2 = state.frozen_pre(nxt)
        assert t_next.v1 > 0 and c1 > 0
        exact = (t_next.v1 - c1) * new.w5 / c1       # solve the node-1 identity for p@
        with_next_act = comp_cross_input(carried, x, nxt, e, activations=(t_next.v1, t_next.v2))
        # running sums after one active step on (1, 1)
        tracked = replace(carried, sumA=(e * new.w5, e * new.w5), sumB=(e * new.w6, e * new.w6))
        literal = comp_cross_input(tracked, x, nxt, e)
        assert literal[0] == pytest.approx(with_next_act[0], rel=1e-14)
        # measured: the literal carry keeps the previous p and divides by v1'@
        assert abs(literal[0] - exact) > 1e-6
        # with p reset and the frozen activation as divisor it is exact
        fixed = comp_cross_input(replace(carried, p=0.0, q=0.0), x, nxt, e,
                                 activations=(c1, 1.0))
        assert fixed[0] == pytest.approx(exact, rel=1e-12)


class TestStateStep:
    def test_unit_reference_exact_on_dyadic_weights(self):
        params = NetParams(0.5, 0.25, -0.25, 0.75, 0.5, -0.5)
        x = Sample(1.0, -1.0, 0.5)
        state = collapse(params, Sample(1.0, 1.0, 0.0), 0.125)
        e = forward(params, x).dE_dY
        new_state = state_step(state, x, e)
        new, _ = bp_step(params, x, 0.125)
        for z in xor_samples("pm1"):
            assert state_pre(new_state, z)[0] == new.w1 * z.x1 + new.w2 * z.x2
        assert (new_state.w5, new_state.w6) == (new.w5, new.w6)

    @settings(max_examples=100)
    @given(unit, unit, unit, unit, unit, unit, st.sampled_from(xor_samples("pm1")),
           st.sampled_from(xor_samples("pm1")), etas)
    def test_unit_reference_matches_oracle(self, a, b, c, d, e, f, x, z, eta):
        params = NetParams(a, b, c, d, e, f)
        ref = Sample(1.0, 1.0, 0.0)
        t = forward(params, ref)
        assume(t.v1 > 1e-6 and t.v2 > 1e-6)
        state = collapse(params, ref, eta)
        new_state = state_step(state, x, forward(params, x).dE_dY)
        new, _ = bp_step(params, x, eta)
        s1, s2 = state_pre(new_state, z)
        assert s1 == pytest.approx(new.w1 * z.x1 + new.w2 * z.x2, abs=1e-15)
        assert s2 == pytest.approx(new.w3 * z.x1 + new.w4 * z.x2, abs=1e-15)

    def test_zero_learning_rate(self):
        state = collapse(REF, Sample(1.0, 1.0, 0.0), 0.0)
        x = REF_SAMPLE
        new_state = state_step(state, x, 5.0)
        assert (new_state.s1, new_state.S1, new_state.s2, new_state.S2) == (
            state.s1, state.S1, state.s2, state.S2)
        out = fc_forward(new_state, x, "state")
        assert out.y_fc == pytest.approx(forward(REF, x).y, abs=1e-16)

    def test_recombine_unit_pair(self):
        s, S = 0.75, 0.25      # w1 = 0.5, w2 = 0.25
        assert recombine(s, S, Sample(2.0, -4.0, 0.0)) == (0.5 * 2 - 0.25 * 4, 0.5 * 2 + 0.25 * 4)


class TestFcForward:
    @pytest.mark.parametrize("variant", ["weights", "comp"])
    def test_fresh_state_matches_forward(self, variant):
        state = collapse(REF, REF_SAMPLE, 0.1)
        assert fc_forward(state, REF_SAMPLE, variant).y_fc == forward(REF, REF_SAMPLE).y

    def test_fresh_state_variant(self):
        state = collapse(REF, Sample(1.0, 1.0, 0.0), 0.1)
        assert fc_forward(state, REF_SAMPLE, "state").y_fc == pytest.approx(
            forward(REF, REF_SAMPLE).y, abs=1e-16)

    @pytest.mark.parametrize("variant", ["weights", "comp"])
    def test_one_step_single_input(self, variant):
        state = collapse(REF, REF_SAMPLE, 0.1)
        new_state, _, gates = fc_step(state, REF_SAMPLE, variant)
        assert gates == (AA, AA)
        new, _ = bp_step(REF, REF_SAMPLE, 0.1)
        y_bp = forward(new, REF_SAMPLE).y
        assert fc_forward(new_state, REF_SAMPLE, variant).y_fc == pytest.approx(y_bp, abs=1e-14)

    def test_unknown_variant(self):
        state = collapse(REF, REF_SAMPLE, 0.1)
        with pytest.raises(ValueError):
            fc_forward(state, REF_SAMPLE, "other")
        with pytest.raises(ValueError):
            fc_step(state, REF_SAMPLE, "other")

    @pytest.mark.parametrize("variant", ["weights", "comp"])
    def test_hundred_iterations(self, variant):
        report = run_equivalence(RunConfig(seed=1, iters=100, variant=variant))
        assert report.unsupported_count == 0
        assert report.max_abs_err < 1e-12
