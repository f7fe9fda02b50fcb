"""Trace post-processing: winding, pull-back, lengths, limits, exponents."""

import math
from dataclasses import replace

import numpy as np
import pytest

from torusflow.diagnostics import (TRACKING_CONSTANT, TraceRecord,
                                   l2_length, limit_analysis, lojasiewicz_fit,
                                   pull_back, tracking_residual, winding_index)
from torusflow.flow import FlowConfig, FlowState, FlowTrace, record_for_state
from torusflow.moduli import hyperbolic_distance
from torusflow.target import CouplingProfile, curve_eval, dehn_twist_curve

STAIRCASE = CouplingProfile(kind="staircase")
DEHN = dehn_twist_curve(1.0)


def _record(t, z, a, b, energy=1.0, decay_rate=0.0, tau_norm_sq=0.0,
            phi_norm_sq=0.0, wp_to_curve=0.0, inj_radius=0.5):
    n = math.floor(z)
    return TraceRecord(t=t, z=z, a=a, b=b, energy=energy, decay_rate=decay_rate,
                       tau_norm_sq=tau_norm_sq, phi_norm_sq=phi_norm_sq,
                       wp_to_curve=wp_to_curve, inj_radius=inj_radius,
                       winding_index=n, reduced_z=z - n)


def test_winding_index_examples():
    assert winding_index(FlowState(t=0, z=0.0, a=0, b=1)) == (0, 0.0)
    n, r = winding_index(FlowState(t=0, z=3.25, a=0, b=1))
    assert n == 3 and r == pytest.approx(0.25)
    n, r = winding_index(FlowState(t=0, z=-0.25, a=0, b=1))
    assert n == -1 and r == pytest.approx(0.75)


def test_pull_back_on_curve_lands_on_curve():
    for z in (0.0, 0.6, 3.25, -1.4, 7.9):
        g = curve_eval(DEHN, z)
        point, reduced = pull_back(DEHN, FlowState(t=0, z=z, a=g.a, b=g.b))
        assert hyperbolic_distance(point, curve_eval(DEHN, reduced)) <= 1e-10
        assert 0.0 <= reduced < 1.0
    point, reduced = pull_back(DEHN, FlowState(t=0, z=3.25, a=3.25, b=1.0))
    target = curve_eval(DEHN, 0.25)
    assert (point.a, point.b) == pytest.approx((target.a, target.b), abs=1e-10)


def test_tracking_residual_examples():
    rec = _record(0, 0, 0, 1, energy=1.0, wp_to_curve=0.0)
    assert tracking_residual(rec) == (0.0, 0.0)
    rec = _record(0, 0, 0, 1, energy=1.5, wp_to_curve=1.0)
    lhs, rhs = tracking_residual(rec)
    assert lhs == 1.0
    assert rhs == pytest.approx(TRACKING_CONSTANT * math.sqrt(0.5), rel=1e-14)
    # arcosh(E) <= sqrt(2 (E-1)) makes the bound valid for exact states
    for energy in (1.001, 1.5, 3.0, 10.0):
        d_wp = 2.0 * math.acosh(energy)
        assert d_wp <= TRACKING_CONSTANT * math.sqrt(energy - 1.0)


def test_tracking_holds_along_preset_traces(dehn_run, converging_run):
    for _, _, _, trace in (dehn_run, converging_run):
        for rec in trace.records:
            lhs, rhs = tracking_residual(rec)
            assert lhs <= rhs + 1e-8


def _constant_trace(n=50, t1=10.0):
    config = FlowConfig(t_max=t1)
    records = [_record(t=i * t1 / (n - 1), z=0.0, a=0.0, b=1.0)
               for i in range(n)]
    return FlowTrace(records=records, events=[], config=config)


def test_l2_length_zero_for_constant_trace():
    trace = _constant_trace()
    assert l2_length(trace, 0.0, 10.0) == (0.0, 0.0, 0.0)


def test_l2_length_interval_checks():
    trace = _constant_trace()
    with pytest.raises(ValueError):
        l2_length(trace, -1.0, 5.0)
    with pytest.raises(ValueError):
        l2_length(trace, 0.0, 11.0)
    with pytest.raises(ValueError):
        l2_length(trace, 5.0, 3.0)


def test_l2_length_total_at_least_parts(dehn_run):
    _, _, config, trace = dehn_run
    t0, t1 = trace.records[0].t, trace.records[-1].t
    map_len, metric_len, total_len = l2_length(trace, t0, t1)
    assert total_len >= max(map_len, metric_len) - 1e-12
    assert total_len <= map_len + metric_len + 1e-12
    # additivity over a split of the interval
    t_mid = trace.records[len(trace.records) // 2].t
    first = l2_length(trace, t0, t_mid)
    second = l2_length(trace, t_mid, t1)
    assert first[2] + second[2] == pytest.approx(total_len, rel=1e-10)


def test_l2_length_tail_decreases(converging_run):
    _, _, config, trace = converging_run
    t1 = trace.records[-1].t
    tails = [l2_length(trace, t0, t1)[2] for t0 in (0.0, 5.0, 10.0, 14.0)]
    assert all(x > y for x, y in zip(tails, tails[1:]))
    assert tails[-1] < 1e-6


def test_l2_length_known_linear_speed():
    # records with tau = t^2 (map speed t) over [0, 2]: length = 2
    config = FlowConfig(t_max=2.0)
    ts = np.linspace(0.0, 2.0, 201)
    records = [_record(t=float(t), z=0.0, a=0.0, b=1.0, tau_norm_sq=float(t * t))
               for t in ts]
    trace = FlowTrace(records=records, events=[], config=config)
    map_len, metric_len, total_len = l2_length(trace, 0.0, 2.0)
    assert map_len == pytest.approx(2.0, rel=1e-4)
    assert metric_len == 0.0
    assert total_len == pytest.approx(map_len, rel=1e-12)


def test_limit_analysis_converged_and_distinct(dehn_run):
    _, curve, config, trace = dehn_run
    report = limit_analysis(curve, trace, config.level_offsets)
    assert report.applicable
    assert len(report.sequences) == 2
    for seq in report.sequences:
        assert seq.converged
        assert list(seq.indices) == sorted(seq.indices)
        tail = seq.distances[-3:]
        assert all(x >= y - 1e-8 for x, y in zip(tail, tail[1:]))
        assert seq.distances[-1] < 1e-2
    (o1, o2, dist), = report.distinct_pairs
    assert {o1, o2} == {0.0, 0.5}
    assert dist >= 0.4


def test_limit_analysis_insufficient_crossings(converging_run):
    _, curve, config, trace = converging_run
    report = limit_analysis(curve, trace, config.level_offsets)
    assert not report.applicable or not any(s.converged for s in report.sequences)
    for seq in report.sequences:
        assert not seq.converged
        assert "crossings" in seq.message


def test_limit_analysis_synthetic_on_curve():
    from torusflow.flow import FlowEvent

    config = FlowConfig(t_max=100.0)
    events = []
    for j in range(5):
        z = 0.0 + j
        g = curve_eval(DEHN, z)
        events.append(FlowEvent(kind="level_crossing", t=float(j + 1), j=j,
                                offset=0.0, value=z, a=g.a, b=g.b, energy=1.0))
    records = [_record(t=0.0, z=0.0, a=0.0, b=1.0),
               _record(t=100.0, z=4.5, a=4.5, b=1.0)]
    trace = FlowTrace(records=records, events=events, config=config)
    report = limit_analysis(DEHN, trace, (0.0,))
    seq, = report.sequences
    assert seq.converged
    assert max(seq.distances) <= 1e-10
    assert max(seq.energy_gaps) == 0.0


def _synthetic_quadratic_trace(n=400, t1=12.0):
    """Gradient flow of E = E_inf + x^2 sampled exactly: x(t) = e^{-2t}."""
    config = FlowConfig(t_max=t1, abs_tol=1e-300)
    e_inf = 1.0
    records = []
    for t in np.linspace(0.0, t1, n):
        x = math.exp(-2.0 * t)
        records.append(_record(t=float(t), z=0.0, a=0.0, b=1.0,
                               energy=e_inf + x * x,
                               tau_norm_sq=(2.0 * x) ** 2))
    return FlowTrace(records=records, events=[], config=config)


def test_lojasiewicz_quadratic_oracle():
    fit = lojasiewicz_fit(_synthetic_quadratic_trace())
    assert fit.applicable
    assert fit.alpha_hat == pytest.approx(0.5, abs=0.02)
    assert fit.slope == pytest.approx(2.0, abs=0.05)
    # the limit energy is estimated from the final record, which bends the
    # very end of the log-log tail; the bulk of the fit stays tight
    assert fit.residual_std < 0.15


def test_lojasiewicz_on_converging_scenario(converging_run):
    _, _, _, trace = converging_run
    fit = lojasiewicz_fit(trace)
    assert fit.applicable
    assert 0.0 < fit.alpha_hat <= 1.0
    assert fit.alpha_hat == pytest.approx(0.5, abs=0.05)


def test_lojasiewicz_refuses_winding_trace(dehn_run):
    _, _, _, trace = dehn_run
    fit = lojasiewicz_fit(trace)
    assert not fit.applicable
    assert "winds" in fit.message
    assert math.isnan(fit.alpha_hat)


def test_lojasiewicz_refuses_short_tail():
    fit = lojasiewicz_fit(_synthetic_quadratic_trace(n=10))
    assert not fit.applicable


def test_lojasiewicz_refuses_narrow_range():
    # the usable energy gaps sit between the noise floor and ten times it
    config = FlowConfig(t_max=1.0, abs_tol=1e-2)
    records = []
    for i in range(100):
        gap = 0.9 - 0.75 * i / 89 if i < 90 else 0.0
        records.append(_record(t=float(i) / 99, z=0.0, a=0.0, b=1.0,
                               energy=1.0 + gap, tau_norm_sq=max(gap, 1e-6)))
    fit = lojasiewicz_fit(FlowTrace(records=records, events=[], config=config))
    assert not fit.applicable
    assert "decade" in fit.message
