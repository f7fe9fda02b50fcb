"""Post-processing of flow traces.

Winding indices, pulled-back states, the tracking inequality between the
Weil-Petersson distance to the curve and the energy gap, L^2 path
lengths, limit detection at level-crossing times, and estimation of the
Lojasiewicz exponent near an analytic critical point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .moduli import TeichPoint, hyperbolic_distance, mapping_class_apply
from .target import ModuliCurve, curve_eval

__all__ = [
    "TraceRecord",
    "LimitSequence",
    "LimitReport",
    "LojasiewiczFit",
    "TRACKING_CONSTANT",
    "winding_index",
    "pull_back",
    "tracking_residual",
    "l2_length",
    "limit_analysis",
    "lojasiewicz_fit",
]

#: Explicit constant in d_WP(g, G_z) <= C (E - 1)^(1/2), from
#: arcosh(x) <= sqrt(2) (x - 1)^(1/2).
TRACKING_CONSTANT = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class TraceRecord:
    """One time-stamped sample of the flow with cached diagnostics."""

    t: float
    z: float
    a: float
    b: float
    energy: float
    decay_rate: float
    tau_norm_sq: float
    phi_norm_sq: float
    wp_to_curve: float
    inj_radius: float
    winding_index: int
    reduced_z: float

    FIELDS = ("t", "z", "a", "b", "energy", "decay_rate", "tau_norm_sq",
              "phi_norm_sq", "wp_to_curve", "inj_radius", "winding_index",
              "reduced_z")


def winding_index(state):
    """Integer part n of the line coordinate z and the remainder in [0, 1).

    Negative indices occur for z < 0 (exploratory initial data) and are
    permitted; the caller sees them directly in the returned n.
    """
    z = state.z
    n = math.floor(z)
    return n, z - n


def pull_back(curve: ModuliCurve, state):
    """Pull the state back by the n-th deck power, n the winding index.

    Returns (pulled-back TeichPoint, reduced z).  For a state lying
    exactly on the curve the result lies on the curve at the reduced z.
    """
    n, reduced = winding_index(state)
    point = TeichPoint(state.a, state.b)
    if n != 0:
        point = mapping_class_apply(curve.deck.power(n), point)
    return point, reduced


def tracking_residual(record: TraceRecord):
    """(lhs, rhs) of d_WP(g, G_z) <= 2 sqrt(2) (E - 1)^(1/2)."""
    gap = max(record.energy - 1.0, 0.0)
    return record.wp_to_curve, TRACKING_CONSTANT * math.sqrt(gap)


def _speeds(trace):
    """Map, metric and total L^2 speeds at each record of a trace."""
    eta = trace.config.eta
    tau = np.array([r.tau_norm_sq for r in trace.records])
    phi = np.array([r.phi_norm_sq for r in trace.records])
    map_speed = np.sqrt(tau)
    # |dg/dt|_{L^2} = (eta^2/4) sqrt(2) |phi| with phi_norm_sq = 16 |phi|^2
    metric_speed = (eta * eta / 4.0) * np.sqrt(phi / 8.0)
    total = np.sqrt(tau + metric_speed ** 2)
    return map_speed, metric_speed, total


def l2_length(trace, t0: float, t1: float):
    """Trapezoid L^2 lengths (map, metric, total) of the trace on [t0, t1]."""
    times = np.array([r.t for r in trace.records])
    if t0 > t1 or t0 < times[0] - 1e-12 or t1 > times[-1] + 1e-12:
        raise ValueError(f"interval [{t0}, {t1}] outside trace span "
                         f"[{times[0]}, {times[-1]}]")
    speeds = _speeds(trace)
    grid = np.unique(np.clip(np.concatenate(([t0], times[(times > t0) & (times < t1)], [t1])),
                             times[0], times[-1]))
    out = []
    for speed in speeds:
        vals = np.interp(grid, times, speed)
        out.append(float(np.trapezoid(vals, grid)))
    return tuple(out)


@dataclass(frozen=True)
class LimitSequence:
    """Pulled-back samples at the level-crossing times of one offset."""

    offset: float
    indices: tuple  # crossing labels j, strictly increasing
    points: tuple  # pulled-back TeichPoint per crossing
    distances: tuple  # hyperbolic distance to curve_eval(offset)
    energy_gaps: tuple
    converged: bool
    message: str = ""


@dataclass(frozen=True)
class LimitReport:
    sequences: tuple
    distinct_pairs: tuple  # ((offset_i, offset_j, distance), ...)
    applicable: bool
    message: str = ""


# verdict thresholds: the convergence claims carry no rate, so the check is
# qualitative; the monotonicity slack absorbs the integrator noise floor.
_CONVERGED_DISTANCE = 1e-2
_MONOTONE_SLACK = 1e-8


def limit_analysis(curve: ModuliCurve, trace, offsets,
                   min_crossings: int = 3) -> LimitReport:
    """Convergence of pulled-back states sampled at level-crossing times.

    For each offset z* the crossing events z(t) = z* + j give a sequence
    of pulled-back metrics compared against G_{z*}; distinct offsets are
    checked to give distinct limit points.
    """
    sequences = []
    for offset in offsets:
        crossings = sorted((ev for ev in trace.events
                            if ev.kind == "level_crossing" and ev.offset == offset),
                           key=lambda ev: ev.j)
        if len(crossings) < min_crossings:
            sequences.append(LimitSequence(
                offset=offset, indices=(), points=(), distances=(), energy_gaps=(),
                converged=False,
                message=f"only {len(crossings)} crossings, need {min_crossings}"))
            continue
        target = curve_eval(curve, offset)
        idx, pts, dists, gaps = [], [], [], []
        for ev in crossings:
            state = _EventState(ev)
            point, _ = pull_back(curve, state)
            idx.append(ev.j)
            pts.append(point)
            dists.append(hyperbolic_distance(point, target))
            gaps.append(ev.energy - 1.0)
        tail = dists[-min_crossings:]
        monotone = all(tail[i + 1] <= tail[i] + _MONOTONE_SLACK
                       for i in range(len(tail) - 1))
        converged = dists[-1] < _CONVERGED_DISTANCE and monotone
        sequences.append(LimitSequence(
            offset=offset, indices=tuple(idx), points=tuple(pts),
            distances=tuple(dists), energy_gaps=tuple(gaps), converged=converged))
    pairs = []
    for i in range(len(sequences)):
        for j in range(i + 1, len(sequences)):
            si, sj = sequences[i], sequences[j]
            if si.points and sj.points:
                pairs.append((si.offset, sj.offset,
                              hyperbolic_distance(si.points[-1], sj.points[-1])))
    applicable = any(s.points for s in sequences)
    msg = "" if applicable else "no level crossings recorded"
    return LimitReport(sequences=tuple(sequences), distinct_pairs=tuple(pairs),
                       applicable=applicable, message=msg)


class _EventState:
    """Adapter giving an event the (z, a, b) attributes pull_back expects."""

    def __init__(self, ev):
        self.z = ev.value
        self.a = ev.a
        self.b = ev.b


@dataclass(frozen=True)
class LojasiewiczFit:
    """Least-squares estimate of the Lojasiewicz exponent from a trace tail."""

    alpha_hat: float
    slope: float
    residual_std: float
    n_points: int
    e_infinity: float
    applicable: bool
    message: str = ""


def lojasiewicz_fit(trace, tail_fraction: float = 0.5,
                    min_points: int = 20) -> LojasiewiczFit:
    """Fit |E - E_inf| against the gradient norm in log-log coordinates.

    The regression is log(E - E_inf) = slope * log(sqrt(tau^2 + |Phi|^2)) + c,
    so slope = 1/(1 - alpha) and alpha_hat = 1 - 1/slope; a nondegenerate
    analytic minimum gives alpha_hat = 1/2.  The estimator refuses traces
    that wind through moduli periods (no critical point is approached) and
    tails with less than a decade of dynamic range.
    """
    records = trace.records
    z_range = max(r.z for r in records) - min(r.z for r in records)
    if z_range >= 1.0:
        return LojasiewiczFit(math.nan, math.nan, math.nan, 0,
                              records[-1].energy, False,
                              "trace winds through moduli periods; "
                              "no single critical point is approached")
    e_inf = records[-1].energy
    floor = 10.0 * trace.config.abs_tol
    usable = [r for r in records
              if r.energy - e_inf > floor and r.tau_norm_sq + r.phi_norm_sq > 0.0]
    start = int(len(usable) * (1.0 - tail_fraction))
    tail = usable[start:]
    if len(tail) < min_points:
        return LojasiewiczFit(math.nan, math.nan, math.nan, len(tail), e_inf, False,
                              f"tail has {len(tail)} usable records, need {min_points}")
    log_gap = np.log([r.energy - e_inf for r in tail])
    log_grad = 0.5 * np.log([r.tau_norm_sq + r.phi_norm_sq for r in tail])
    if log_gap.max() - log_gap.min() < math.log(10.0):
        return LojasiewiczFit(math.nan, math.nan, math.nan, len(tail), e_inf, False,
                              "energy gap spans less than one decade")
    slope, intercept = np.polyfit(log_grad, log_gap, 1)
    resid = log_gap - (slope * log_grad + intercept)
    alpha_hat = 1.0 - 1.0 / slope
    return LojasiewiczFit(alpha_hat=float(alpha_hat), slope=float(slope),
                          residual_std=float(np.std(resid)), n_points=len(tail),
                          e_infinity=float(e_inf), applicable=True)
