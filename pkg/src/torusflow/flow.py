"""The reduced gradient-flow ODE for (z, a, b) and its integrators.

The map component of the flow is a point z on the target line; the
metric component is a flat unit-area torus metric with parameters
(a, b).  The right-hand side couples the closed-form tension of the map
with the metric velocity obtained by expressing the real part of the
Hopf differential in the basis of coordinate derivatives of the metric.

Two integrators are provided: an embedded Dormand-Prince 5(4) pair with
PI step control and cubic Hermite dense output, and a Radau path backed
by scipy.  The staircase scenarios slow down double-exponentially (the
time to reach winding index n grows like exp(e^n)) while the metric
relaxation rate stays of order eta^2/8, so those runs are extremely
stiff and are integrated with Radau; the explicit pair serves the
converging scenarios and short-horizon work.

For the winding profiles the Radau path does not march in t at all: the
reduced system is autonomous and the line coordinate z is strictly
monotone, so z serves as the independent variable and the state carries
s = asinh(t) together with the curve-relative metric deviation rescaled
by the natural lag scale omega(z) = -f0'(z) = exp(z - e^z),

    U = (a - alpha(z)) / omega(z),   V = (b - beta(z)) / omega(z).

U and V remain of order one over the whole run even though the raw
deviation decays below the floating-point resolution of (a, b); every
coefficient of the rescaled system has a closed form free of the
catastrophic cancellation that makes the raw variables unusable once
z - e^z drops below log(machine epsilon).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from . import moduli
from .diagnostics import TraceRecord
from .moduli import TeichPoint, lattice_map
from .target import (CouplingProfile, ModuliCurve, curve_deriv, curve_eval,
                     f0_deriv, f0_eval, potential_energy)

__all__ = [
    "FlowState",
    "FlowConfig",
    "FlowEvent",
    "FlowTrace",
    "StepUnderflowError",
    "IntegrationError",
    "map_velocity",
    "metric_velocity",
    "velocity",
    "total_velocity_norm",
    "decay_rate",
    "step",
    "integrate",
    "initial_state_on_curve",
    "record_for_state",
]

B_GUARD_RANGE = (1e-6, 1e6)


class StepUnderflowError(RuntimeError):
    """Raised when the required step size falls below the configured minimum."""


class IntegrationError(RuntimeError):
    """Integrator failure; carries the last good state."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


@dataclass(frozen=True)
class FlowState:
    """Flow variables at one instant: time t, line coordinate z, metric (a, b)."""

    t: float
    z: float
    a: float
    b: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.t, self.z, self.a, self.b)):
            raise ValueError("non-finite flow state")
        if self.b <= 0:
            raise ValueError("metric parameter b must be positive")

    @property
    def point(self) -> TeichPoint:
        return TeichPoint(self.a, self.b)


@dataclass(frozen=True)
class FlowConfig:
    """Coupling strength, horizon, tolerances and event settings."""

    eta: float = 1.0
    t_max: float = 1e3
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    min_step: float = 1e-14
    max_step: float = math.inf
    level_offsets: tuple = (0.0, 0.5)
    velocity_threshold: float = 1e-6
    method: str = "auto"  # auto | dopri5 | radau
    max_records: int = 1_000_000

    def __post_init__(self):
        if self.eta <= 0 or self.t_max <= 0:
            raise ValueError("eta and t_max must be positive")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.method not in ("auto", "dopri5", "radau"):
            raise ValueError(f"unknown method {self.method!r}")
        for z in self.level_offsets:
            if not 0.0 <= z < 1.0:
                raise ValueError(f"level offsets must lie in [0, 1), got {z}")


@dataclass(frozen=True)
class FlowEvent:
    """Level crossing (z = offset + j) or small-velocity local minimum."""

    kind: str
    t: float
    j: int
    offset: float | None
    value: float
    a: float = math.nan
    b: float = math.nan
    energy: float = math.nan


@dataclass
class FlowTrace:
    """Record sequence of one trajectory plus detected events."""

    records: list
    events: list
    config: FlowConfig
    warnings: list = field(default_factory=list)

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]


def map_velocity(profile: CouplingProfile, curve: ModuliCurve, state: FlowState) -> float:
    """Tension of the map component:
    dz/dt = -f0(z) D_G E(dG/dz) - f0'(z) E(g, G_z)."""
    p = state.point
    g_pt = curve_eval(curve, state.z)
    d_al, d_be = curve_deriv(curve, state.z)
    energy = moduli.identity_energy(p, g_pt)
    _, _, e_al, e_be = moduli.identity_energy_grad(p, g_pt)
    f0 = f0_eval(profile, state.z)
    f0p = f0_deriv(profile, state.z)
    return -f0 * (e_al * d_al + e_be * d_be) - f0p * energy


def _metric_coordinate_derivatives(a: float, b: float):
    """d g_{a,b} / da and d g_{a,b} / db as coefficient matrices."""
    dag = np.array([[0.0, 1.0 / b], [1.0 / b, 2.0 * a / b]])
    dbg = np.array([[-1.0 / (b * b), -a / (b * b)],
                    [-a / (b * b), 2.0 - (a * a + b * b) / (b * b)]])
    return dag, dbg


def metric_velocity(profile: CouplingProfile, curve: ModuliCurve,
                    state: FlowState, eta: float):
    """(da/dt, db/dt) from dg/dt = (eta^2/4) Re(Phi) in the metric chart.

    The Hopf differential of the symmetric ansatz has constant
    coefficients, so the holomorphic projection acts as the identity and
    the metric velocity solves the 2x2 linear system expressing the
    tensor Re(Phi) against the coordinate derivatives of g_{a,b}.
    """
    a, b = state.a, state.b
    p = state.point
    g_pt = curve_eval(curve, state.z)
    phi = moduli.hopf_coefficient(p, g_pt, scale=f0_eval(profile, state.z)).value
    t_mat = lattice_map(p)
    re_phi = np.array([[phi.real, -phi.imag], [-phi.imag, -phi.real]])
    rhs = (eta * eta / 4.0) * (t_mat.T @ re_phi @ t_mat)
    dag, dbg = _metric_coordinate_derivatives(a, b)
    system = np.array([[dag[0, 0], dbg[0, 0]], [dag[0, 1], dbg[0, 1]]])
    adot, bdot = np.linalg.solve(system, np.array([rhs[0, 0], rhs[0, 1]]))
    # the (1,1) component is determined by tracelessness; guard the algebra
    resid = dag[1, 1] * adot + dbg[1, 1] * bdot - rhs[1, 1]
    scale = abs(rhs).max() + abs(adot) + abs(bdot) + 1e-300
    if abs(resid) > 1e-9 * scale:
        raise IntegrationError(f"inconsistent metric velocity system: "
                               f"residual {resid:.3e}", last_state=state)
    return float(adot), float(bdot)


def velocity(profile: CouplingProfile, curve: ModuliCurve,
             state: FlowState, eta: float):
    """(dz/dt, da/dt, db/dt) of the coupled system."""
    zdot = map_velocity(profile, curve, state)
    adot, bdot = metric_velocity(profile, curve, state, eta)
    return zdot, adot, bdot


def total_velocity_norm(profile: CouplingProfile, curve: ModuliCurve,
                        state: FlowState, eta: float) -> float:
    """L^2 norm of (du/dt, dg/dt): sqrt(zdot^2 + 2 (adot^2 + bdot^2)/b^2)."""
    zdot, adot, bdot = velocity(profile, curve, state, eta)
    return math.sqrt(zdot * zdot + 2.0 * (adot * adot + bdot * bdot) / (state.b * state.b))


def decay_rate(profile: CouplingProfile, curve: ModuliCurve,
               state: FlowState, eta: float) -> float:
    """dE/dt = -|tension|^2 - (eta^2/32) |Phi|^2; always <= 0.

    The tension is spatially constant and the domain has unit area, so
    its squared L^2 norm is zdot^2.
    """
    zdot = map_velocity(profile, curve, state)
    phi = moduli.hopf_coefficient(state.point, curve_eval(curve, state.z),
                                  scale=f0_eval(profile, state.z))
    return -zdot * zdot - (eta * eta / 32.0) * moduli.quad_diff_l2_norm_sq(phi, state.point)


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


def _dp_step(rhs, t, y, h):
    """One Dormand-Prince 5(4) step; returns (y5, error_vector, k_stages)."""
    k = np.empty((7, len(y)))
    k[0] = rhs(t, y)
    for i in range(1, 7):
        k[i] = rhs(t + _DP_C[i] * h, y + h * (_DP_A[i] @ k[:i]))
    y5 = y + h * (_DP_B5 @ k)
    err = h * ((_DP_B5 - _DP_B4) @ k)
    return y5, err, k


def step(system, state: FlowState, h: float,
         rel_tol: float = 1e-8, abs_tol: float = 1e-10, min_step: float = 1e-14):
    """One embedded Dormand-Prince 5(4) step of the coupled system.

    ``system`` is the right-hand side callable (t, y) -> dy/dt over
    y = (z, a, b).  Returns (new_state, error_estimate, accepted); the
    error estimate is the tolerance-scaled RMS norm of the embedded
    difference, with acceptance at estimate <= 1.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if h < min_step * max(1.0, abs(state.t)):
        raise StepUnderflowError(f"required step {h:.3e} below minimum at t = {state.t:.6e}")
    y = np.array([state.z, state.a, state.b])
    y5, err, _ = _dp_step(system, state.t, y, h)
    scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y5))
    estimate = float(np.sqrt(np.mean((err / scale) ** 2)))
    accepted = estimate <= 1.0 and y5[2] > 0 and np.all(np.isfinite(y5))
    if accepted:
        new = FlowState(t=state.t + h, z=y5[0], a=y5[1], b=y5[2])
    else:
        new = state
    return new, estimate, accepted


def initial_state_on_curve(curve: ModuliCurve, z0: float) -> FlowState:
    """Default initial data: the metric sits exactly on the curve at z0."""
    g0 = curve_eval(curve, z0)
    return FlowState(t=0.0, z=z0, a=g0.a, b=g0.b)


def record_for_state(profile: CouplingProfile, curve: ModuliCurve,
                     eta: float, state: FlowState) -> TraceRecord:
    """Evaluate all cached diagnostics of one flow state."""
    p = state.point
    g_pt = curve_eval(curve, state.z)
    energy = f0_eval(profile, state.z) * moduli.identity_energy(p, g_pt)
    zdot = map_velocity(profile, curve, state)
    phi = moduli.hopf_coefficient(p, g_pt, scale=f0_eval(profile, state.z))
    phi_sq = moduli.quad_diff_l2_norm_sq(phi, p)
    n = math.floor(state.z)
    return TraceRecord(
        t=state.t, z=state.z, a=state.a, b=state.b, energy=energy,
        decay_rate=-zdot * zdot - (eta * eta / 32.0) * phi_sq,
        tau_norm_sq=zdot * zdot, phi_norm_sq=phi_sq,
        wp_to_curve=moduli.wp_distance(p, g_pt),
        inj_radius=moduli.injectivity_radius(p),
        winding_index=n, reduced_z=state.z - n)


def _crossing_indices(z0: float, z1: float, offset: float):
    """Integers j with offset + j strictly inside (z0, z1] (either direction)."""
    lo, hi = (z0, z1) if z1 >= z0 else (z1, z0)
    j = math.ceil(lo - offset)
    out = []
    while offset + j <= hi:
        if lo < offset + j:  # strict at the left end: no repeat of a boundary hit
            out.append(j)
        j += 1
    return out


def _hermite(t0, y0, f0, t1, y1, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h * h10 * f0 + h01 * y1 + h * h11 * f1


def _locate_crossing(t0, y0, f0, t1, y1, f1, level, rel=1e-10):
    """Bisection for z(t) = level on the cubic Hermite interpolant."""
    g = lambda t: _hermite(t0, y0[0], f0[0], t1, y1[0], f1[0], t) - level
    a_t, b_t = t0, t1
    ga = g(a_t)
    if ga == 0.0:
        return a_t
    for _ in range(200):
        mid = 0.5 * (a_t + b_t)
        if b_t - a_t <= rel * max(1.0, abs(mid)):
            break
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (ga > 0) == (gm > 0):
            a_t, ga = mid, gm
        else:
            b_t = mid
    return 0.5 * (a_t + b_t)


def _integrate_dopri5(rhs, config, initial, on_accept):
    t = initial.t
    y = np.array([initial.z, initial.a, initial.b])
    f_now = rhs(t, y)
    scale0 = config.abs_tol + config.rel_tol * np.abs(y)
    v0 = float(np.sqrt(np.mean((f_now / scale0) ** 2)))
    h = min(config.max_step, config.t_max - t,
            0.01 / v0 if v0 > 0 else config.t_max - t)
    err_prev = 1.0
    while t < config.t_max:
        h = min(h, config.t_max - t, config.max_step)
        if h < config.min_step * max(1.0, abs(t)):
            raise StepUnderflowError(f"step size underflow at t = {t:.6e}")
        y5, err, _ = _dp_step(rhs, t, y, h)
        scale = config.abs_tol + config.rel_tol * np.maximum(np.abs(y), np.abs(y5))
        estimate = float(np.sqrt(np.mean((err / scale) ** 2)))
        bad = not np.all(np.isfinite(y5)) or y5[2] <= 0
        if estimate <= 1.0 and not bad:
            f_new = rhs(t + h, y5)
            on_accept(t, y, f_now, t + h, y5, f_new)
            t, y, f_now = t + h, y5, f_new
            # PI controller (orders 5/4)
            est = max(estimate, 1e-10)
            factor = 0.9 * est ** -0.14 * err_prev ** 0.08
            err_prev = est
            h *= min(5.0, max(0.2, factor))
        else:
            if bad:
                h *= 0.2
            else:
                h *= min(1.0, max(0.2, 0.9 * estimate ** -0.2))


def _omega(z: float) -> float:
    """Lag scale -f0'(z) = exp(z - e^z) of the staircase and strip profiles."""
    if z > 700.0:
        return 0.0
    return math.exp(z - math.exp(z))


def _relative_rhs(profile, curve, eta):
    """Right-hand side of the rescaled winding system over y = (s, U, V).

    The independent variable is z; s = asinh(t) and (U, V) are the
    curve-relative metric deviations divided by omega(z).  Requires
    dz/dt > 0, which holds whenever the metric lag stays moderate.
    """

    def rhs(z, y):
        s, U, V = y
        g_pt = curve_eval(curve, z)
        al, be = g_pt.a, g_pt.b
        alp, bep = curve_deriv(curve, z)
        w = _omega(z)
        if w <= 0.0:
            raise IntegrationError(f"lag scale underflow at z = {z:.6f}; "
                                   "the horizon is beyond double precision")
        c = f0_eval(profile, z)
        b = be + w * V
        if b <= 0.0:
            raise IntegrationError(f"metric degenerated at z = {z:.6f}")
        r2w = U * U + V * V
        energy = 1.0 + w * w * r2w / (2.0 * b * be)
        # W = (dz/dt) / omega; the alpha'-term is the slaving drag
        big_w = (energy + (c / (b * be)) * (alp * U + bep * V)
                 + c * bep * w * r2w / (2.0 * b * be * be))
        if big_w <= 0.0:
            raise IntegrationError(
                f"map velocity lost positivity at z = {z:.6f}; the winding "
                "change of variables needs a strictly advancing map")
        # (da/dt, db/dt) / omega from the metric gradient flow
        quarter = eta * eta / 8.0
        a_dot = -quarter * c * b * U / be
        b_dot = -quarter * c * (b * V / be - w * r2w / (2.0 * be))
        lam = 1.0 - math.exp(z)  # omega'/omega
        if s < 30.0:
            ds = 1.0 / (math.cosh(s) * w * big_w)
        else:  # cosh(s) ~ e^s / 2; log(w) = z - e^z exactly
            ds = math.exp(math.log(2.0) - s + math.exp(z) - z - math.log(big_w))
        return [ds,
                (a_dot / big_w - alp) / w - U * lam,
                (b_dot / big_w - bep) / w - V * lam]

    return rhs


def _integrate_winding_radau(profile, curve, config, initial, crossing_event):
    """March the rescaled winding system in z with scipy's Radau.

    Returns the list of accepted states; level crossings are emitted from
    the dense output at the exact grid values z = offset + j.
    """
    z0 = initial.z
    w0 = _omega(z0)
    if w0 <= 0.0:
        raise IntegrationError(f"initial coordinate z = {z0:.6f} is beyond "
                               "the representable lag scale", last_state=initial)
    g0 = curve_eval(curve, z0)
    y0 = [math.asinh(initial.t), (initial.a - g0.a) / w0, (initial.b - g0.b) / w0]
    if not all(math.isfinite(v) for v in y0):
        raise IntegrationError("initial metric deviation overwhelms the lag "
                               "scale; start closer to the curve", last_state=initial)
    s_max = math.asinh(config.t_max)

    def horizon(z, y):
        return y[0] - s_max

    horizon.terminal = True
    horizon.direction = 1
    rhs = _relative_rhs(profile, curve, config.eta)
    sol = solve_ivp(rhs, (z0, max(z0 + 1.0, 7.0)), y0, method="Radau",
                    rtol=config.rel_tol, atol=config.abs_tol,
                    events=[horizon], dense_output=True)
    if not sol.success:
        raise IntegrationError(f"Radau integration failed: {sol.message}")
    if not sol.t_events[0].size:
        raise IntegrationError("winding march exhausted its z range before "
                               f"reaching t_max = {config.t_max:.3e}")

    def state_at(z, y):
        s, U, V = float(y[0]), float(y[1]), float(y[2])
        w = _omega(z)
        g_pt = curve_eval(curve, z)
        t = math.sinh(s) if s < 700.0 else math.exp(s - math.log(2.0))
        return FlowState(t=max(t, 0.0), z=z, a=g_pt.a + w * U, b=g_pt.b + w * V)

    states = [state_at(float(z), sol.y[:, i]) for i, z in enumerate(sol.t)
              if z > z0]
    z_end = float(sol.t[-1])
    for offset in config.level_offsets:
        for j in _crossing_indices(z0, z_end, offset):
            z_c = offset + j
            st = state_at(z_c, sol.sol(z_c))
            crossing_event(st.t, np.array([st.z, st.a, st.b]), offset, j)
    return states


def integrate(profile: CouplingProfile, curve: ModuliCurve,
              config: FlowConfig, initial: FlowState) -> FlowTrace:
    """Run the flow to t_max, recording accepted steps and events.

    Events are level crossings z(t) = offset + j for each configured
    offset and integer j, and local minima of the total velocity norm
    below the configured threshold.
    """
    method = config.method
    if method == "auto":
        method = "dopri5" if profile.kind == "converging_well" else "radau"
    eta = config.eta
    rhs = lambda t, y: np.array(
        velocity(profile, curve, FlowState(t=t, z=y[0], a=y[1], b=y[2]), eta))
    records = [record_for_state(profile, curve, eta, initial)]
    events = []

    def crossing_event(t, y, offset, j):
        state = FlowState(t=t, z=y[0], a=y[1], b=y[2])
        rec = record_for_state(profile, curve, eta, state)
        events.append(FlowEvent(kind="level_crossing", t=t, j=j, offset=offset,
                                value=y[0], a=y[1], b=y[2], energy=rec.energy))

    if method == "radau" and profile.kind != "converging_well":
        for state in _integrate_winding_radau(profile, curve, config, initial,
                                              crossing_event):
            records.append(record_for_state(profile, curve, eta, state))
    elif method == "radau":
        ev_fns = [(lambda t, y, z0=z0: math.sin(math.pi * (y[0] - z0)))
                  for z0 in config.level_offsets]
        sol = solve_ivp(rhs, (initial.t, config.t_max),
                        [initial.z, initial.a, initial.b], method="Radau",
                        rtol=config.rel_tol, atol=config.abs_tol,
                        max_step=config.max_step, events=ev_fns, dense_output=False)
        if not sol.success:
            raise IntegrationError(f"Radau integration failed: {sol.message}",
                                   last_state=FlowState(t=float(sol.t[-1]),
                                                        z=float(sol.y[0, -1]),
                                                        a=float(sol.y[1, -1]),
                                                        b=float(sol.y[2, -1])))
        for i in range(1, len(sol.t)):
            state = FlowState(t=float(sol.t[i]), z=float(sol.y[0, i]),
                              a=float(sol.y[1, i]), b=float(sol.y[2, i]))
            records.append(record_for_state(profile, curve, eta, state))
        for offset, t_ev, y_ev in zip(config.level_offsets, sol.t_events, sol.y_events):
            for t_e, y_e in zip(t_ev, y_ev):
                crossing_event(float(t_e), y_e, offset, int(round(y_e[0] - offset)))
    else:
        def on_accept(t0, y0, f0, t1, y1, f1):
            state = FlowState(t=t1, z=y1[0], a=y1[1], b=y1[2])
            records.append(record_for_state(profile, curve, eta, state))
            for offset in config.level_offsets:
                for j in _crossing_indices(y0[0], y1[0], offset):
                    t_c = _locate_crossing(t0, y0, f0, t1, y1, f1, offset + j)
                    y_c = np.array([_hermite(t0, y0[i], f0[i], t1, y1[i], f1[i], t_c)
                                    for i in range(3)])
                    crossing_event(t_c, y_c, offset, j)
        _integrate_dopri5(rhs, config, initial, on_accept)

    events.sort(key=lambda ev: ev.t)
    trace = FlowTrace(records=records, events=events, config=config)
    _append_velocity_minima(profile, curve, trace)
    _thin_records(trace)
    lo, hi = B_GUARD_RANGE
    bs = [r.b for r in trace.records]
    if min(bs) < lo or max(bs) > hi:
        trace.warnings.append(
            f"metric parameter b left the guard range {B_GUARD_RANGE}: "
            f"[{min(bs):.3e}, {max(bs):.3e}]; this signals a numerical problem "
            "(the torus flow cannot degenerate in finite time)")
    return trace


#: Roundoff scale of the recomputed velocity norm, per unit curve speed:
#: the dominant noise is the quantization of a - alpha(z) at machine
#: epsilon times the state magnitude.  Below this floor a local minimum
#: cannot be certified against noise wiggles.
_VELOCITY_NOISE_FLOOR = 1e-13


def _append_velocity_minima(profile, curve, trace):
    """Local minima of the total velocity norm below the threshold."""
    eta = trace.config.eta
    norms = [math.sqrt(r.tau_norm_sq + (eta * eta / 4.0) ** 2 * r.phi_norm_sq / 8.0)
             for r in trace.records]
    thr = trace.config.velocity_threshold
    count = 0
    for i, r in enumerate(trace.records):
        dal, dbe = curve_deriv(curve, r.z)
        floor = _VELOCITY_NOISE_FLOOR * math.hypot(dal, dbe)
        if norms[i] >= thr or norms[i] < floor:
            continue
        left_ok = i == 0 or norms[i] <= norms[i - 1]
        right_ok = i == len(trace.records) - 1 or norms[i] <= norms[i + 1]
        if left_ok and right_ok and i > 0:
            trace.events.append(FlowEvent(kind="velocity_min", t=r.t, j=count,
                                          offset=None, value=norms[i],
                                          a=r.a, b=r.b, energy=r.energy))
            count += 1


def _thin_records(trace):
    cap = trace.config.max_records
    if len(trace.records) <= cap:
        return
    idx = np.unique(np.linspace(0, len(trace.records) - 1, cap).astype(int))
    trace.records = [trace.records[i] for i in idx]
    trace.warnings.append(f"trace thinned to {len(trace.records)} records")
