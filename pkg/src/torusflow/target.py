"""Target-manifold data: prescribed metric curves and coupling profiles.

The target geometry is a line (or half-plane) crossed with the torus,
with torus factor f0(z) G_z for a curve of flat metrics G_z and a
coupling profile f0.  Three profile kinds are supported:

* ``staircase``   -- the smooth non-analytic coupling built from a smooth
  staircase function rho (flat near every integer), giving
  f(x, y) = 1 + exp(-y e^{-rho(log x)}) for x > 0 and f = 1 otherwise,
  with f0(z) = f(1, e^z) = 1 + exp(-e^z);
* ``analytic_strip`` -- the analytic variant with rho(s) = s, so
  f(x, y) = 1 + exp(-y/x) and the same f0;
* ``converging_well`` -- an analytic well f0(z) = 1 + (z-z*)^2/(1+(z-z*)^2)
  used with a constant curve, so the potential has a unique critical
  point and the flow converges uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .moduli import MappingClass, TeichPoint, identity_energy, hyperbolic_distance, mapping_class_apply

__all__ = [
    "CouplingProfile",
    "ModuliCurve",
    "CurveValidation",
    "dehn_twist_curve",
    "closed_loop_curve",
    "constant_curve",
    "spline_curve",
    "curve_eval",
    "curve_deriv",
    "validate_curve",
    "rho_eval",
    "rho_deriv",
    "f_eval",
    "f0_eval",
    "f0_deriv",
    "potential_energy",
]

_PROFILE_KINDS = ("staircase", "analytic_strip", "converging_well")
_CURVE_KINDS = ("dehn_twist", "closed_loop", "spline")


@dataclass(frozen=True)
class CouplingProfile:
    """Coupling functions rho, f, f0 defining the target geometry."""

    kind: str = "staircase"
    width: float = 0.1  # half-width of the flat neighbourhoods of rho
    z_star: float = 0.0  # well position, converging_well kind only

    def __post_init__(self):
        if self.kind not in _PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not 0.0 < self.width < 0.5:
            raise ValueError("staircase width must lie in (0, 1/2)")


@dataclass(frozen=True)
class ModuliCurve:
    """Curve s -> G_s of flat metrics, 1-periodic in moduli space.

    The curve is determined by a base parametrization on [0, 1) and the
    deck mapping class phi with G_s = phi^* G_{s+1}; evaluation at
    arbitrary s applies the appropriate power of the deck transform.
    """

    kind: str
    deck: MappingClass
    beta0: float = 1.0  # dehn_twist: height of the horizontal line
    a0: float = 0.0  # dehn_twist: base offset
    center: tuple = (0.0, 2.0)  # closed_loop
    radius: float = 0.5  # closed_loop
    control_points: tuple = ()  # spline: periodic control points in H

    def __post_init__(self):
        if self.kind not in _CURVE_KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.kind == "dehn_twist" and self.beta0 <= 0:
            raise ValueError("dehn_twist base height must be positive")
        if self.kind == "closed_loop":
            if self.radius < 0 or self.center[1] - self.radius <= 0:
                raise ValueError("closed_loop must stay in the upper half-plane")
        if self.kind == "spline" and len(self.control_points) < 3:
            raise ValueError("spline curve needs at least 3 control points")


def dehn_twist_curve(beta0: float = 1.0, a0: float = 0.0) -> ModuliCurve:
    """Horizontal line G_s = (a0 + s, beta0) with deck transform tau -> tau - 1."""
    return ModuliCurve(kind="dehn_twist", deck=MappingClass.translation(-1),
                       beta0=beta0, a0=a0)


def closed_loop_curve(center=(0.0, 2.0), radius: float = 0.5) -> ModuliCurve:
    """Circle G_s = center + radius (cos 2 pi s, sin 2 pi s); deck = identity."""
    return ModuliCurve(kind="closed_loop", deck=MappingClass.identity(),
                       center=(float(center[0]), float(center[1])), radius=float(radius))


def constant_curve(point) -> ModuliCurve:
    """Constant curve G_s == point; a degenerate closed loop of radius zero."""
    return closed_loop_curve(center=(point[0], point[1]), radius=0.0)


def spline_curve(control_points, deck: MappingClass | None = None) -> ModuliCurve:
    """Periodic cubic spline through control points at s = i/k, i = 0..k-1.

    The spline is built on deck-translated copies of the control points
    over [-1, 2], so the periodicity identity holds only approximately
    for a nontrivial deck; validate_curve reports the defect.
    """
    pts = tuple((float(a), float(b)) for a, b in control_points)
    return ModuliCurve(kind="spline", deck=deck or MappingClass.identity(),
                       control_points=pts)


def _base_eval(curve: ModuliCurve, u: float) -> complex:
    if curve.kind == "dehn_twist":
        return complex(curve.a0 + u, curve.beta0)
    if curve.kind == "closed_loop":
        ang = 2.0 * math.pi * u
        return complex(curve.center[0] + curve.radius * math.cos(ang),
                       curve.center[1] + curve.radius * math.sin(ang))
    sa, sb = _spline_pair(curve)
    return complex(float(sa(u)), float(sb(u)))


def _base_deriv(curve: ModuliCurve, u: float) -> complex:
    if curve.kind == "dehn_twist":
        return complex(1.0, 0.0)
    if curve.kind == "closed_loop":
        ang = 2.0 * math.pi * u
        w = 2.0 * math.pi * curve.radius
        return complex(-w * math.sin(ang), w * math.cos(ang))
    sa, sb = _spline_pair(curve)
    return complex(float(sa(u, 1)), float(sb(u, 1)))


_spline_cache: dict = {}


def _spline_pair(curve: ModuliCurve):
    key = (curve.control_points, curve.deck.entries)
    cached = _spline_cache.get(key)
    if cached is not None:
        return cached
    k = len(curve.control_points)
    if curve.deck.is_identity():
        u = np.arange(k + 1) / k
        pts = list(curve.control_points) + [curve.control_points[0]]
        a = np.array([p[0] for p in pts])
        b = np.array([p[1] for p in pts])
        sa = CubicSpline(u, a, bc_type="periodic")
        sb = CubicSpline(u, b, bc_type="periodic")
    else:
        # deck-translated copies over [-1, 2]
        us, avals, bvals = [], [], []
        for shift in (-1, 0, 1, 2):
            power = curve.deck.power(-shift)
            for i in range(k):
                if shift == 2 and i > 0:
                    break
                pt = mapping_class_apply(power, TeichPoint(*curve.control_points[i]))
                us.append(shift + i / k)
                avals.append(pt.a)
                bvals.append(pt.b)
        order = np.argsort(us)
        us = np.array(us)[order]
        sa = CubicSpline(us, np.array(avals)[order])
        sb = CubicSpline(us, np.array(bvals)[order])
    _spline_cache[key] = (sa, sb)
    return sa, sb


def curve_eval(curve: ModuliCurve, s: float) -> TeichPoint:
    """G_s for any real s, via G_{u+n} = (deck^{-n}) . G_u with u in [0, 1)."""
    n = math.floor(s)
    u = s - n
    base = _base_eval(curve, u)
    if n == 0 or curve.deck.is_identity():
        return TeichPoint(base.real, base.imag)
    return mapping_class_apply(curve.deck.power(-n), TeichPoint(base.real, base.imag))


def curve_deriv(curve: ModuliCurve, s: float):
    """Derivative (d alpha/ds, d beta/ds) of curve_eval at s."""
    n = math.floor(s)
    u = s - n
    base = _base_eval(curve, u)
    dbase = _base_deriv(curve, u)
    if n == 0 or curve.deck.is_identity():
        return dbase.real, dbase.imag
    (_, _), (rr, ss) = curve.deck.power(-n).entries
    d = dbase / (rr * base + ss) ** 2  # Moebius chain rule
    return d.real, d.imag


@dataclass(frozen=True)
class CurveValidation:
    """Report of the periodicity and half-plane checks for a curve."""

    passed: bool
    max_violation: float
    argmax_s: float
    min_b: float
    messages: tuple = ()


def validate_curve(curve: ModuliCurve, grid_size: int = 1000,
                   b_min: float = 1e-6, tol: float = 1e-9) -> CurveValidation:
    """Check G_s = deck . G_{s+1} and the b-lower-bound on a sample grid."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    worst = 0.0
    argmax = 0.0
    min_b = math.inf
    msgs = []
    for i in range(grid_size):
        s = i / grid_size
        here = curve_eval(curve, s)
        wrapped = mapping_class_apply(curve.deck, curve_eval(curve, s + 1.0))
        viol = hyperbolic_distance(here, wrapped)
        if viol > worst:
            worst, argmax = viol, s
        min_b = min(min_b, here.b)
    if worst > tol:
        msgs.append(f"periodicity violated: max defect {worst:.3e} at s = {argmax:.4f}")
    if min_b < b_min:
        msgs.append(f"curve approaches the boundary of the half-plane: min b = {min_b:.3e}")
    return CurveValidation(passed=not msgs, max_violation=worst, argmax_s=argmax,
                           min_b=min_b, messages=tuple(msgs))


def _bump(t: float) -> float:
    return math.exp(-1.0 / t) if t > 0.0 else 0.0


def _smoothstep(t: float) -> float:
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    bt = _bump(t)
    return bt / (bt + _bump(1.0 - t))


def _smoothstep_deriv(t: float) -> float:
    if t <= 0.0 or t >= 1.0:
        return 0.0
    bt = _bump(t)
    bmt = _bump(1.0 - t)
    dbt = bt / (t * t)
    dbmt = -bmt / ((1.0 - t) * (1.0 - t))
    denom = bt + bmt
    return (dbt * denom - bt * (dbt + dbmt)) / (denom * denom)


def rho_eval(profile: CouplingProfile, s: float) -> float:
    """Smooth staircase with rho(n) = n, flat near integers, rho(s+1) = rho(s)+1.

    Analytic kinds use rho(s) = s exactly.
    """
    if profile.kind != "staircase":
        return s
    w = profile.width
    n = math.floor(s)
    u = s - n
    return n + _smoothstep((u - w) / (1.0 - 2.0 * w))


def rho_deriv(profile: CouplingProfile, s: float) -> float:
    if profile.kind != "staircase":
        return 1.0
    w = profile.width
    u = s - math.floor(s)
    return _smoothstep_deriv((u - w) / (1.0 - 2.0 * w)) / (1.0 - 2.0 * w)


def f_eval(profile: CouplingProfile, x: float, y: float) -> float:
    """Coupling function on the half-plane; satisfies f(ex, ey) = f(x, y)."""
    if y <= 0:
        raise ValueError("f is defined for y > 0")
    if x <= 0.0:
        return 1.0
    if profile.kind == "staircase":
        return 1.0 + math.exp(-y * math.exp(-rho_eval(profile, math.log(x))))
    # analytic kinds: rho is the identity, so the exponent collapses to y/x
    if profile.kind == "analytic_strip":
        return 1.0 + math.exp(-y / x)
    return f0_eval(profile, math.log(y / x))


def f0_eval(profile: CouplingProfile, z: float) -> float:
    """Profile along the line x = 1: f0(z) = f(1, e^z) for the staircase kinds."""
    if profile.kind == "converging_well":
        w = z - profile.z_star
        return 1.0 + w * w / (1.0 + w * w)
    if z > 700.0:
        return 1.0
    return 1.0 + math.exp(-math.exp(z))


def f0_deriv(profile: CouplingProfile, z: float) -> float:
    if profile.kind == "converging_well":
        w = z - profile.z_star
        return 2.0 * w / ((1.0 + w * w) ** 2)
    if z > 700.0:
        return -0.0
    return -math.exp(z - math.exp(z))


def potential_energy(profile: CouplingProfile, curve: ModuliCurve,
                     z: float, p: TeichPoint) -> float:
    """Reduced flow potential f0(z) * (energy of id from g_p to G_z)."""
    return f0_eval(profile, z) * identity_energy(p, curve_eval(curve, z))
