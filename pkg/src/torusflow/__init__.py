"""Simulator and analysis toolkit for the reduced Teichmueller harmonic
map flow from the torus into product targets built over a prescribed
curve of flat metrics.

Submodules:

* :mod:`torusflow.moduli` -- geometry of flat unit-area torus metrics,
  hyperbolic/Weil-Petersson distances, Hopf differentials, the mapping
  class action and fundamental-domain reduction;
* :mod:`torusflow.target` -- coupling profiles and prescribed metric
  curves with their validation;
* :mod:`torusflow.flow` -- the reduced gradient-flow ODE and its
  adaptive integrators with event detection;
* :mod:`torusflow.diagnostics` -- trace post-processing: winding,
  pull-backs, tracking residuals, limit detection, Lojasiewicz fits;
* :mod:`torusflow.cli` -- configuration, presets, batch execution and
  artifact serialization.
"""

__version__ = "0.1.0"

__all__ = ["moduli", "target", "flow", "diagnostics", "cli"]
