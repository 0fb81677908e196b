"""Simulation and exact verification for the bricklayers' family of growth models."""

from .rates import RateFunction, make_ebl, make_tabulated, perturbed_ebl
from .gibbs import GibbsMarginal, build_marginal, mean_u, rh_speed
from .engine import LatticeState, simulate_until
from .tracer import CoupledPairState, TracerFrameState, analytic_tracer_speed, measure_tracer_speed
from .verifier import CylinderFunction, ThetaProfile, theorem_scan, tracer_residual, translation_invariant_residual

__all__ = [
    "RateFunction",
    "make_ebl",
    "make_tabulated",
    "perturbed_ebl",
    "GibbsMarginal",
    "build_marginal",
    "mean_u",
    "rh_speed",
    "LatticeState",
    "simulate_until",
    "CoupledPairState",
    "TracerFrameState",
    "analytic_tracer_speed",
    "measure_tracer_speed",
    "CylinderFunction",
    "ThetaProfile",
    "theorem_scan",
    "tracer_residual",
    "translation_invariant_residual",
]
