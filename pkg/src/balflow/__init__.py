"""Quantized Donaldson heat flow on split bundles over the Riemann sphere."""
from .manifold import ModelConfig, QuadratureGrid, SectionBasis, build_grid, build_section_basis, grid_for
from .fields import EndoField, MetricField, a1_endomorphism, a1_reduced, lambda_curvature
from .bergman import HermitianInner, MomentValue, bergman_density, fs, hilb, moment_bar, moment_bar_zero, phi_map, q_apply
from .flows import FlowConfig, FlowTrace, balancing_step, heat_flow_step, phi_iterate, run_flow, tangent_gap

__all__ = [
    "ModelConfig", "QuadratureGrid", "SectionBasis", "build_grid", "build_section_basis", "grid_for",
    "EndoField", "MetricField", "a1_endomorphism", "a1_reduced", "lambda_curvature",
    "HermitianInner", "MomentValue", "bergman_density", "fs", "hilb", "moment_bar", "moment_bar_zero",
    "phi_map", "q_apply",
    "FlowConfig", "FlowTrace", "balancing_step", "heat_flow_step", "phi_iterate", "run_flow", "tangent_gap",
]
__version__ = "0.1.0"
