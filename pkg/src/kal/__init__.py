"""Event-driven simulation of a Kac-type particle system with binary
elastic collisions and pairwise annihilation, plus estimators and
reference solutions for its large-system limit."""

__version__ = "0.1.0"

from .config import RunConfig, load_config
from .dynamics import SystemState, elastic_collide, simulate, step_exact, step_majorant, total_rate
from .ensemble import (
    bbgky_residual,
    chaos_defect,
    estimate_correlation,
    run_ensemble,
)
from .kernels import CollisionKernel, hard_sphere, kernel_density, maxwell, sample_omega, sigma_b
from .limits import (
    death_chain_evolve,
    gamma_apply,
    gamma_norm_check,
    maxwell_moment_ode,
    uniqueness_contraction_factor,
)
from .selfsim import compute_frame, conserved_check, rescale_velocities

__all__ = [
    "CollisionKernel", "RunConfig", "SystemState",
    "bbgky_residual", "chaos_defect", "compute_frame", "conserved_check",
    "death_chain_evolve", "elastic_collide", "estimate_correlation",
    "gamma_apply", "gamma_norm_check", "hard_sphere", "kernel_density",
    "load_config", "maxwell", "maxwell_moment_ode", "rescale_velocities",
    "run_ensemble", "sample_omega", "sigma_b", "simulate", "step_exact",
    "step_majorant", "total_rate", "uniqueness_contraction_factor",
]
