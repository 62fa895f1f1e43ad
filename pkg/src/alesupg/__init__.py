"""Conservative ALE-SUPG finite elements for transient
convection-diffusion-reaction problems on moving 2D domains."""
from .diagnostics import StabilityLedger, l2_norm, line_sample, overshoot_undershoot, triple_norm
from .driver import run_convergence_study, run_scenario
from .forms import Coefficients, Stabilization
from .mesh import BoundaryCondition, Mesh, load_mesh, unit_square_mesh, write_mesh
from .motion import AleFrame, build_frame
from .scenario import Scenario, parse_config, preset, write_config
from .space import FunctionSpace
from .stepping import StepperConfig, StepState, cn_timestep_check, step

__all__ = [
    "AleFrame",
    "BoundaryCondition",
    "Coefficients",
    "FunctionSpace",
    "Mesh",
    "Scenario",
    "StabilityLedger",
    "Stabilization",
    "StepState",
    "StepperConfig",
    "build_frame",
    "cn_timestep_check",
    "l2_norm",
    "line_sample",
    "load_mesh",
    "overshoot_undershoot",
    "parse_config",
    "preset",
    "run_convergence_study",
    "run_scenario",
    "step",
    "triple_norm",
    "unit_square_mesh",
    "write_config",
    "write_mesh",
]
