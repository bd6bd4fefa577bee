"""Numerical lab for the gauged sigma-model vortex equation

    -Laplace(u) + P e^u / (1 + e^u)^(1+a) = 4 pi sum n_j delta_{p_j} - 4 pi sum m_j delta_{q_j}

with P = A0 prod |x - p_j|^(-2 a n_j).
"""

from .branches import (BranchResult, LadderOutcome, NoSolution, OuterNonConvergence, RegimeMismatch,
                       a0_reference_branch, critical_branch, minimal_branch, multiple_branch,
                       planar_minimal_branch, topological_branch)
from .cli import RunConfig, format_config, parse_config, run_command, write_profile
from .diagnostics import (SolutionType, Verdict, circular_average, classify_solution, divergence_probe,
                          fit_log_expansion, magnetic_flux)
from .fields import FieldBundle, build_bundle
from .green import DensitySpec, certify_decay, planar_potential, radial_potential
from .mesh import PlanarGrid, RadialMesh
from .problem import (TOPOLOGICAL, ConfigError, RegimeKind, VortexConfig, classify_regime, derive_params,
                      feasible_ranges)

__all__ = [
    "BranchResult", "LadderOutcome", "NoSolution", "OuterNonConvergence", "RegimeMismatch",
    "a0_reference_branch", "critical_branch", "minimal_branch", "multiple_branch",
    "planar_minimal_branch", "topological_branch", "RunConfig", "format_config", "parse_config",
    "run_command", "write_profile", "SolutionType", "Verdict", "circular_average", "classify_solution",
    "divergence_probe", "fit_log_expansion", "magnetic_flux", "FieldBundle", "build_bundle",
    "DensitySpec", "certify_decay", "planar_potential", "radial_potential", "PlanarGrid", "RadialMesh",
    "TOPOLOGICAL", "ConfigError", "RegimeKind", "VortexConfig", "classify_regime", "derive_params",
    "feasible_ranges",
]
