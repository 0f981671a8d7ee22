"""cracklab: numerics for elliptic problems on a ball with a crack.

Slit-sphere spectra, crack-conforming finite elements, Almgren frequency
traces, Pohozaev audits and blow-up coefficient extraction.
"""

from .blowup import (beta_direct, beta_integral, blowup_report,
                     fourier_coefficient, homogeneous_profile, scaled_field,
                     upsilon)
from .config import ExperimentConfig
from .errors import (AccuracyError, ConfigError, ConstructionError,
                     CracklabError, DomainError, NumericalError)
from .fields import (ConstantField, HomogeneousModeField,
                     LinearCombinationField, PullbackField, ScaledField)
from .frequency import (FrequencyTrace, RadialSweep, compute_D, compute_H,
                        doubling_ratios, frequency_trace, h1_norm,
                        pohozaev_residual)
from .geometry import (CrackGeometry, SmoothedDomain, StraighteningMap,
                       f_smoothing, f_smoothing_derivative)
from .meshing import BallMesh, build_ball_mesh_3d, build_disk_mesh, build_mesh
from .solver import (DiscreteProblem, P1Field, PotentialSpec,
                     hypothesis_report, solve_approximating, solve_dirichlet)
from .spectral import (SlitSphereBasis, SlitSphereMode, exact_mode, ladder,
                       multiplicity)
from .sphere_fem import numeric_eigensolve

__version__ = "0.1.0"

__all__ = [
    "AccuracyError", "BallMesh", "ConfigError", "ConstantField",
    "ConstructionError", "CracklabError", "CrackGeometry", "DiscreteProblem",
    "DomainError", "ExperimentConfig", "FrequencyTrace",
    "HomogeneousModeField", "LinearCombinationField", "NumericalError",
    "P1Field", "PotentialSpec", "PullbackField", "RadialSweep", "ScaledField",
    "SlitSphereBasis", "SlitSphereMode", "SmoothedDomain", "StraighteningMap",
    "beta_direct", "beta_integral", "blowup_report", "build_ball_mesh_3d",
    "build_disk_mesh", "build_mesh", "compute_D", "compute_H",
    "doubling_ratios", "exact_mode", "f_smoothing", "f_smoothing_derivative",
    "fourier_coefficient", "frequency_trace", "h1_norm",
    "homogeneous_profile", "hypothesis_report", "ladder", "multiplicity",
    "numeric_eigensolve", "pohozaev_residual", "scaled_field",
    "solve_approximating", "solve_dirichlet", "upsilon",
]
