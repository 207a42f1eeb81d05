"""Numerical toolkit for a twisted trace flow on reduced Kahler geometries."""

from .fields import (
    ConfigError,
    ConvexityLost,
    GeometryError,
    HermitianFormField,
    NonConvergence,
    NotKahlerError,
    Normalization,
    PotentialField,
    ScalarField,
    ShapeMismatchError,
    StepStalled,
    UnsupportedBackend,
)
from .geometry import (
    GeometryBackend,
    SphereBackend,
    TorusBackend,
    build_metric,
    complex_hessian,
    integrate,
    make_backend,
    ricci_form,
    theta_of,
    trace_with,
    volume,
)
from .functionals import (
    FunctionalReport,
    aubin_i,
    aubin_j,
    entropy,
    extremal_residual,
    functional_report,
    j_flow,
    j_hat,
    j_tilde,
    k_energy,
    k_energy_modified,
    level_constant,
    scalar_curvature,
    sigma_energy,
)
from .cone import (
    HypothesisReport,
    classify_margin,
    properness_hypotheses,
    relative_spectrum,
    subsolution_margin,
)
from .flow import (
    FlowProblem,
    FlowResult,
    FlowState,
    MonitorRecord,
    flow_rhs,
    linearized_operator,
    run_flow,
)
from .geodesic import (
    FUNCTIONAL_IDS,
    ProbeReport,
    SymplecticPotential,
    convexity_probe,
    geodesic_path,
    geodesic_residual,
    legendre_inverse,
    legendre_transform,
)
from .potentials import (
    FAMILY_NAMES,
    kahler_margin,
    named_potential,
    normalize,
    random_kahler_potential,
    scale_to_kahler,
)
from .config import (
    ScenarioConfig,
    load_config,
    parse_config,
    reference_page,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvexityLost",
    "FAMILY_NAMES",
    "FUNCTIONAL_IDS",
    "FlowProblem",
    "FlowResult",
    "FlowState",
    "FunctionalReport",
    "GeometryBackend",
    "GeometryError",
    "HermitianFormField",
    "HypothesisReport",
    "MonitorRecord",
    "NonConvergence",
    "Normalization",
    "NotKahlerError",
    "PotentialField",
    "ProbeReport",
    "ScalarField",
    "ScenarioConfig",
    "ShapeMismatchError",
    "SphereBackend",
    "StepStalled",
    "SymplecticPotential",
    "TorusBackend",
    "UnsupportedBackend",
    "aubin_i",
    "aubin_j",
    "build_metric",
    "classify_margin",
    "complex_hessian",
    "convexity_probe",
    "entropy",
    "extremal_residual",
    "flow_rhs",
    "functional_report",
    "geodesic_path",
    "geodesic_residual",
    "integrate",
    "j_flow",
    "j_hat",
    "j_tilde",
    "k_energy",
    "k_energy_modified",
    "kahler_margin",
    "legendre_inverse",
    "legendre_transform",
    "level_constant",
    "linearized_operator",
    "load_config",
    "make_backend",
    "named_potential",
    "normalize",
    "parse_config",
    "properness_hypotheses",
    "random_kahler_potential",
    "reference_page",
    "relative_spectrum",
    "ricci_form",
    "run_flow",
    "scalar_curvature",
    "scale_to_kahler",
    "sigma_energy",
    "subsolution_margin",
    "theta_of",
    "trace_with",
    "volume",
    "__version__",
]
