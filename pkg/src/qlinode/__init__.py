"""Linear ODEs as block linear systems: multistep encodings, their classical
verification, and a desk-scale model of the quantum linear-systems pipeline."""

from importlib import resources
from pathlib import Path

from .analysis import (
    ScalingFit,
    condition_number,
    fit_scaling,
    global_error,
    inverse_norm_probe,
    run_sweep,
    verify_kappa_bound,
)
from .encoder import (
    EncodedSystem,
    OracleCounter,
    build_system,
    choose_time_steps,
    matrix_norm_bound,
    rhs_norm_bound,
)
from .methods import (
    REGISTRY,
    MultistepMethod,
    estimate_alpha_angle,
    generating_polynomials,
    get_method,
    in_stability_domain,
    is_stable_at_infinity,
    load_method,
    method_order,
    stability_report,
    stability_roots,
)
from .problem import OdeProblem, load_problem
from .qlsa import (
    HistoryState,
    PostselectionResult,
    ResourceEstimate,
    error_budget,
    history_state,
    postselect_final,
    prep_cost,
    resource_estimate,
)
from .reference import (
    SolutionHistory,
    SpectralData,
    derivative_norm_bound,
    eigen_condition,
    exact_solution,
    multistep_solve,
)

__version__ = "0.1.0"

SHIPPED_PROBLEMS = (
    "scalar_decay",
    "diagonal_relaxation",
    "damped_rotation",
    "nonnormal_shear",
    "heat_chain",
)


def data_path(*parts: str) -> Path:
    """Path to a file shipped under ``qlinode/data``."""
    return Path(str(resources.files(__package__).joinpath("data", *parts)))


def shipped_problem(name: str) -> OdeProblem:
    return load_problem(data_path("problems", f"{name}.json"))
