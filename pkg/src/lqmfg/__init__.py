"""Finite-horizon linear-quadratic mean-field games on weighted Hilbert spaces."""

from .config import Scenario, parse_config, render
from .delay import DelayParams, build_delay_problem, delay_operators, lift_initial, segment_refinement_study
from .errors import *  # noqa: F401,F403
from .eta import EtaCertificate, beta_T, eta_contraction_params, solve_eta, solve_eta_global, solve_eta_local
from .fbs import (
    ContractionReport,
    LQMSolution,
    compute_s,
    contraction_constant,
    feedback_control,
    propagate_r,
    propagate_z,
    solve_decoupled,
    solve_picard,
    value_function,
)
from .linops import GrowthBound, HilbertSpace, adjoint, growth_bound, is_psd, mat_exp, semigroup_sup, yosida
from .montecarlo import MCConfig, MCResult, evaluate_cost, monte_carlo_consistency
from .paths import OperatorPath, TimeGrid, VectorPath
from .problem import MFGProblem
from .riccati import p_bound, riccati_residual, solve_riccati_p
from .verify import (
    VerificationReport,
    check_standing_assumptions,
    check_uniqueness_conditions,
    monotonicity_probe,
    yosida_convergence_study,
)

__version__ = "0.1.0"
