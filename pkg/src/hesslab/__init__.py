"""Numerical toolkit for fully nonlinear Hessian equations F(D^2 u) = f.

Symmetric functions and invariant cones, the operator families (Monge-Ampere,
k-Hessian, Hessian quotients, p-Monge-Ampere), structural condition checkers,
a cut-cell Newton solver and the estimate and blow-down harness.
"""

__version__ = "0.1.0"

from hesslab.cones import ConeSpec, axis_reach, cone_margin, contains, sample_cone
from hesslab.conditions import (
    ConditionReport,
    check_cns,
    check_condition_d,
    check_k_hessian_lower_bound,
    check_pma_partial_sums,
    field_condition_scan,
)
from hesslab.grid import DomainSpec, Grid, GridField, gradient_fd, hessian_fd
from hesslab.harness import (
    blowdown,
    c0_check,
    estimate_functional,
    liouville_probe,
    quadratic_source,
    refinement_study,
)
from hesslab.operators import (
    NotAdmissible,
    OperatorSpec,
    F_and_linearization,
    eigen_sym,
    estimate_garding_d,
    f_eval,
    f_grad,
)
from hesslab.solver import SolveReport, initial_guess, residual, solve
from hesslab.symfun import newton_check, sigma, sigma_partial

__all__ = [name for name in dir() if not name.startswith("_")]
