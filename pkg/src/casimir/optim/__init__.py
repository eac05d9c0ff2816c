"""First-order solvers: the accelerated smoothing outer loop, SVRG, SGD and the prox-linear method."""

from .casimir import (
    CallCounter,
    CasimirSchedule,
    InnerSolverBudget,
    OptimizerTrace,
    SvrgConfig,
    TraceRow,
    alpha_update,
    beta_coeff,
    casimir_run,
    make_schedule,
    sgd_run,
    svrg_run,
    svrg_solve,
)
from .proxlinear import ProxGradient, ProxLinearConfig, prox_gradient, proxlinear_run
