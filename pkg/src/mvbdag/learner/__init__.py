from .logistic import LogisticFit, is_separated, logistic_fit
from .params import ParamMatrix, PenaltyParams, SolverConfig, read_config, write_config
from .score import (
    make_design,
    penalty_and_grad,
    population_score,
    quasi_mcp,
    regularized_score,
    regularized_score_and_grad,
    score,
    score_and_grad,
)
from .solver import SolveResult, SolverError, solve, write_trace
from .binotears import binotears, fit_along_order, order_from_adjacency
