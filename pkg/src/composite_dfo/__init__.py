"""Derivative-free minimization of compositions h(F(x)) with piecewise-smooth h."""
from .errors import (BudgetExhausted, EvaluationFailure, InvalidInputError, MissingPrerequisite,
                     SubproblemFailure, UnsupportedProblem)
from .history import History
from .models import build_models
from .problems import build_benchmark, get_problem, make_problem
from .selections import CensoredL1, MaxAffine, MaxSquares, MinSquares, PiecewiseQuadraticMax, evaluate_h
from .solvers import SolverConfig, run_goombah, run_msp, run_solver
from .subproblems import solve_chi, solve_tr_subproblem

__version__ = "0.1.0"
