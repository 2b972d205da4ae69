from .model import Affine, ConicProgram, Model, bmat, concat, constraint_dual, stack
from .ipm import (DUAL_INFEASIBLE, MAX_ITER, NEAR_OPTIMAL, OPTIMAL, PRIMAL_INFEASIBLE, ConicSolution,
                  SolverSettings)
from .solve import SolverError, solve, verify, VerifyReport
from .dump import dump_program, load_program
