"""Life span of solutions to the heat equation on a half-space with a nonlinear boundary flux."""
from .errors import *  # noqa: F401,F403
from .measure import Atom, BallQuery, MeasureSpec, p_star
from .kernels import gauss_kernel, green_neumann, green_boundary, semigroup_apply, semigroup_selftest
from .volterra import SolverControls, BoundaryTrace, SolveOutcome, solve, solve_scalar, solve_grid

__version__ = "0.1.0"
