"""Macroscale boundary conditions for a nonlinear two-stream heat exchanger.

The toolkit separates the steady spatial boundary-layer dynamics into slow,
stable and unstable components by a near-identity coordinate transform,
projects microscale Dirichlet data along the resulting isochrons, and
assembles nonlinear Robin boundary conditions for the macroscale mean-field
model.  Method-of-lines solvers for both the microscale pair and the
macroscale equation verify the derived conditions numerically.
"""

__version__ = "0.1.0"

from .boundary import (BoundaryData, RobinBC, assemble_left_bc,  # noqa: F401
                       assemble_right_bc, centre_stable_restriction,
                       derive_boundary_conditions, revert_boundary)
from .normalform import (ConstructionRefused, construct,  # noqa: F401
                         cross_validate_embeddings, verify_conjugacy)
from .series import (ReversionError, SeriesError, SeriesVector,  # noqa: F401
                     Space, TruncatedSeries, solve_implicit_system)
from .solvers import (Grid1D, SolveConfig, SolverError,  # noqa: F401
                      interior_error, reconstruct_micro, solve_macroscale,
                      solve_microscale)
from .system import (SpatialSystem, build_embedding,  # noqa: F401
                     build_original, coordinate_map)
