"""Variational integrators from discrete Lagrangians on the tangent bundle."""

__version__ = "0.1.0"

from .lagrangian import (FlowError, LagrangianSystem, RegularityError, TangentVector, energy,
                         euler_lagrange_accel, eval_lagrangian, fiber_legendre, mechanical_system,
                         reference_flow)
from .systems import curved_oscillator, free, harmonic, mechanical_1d, pendulum, system_from_config
from .discretization import (ExactSegment, LinearSegment, SegmentDiscretization, ShootingError,
                             boundary_minus, boundary_plus, shooting_delta, validate_discretization)
from .discrete_lagrangian import (DiscreteLagrangianQQ, DiscreteLagrangianTQ, contact_order_estimate,
                                  legendre, make_family, to_qq)
from .solver import (ConvergenceError, NewtonSettings, del_residual, second_variation, step,
                     step_blownup, step_qq, step_tq, trajectory)
from .fitting import fit_loglog, geometric_grid
from .analysis import (a_term_study, global_error_order, identity_limit, local_error_order,
                       symmetry_residual)
