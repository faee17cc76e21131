"""lyapgen: Lyapunov functions and domain-of-attraction estimates for
nonlinear autonomous ODEs via finite-time decrease certificates."""

__version__ = "0.1.0"

from ._kernels import BACKEND, HAVE_NATIVE
from .dynamics import (Box, Equilibrium, SystemDef, find_equilibria,
                       from_linear, load_system, make_system, registry_get,
                       registry_names, translate_to_origin)
from .linalg import (QuadraticForm, expm, lognorm2, lognorm2_weighted,
                     lyapunov_solve, operator_norm2_weighted)
from .ode import IntegratorCfg, Trajectory, flow, flow_batch, trajectory
from .ftlf import (FtCertificate, SublevelSpec, VerifyBudget, check_linear_ft,
                   find_horizon, mu_certificate, rho_compose, verify_nonlinear)
from .lyap import (LyapFunction, build_flow_w, build_ray_w, expand_w,
                   grad_ray_w, w_dot)
from .doa import (ContourSet, DoaBudget, DoaEstimate, SublevelRegion,
                  certify_level, containment_check, export_contour,
                  find_best_c, max_wdot_on_sublevel)
