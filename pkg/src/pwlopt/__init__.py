"""Physics-informed network surrogates with piecewise-linear MILP optimization.

Train small feed-forward networks (optionally regularized by conservation
laws), compile them into mixed-integer linear programs through piecewise
linear activation encodings, solve those programs with the built-in branch
and bound solver, and validate optima against first-principles process
models.
"""

from .network import (
    Activation, Dataset, IDENTITY, NetworkParams, RELU, Scaler, TANH,
    activation_eval, forward, forward_batch, pwl_tanh_activation,
)
from .pwl import PwlFunction, pwl_max_error, tanh_pwl
from .physics import BlendingComponentBalance, CduMassBalance, ColumnMassBalance
from .training import (
    ConstrainedPhaseConfig, TrainingConfig, TrainingTrace, TrainResult,
    gradient, init_params, mse_loss, physics_eval, train, train_constrained,
)
from .milp import MilpModel, MilpSolution, write_lp
from .solver import LpSolution, SolverOptions, solve_lp, solve_milp
from .encode import SurrogateQuery, encode_pwl_cc, encode_pwl_sos2, encode_relu_bigm
from .cases import (
    CaseStudy, blending_forward, cdu_cut, cdu_forward, get_case, global_oracle,
    lhs_sample, make_blending_dataset, make_cdu_dataset, make_column_dataset,
    sse_compare,
)

__version__ = "0.1.0"
