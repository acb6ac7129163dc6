"""Generalized forward-backward splitting and companion proximal solvers."""

from .errors import ConfigError, DimensionError, NumericalError, UnsupportedOperatorError
from .linops import (
    ComposedOp,
    GaussianBlur,
    IdentityOp,
    ImageGradient,
    LinOp,
    Mask,
    MatrixOp,
    ProductPoint,
    WaveletFrame,
    dot,
    invert_id_plus_gamma_LLt,
    product_dot,
    project_S,
)
from .functions import (
    BlockLayer,
    BlockStructure,
    ProxFn,
    SmoothFn,
    build_square_blocks,
    prox_block_l12,
    prox_ker_constraint,
    prox_l1,
    prox_quad_fidelity,
    quad_fidelity,
    tv_norm,
)
from .gfb import (
    CocoerciveOp,
    PolynomialErrors,
    ResolventOp,
    SolverConfig,
    fixed_point_residual,
    gfb_solve,
    gfb_step,
    prox_of_sum,
    validate_config,
)
from .split import IterateLog, Layout, SplitProblem
from . import baselines, problems

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
