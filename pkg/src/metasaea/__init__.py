"""Surrogate-assisted evolutionary optimization with deep-kernel Gaussian
processes whose parameters are meta-learned across families of related
tasks and adapted to a target task from a handful of samples.
"""

from . import errors
from .gp import (
    Dataset,
    GpState,
    fit_gp,
    loo_mse,
    neg_log_likelihood,
    predict,
    predict_batch,
)
from .kernel import (
    BaseKernelParams,
    DeepKernelParams,
    MlpParams,
    TaskIncrements,
    base_kernel,
    deep_kernel,
    identity_kernel_params,
    init_deep_kernel_params,
    kernel_gradients,
    kernel_matrix,
    mlp_forward,
)
from .numkit import RngStream, cholesky_decompose, lhs_sample, simplex_lattice_weights

__version__ = "0.1.0"
