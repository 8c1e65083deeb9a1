"""Bayesian optical flow by statistical inversion with a block Gibbs sampler."""
from .bench import (
    NoiseSpec,
    advect_image,
    compare_images,
    endpoint_error,
    eval_flow_field,
    make_first_image,
    reconstruct_second_image,
    synthetic_case,
)
from .grid import FlowField, FlowSystem, GridSpec, ImageField, assemble_system
from .sampler import ChainConfig, HyperPriors, effective_alpha_trace, run_chain
from .solver import CGConfig, TikhonovConfig, cg_solve, tikhonov_solve
from .uq import confidence_ellipse, mean_flow, uq_field

__version__ = "0.1.0"
