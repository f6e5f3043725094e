"""Learned interface fluxes for 1D periodic conservation laws.

A Fourier neural operator plays the numerical flux inside a conservative
finite-volume update; training matches one-step (or Heun two-stage)
marching residuals plus a consistency anchor to the physical flux.
"""

from .grid import (
    GridFunction,
    StencilField,
    Trajectory,
    build_stencil_pair,
    linf,
    mass,
    rel_l2,
    roll,
    total_variation,
)
from .fno import FnoConfig, FnoParams, apply, capacity_gamma, forward, init_params, load, save
from .schemes import (
    CflViolation,
    PhysicalFlux,
    cfl_dt,
    exact_advection,
    exact_burgers_riemann,
    flux_godunov_burgers,
    flux_lax_friedrichs,
    flux_upwind,
    minmod,
    muscl_interface_states,
    reference_step,
)
from .datasets import (
    Dataset,
    DatasetHeader,
    GrfSpec,
    grf_sample,
    make_dataset,
    read_dataset,
    step_function,
    triangular_pulse,
    write_dataset,
)
from .rollout import AnalyticFlux, BlowUpError, FnoFlux, SchemeConfig, divergence, integrate_to, step_euler, step_rk2
from .training import TrainConfig, adam_step, loss_consi, loss_tm, lr_at, total_loss, train, train_basic, train_rk
from .evaluate import (
    BoundInputs,
    ExperimentReport,
    ablation_compare,
    evaluate,
    ood_suite,
    resolution_suite,
    theorem1_bound,
)

__version__ = "0.1.0"
