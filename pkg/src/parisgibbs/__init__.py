"""Particle smoothing of additive functionals: the PaRIS online smoother,
its conditional variant, and the Parisian particle Gibbs sampler, with
exact oracles and an experiment harness."""

__version__ = "0.1.0"

from .core import (
    AdditiveFunctional,
    DegenerateWeightsError,
    FeynmanKacModel,
    MixingBounds,
    ModelContractError,
    Trajectory,
    UnsupportedModelError,
    eval_additive,
    kappa,
    kappa_from_rho,
    mixing_constant_rho,
)
from .paris import ParisState, paris_estimate, paris_init, paris_step, run_ffbsm, run_paris
from .ppg import CondParisState, PpgRun, cond_paris_init, cond_paris_step, default_init_path, ppg_sweep, run_ppg
from .smc import ParticleCloud, init_cloud, init_cloud_conditional, propagate, propagate_conditional

__all__ = [
    "AdditiveFunctional",
    "CondParisState",
    "DegenerateWeightsError",
    "FeynmanKacModel",
    "MixingBounds",
    "ModelContractError",
    "ParisState",
    "ParticleCloud",
    "PpgRun",
    "Trajectory",
    "UnsupportedModelError",
    "__version__",
    "cond_paris_init",
    "cond_paris_step",
    "default_init_path",
    "eval_additive",
    "init_cloud",
    "init_cloud_conditional",
    "kappa",
    "kappa_from_rho",
    "mixing_constant_rho",
    "paris_estimate",
    "paris_init",
    "paris_step",
    "ppg_sweep",
    "propagate",
    "propagate_conditional",
    "run_ffbsm",
    "run_paris",
    "run_ppg",
]
