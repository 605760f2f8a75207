"""Spectral laboratory for harmonic and biharmonic map heat flows on large periodic boxes.

Submodules
----------
spectral
    Grids, fields, heat and biharmonic semigroups, Sobolev and Lebesgue norms.
flows
    Flow problems and the integrating-factor stepper.
norms
    Besov, BMO/Carleson and space-time norm estimators; kernel probes.
rg
    Renormalization-group iteration for the deviation equations.
harness
    Decay and long-time experiments.
recipes
    Named initial-data families.
cli
    The ``geomflow`` command.
"""

from .flows import (
    ConstraintError,
    FlowKind,
    FlowProblem,
    NumericalError,
    StepperConfig,
    Trajectory,
    evolve,
)
from .harness import DecayExperimentSpec, decay_experiment, longtime_experiment
from .kernels import BACKEND
from .norms import DyadicRange, besov_norm, besov_norm_biharmonic, besov_norm_negative, carleson_bmo, x_norm, xb_norm
from .recipes import make_data
from .rg import RGConfig, RGDivergence, RGKind, run_rg
from .spectral import (
    BoundaryDecayError,
    Field,
    Grid,
    SemigroupKind,
    WeightedSobolevSpec,
    apply_semigroup,
    lp_norm,
    make_grid,
    weighted_sobolev_norm,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BoundaryDecayError",
    "ConstraintError",
    "DecayExperimentSpec",
    "DyadicRange",
    "Field",
    "FlowKind",
    "FlowProblem",
    "Grid",
    "NumericalError",
    "RGConfig",
    "RGDivergence",
    "RGKind",
    "SemigroupKind",
    "StepperConfig",
    "Trajectory",
    "WeightedSobolevSpec",
    "apply_semigroup",
    "besov_norm",
    "besov_norm_biharmonic",
    "besov_norm_negative",
    "carleson_bmo",
    "decay_experiment",
    "evolve",
    "longtime_experiment",
    "lp_norm",
    "make_data",
    "make_grid",
    "run_rg",
    "weighted_sobolev_norm",
    "x_norm",
    "xb_norm",
]
