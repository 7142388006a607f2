"""Least-squares Lax-Friedrichs residual solvers for Hamilton-Jacobi equations."""
from . import control, evaluate, geometry, grid_oracle, hamiltonian, loss, network, scheme, trainer
from ._backend import BACKEND
from .config import bundled_config, load_config
from .errors import (BlowUp, ConfigError, DimensionMismatch, DivergenceDetected, HJSolveError,
                     InvalidThetaFile, NonPositiveL, NotConverged, NumericalFailure)
from .hamiltonian import (EikonalNorm, EikonalSquared, PursuitEvasion, Quadratic, ReedsShepp,
                          hamiltonian_from_dict)
from .loss import Batch, LossWeights, loss_and_grad
from .network import MlpArchitecture, NetworkFunction, PeriodicArchitecture, load_theta, save_theta
from .scheme import SchemeConfig, lax_friedrichs, uniqueness_condition
from .trainer import Problem, Schedule, SgdConfig, Stage, sgd_lxf, train_schedule

__version__ = "0.1.0"
