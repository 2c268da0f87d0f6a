"""Orientation estimation on SO(3) from angle-of-arrival measurements."""

from .crb import FimBundle, fim_bundle, oeb
from .estimators import MeasurementSet, ls_estimate, ml_estimate, procrustes_solve
from .geometry import EulerAngles, euler_to_rotation, rotation_to_euler
from .manifold import ManifoldOptions, minimize
from .sim import Scenario, oeb_orientation_grid, reference_scenario, rmse_vs_snr, run_trial
from .vonmises import VonMises, fisher_info, solve_concentration
from .waveform import Upa, calibrate_concentrations

__all__ = [
    "EulerAngles",
    "FimBundle",
    "ManifoldOptions",
    "MeasurementSet",
    "Scenario",
    "Upa",
    "VonMises",
    "calibrate_concentrations",
    "euler_to_rotation",
    "fim_bundle",
    "fisher_info",
    "ls_estimate",
    "minimize",
    "ml_estimate",
    "oeb",
    "oeb_orientation_grid",
    "reference_scenario",
    "procrustes_solve",
    "rmse_vs_snr",
    "rotation_to_euler",
    "run_trial",
    "solve_concentration",
]

__version__ = "0.1.0"
