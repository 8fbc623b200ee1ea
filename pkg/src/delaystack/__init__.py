"""Coupled retarded / difference delay systems: solver, neutral and PDE rewrites, certificate checks."""

from .comparison import ComparisonFn
from .errors import (ConfigurationError, ContractViolation, DelayStackError, EvaluationError, ExplicitnessError,
                     HistoryRangeError, HypothesisViolation, InversionError, SpecViolation)
from .history import BoundedHistory, ContinuousHistory
from .report import CertificateReport
from .scenario_io import Scenario, ScenarioError, load_scenario, scenario_from_dict
from .signals import InputSignal, Xoshiro256
from .solver import CoupledSystem, FdeSpec, Trajectory, solve_coupled

__all__ = [
    "BoundedHistory", "CertificateReport", "ComparisonFn", "ConfigurationError", "ContinuousHistory",
    "ContractViolation", "CoupledSystem", "DelayStackError", "EvaluationError", "ExplicitnessError", "FdeSpec",
    "HistoryRangeError", "HypothesisViolation", "InputSignal", "InversionError", "Scenario", "ScenarioError",
    "SpecViolation", "Trajectory", "Xoshiro256", "load_scenario", "scenario_from_dict", "solve_coupled",
]
