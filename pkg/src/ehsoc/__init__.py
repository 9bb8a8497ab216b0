"""Transmission policy optimization for energy-harvesting transmitters
whose batteries lose energy at a state-of-charge dependent rate."""

from .battery import (BatteryDomainError, LossModel, QuantizationCheck,
                      SlotIntegrator, check_quantization, integrate_slot,
                      make_default_integrator, next_energy, storage_efficiency)
from .mdp import ActionGrid, EhMdp, MdpBuildError, build_ideal_mdp, build_mdp
from .policies import (EvalResult, SimTrace, evaluate,
                       evaluate_with_restart_check, greedy_policy,
                       op_ideal_policy, simulate, stationary_from_start)
from .solver import (NonConvergenceError, Policy, SolveResult, SolverError,
                     export_policy_csv, solve_exhaustive, solve_rvi)
from .stochastics import (ArrivalModel, ChannelModel, DistributionError,
                          RewardModel, discretized_exponential, expected_reward,
                          greedy_gain, truncated_geometric)

__all__ = [
    "ArrivalModel", "ActionGrid", "BatteryDomainError", "ChannelModel",
    "DistributionError", "EhMdp", "EvalResult", "LossModel", "MdpBuildError",
    "NonConvergenceError", "Policy", "QuantizationCheck", "RewardModel",
    "SimTrace", "SlotIntegrator", "SolveResult", "SolverError",
    "build_ideal_mdp", "build_mdp", "check_quantization",
    "discretized_exponential", "evaluate", "evaluate_with_restart_check",
    "expected_reward", "export_policy_csv", "greedy_gain", "greedy_policy",
    "integrate_slot", "make_default_integrator", "next_energy",
    "op_ideal_policy", "simulate", "solve_exhaustive", "solve_rvi",
    "stationary_from_start", "storage_efficiency", "truncated_geometric",
]

__version__ = "0.1.0"
