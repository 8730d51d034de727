"""Over-the-air federated learning: channel simulation, transceiver
optimization, learned power control, and convergence instrumentation."""

from .channel import ChannelTrace, SystemConfig, generate_channels, power_from_snr
from .aircomp import (
    GradientPayload,
    PowerAllocation,
    compute_stats,
    denormalize,
    instantaneous_mse,
    normalize,
    time_average_mse,
    transmit_aggregate,
)
from .opt import alternating_optimize, bisect_mu, kkt_residuals, optimal_eta, optimal_power_device
from .net import NetParams, TrainConfig, forward, forward_knowledge_free, structure_map, train
from .analysis import check_condition, heterogeneity_chi, aggregation_error_check, convergence_bound
from .flsim import FLConfig, partition_noniid, run_training

__version__ = "0.1.0"

__all__ = [
    "ChannelTrace", "SystemConfig", "generate_channels", "power_from_snr",
    "GradientPayload", "PowerAllocation", "compute_stats", "denormalize",
    "instantaneous_mse", "normalize", "time_average_mse", "transmit_aggregate",
    "alternating_optimize", "bisect_mu", "kkt_residuals", "optimal_eta",
    "optimal_power_device", "NetParams", "TrainConfig", "forward",
    "forward_knowledge_free", "structure_map", "train", "check_condition",
    "heterogeneity_chi", "aggregation_error_check", "convergence_bound", "FLConfig",
    "partition_noniid", "run_training",
]
