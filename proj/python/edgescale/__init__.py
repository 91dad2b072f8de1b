"""Agent-based multi-dimensional autoscaling benchmark."""

from ._core import (
    Assignment,
    GroundTruthModel,
    ServiceConfig,
    cli,
    free_cores,
    global_fulfillment,
    ground_truth_throughput,
    oracle,
    run_experiment,
    service_fulfillment,
    slo_fulfillment,
)

__all__ = [
    "Assignment",
    "GroundTruthModel",
    "ServiceConfig",
    "cli",
    "free_cores",
    "global_fulfillment",
    "ground_truth_throughput",
    "oracle",
    "run_experiment",
    "service_fulfillment",
    "slo_fulfillment",
]
