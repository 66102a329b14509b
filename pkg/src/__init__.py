"""
Flujos normalizadores para problemas inversos de imagen
"""

__version__ = "1.0.0"
__description__ = "Flujos normalizadores para problemas inversos de imagen"

from .flow_inverse_solver import (
    config,
    FlowConfig,
    TrainConfig,
    SolveConfig,
    ExperimentSpec,
    FlowModelFactory,
    ExperimentOrchestrator,
    FlowApp,
)

__all__ = [
    "config",
    "FlowConfig",
    "TrainConfig",
    "SolveConfig",
    "ExperimentSpec",
    "FlowModelFactory",
    "ExperimentOrchestrator",
    "FlowApp",
]
