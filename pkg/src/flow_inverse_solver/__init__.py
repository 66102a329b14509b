"""
Motor de flujos normalizadores y solver de problemas inversos en el espacio latente
"""

__version__ = "1.0.0"
__description__ = "Flujos normalizadores multiescala y restauración de imágenes en el espacio latente"

from .config import config
from .models import FlowConfig, TrainConfig, SolveConfig, SolveResult, ExperimentSpec, ResultRow
from .flow_model import FlowModel, FlowModelFactory, LatentState
from .trainer import Trainer, train
from .checkpoint import save_checkpoint, load_checkpoint
from .operators import OperatorFactory, measure
from .solver import solve
from .experiment_orchestrator import ExperimentOrchestrator
from .main import FlowApp

__all__ = [
    "config",
    "FlowConfig",
    "TrainConfig",
    "SolveConfig",
    "SolveResult",
    "ExperimentSpec",
    "ResultRow",
    "FlowModel",
    "FlowModelFactory",
    "LatentState",
    "Trainer",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "OperatorFactory",
    "measure",
    "solve",
    "ExperimentOrchestrator",
    "FlowApp",
]
