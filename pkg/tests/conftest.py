"""
Fixtures compartidas: modelos diminutos en doble precisión y generadores sembrados
"""
import numpy as np
import pytest

from flow_inverse_solver.autodiff import DiffGraph, Tensor, backward
from flow_inverse_solver.config import config
from flow_inverse_solver.datasets import synthetic_shapes
from flow_inverse_solver.flow_model import FlowModel, FlowModelFactory
from flow_inverse_solver.models import FlowConfig, TrainConfig
from flow_inverse_solver.trainer import Trainer


def tiny_config(variant: str = "coupling_swap", image_shape=(2, 4, 4), precision: str = "double") -> FlowConfig:
    return FlowConfig(
        image_shape=image_shape,
        num_scales=2,
        steps_per_scale=1,
        double_k_at=[],
        hidden_channels=8,
        permutation_variant=variant,
        precision=precision,
    )


def build_initialized(flow_config: FlowConfig, seed: int = 0, perturb: float = 0.0) -> FlowModel:
    """Construye el flujo, inicializa actnorm con datos aleatorios y opcionalmente perturba los pesos"""
    model = FlowModelFactory.build(flow_config, seed=seed)
    rng = np.random.default_rng(seed + 100)
    batch = rng.random((8,) + tuple(flow_config.image_shape))
    model.forward(batch, init_actnorm=True)
    if perturb:
        for param in model.parameters():
            if param.name.endswith("coupling.cnn.conv2.weight") or param.name.endswith("coupling.cnn.conv2.bias"):
                param.data[...] += (rng.standard_normal(param.shape) * perturb).astype(param.dtype)
    return model


def train_toy_flow(flow_config: FlowConfig, count: int = 256, epochs: int = 20, seed: int = 0) -> FlowModel:
    """Flujo entrenado unas pocas épocas sobre formas sintéticas del tamaño de la configuración"""
    channels, size, _ = flow_config.image_shape
    dataset = synthetic_shapes(count, size=size, channels=channels, seed=seed)
    model = FlowModelFactory.build(flow_config, seed=seed)
    Trainer(model, TrainConfig(learning_rate=1e-3, beta1=0.9, batch_size=32, epochs=epochs, seed=seed)).train(dataset)
    return model


def analytic_grad(f, x0: np.ndarray) -> np.ndarray:
    with DiffGraph():
        x = Tensor(np.array(x0, dtype=np.float64), requires_grad=True)
        (grad,) = backward(f(x), [x])
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["coupling_swap", "invconv"])
def variant(request):
    return request.param


@pytest.fixture
def tiny_model(variant):
    """Flujo 2×4×4, L=2, K=1, 8 canales ocultos, con acoplamientos no triviales"""
    return build_initialized(tiny_config(variant), seed=0, perturb=0.1)


@pytest.fixture
def gray_model():
    """Flujo 1×8×8 apto para PNG, actnorm ya inicializada"""
    return build_initialized(tiny_config(image_shape=(1, 8, 8)), seed=0, perturb=0.05)


@pytest.fixture
def log_to_tmp(tmp_path, monkeypatch):
    monkeypatch.setattr(config, "log_dir", str(tmp_path / "logs"))
    return tmp_path


@pytest.fixture(scope="session")
def toy_gray_flow():
    """Flujo 1×8×8 entrenado sobre formas sintéticas; sólo lo usan los tests lentos"""
    flow_config = FlowConfig(image_shape=(1, 8, 8), num_scales=2, steps_per_scale=2, double_k_at=[],
                             hidden_channels=16, precision="double")
    return train_toy_flow(flow_config, count=512)
