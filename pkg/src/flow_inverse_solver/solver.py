"""
Solver de problemas inversos en el espacio latente del flujo

Tres objetivos sobre z (aplanado, una fila por imagen):

- ours:         ||A·F^{-1}(z) - y||_1 + alpha·L(z)
- csgm/glowip:  ||A·F^{-1}(z) - y||²  + gamma·||z||²
- map:          ||F^{-1}(z) - y||² / (2σ²) + beta·L(z)

donde L(z) = -log p_Z(z) + log|det J_{F^{-1}}(z)| se obtiene en la misma
pasada inversa que genera la imagen.
"""
import time
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from loguru import logger

from .autodiff import DiffGraph, Tensor, abs_, add, scale, square, sub, sum_, sum_per_sample
from .errors import NonFiniteError, OperatorError, ShapeError
from .flow_model import FlowModel, LatentState
from .models import SolveConfig, SolveResult
from .operators import Denoise, MeasurementOperator
from .trainer import AdamState, adam_step

INIT_SIGMA: Dict[str, float] = {"gaussian_0.1": 0.1, "gaussian_1": 1.0, "zero": 0.0}


class ObjectiveValue(NamedTuple):
    """Términos de un objetivo: ``data`` y ``reg`` por imagen, ``total`` escalar"""
    data: Tensor
    reg: Tensor
    total: Tensor
    x: Tensor


def _as_measurement(y: Union[Tensor, np.ndarray], dtype, single_shape: Sequence[int]) -> Tensor:
    """Una medida C×H×W sin eje de batch se trata como un batch de uno"""
    y = y if isinstance(y, Tensor) else Tensor(np.asarray(y, dtype=dtype))
    if y.shape == tuple(single_shape):
        y = y.reshape(1, *y.shape)
    return y


def _decode(model: FlowModel, z_flat: Tensor):
    z = LatentState.unflatten(z_flat, model.latent_layout)
    return model.decode(z)


def _residual(op: Optional[MeasurementOperator], x: Tensor, y: Tensor) -> Tensor:
    predicted = x if op is None else op.apply(x)
    if predicted.shape != y.shape:
        raise ShapeError(f"Medida con forma {y.shape}, el operador produce {predicted.shape}")
    return sub(predicted, y)


def objective_ours(model: FlowModel, op: MeasurementOperator, y, z_flat: Tensor, alpha: float) -> ObjectiveValue:
    x, regularizer = _decode(model, z_flat)
    data = sum_per_sample(abs_(_residual(op, x, _as_measurement(y, model.dtype, op.output_shape))))
    total = add(sum_(data), scale(sum_(regularizer), alpha))
    return ObjectiveValue(data, regularizer, total, x)


def objective_csgm(model: FlowModel, op: MeasurementOperator, y, z_flat: Tensor, gamma: float) -> ObjectiveValue:
    x, _ = model.inverse(LatentState.unflatten(z_flat, model.latent_layout))
    data = sum_per_sample(square(_residual(op, x, _as_measurement(y, model.dtype, op.output_shape))))
    norm = sum_per_sample(square(z_flat if z_flat.ndim == 2 else z_flat.reshape(1, -1)))
    total = add(sum_(data), scale(sum_(norm), gamma))
    return ObjectiveValue(data, norm, total, x)


def objective_map(model: FlowModel, y, z_flat: Tensor, noise_sigma: float, beta: float,
                  op: Optional[MeasurementOperator] = None) -> ObjectiveValue:
    """Objetivo MAP de denoising; la densidad de F^{-1}(z) sale de la pasada inversa"""
    if op is not None and not isinstance(op, Denoise):
        raise OperatorError(f"El objetivo MAP sólo admite denoising, recibido {op.name}")
    if not noise_sigma > 0:
        raise ValueError(f"noise_sigma debe ser positiva, recibido {noise_sigma}")
    x, regularizer = _decode(model, z_flat)
    squared = sum_per_sample(square(_residual(None, x, _as_measurement(y, model.dtype, model.config.image_shape))))
    data = scale(squared, 1.0 / (2.0 * noise_sigma ** 2))
    total = add(sum_(data), scale(sum_(regularizer), beta))
    return ObjectiveValue(data, regularizer, total, x)


def build_objective(model: FlowModel, op: MeasurementOperator, config: SolveConfig
                    ) -> Callable[[Tensor, Tensor], ObjectiveValue]:
    """Cierra el objetivo del método configurado sobre (y, z)"""
    if config.method == "ours":
        return lambda y, z: objective_ours(model, op, y, z, config.alpha)
    if config.method in ("csgm", "glowip"):
        return lambda y, z: objective_csgm(model, op, y, z, config.gamma)
    if config.method == "map":
        if not isinstance(op, Denoise):
            raise OperatorError(f"El objetivo MAP sólo admite denoising, recibido {op.name}")
        return lambda y, z: objective_map(model, y, z, config.noise_sigma, config.beta)
    raise ValueError(f"Método desconocido: {config.method}")


def initial_latents(model: FlowModel, config: SolveConfig, indices: Sequence[int]) -> np.ndarray:
    """z0 por imagen con un generador sembrado con (seed, índice de imagen)"""
    sigma = INIT_SIGMA[config.resolved_init()]
    rows = []
    for index in indices:
        rng = np.random.default_rng([config.seed, int(index)])
        rows.append(rng.standard_normal(model.latent_dim) * sigma)
    return np.stack(rows).astype(model.dtype)


def solve(model: FlowModel, op: MeasurementOperator, y: np.ndarray, config: SolveConfig,
          indices: Optional[Sequence[int]] = None) -> SolveResult:
    """
    Optimiza z con Adam durante ``config.iters`` iteraciones y devuelve
    x̂ = clip(F^{-1}(ẑ), 0, 1) junto con la traza de pérdidas.

    Cada imagen tiene su propio z; ``indices`` identifica las imágenes para
    derivar la semilla de su inicialización.
    """
    y = np.asarray(y, dtype=model.dtype)
    if y.shape == tuple(op.output_shape):
        y = y[None]
    if tuple(y.shape[1:]) != tuple(op.output_shape):
        raise ShapeError(f"Medida con forma {y.shape[1:]}, el operador produce {op.output_shape}")
    count = y.shape[0]
    indices = list(range(count)) if indices is None else list(indices)
    if len(indices) != count:
        raise ShapeError(f"{len(indices)} índices para {count} medidas")

    objective = build_objective(model, op, config)
    y_tensor = Tensor(y)
    z_data = initial_latents(model, config, indices)
    state = AdamState()
    data_trace: List[np.ndarray] = []
    reg_trace: List[np.ndarray] = []
    logger.debug(f"Resolviendo {count} imágenes con {config.method}, {config.iters} iteraciones")

    with model.frozen():
        x_init, _ = model.inverse(LatentState.unflatten(Tensor(z_data), model.latent_layout))
        start = time.perf_counter()
        for iteration in range(config.iters):
            with DiffGraph() as graph:
                z = Tensor(z_data, requires_grad=True)
                value = objective(y_tensor, z)
                total = value.total.item()
                if not np.isfinite(total):
                    raise NonFiniteError(f"Objetivo no finito en la iteración {iteration}", step=iteration)
                (grad,) = graph.backward(value.total, [z])
            data_trace.append(value.data.data.astype(np.float64))
            reg_trace.append(value.reg.data.astype(np.float64))
            try:
                adam_step({"z": z_data}, {"z": grad}, state, config.lr, config.beta1, config.beta2)
            except NonFiniteError as e:
                raise NonFiniteError(f"Gradiente no finito en la iteración {iteration}", step=iteration) from e
        wall_time = time.perf_counter() - start

        x_final, _ = model.inverse(LatentState.unflatten(Tensor(z_data), model.latent_layout))
        x_hat = np.clip(x_final.data, 0.0, 1.0)
        log_prob = model.log_prob(x_hat).data.astype(np.float64)

    logger.debug(f"Solve {config.method} terminado en {wall_time:.2f}s, datos finales {data_trace[-1].mean():.5f}")
    return SolveResult(
        x_hat=x_hat,
        z_hat=z_data.copy(),
        x_init=np.clip(x_init.data, 0.0, 1.0),
        data_trace=np.stack(data_trace),
        reg_trace=np.stack(reg_trace),
        log_prob=log_prob,
        wall_time=wall_time,
    )
