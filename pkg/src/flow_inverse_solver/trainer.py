"""
Entrenamiento por máxima verosimilitud con Adam, usando patrón Observer para el progreso
"""
import math
import threading
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from loguru import logger

from .autodiff import DiffGraph, mean, negate
from .errors import NonFiniteError, ShapeError
from .flow_model import FlowModel
from .models import TrainConfig, TrainResult

LOG_256 = math.log(256.0)


class AdamState:
    """Momentos por parámetro y contador de pasos"""

    def __init__(self, eps: float = 1e-8):
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0
        self.eps = eps


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float, beta2: float) -> Dict[str, np.ndarray]:
    """Actualización Adam con corrección de sesgo, en el sitio sobre ``params``"""
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"Gradiente no finito en el parámetro {name}", step=state.t, parameter=name)

    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise ShapeError(f"Gradiente de {name} con forma {grad.shape}, parámetro {value.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        value -= (lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)).astype(value.dtype)
    return params


def dequantize(image8: np.ndarray, seed: Union[int, Sequence[int]] = 0, dtype=np.float32) -> np.ndarray:
    """(x + u)/256 con u ~ U[0,1): valores en [0, 1)"""
    rng = np.random.default_rng(seed)
    values = (np.asarray(image8, dtype=np.float64) + rng.random(np.shape(image8))) / 256.0
    return np.minimum(values, np.nextafter(1.0, 0.0)).astype(dtype)


class TrainingObserver(ABC):
    """Observer abstracto para eventos del entrenamiento"""

    @abstractmethod
    def on_step(self, step: int, epoch: int, loss: float, bits_per_dim: float) -> None:
        """Se ejecuta tras cada paso de optimización"""
        pass

    def on_epoch_end(self, epoch: int, mean_loss: float) -> None:
        pass


class LoggingObserver(TrainingObserver):
    """Observer que registra el progreso en logs"""

    def __init__(self, log_every: int = 50):
        self.log_every = log_every

    def on_step(self, step: int, epoch: int, loss: float, bits_per_dim: float) -> None:
        if step % self.log_every == 0:
            logger.info(f"Paso {step} (época {epoch}) - NLL: {loss:.4f}, bits/dim: {bits_per_dim:.4f}")
        else:
            logger.debug(f"Paso {step} - NLL: {loss:.6f}")

    def on_epoch_end(self, epoch: int, mean_loss: float) -> None:
        logger.info(f"Época {epoch} completada - NLL media: {mean_loss:.4f}")


class MetricsObserver(TrainingObserver):
    """Observer que recolecta la curva de pérdida"""

    def __init__(self):
        self.rows: List[Dict[str, float]] = []

    def on_step(self, step: int, epoch: int, loss: float, bits_per_dim: float) -> None:
        self.rows.append({"step": step, "epoch": epoch, "loss": loss, "bits_per_dim": bits_per_dim})

    def get_metrics(self) -> Dict[str, float]:
        if not self.rows:
            return {"steps": 0}
        losses = [r["loss"] for r in self.rows]
        return {"steps": len(self.rows), "first_loss": losses[0], "last_loss": losses[-1], "best_loss": min(losses)}


class Trainer:
    """Minimiza -media(log p(x)) por batch; inicializa actnorm en el primer batch"""

    def __init__(self, model: FlowModel, config: TrainConfig, observers: Optional[List[TrainingObserver]] = None):
        self.model = model
        self.config = config
        self.observers: List[TrainingObserver] = list(observers or [])
        self.state = AdamState()
        self._stop = threading.Event()

    def add_observer(self, observer: TrainingObserver) -> None:
        self.observers.append(observer)

    def request_stop(self) -> None:
        """Termina el entrenamiento tras el paso en curso"""
        self._stop.set()

    def _notify_step(self, step: int, epoch: int, loss: float, bpd: float) -> None:
        for observer in self.observers:
            try:
                observer.on_step(step, epoch, loss, bpd)
            except Exception as e:
                logger.error(f"Error en observer: {e}")

    def _notify_epoch(self, epoch: int, mean_loss: float) -> None:
        for observer in self.observers:
            try:
                observer.on_epoch_end(epoch, mean_loss)
            except Exception as e:
                logger.error(f"Error en observer: {e}")

    def _prepare_batch(self, batch: np.ndarray, step: int) -> np.ndarray:
        if batch.dtype == np.uint8:
            return dequantize(batch, seed=(self.config.seed, step), dtype=self.model.dtype)
        return batch.astype(self.model.dtype)

    def _clip(self, grads: Dict[str, np.ndarray]) -> None:
        if self.config.clip_norm is None:
            return
        total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
        if total > self.config.clip_norm:
            factor = self.config.clip_norm / total
            for name in grads:
                grads[name] = grads[name] * np.asarray(factor, dtype=grads[name].dtype)

    def train_step(self, batch: np.ndarray, step: int) -> float:
        model = self.model
        params = model.parameters()
        with DiffGraph() as graph:
            log_prob = model.log_prob(batch, init_actnorm=not model.actnorms_initialized)
            loss = negate(mean(log_prob))
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteError(f"Pérdida no finita en el paso {step}", step=step)
            grads = dict(zip((p.name for p in params), graph.backward(loss, params)))

        self._clip(grads)
        snapshots = {inv.weight.name: inv.weight.data.copy() for inv in model.invconvs()}
        adam_step({p.name: p.data for p in params}, grads, self.state,
                  self.config.learning_rate, self.config.beta1, self.config.beta2)
        for invconv in model.invconvs():
            if not invconv.check_conditioning():
                invconv.weight.data[...] = snapshots[invconv.weight.name]
                logger.warning(f"Paso {step}: actualización de {invconv.name} rechazada, |det W| casi nulo")
        return value

    def train(self, dataset: np.ndarray) -> TrainResult:
        dataset = np.asarray(dataset)
        image_shape = tuple(self.model.config.image_shape)
        if dataset.ndim != 4 or tuple(dataset.shape[1:]) != image_shape:
            raise ShapeError(f"Dataset con forma {dataset.shape}, se esperaba (N,)+{image_shape}")

        config = self.config
        n_dims = int(np.prod(image_shape))
        rng = np.random.default_rng(config.seed)
        result = TrainResult(steps=0)
        step = 0
        logger.info(f"Iniciando entrenamiento: {dataset.shape[0]} muestras, batch {config.batch_size}")

        for epoch in range(config.epochs):
            order = rng.permutation(dataset.shape[0])
            epoch_losses = []
            for start in range(0, len(order), config.batch_size):
                batch = self._prepare_batch(dataset[order[start:start + config.batch_size]], step)
                loss = self.train_step(batch, step)
                bpd = (loss / n_dims + LOG_256) / math.log(2.0)
                result.losses.append(loss)
                result.bits_per_dim.append(bpd)
                epoch_losses.append(loss)
                self._notify_step(step, epoch, loss, bpd)
                step += 1
                self.model.training_step += 1
                if self._stop.is_set() or (config.max_steps is not None and step >= config.max_steps):
                    break
            self._notify_epoch(epoch, float(np.mean(epoch_losses)))
            result.epochs_completed = epoch + 1
            if self._stop.is_set():
                result.stopped_early = True
                logger.warning(f"Entrenamiento detenido a petición en el paso {step}")
                break
            if config.max_steps is not None and step >= config.max_steps:
                break

        result.steps = step
        logger.info(f"Entrenamiento finalizado tras {step} pasos")
        return result


def train(model: FlowModel, dataset: np.ndarray, config: TrainConfig) -> TrainResult:
    """Entrena ``model`` en el sitio y devuelve la curva de pérdida"""
    return Trainer(model, config, observers=[LoggingObserver(config.log_every)]).train(dataset)
