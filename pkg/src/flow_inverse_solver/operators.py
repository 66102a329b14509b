"""
Operadores de medida lineales y = A·x + η usando patrón Strategy + Factory

Todos aceptan una imagen C×H×W o un batch N×C×H×W y son diferenciables
respecto a x (se construyen con las operaciones del núcleo autodiff).
"""
import math
from abc import ABC, abstractmethod
from typing import Dict, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .autodiff import Tensor, conv2d, index_select, matmul, mul, reshape, scale, sum_
from .errors import OperatorError, ShapeError

Shape = Tuple[int, ...]
NoiseModel = Literal["per_entry", "total_norm"]
BlurPadding = Literal["valid", "reflect"]


class MeasurementOperator(ABC):
    """Strategy abstracta para los operadores de medida"""

    name: str = "operator"

    def __init__(self, input_shape: Sequence[int]):
        self.input_shape: Shape = tuple(int(d) for d in input_shape)

    @property
    @abstractmethod
    def output_shape(self) -> Shape:
        pass

    @abstractmethod
    def _apply_batch(self, x: Tensor) -> Tensor:
        """Aplica A sobre un batch con forma (N,) + input_shape"""
        pass

    @property
    def measurement_size(self) -> int:
        return int(np.prod(self.output_shape))

    def apply(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        single = x.ndim == len(self.input_shape)
        if single:
            x = reshape(x, (1,) + x.shape)
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"{self.name}: entrada con forma {x.shape[1:]}, se esperaba {self.input_shape}")
        out = self._apply_batch(x)
        return reshape(out, out.shape[1:]) if single else out

    def noise(self, shape: Shape, rng: np.random.Generator) -> np.ndarray:
        """Ruido aditivo η; los operadores sin ruido devuelven ceros"""
        return np.zeros(shape)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(input_shape={self.input_shape})"


class Denoise(MeasurementOperator):
    """A = I con ruido gaussiano; ``total_norm`` reparte noise_std como raíz de E[||η||²]"""

    name = "denoise"

    def __init__(self, input_shape: Sequence[int], noise_std: float = 0.1, noise_model: NoiseModel = "per_entry"):
        super().__init__(input_shape)
        if noise_std < 0:
            raise ValueError(f"noise_std debe ser no negativa, recibido {noise_std}")
        if noise_model not in ("per_entry", "total_norm"):
            raise ValueError(f"Modelo de ruido desconocido: {noise_model}")
        self.noise_std = noise_std
        self.noise_model = noise_model

    @property
    def output_shape(self) -> Shape:
        return self.input_shape

    @property
    def entry_std(self) -> float:
        if self.noise_model == "total_norm":
            return self.noise_std / math.sqrt(self.measurement_size)
        return self.noise_std

    def _apply_batch(self, x: Tensor) -> Tensor:
        return x

    def noise(self, shape: Shape, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(shape) * self.entry_std


class Blur3x3(MeasurementOperator):
    """Media 3×3 con stride 1 por canal; ``valid`` recorta un píxel de cada borde"""

    name = "deblur"

    def __init__(self, input_shape: Sequence[int], padding: BlurPadding = "valid"):
        super().__init__(input_shape)
        if padding not in ("valid", "reflect"):
            raise ValueError(f"Padding de blur desconocido: {padding}")
        channels, height, width = self.input_shape
        if padding == "valid" and min(height, width) < 3:
            raise ShapeError(f"deblur: imagen {height}×{width} menor que el kernel 3×3")
        if padding == "reflect" and min(height, width) < 2:
            raise ShapeError(f"deblur: imagen {height}×{width} demasiado pequeña para reflejar")
        self.padding = padding
        kernel = np.zeros((channels, channels, 3, 3))
        kernel[np.arange(channels), np.arange(channels)] = 1.0 / 9.0
        self.kernel = kernel

    @property
    def output_shape(self) -> Shape:
        c, h, w = self.input_shape
        return self.input_shape if self.padding == "reflect" else (c, h - 2, w - 2)

    @staticmethod
    def _reflect_indices(size: int) -> np.ndarray:
        return np.concatenate(([1], np.arange(size), [size - 2]))

    def _apply_batch(self, x: Tensor) -> Tensor:
        if self.padding == "reflect":
            x = index_select(x, 2, self._reflect_indices(x.shape[2]))
            x = index_select(x, 3, self._reflect_indices(x.shape[3]))
        return conv2d(x, Tensor(self.kernel.astype(x.dtype)), padding=0)


class InpaintCenter(MeasurementOperator):
    """Pone a cero un cuadrado centrado de lado ``mask_side`` en todos los canales"""

    name = "inpaint"

    def __init__(self, input_shape: Sequence[int], mask_side: Optional[int] = None):
        super().__init__(input_shape)
        _, height, width = self.input_shape
        side = height // 2 if mask_side is None else int(mask_side)
        if not 0 < side <= min(height, width):
            raise ValueError(f"mask_side {side} fuera de rango para {height}×{width}")
        self.mask_side = side
        top, left = (height - side) // 2, (width - side) // 2
        mask = np.ones(self.input_shape)
        mask[:, top:top + side, left:left + side] = 0.0
        self.mask = mask

    @property
    def output_shape(self) -> Shape:
        return self.input_shape

    def _apply_batch(self, x: Tensor) -> Tensor:
        return mul(x, Tensor(self.mask.astype(x.dtype)))


class Colorize(MeasurementOperator):
    """Promedio de canales: C×H×W → 1×H×W"""

    name = "colorize"

    @property
    def output_shape(self) -> Shape:
        return (1,) + self.input_shape[1:]

    def _apply_batch(self, x: Tensor) -> Tensor:
        return scale(sum_(x, axis=1, keepdims=True), 1.0 / x.shape[1])


class GenericMatrix(MeasurementOperator):
    """Matriz densa m×n aplicada a la imagen aplanada"""

    name = "matrix"

    def __init__(self, input_shape: Sequence[int], matrix: np.ndarray):
        super().__init__(input_shape)
        matrix = np.asarray(matrix, dtype=np.float64)
        n = int(np.prod(self.input_shape))
        if matrix.ndim != 2 or matrix.shape[1] != n:
            raise ShapeError(f"matrix: eje de columnas {matrix.shape} incompatible con n={n}")
        self.matrix = matrix

    @property
    def output_shape(self) -> Shape:
        return (self.matrix.shape[0],)

    def _apply_batch(self, x: Tensor) -> Tensor:
        flat = reshape(x, (x.shape[0], -1))
        return matmul(flat, Tensor(self.matrix.T.astype(x.dtype)))


def measure(op: MeasurementOperator, x_star: np.ndarray, seed: Union[int, Sequence[int]] = 0) -> np.ndarray:
    """y = A·x* + η con η sacado de un generador sembrado con ``seed``"""
    x_star = np.asarray(x_star)
    clean = op.apply(Tensor(x_star)).data
    rng = np.random.default_rng(seed)
    return (clean + op.noise(clean.shape, rng)).astype(clean.dtype)


# Pesos por tarea y método
TASK_ALPHA: Dict[str, float] = {"denoise": 0.05, "deblur": 0.02, "inpaint": 0.002, "colorize": 0.02}
TASK_GAMMA: Dict[str, Dict[str, float]] = {
    "denoise": {"csgm": 0.1, "glowip": 0.1},
    "deblur": {"csgm": 0.01, "glowip": 0.0},
    "inpaint": {"csgm": 0.01, "glowip": 0.0},
    "colorize": {"csgm": 0.01, "glowip": 0.0},
}
MAP_DEFAULTS: Dict[str, float] = {"lr": 0.0015, "beta": 0.5, "noise_sigma": 0.1}
DEFAULT_LR = 0.005


def default_hyperparameters(task: str, method: str) -> Dict[str, float]:
    """Pesos por defecto (alpha, gamma, beta, noise_sigma, lr) para una tarea y un método"""
    if task not in TASK_ALPHA:
        raise ValueError(f"Tarea desconocida: {task}")
    if method not in ("ours", "csgm", "glowip", "map"):
        raise ValueError(f"Método desconocido: {method}")
    params = {
        "alpha": TASK_ALPHA[task],
        "gamma": TASK_GAMMA[task].get(method, 0.1),
        "beta": MAP_DEFAULTS["beta"],
        "noise_sigma": MAP_DEFAULTS["noise_sigma"],
        "lr": DEFAULT_LR,
    }
    if method == "map":
        params["lr"] = MAP_DEFAULTS["lr"]
    return params


class OperatorFactory:
    """Factory para crear el operador de cada tarea"""

    @staticmethod
    def create(task: str, image_shape: Sequence[int], noise_std: float = 0.1,
               noise_model: NoiseModel = "per_entry", blur_padding: BlurPadding = "valid",
               mask_side: Optional[int] = None) -> MeasurementOperator:
        if task == "denoise":
            op = Denoise(image_shape, noise_std=noise_std, noise_model=noise_model)
        elif task == "deblur":
            op = Blur3x3(image_shape, padding=blur_padding)
        elif task == "inpaint":
            op = InpaintCenter(image_shape, mask_side=mask_side)
        elif task == "colorize":
            op = Colorize(image_shape)
        else:
            raise OperatorError(f"Tarea desconocida: {task}")
        logger.debug(f"Operador creado para {task}: {op!r} -> {op.output_shape}")
        return op
