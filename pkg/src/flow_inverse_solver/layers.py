"""
Capas invertibles del flujo: actnorm, acoplamiento afín con swap, squeeze,
factor-out y convolución 1×1 invertible

Toda capa expone ``forward(h) -> (h', logdet)`` e ``inverse(h') -> (h, logdet_inv)``.
El logdet es un Tensor escalar o de forma (N,), sumable por broadcasting.
"""
import math
from abc import ABC, abstractmethod
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from .autodiff import (
    Parameter,
    Tensor,
    abs_,
    add,
    concat,
    channel_solve,
    conv2d,
    div,
    gaussian_logpdf,
    log,
    log_sigmoid,
    mul,
    negate,
    relu,
    reshape,
    scale,
    sigmoid,
    slice_axis,
    slogdet,
    sub,
    sum_,
    sum_per_sample,
    transpose,
)
from .errors import DomainError, LayerStateError, ShapeError, SingularMatrixError

COUPLING_SHIFT = 2.0
DET_THRESHOLD = 1e-12


def _zero_logdet(dtype) -> Tensor:
    return Tensor(np.zeros((), dtype=dtype))


class FlowLayer(ABC):
    """Interfaz común de las capas biyectivas"""

    name: str

    @abstractmethod
    def forward(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        pass

    @abstractmethod
    def inverse(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        pass

    def parameters(self) -> List[Parameter]:
        return []


class ActNorm(FlowLayer):
    """Normalización de activaciones por canal con inicialización dependiente de datos"""

    def __init__(self, name: str, channels: int, dtype=np.float32):
        self.name = name
        self.channels = channels
        self.scale = Parameter(f"{name}.scale", np.ones(channels), dtype)
        self.bias = Parameter(f"{name}.bias", np.zeros(channels), dtype)
        self.initialized = False

    def parameters(self) -> List[Parameter]:
        return [self.bias, self.scale]

    def initialize(self, batch: np.ndarray) -> None:
        if self.initialized:
            raise LayerStateError(f"{self.name}: actnorm ya inicializada")
        data = np.asarray(batch, dtype=np.float64)
        if data.ndim != 4 or data.shape[1] != self.channels:
            raise ShapeError(f"{self.name}: eje de canales esperado {self.channels}, forma {data.shape}")
        if data.shape[0] * data.shape[2] * data.shape[3] < 2:
            raise DomainError(f"{self.name}: se necesitan al menos 2 valores por canal")
        mean = data.mean(axis=(0, 2, 3))
        std = data.std(axis=(0, 2, 3))
        constant = np.flatnonzero(~(std > 0))
        if constant.size:
            raise DomainError(f"{self.name}: canal {int(constant[0])} constante, varianza cero")
        self.scale.data[...] = 1.0 / std
        self.bias.data[...] = -mean / std
        self.initialized = True
        logger.debug(f"{self.name} inicializada sobre un batch de {data.shape[0]} muestras")

    def _check(self, h: Tensor) -> None:
        if not self.initialized:
            raise LayerStateError(f"{self.name}: actnorm sin inicializar")
        if h.ndim != 4 or h.shape[1] != self.channels:
            raise ShapeError(f"{self.name}: eje de canales esperado {self.channels}, forma {h.shape}")

    def _logdet(self, h: Tensor) -> Tensor:
        return scale(sum_(log(abs_(self.scale))), h.shape[2] * h.shape[3])

    def forward(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        self._check(h)
        s = reshape(self.scale, (1, self.channels, 1, 1))
        b = reshape(self.bias, (1, self.channels, 1, 1))
        return add(mul(h, s), b), self._logdet(h)

    def inverse(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        self._check(h)
        s = reshape(self.scale, (1, self.channels, 1, 1))
        b = reshape(self.bias, (1, self.channels, 1, 1))
        return div(sub(h, b), s), negate(self._logdet(h))


def actnorm_init(batch: np.ndarray, layer: ActNorm) -> ActNorm:
    layer.initialize(batch)
    return layer


class CouplingNetwork:
    """CNN conv(k) → ReLU → conv(1×1) → ReLU → conv(k) con la última capa a cero"""

    def __init__(self, name: str, in_channels: int, out_channels: int, hidden: int,
                 kernel: int, rng: np.random.Generator, dtype=np.float32):
        self.name = name
        self.kernel = kernel
        self.padding = (kernel - 1) // 2
        fan0 = in_channels * kernel * kernel
        self.weights = [
            Parameter(f"{name}.conv0.weight",
                      rng.standard_normal((hidden, in_channels, kernel, kernel)) / math.sqrt(fan0), dtype),
            Parameter(f"{name}.conv1.weight",
                      rng.standard_normal((hidden, hidden, 1, 1)) / math.sqrt(hidden), dtype),
            Parameter(f"{name}.conv2.weight", np.zeros((out_channels, hidden, kernel, kernel)), dtype),
        ]
        self.biases = [
            Parameter(f"{name}.conv0.bias", np.zeros(hidden), dtype),
            Parameter(f"{name}.conv1.bias", np.zeros(hidden), dtype),
            Parameter(f"{name}.conv2.bias", np.zeros(out_channels), dtype),
        ]

    def parameters(self) -> List[Parameter]:
        return self.weights + self.biases

    def __call__(self, h: Tensor) -> Tensor:
        h = relu(conv2d(h, self.weights[0], self.biases[0], padding=self.padding))
        h = relu(conv2d(h, self.weights[1], self.biases[1], padding=0))
        return conv2d(h, self.weights[2], self.biases[2], padding=self.padding)


class CouplingLayer(FlowLayer):
    """
    Acoplamiento afín: h'2 = h2 ⊙ sigmoid(s + 2) + t con (s, t) = CNN(h1).

    Con ``apply_swap`` las mitades se intercambian antes de separar y de
    nuevo al concatenar, de modo que la salida conserva el orden de
    canales y la mitad transformada es la primera.
    """

    def __init__(self, name: str, channels: int, hidden: int, kernel: int,
                 apply_swap: bool, rng: np.random.Generator, dtype=np.float32):
        if channels % 2:
            raise ShapeError(f"{name}: eje de canales impar ({channels})")
        self.name = name
        self.channels = channels
        self.half = channels // 2
        self.apply_swap = apply_swap
        self.network = CouplingNetwork(f"{name}.cnn", self.half, channels, hidden, kernel, rng, dtype)

    def parameters(self) -> List[Parameter]:
        return self.network.parameters()

    def _split(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        if h.ndim != 4 or h.shape[1] != self.channels:
            raise ShapeError(f"{self.name}: eje de canales esperado {self.channels}, forma {h.shape}")
        first = slice_axis(h, 1, 0, self.half)
        second = slice_axis(h, 1, self.half, None)
        return (second, first) if self.apply_swap else (first, second)

    def _merge(self, h1: Tensor, h2: Tensor) -> Tensor:
        return concat([h2, h1] if self.apply_swap else [h1, h2], axis=1)

    def _affine(self, h1: Tensor) -> Tuple[Tensor, Tensor]:
        st = self.network(h1)
        shifted = add(slice_axis(st, 1, 0, self.half), COUPLING_SHIFT)
        return shifted, slice_axis(st, 1, self.half, None)

    def forward(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        h1, h2 = self._split(h)
        shifted, t = self._affine(h1)
        h2_out = add(mul(h2, sigmoid(shifted)), t)
        return self._merge(h1, h2_out), sum_per_sample(log_sigmoid(shifted))

    def inverse(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        h1, h2_out = self._split(h)
        shifted, t = self._affine(h1)
        h2 = div(sub(h2_out, t), sigmoid(shifted))
        return self._merge(h1, h2), negate(sum_per_sample(log_sigmoid(shifted)))


class Squeeze(FlowLayer):
    """Bloques espaciales 2×2 (a, b, c, d) del canal k → canales 4k..4k+3"""

    factor = 2

    def __init__(self, name: str = "squeeze"):
        self.name = name

    def forward(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        n, c, height, width = h.shape
        if height % 2:
            raise ShapeError(f"{self.name}: eje de altura impar ({height})")
        if width % 2:
            raise ShapeError(f"{self.name}: eje de anchura impar ({width})")
        out = reshape(h, (n, c, height // 2, 2, width // 2, 2))
        out = transpose(out, (0, 1, 3, 5, 2, 4))
        return reshape(out, (n, 4 * c, height // 2, width // 2)), _zero_logdet(h.dtype)

    def inverse(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        n, c, height, width = h.shape
        if c % 4:
            raise ShapeError(f"{self.name}: eje de canales {c} no divisible por 4")
        out = reshape(h, (n, c // 4, 2, 2, height, width))
        out = transpose(out, (0, 1, 4, 2, 5, 3))
        return reshape(out, (n, c // 4, 2 * height, 2 * width)), _zero_logdet(h.dtype)


class SplitPrior:
    """Factor-out: la segunda mitad de canales sigue directamente N(0, I)"""

    def __init__(self, name: str = "split"):
        self.name = name

    def split(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        c = h.shape[1]
        if c % 2:
            raise ShapeError(f"{self.name}: eje de canales impar ({c})")
        return slice_axis(h, 1, 0, c // 2), slice_axis(h, 1, c // 2, None)

    def merge(self, h_keep: Tensor, h_z: Tensor) -> Tensor:
        if h_keep.shape != h_z.shape:
            raise ShapeError(f"{self.name}: mitades con formas distintas {h_keep.shape} y {h_z.shape}")
        return concat([h_keep, h_z], axis=1)

    @staticmethod
    def log_prior(h_z: Tensor) -> Tensor:
        return gaussian_logpdf(h_z, 0.0, 1.0, per_sample=True)


class InvConv1x1(FlowLayer):
    """Convolución 1×1 invertible con determinante y solve directos (sin LU)"""

    def __init__(self, name: str, channels: int, rng: np.random.Generator, dtype=np.float32):
        self.name = name
        self.channels = channels
        rotation = np.linalg.qr(rng.standard_normal((channels, channels)))[0]
        self.weight = Parameter(f"{name}.weight", rotation, dtype)

    def parameters(self) -> List[Parameter]:
        return [self.weight]

    def check_conditioning(self, threshold: float = DET_THRESHOLD) -> bool:
        sign, logabsdet = np.linalg.slogdet(self.weight.data.astype(np.float64))
        return bool(sign != 0 and logabsdet > math.log(threshold))

    def _logdet(self, h: Tensor) -> Tensor:
        if h.ndim != 4 or h.shape[1] != self.channels:
            raise ShapeError(f"{self.name}: eje de canales esperado {self.channels}, forma {h.shape}")
        logabsdet = slogdet(self.weight)
        if logabsdet.item() <= math.log(DET_THRESHOLD):
            raise SingularMatrixError(f"{self.name}: |det W| por debajo de {DET_THRESHOLD}")
        return scale(logabsdet, h.shape[2] * h.shape[3])

    def forward(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        logdet = self._logdet(h)
        kernel = reshape(self.weight, (self.channels, self.channels, 1, 1))
        return conv2d(h, kernel), logdet

    def inverse(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        logdet = self._logdet(h)
        return channel_solve(self.weight, h), negate(logdet)


class FlowStep(FlowLayer):
    """Paso de flujo: actnorm → [conv 1×1 invertible] → acoplamiento"""

    def __init__(self, name: str, actnorm: ActNorm, coupling: CouplingLayer,
                 invconv: Optional[InvConv1x1] = None):
        self.name = name
        self.actnorm = actnorm
        self.invconv = invconv
        self.coupling = coupling

    @property
    def layers(self) -> List[FlowLayer]:
        return [l for l in (self.actnorm, self.invconv, self.coupling) if l is not None]

    def parameters(self) -> List[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, h: Tensor, init_actnorm: bool = False) -> Tuple[Tensor, Tensor]:
        if init_actnorm and not self.actnorm.initialized:
            self.actnorm.initialize(h.data)
        logdet = _zero_logdet(h.dtype)
        for layer in self.layers:
            h, layer_logdet = layer.forward(h)
            logdet = add(logdet, layer_logdet)
        return h, logdet

    def inverse(self, h: Tensor) -> Tuple[Tensor, Tensor]:
        logdet = _zero_logdet(h.dtype)
        for layer in reversed(self.layers):
            h, layer_logdet = layer.inverse(h)
            logdet = add(logdet, layer_logdet)
        return h, logdet
