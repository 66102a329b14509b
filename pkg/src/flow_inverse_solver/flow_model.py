"""
Flujo multiescala: composición de capas, verosimilitud exacta, muestreo y layout latente
"""
import math
from contextlib import contextmanager
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .autodiff import (
    Parameter,
    Tensor,
    add,
    concat,
    dtype_for,
    gaussian_logpdf,
    negate,
    reshape,
    slice_axis,
)
from .errors import DomainError, LatentLayoutError, ShapeError
from .layers import ActNorm, CouplingLayer, FlowStep, InvConv1x1, SplitPrior, Squeeze
from .models import FlowConfig

Layout = List[Tuple[int, ...]]


class LatentState:
    """Variable latente estructurada: un trozo por escala con split y el trozo final"""

    def __init__(self, chunks: Sequence[Tensor]):
        self.chunks: List[Tensor] = list(chunks)

    @property
    def layout(self) -> Layout:
        return [tuple(c.shape[1:]) for c in self.chunks]

    @property
    def batch_size(self) -> int:
        return self.chunks[0].shape[0]

    def flatten(self) -> Tensor:
        """Concatena los trozos en orden, row-major dentro de cada trozo: forma (N, n)"""
        n = self.batch_size
        return concat([reshape(c, (n, -1)) for c in self.chunks], axis=1)

    @classmethod
    def unflatten(cls, v: Union[Tensor, np.ndarray], layout: Layout) -> "LatentState":
        if not isinstance(v, Tensor):
            v = Tensor(v)
        if v.ndim == 1:
            v = reshape(v, (1, v.shape[0]))
        sizes = [int(np.prod(shape)) for shape in layout]
        if v.shape[1] != sum(sizes):
            raise ShapeError(f"unflatten: longitud {v.shape[1]} != {sum(sizes)} del layout")
        chunks, start = [], 0
        for shape, size in zip(layout, sizes):
            piece = slice_axis(v, 1, start, start + size)
            chunks.append(reshape(piece, (v.shape[0],) + tuple(shape)))
            start += size
        return cls(chunks)

    def numpy(self) -> List[np.ndarray]:
        return [c.data for c in self.chunks]


class FlowScale:
    """squeeze → pasos de flujo → split (la última escala no tiene split)"""

    def __init__(self, index: int, squeeze: Optional[Squeeze], steps: List[FlowStep], split: Optional[SplitPrior]):
        self.index = index
        self.squeeze = squeeze
        self.steps = steps
        self.split = split


class FlowModel:
    """Pila ordenada de capas invertibles más el descriptor del layout latente"""

    def __init__(self, config: FlowConfig, scales: List[FlowScale]):
        self.config = config
        self.scales = scales
        self.dtype = dtype_for(config.precision)
        self.latent_layout: Layout = [tuple(s) for s in config.latent_layout()]
        self.training_step = 0
        names = [p.name for p in self.parameters()]
        if len(names) != len(set(names)):
            raise ValueError("Nombres de parámetros duplicados en el modelo")

    @property
    def steps(self) -> List[FlowStep]:
        return [step for scale in self.scales for step in scale.steps]

    @property
    def num_flow_steps(self) -> int:
        return len(self.steps)

    @property
    def latent_dim(self) -> int:
        return int(sum(np.prod(shape) for shape in self.latent_layout))

    @property
    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def parameters(self) -> List[Parameter]:
        return [p for step in self.steps for p in step.parameters()]

    def named_parameters(self) -> dict:
        return {p.name: p for p in self.parameters()}

    def actnorms(self) -> List[ActNorm]:
        return [step.actnorm for step in self.steps]

    def invconvs(self) -> List[InvConv1x1]:
        return [step.invconv for step in self.steps if step.invconv is not None]

    @property
    def actnorms_initialized(self) -> bool:
        return all(a.initialized for a in self.actnorms())

    def mark_initialized(self) -> None:
        for actnorm in self.actnorms():
            actnorm.initialized = True

    @contextmanager
    def frozen(self) -> Iterator["FlowModel"]:
        """Desactiva los gradientes de los parámetros (resolución, benchmark)"""
        params = self.parameters()
        previous = [p.requires_grad for p in params]
        for p in params:
            p.requires_grad = False
        try:
            yield self
        finally:
            for p, flag in zip(params, previous):
                p.requires_grad = flag

    def _as_input(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim == 3:
            x = reshape(x, (1,) + x.shape)
        if tuple(x.shape[1:]) != tuple(self.config.image_shape):
            raise ShapeError(f"Entrada con forma {x.shape[1:]}, se esperaba {self.config.image_shape}")
        return x

    def forward(self, x: Union[Tensor, np.ndarray], init_actnorm: bool = False) -> Tuple[LatentState, Tensor]:
        """z = F(x) y log|det J_F(x)| por muestra"""
        h = self._as_input(x)
        logdet = Tensor(np.zeros(h.shape[0], dtype=h.dtype))
        chunks = []
        for scale in self.scales:
            if scale.squeeze is not None:
                h, _ = scale.squeeze.forward(h)
            for step in scale.steps:
                h, step_logdet = step.forward(h, init_actnorm=init_actnorm)
                logdet = add(logdet, step_logdet)
            if scale.split is not None:
                h, h_z = scale.split.split(h)
                chunks.append(h_z)
        chunks.append(h)
        return LatentState(chunks), logdet

    def _check_layout(self, z: LatentState) -> None:
        if len(z.chunks) != len(self.latent_layout):
            raise LatentLayoutError(
                f"Se esperaban {len(self.latent_layout)} trozos latentes, recibidos {len(z.chunks)}",
                chunk_index=min(len(z.chunks), len(self.latent_layout)),
            )
        batch = z.chunks[0].shape[0]
        for i, (chunk, shape) in enumerate(zip(z.chunks, self.latent_layout)):
            if tuple(chunk.shape[1:]) != tuple(shape) or chunk.shape[0] != batch:
                raise LatentLayoutError(
                    f"Trozo latente {i} con forma {chunk.shape}, se esperaba (N,)+{shape}", chunk_index=i
                )

    def inverse(self, z: LatentState) -> Tuple[Tensor, Tensor]:
        """x = F^{-1}(z) y log|det J_{F^{-1}}(z)| por muestra"""
        self._check_layout(z)
        h = z.chunks[-1]
        logdet = Tensor(np.zeros(h.shape[0], dtype=h.dtype))
        pending = len(z.chunks) - 2
        for scale in reversed(self.scales):
            if scale.split is not None:
                h = scale.split.merge(h, z.chunks[pending])
                pending -= 1
            for step in reversed(scale.steps):
                h, step_logdet = step.inverse(h)
                logdet = add(logdet, step_logdet)
            if scale.squeeze is not None:
                h, _ = scale.squeeze.inverse(h)
        return h, logdet

    def log_prob(self, x: Union[Tensor, np.ndarray], init_actnorm: bool = False) -> Tensor:
        """log p_X(x) = log p_Z(F(x)) + log|det J_F(x)|, por muestra"""
        z, logdet = self.forward(x, init_actnorm=init_actnorm)
        return add(gaussian_logpdf(z.flatten(), 0.0, 1.0, per_sample=True), logdet)

    def decode(self, z: LatentState) -> Tuple[Tensor, Tensor]:
        """Una sola pasada inversa: devuelve F^{-1}(z) y L(z) = -log p_Z(z) + log|det J_{F^{-1}}(z)|"""
        x, logdet_inv = self.inverse(z)
        prior = gaussian_logpdf(z.flatten(), 0.0, 1.0, per_sample=True)
        return x, add(negate(prior), logdet_inv)

    def latent_regularizer(self, z: LatentState) -> Tensor:
        return self.decode(z)[1]

    def sample_latent(self, sigma: float, count: int, seed: Union[int, Sequence[int]] = 0) -> LatentState:
        if sigma < 0:
            raise DomainError(f"sigma debe ser no negativa, recibido {sigma}")
        rng = np.random.default_rng(seed)
        chunks = []
        for shape in self.latent_layout:
            draw = rng.standard_normal((count,) + tuple(shape)) * sigma
            chunks.append(Tensor(draw.astype(self.dtype)))
        return LatentState(chunks)

    def sample(self, sigma: float, count: int, seed: Union[int, Sequence[int]] = 0) -> np.ndarray:
        """x = F^{-1}(z) con z ~ N(0, σ²I) por trozo; σ = 0 da la imagen modal x0"""
        x, _ = self.inverse(self.sample_latent(sigma, count, seed))
        return x.data

    def bits_per_dim(self, x: Union[Tensor, np.ndarray]) -> np.ndarray:
        n = int(np.prod(self.config.image_shape))
        log_prob = self.log_prob(x).data.astype(np.float64)
        return (-log_prob / n + math.log(256.0)) / math.log(2.0)


class FlowModelFactory:
    """Factory para construir el flujo a partir de su configuración"""

    @staticmethod
    def build(config: FlowConfig, seed: int = 0) -> FlowModel:
        rng = np.random.default_rng(seed)
        dtype = dtype_for(config.precision)
        shapes = config.scale_shapes()
        counts = config.scale_step_counts()
        use_invconv = config.permutation_variant == "invconv"
        scales = []
        for i, ((channels, height, width), count) in enumerate(zip(shapes, counts)):
            kernel = 3 if min(height, width) >= 2 else 1
            steps = []
            for j in range(count):
                name = f"scale{i}.step{j}"
                coupling = CouplingLayer(
                    f"{name}.coupling", channels, config.hidden_channels, kernel,
                    apply_swap=(not use_invconv and j % 2 == 0), rng=rng, dtype=dtype,
                )
                invconv = InvConv1x1(f"{name}.invconv", channels, rng, dtype) if use_invconv else None
                steps.append(FlowStep(name, ActNorm(f"{name}.actnorm", channels, dtype), coupling, invconv))
            squeeze = Squeeze(f"scale{i}.squeeze") if config.squeeze else None
            split = SplitPrior(f"scale{i}.split") if i < len(shapes) - 1 else None
            scales.append(FlowScale(i, squeeze, steps, split))

        model = FlowModel(config, scales)
        logger.info(
            f"Flujo construido: {config.num_scales} escalas, {model.num_flow_steps} pasos, "
            f"{model.num_parameters} parámetros, variante {config.permutation_variant}"
        )
        return model
