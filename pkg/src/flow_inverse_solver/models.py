"""
Modelos de datos: configuraciones de flujo, entrenamiento, solver y registros de resultados
"""
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Precision = Literal["single", "double"]
Method = Literal["ours", "csgm", "glowip", "map"]
Task = Literal["denoise", "deblur", "inpaint", "colorize"]
InitKind = Literal["gaussian_0.1", "gaussian_1", "zero"]

METHOD_INIT: Dict[str, str] = {
    "ours": "gaussian_0.1",
    "map": "gaussian_0.1",
    "csgm": "gaussian_1",
    "glowip": "zero",
}


class FlowConfig(BaseModel):
    """Arquitectura multiescala del flujo generativo"""
    image_shape: Tuple[int, int, int] = Field((3, 32, 32), description="Forma C×H×W de las imágenes")
    num_scales: int = Field(5, ge=1, description="Número de escalas L")
    steps_per_scale: int = Field(2, ge=1, description="Pasos de flujo por escala K")
    double_k_at: List[int] = Field(default_factory=lambda: [3, 4], description="Escalas (base 0) con K duplicado")
    step_counts: Optional[List[int]] = Field(None, description="Pasos explícitos por escala; reemplaza K y duplicados")
    hidden_channels: int = Field(512, ge=1, description="Canales ocultos de cada CNN de acoplamiento")
    permutation_variant: Literal["coupling_swap", "invconv"] = Field("coupling_swap", description="Permutación entre acoplamientos")
    squeeze: bool = Field(True, description="Aplicar squeeze al inicio de cada escala")
    precision: Precision = Field("single", description="Precisión de parámetros y activaciones")

    @model_validator(mode="after")
    def _check_scale_arithmetic(self) -> "FlowConfig":
        if self.step_counts is not None:
            if len(self.step_counts) != self.num_scales:
                raise ValueError(
                    f"step_counts tiene {len(self.step_counts)} entradas para {self.num_scales} escalas"
                )
            if any(k < 0 for k in self.step_counts):
                raise ValueError("step_counts no admite valores negativos")
        for index in self.double_k_at:
            if not 0 <= index < self.num_scales:
                raise ValueError(f"double_k_at: escala {index} fuera de rango")
        self.scale_shapes()
        return self

    def scale_step_counts(self) -> List[int]:
        if self.step_counts is not None:
            return list(self.step_counts)
        return [
            self.steps_per_scale * (2 if i in self.double_k_at else 1)
            for i in range(self.num_scales)
        ]

    def scale_shapes(self) -> List[Tuple[int, int, int]]:
        """Forma que ven los pasos de flujo en cada escala; valida la aritmética"""
        c, h, w = self.image_shape
        shapes = []
        for i in range(self.num_scales):
            if self.squeeze:
                if h % 2 or w % 2:
                    raise ValueError(f"escala {i}: dimensiones espaciales {h}×{w} no divisibles por 2")
                c, h, w = 4 * c, h // 2, w // 2
            if c % 2:
                raise ValueError(f"escala {i}: número de canales impar ({c})")
            shapes.append((c, h, w))
            if i < self.num_scales - 1:
                c //= 2
        return shapes

    def latent_layout(self) -> List[Tuple[int, int, int]]:
        shapes = self.scale_shapes()
        layout = [(c // 2, h, w) for c, h, w in shapes[:-1]]
        layout.append(shapes[-1])
        return layout


class TrainConfig(BaseModel):
    """Hiperparámetros de entrenamiento por máxima verosimilitud"""
    learning_rate: float = Field(1e-4, gt=0)
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(100, ge=1)
    max_steps: Optional[int] = Field(None, ge=1, description="Corta el entrenamiento tras este número de pasos")
    clip_norm: Optional[float] = Field(50.0, description="Norma global de recorte; None lo desactiva")
    seed: int = 0
    log_every: int = Field(50, ge=1)

    @field_validator("clip_norm")
    @classmethod
    def _positive_clip(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and value <= 0:
            return None
        return value


class SolveConfig(BaseModel):
    """Objetivo e hiperparámetros del solver en el espacio latente"""
    method: Method = "ours"
    alpha: float = Field(0.05, ge=0, description="Peso del regularizador de verosimilitud")
    gamma: float = Field(0.1, ge=0, description="Peso de ||z||² en CSGM/GlowIP")
    beta: float = Field(0.5, ge=0, description="Peso de la densidad en MAP")
    noise_sigma: float = Field(0.1, gt=0, description="σ del ruido asumido por MAP")
    lr: float = Field(0.005, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    iters: int = Field(1500, ge=1)
    init: Optional[InitKind] = Field(None, description="Inicialización de z; None usa la del método")
    batch: int = Field(32, ge=1)
    seed: int = 0

    def resolved_init(self) -> str:
        return self.init or METHOD_INIT[self.method]


class SolveResult(BaseModel):
    """Resultado de resolver un batch de problemas inversos"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x_hat: np.ndarray = Field(..., description="Imágenes restauradas recortadas a [0,1]")
    z_hat: np.ndarray = Field(..., description="Latentes aplanados finales")
    x_init: np.ndarray = Field(..., description="F^{-1}(z0) recortada a [0,1]")
    data_trace: np.ndarray = Field(..., description="Término de datos por iteración e imagen (iters×N)")
    reg_trace: np.ndarray = Field(..., description="Término de regularización por iteración e imagen")
    log_prob: np.ndarray = Field(..., description="log p(x̂) por imagen")
    wall_time: float = Field(..., description="Segundos de optimización")

    @property
    def final_data_loss(self) -> np.ndarray:
        return self.data_trace[-1]

    @property
    def final_reg_loss(self) -> np.ndarray:
        return self.reg_trace[-1]


class TrainResult(BaseModel):
    """Resumen de un entrenamiento"""
    steps: int
    losses: List[float] = Field(default_factory=list)
    bits_per_dim: List[float] = Field(default_factory=list)
    epochs_completed: int = 0
    stopped_early: bool = False


class ExperimentSpec(BaseModel):
    """Experimento de restauración: tarea, método, datos e hiperparámetros"""
    task: Task
    method: Method
    checkpoint: str
    data_dir: Optional[str] = None
    synthetic: Optional[int] = Field(None, ge=1, description="Imágenes sintéticas en lugar de data_dir")
    out_dir: str = "results"
    count: int = Field(192, ge=1)
    seed: int = 0
    workers: int = Field(1, ge=1)
    alpha: Optional[float] = Field(None, ge=0)
    gamma: Optional[float] = Field(None, ge=0)
    beta: Optional[float] = Field(None, ge=0)
    noise_sigma: Optional[float] = Field(None, gt=0)
    lr: Optional[float] = Field(None, gt=0)
    iters: int = Field(1500, ge=1)
    batch: int = Field(32, ge=1)
    noise_std: float = Field(0.1, ge=0)
    noise_model: Literal["per_entry", "total_norm"] = "per_entry"
    blur_padding: Literal["valid", "reflect"] = "valid"
    mask_side: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _require_source(self) -> "ExperimentSpec":
        if self.data_dir is None and self.synthetic is None:
            raise ValueError("Se requiere data_dir o synthetic")
        return self


class ResultRow(BaseModel):
    """Una fila de resultados por (imagen, método, tarea)"""
    task: str
    method: str
    image_id: str
    psnr: float
    ssim: float
    data_loss: float
    reg_loss: float
    seed: int
    wall_time_ms: float

    @field_validator("psnr")
    @classmethod
    def _non_negative_psnr(cls, value: float) -> float:
        if value < 0:
            raise ValueError(f"psnr negativo: {value}")
        return value


class BenchResult(BaseModel):
    """Tiempos de generación de una variante de permutación"""
    variant: str
    runs: int
    batch: int
    mean_ms: float
    std_ms: float
    num_parameters: int
    flow_steps: int
    timings_ms: List[float] = Field(default_factory=list, exclude=True)
