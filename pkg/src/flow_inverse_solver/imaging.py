"""
Emisión de PNG: rejillas de muestras y tiras de comparación (objetivo, medida, restaurada)
"""
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from loguru import logger
from PIL import Image

from .errors import ShapeError


def to_uint8(x: np.ndarray) -> np.ndarray:
    """Cuantiza [0,1] a 8 bits con round(x·255)"""
    return np.round(np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def _to_pil(canvas: np.ndarray) -> Image.Image:
    """C×H×W uint8 → imagen PIL en modo L o RGB"""
    if canvas.shape[0] == 1:
        return Image.fromarray(canvas[0], mode="L")
    if canvas.shape[0] == 3:
        return Image.fromarray(canvas.transpose(1, 2, 0), mode="RGB")
    raise ShapeError(f"PNG requiere 1 o 3 canales, eje de canales {canvas.shape[0]}")


def save_grid(rows: Union[np.ndarray, Sequence[np.ndarray]], path: Union[str, Path]) -> Path:
    """Escribe una rejilla con una fila por entrada de ``rows`` (cada una K×C×H×W)"""
    grid = np.stack([np.asarray(r) for r in rows])
    if grid.ndim != 5:
        raise ShapeError(f"Rejilla con forma {grid.shape}, se esperaba R×K×C×H×W")
    n_rows, n_cols, channels, height, width = grid.shape
    canvas = to_uint8(grid).transpose(2, 0, 3, 1, 4).reshape(channels, n_rows * height, n_cols * width)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _to_pil(canvas).save(path, format="PNG")
    logger.debug(f"Rejilla {n_rows}×{n_cols} guardada en {path}")
    return path


def load_grid(path: Union[str, Path], rows: int, cols: int) -> np.ndarray:
    """Lee una rejilla PNG como R×K×C×H×W en [0,1]"""
    with Image.open(path) as handle:
        array = np.asarray(handle, dtype=np.uint8)
    canvas = array[None] if array.ndim == 2 else array.transpose(2, 0, 1)
    channels, total_h, total_w = canvas.shape
    if total_h % rows or total_w % cols:
        raise ShapeError(f"Rejilla de {total_h}×{total_w} no divisible en {rows}×{cols}")
    height, width = total_h // rows, total_w // cols
    grid = canvas.reshape(channels, rows, height, cols, width).transpose(1, 3, 0, 2, 4)
    return grid.astype(np.float64) / 255.0


def to_display(measurement: np.ndarray, image_shape: Sequence[int]) -> np.ndarray:
    """Coloca una medida de otra forma centrada sobre un lienzo del tamaño de la imagen"""
    channels, height, width = image_shape
    canvas = np.zeros((channels, height, width))
    measurement = np.asarray(measurement, dtype=np.float64)
    if measurement.ndim != 3:
        return canvas
    if measurement.shape[0] == 1 and channels != 1:
        measurement = np.repeat(measurement, channels, axis=0)
    m_h, m_w = measurement.shape[1:]
    top, left = (height - m_h) // 2, (width - m_w) // 2
    canvas[:, top:top + m_h, left:left + m_w] = measurement[:channels, :height, :width]
    return canvas


def save_comparison_strip(target: np.ndarray, measurement: np.ndarray, restored: np.ndarray,
                          path: Union[str, Path]) -> Path:
    target = np.asarray(target)
    panels = np.stack([target, to_display(measurement, target.shape), np.asarray(restored)])
    return save_grid([panels], path)
