"""
Fuentes de datos: ingesta de directorios de imágenes y conjuntos sintéticos de juguete
"""
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from loguru import logger
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, ConfigDict, Field

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


class IngestResult(BaseModel):
    """Imágenes de 8 bits en orden lexicográfico de archivo"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    images: np.ndarray = Field(..., description="uint8 con forma N×C×H×W")
    names: List[str] = Field(default_factory=list)
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.names)


def center_crop(image: Image.Image) -> Image.Image:
    width, height = image.size
    if width == height:
        return image
    side = min(width, height)
    left, top = (width - side) // 2, (height - side) // 2
    return image.crop((left, top, left + side, top + side))


def _load(path: Path, target: Tuple[int, int], mode: str) -> np.ndarray:
    with Image.open(path) as handle:
        image = center_crop(handle.convert(mode))
        height, width = target
        if image.size != (width, height):
            image = image.resize((width, height), Image.BILINEAR)
        array = np.asarray(image, dtype=np.uint8)
    return array[None] if array.ndim == 2 else array.transpose(2, 0, 1)


def ingest(directory: Union[str, Path], target: Tuple[int, int] = (32, 32), channels: int = 3) -> IngestResult:
    """
    Lee un directorio de imágenes: recorte central a cuadrado y resize bilineal.

    Los archivos ilegibles se omiten con un warning y se cuentan en ``skipped``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"No existe el directorio de datos {directory}")
    mode = "RGB" if channels == 3 else "L"
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)

    images, names, skipped = [], [], 0
    for path in files:
        try:
            images.append(_load(path, target, mode))
            names.append(path.name)
        except (OSError, UnidentifiedImageError, ValueError) as e:
            skipped += 1
            logger.warning(f"Imagen omitida {path.name}: {e}")

    shape = (0, channels) + tuple(target)
    stacked = np.stack(images) if images else np.zeros(shape, dtype=np.uint8)
    logger.info(f"Ingesta de {directory}: {len(names)} imágenes, {skipped} omitidas")
    return IngestResult(images=stacked, names=names, skipped=skipped)


def synthetic_shapes(count: int, size: int = 8, channels: int = 1, seed: int = 0) -> np.ndarray:
    """Cuadrados, discos y barras claros sobre fondo oscuro con ruido; uint8 N×C×size×size"""
    rng = np.random.default_rng(seed)
    rows, cols = np.mgrid[0:size, 0:size]
    images = np.empty((count, channels, size, size), dtype=np.uint8)
    for i in range(count):
        background = rng.integers(0, 40, size=(channels, size, size))
        extent = int(rng.integers(max(2, size // 4), max(3, size // 2) + 1))
        top, left = rng.integers(0, size - extent + 1, size=2)
        kind = rng.integers(3)
        if kind == 0:
            mask = (rows >= top) & (rows < top + extent) & (cols >= left) & (cols < left + extent)
        elif kind == 1:
            radius = extent / 2.0
            mask = (rows + 0.5 - top - radius) ** 2 + (cols + 0.5 - left - radius) ** 2 <= radius ** 2
        else:
            mask = (rows >= top) & (rows < top + max(1, extent // 3)) | (cols == left)
        intensity = rng.integers(150, 256, size=(channels, 1, 1))
        images[i] = np.where(mask[None], intensity, background).astype(np.uint8)
    return images


def gaussian_mixture_2d(count: int, seed: int = 0, separation: float = 2.0, std: float = 0.5) -> np.ndarray:
    """Mezcla equiprobable de dos gaussianas en (±separation, 0); forma N×2×1×1"""
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=count)
    points = rng.standard_normal((count, 2)) * std
    points[:, 0] += signs * separation
    return points.reshape(count, 2, 1, 1)
