"""
Persistencia binaria de modelos: cabecera "NFCK", JSON de configuración y registros de parámetros

Formato (little-endian)::

    b"NFCK" | u32 versión | u32 longitud JSON | JSON UTF-8 |
    { u16 len(nombre) | nombre | u8 dtype (0=f32, 1=f64) | u8 rango | u32 dims... | valores }*

Los registros se escriben en orden lexicográfico de nombre.
"""
import json
from pathlib import Path
from typing import Union

import numpy as np
from loguru import logger

from .errors import CheckpointError
from .flow_model import FlowModel, FlowModelFactory
from .models import FlowConfig

MAGIC = b"NFCK"
VERSION = 1
DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def _tag_for(dtype: np.dtype) -> int:
    return 1 if np.dtype(dtype) == np.float64 else 0


def _u32(value: int) -> bytes:
    return np.array([value], dtype="<u4").tobytes()


class _Reader:
    """Cursor sobre el buffer que reporta el offset de cada fallo"""

    def __init__(self, buffer: bytes):
        self.buffer = buffer
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.buffer):
            raise CheckpointError(f"Archivo truncado leyendo {what}", self.offset)
        chunk = self.buffer[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def scalar(self, dtype: str, what: str) -> int:
        size = np.dtype(dtype).itemsize
        return int(np.frombuffer(self.take(size, what), dtype=dtype)[0])

    @property
    def exhausted(self) -> bool:
        return self.offset >= len(self.buffer)


def save_checkpoint(model: FlowModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    header = {
        "flow_config": model.config.model_dump(mode="json"),
        "actnorm_initialized": {a.name: a.initialized for a in model.actnorms()},
        "step": model.training_step,
    }
    header_bytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")

    parts = [MAGIC, _u32(VERSION), _u32(len(header_bytes)), header_bytes]
    for name, param in sorted(model.named_parameters().items()):
        encoded_name = name.encode("utf-8")
        tag = _tag_for(param.dtype)
        parts.append(np.array([len(encoded_name)], dtype="<u2").tobytes())
        parts.append(encoded_name)
        parts.append(np.array([tag, param.ndim], dtype="<u1").tobytes())
        parts.append(np.array(param.shape, dtype="<u4").tobytes())
        parts.append(np.ascontiguousarray(param.data, dtype=DTYPE_TAGS[tag]).tobytes())

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(parts))
    logger.info(f"Checkpoint guardado en {path} ({model.num_parameters} parámetros, paso {model.training_step})")
    return path


def load_checkpoint(path: Union[str, Path]) -> FlowModel:
    path = Path(path)
    reader = _Reader(path.read_bytes())

    if reader.take(4, "magic") != MAGIC:
        raise CheckpointError("Magic inválido, no es un checkpoint NFCK", 0)
    version = reader.scalar("<u4", "versión")
    if version != VERSION:
        raise CheckpointError(f"Versión {version} no soportada", 4)
    header_len = reader.scalar("<u4", "longitud de cabecera")
    header_offset = reader.offset
    try:
        header = json.loads(reader.take(header_len, "cabecera JSON").decode("utf-8"))
        config = FlowConfig(**header["flow_config"])
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"Cabecera inválida: {e}", header_offset) from e

    model = FlowModelFactory.build(config, seed=0)
    params = model.named_parameters()
    loaded = set()
    while not reader.exhausted:
        record_offset = reader.offset
        name_len = reader.scalar("<u2", "longitud de nombre")
        name = reader.take(name_len, "nombre de parámetro").decode("utf-8", errors="replace")
        tag = reader.scalar("<u1", "dtype")
        rank = reader.scalar("<u1", "rango")
        if tag not in DTYPE_TAGS:
            raise CheckpointError(f"dtype desconocido {tag} en {name}", record_offset)
        shape = tuple(int(d) for d in np.frombuffer(reader.take(4 * rank, "dimensiones"), dtype="<u4"))
        dtype = DTYPE_TAGS[tag]
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(reader.take(count * dtype.itemsize, f"valores de {name}"), dtype=dtype)
        if name not in params:
            raise CheckpointError(f"Parámetro desconocido {name}", record_offset)
        if params[name].shape != shape:
            raise CheckpointError(f"Forma {shape} de {name} no coincide con {params[name].shape}", record_offset)
        params[name].data[...] = values.reshape(shape).astype(model.dtype)
        loaded.add(name)

    missing = sorted(set(params) - loaded)
    if missing:
        raise CheckpointError(f"Faltan {len(missing)} parámetros, p. ej. {missing[0]}", reader.offset)

    flags = header.get("actnorm_initialized", {})
    if not all(flags.values()):
        logger.warning("El checkpoint contiene actnorms sin inicializar; se marcan como inicializadas")
    model.mark_initialized()
    model.training_step = int(header.get("step", 0))
    logger.info(f"Checkpoint cargado desde {path} (paso {model.training_step})")
    return model
