"""
Jerarquía de excepciones del motor de flujos y del solver
"""
from typing import Optional


class FlowError(Exception):
    """Raíz de todos los errores del paquete"""


class ShapeError(FlowError, ValueError):
    """Dimensiones incompatibles; el mensaje nombra el eje culpable"""


class DomainError(FlowError, ValueError):
    """Valor fuera del dominio de una operación (log de no positivos, std <= 0)"""


class LayerStateError(FlowError, RuntimeError):
    """Capa usada en un estado inválido (actnorm sin inicializar)"""


class SingularMatrixError(FlowError, ArithmeticError):
    """Matriz de convolución 1x1 numéricamente singular"""


class LatentLayoutError(FlowError, ValueError):
    """Variable latente que no coincide con el layout del modelo"""

    def __init__(self, message: str, chunk_index: Optional[int] = None):
        super().__init__(message)
        self.chunk_index = chunk_index


class NonFiniteError(FlowError, ArithmeticError):
    """Pérdida, objetivo o gradiente no finito"""

    def __init__(self, message: str, step: Optional[int] = None, parameter: Optional[str] = None):
        super().__init__(message)
        self.step = step
        self.parameter = parameter


class CheckpointError(FlowError, ValueError):
    """Archivo de checkpoint mal formado"""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class BenchmarkError(FlowError, ValueError):
    """Configuración de benchmark inválida"""


class OperatorError(FlowError, ValueError):
    """Operador de medida incompatible con el objetivo o la tarea"""
