"""
Errors - Jerarquía de excepciones del golden model
==================================================

Cada excepción lleva un código de salida propio; la CLI lo usa
directamente como estado de salida del proceso.
"""


class LpfpError(Exception):
    """Error base del proyecto."""

    exit_code = 1
    category = "error"


class UsageError(LpfpError):
    """Subcomando desconocido o combinación de flags inválida."""

    exit_code = 2
    category = "usage"


class InputFileError(LpfpError):
    """Fichero ausente, ilegible o con tamaño inesperado."""

    exit_code = 3
    category = "input-file"


class FormatSpecError(LpfpError):
    """Formato MaEb inválido o formatos incompatibles entre operandos."""

    exit_code = 4
    category = "format"


class ManifestError(LpfpError):
    """Manifiesto mal formado o red no importable."""

    exit_code = 5
    category = "manifest"


class ShapeError(LpfpError):
    """Formas de tensores incompatibles."""

    exit_code = 6
    category = "shape"


class DegenerateTensorError(LpfpError):
    """Tensor vacío en la búsqueda del factor de escala."""

    exit_code = 7
    category = "degenerate-tensor"


class CalibrationError(LpfpError):
    """Falta la calibración de alguna capa."""

    exit_code = 8
    category = "calibration"


class BiasOverflowError(LpfpError):
    """El sesgo no cabe en 16 bits con los bits fraccionarios pedidos."""

    exit_code = 9
    category = "bias-overflow"


class AccumulatorOverflowError(LpfpError):
    """Desbordamiento del acumulador de punto fijo."""

    exit_code = 10
    category = "accumulator-overflow"

    def __init__(self, message: str, layer: str | None = None, position: tuple | None = None):
        super().__init__(message)
        self.layer = layer
        self.position = position


class PackingError(LpfpError):
    """El empaquetado de cuatro MAC sólo admite mantisas de hasta 4 bits."""

    exit_code = 11
    category = "packing"


class ConfigConstraintError(LpfpError):
    """Configuración de paralelismo que viola Nm·Np = 4·DSP o Pifm·Pofm = Np."""

    exit_code = 12
    category = "constraint"


class EmptyDatasetError(LpfpError):
    """Conjunto de evaluación vacío."""

    exit_code = 13
    category = "empty-dataset"


class ConfigError(LpfpError):
    """config.yaml inválido."""

    exit_code = 14
    category = "config"


class VerificationError(LpfpError):
    """La verificación del empaquetado encontró discrepancias."""

    exit_code = 15
    category = "verification"


class NonFiniteValueError(LpfpError):
    """NaN o infinito donde el formato sólo admite valores finitos."""

    exit_code = 16
    category = "non-finite"


class PersistenceError(LpfpError):
    """No se pudo guardar la ejecución en la base de datos de resultados."""

    exit_code = 17
    category = "persistence"
