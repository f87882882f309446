"""
Quantizer Scale - Cuantización por tensor y búsqueda del factor de escala
=========================================================================

V_lfp = quan(V × 2^sf) con redondeo al más cercano y saturación;
la descuantización es decode(V_lfp) / 2^sf y el error se mide como MSE.
"""

import logging
from typing import NamedTuple

import numpy as np

from errors import DegenerateTensorError, UsageError
from lpfp import LpfpFormat, decode_array, encode_array

logger = logging.getLogger(__name__)


class ScaleSearch(NamedTuple):
    """Resultado de `search_scale`."""
    sf: int
    mse: float


def quantize_tensor(values: np.ndarray, fmt: LpfpFormat, sf: int) -> np.ndarray:
    """Códigos LPFP (uint8) de encode(v × 2^sf) elemento a elemento."""
    values = np.asarray(values, dtype=np.float64)
    return encode_array(np.ldexp(values, sf), fmt)


def dequantize_tensor(codes: np.ndarray, fmt: LpfpFormat, sf: int) -> np.ndarray:
    """decode(código) / 2^sf en float64 (exacto)."""
    return np.ldexp(decode_array(codes, fmt), -sf)


def tensor_mse(values: np.ndarray, fmt: LpfpFormat, sf: int) -> float:
    """Error cuadrático medio entre el tensor y su versión cuantizada."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DegenerateTensorError("tensor vacío")
    error = dequantize_tensor(quantize_tensor(values, fmt, sf), fmt, sf) - values
    return float(np.mean(error * error))


def search_scale(
    values: np.ndarray,
    fmt: LpfpFormat,
    sf_window: tuple[int, int] = (-16, 16),
) -> ScaleSearch:
    """
    Factor de escala que minimiza el MSE dentro de la ventana.

    Args:
        values: Tensor de precisión completa
        fmt: Formato LPFP
        sf_window: Ventana cerrada [sf_min, sf_max]

    Returns:
        ScaleSearch(sf, mse); en empate gana el sf más pequeño

    Raises:
        DegenerateTensorError: si el tensor está vacío
        UsageError: si la ventana está vacía
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise DegenerateTensorError("search_scale: tensor vacío")
    sf_min, sf_max = sf_window
    if sf_min > sf_max:
        raise UsageError(f"ventana de sf vacía: [{sf_min}, {sf_max}]")

    candidates = np.arange(sf_min, sf_max + 1)
    mses = np.array([tensor_mse(values, fmt, int(sf)) for sf in candidates])
    best = int(np.argmin(mses))
    return ScaleSearch(int(candidates[best]), float(mses[best]))
