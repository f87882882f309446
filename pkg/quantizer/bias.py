"""
Quantizer Bias - Sesgos en punto fijo de 16 bits
================================================
"""

import logging

import numpy as np

from errors import BiasOverflowError

logger = logging.getLogger(__name__)

BIAS_BITS = 16
_BIAS_MAX = (1 << (BIAS_BITS - 1)) - 1

# Límite inferior de la búsqueda de bits fraccionarios
MIN_BIAS_FRAC_BITS = -15


def quantize_bias(bias: np.ndarray, frac_bits: int) -> np.ndarray:
    """
    Redondea el sesgo a complemento a dos de 16 bits en escala 2^-frac_bits.

    Empates al par. Exacto cuando bias·2^frac_bits ya es entero. El rango
    es simétrico: |valor escalado| <= 2^15 - 1, así que -2^15 se rechaza.

    Raises:
        BiasOverflowError: si algún elemento no cabe en 16 bits
    """
    scaled = np.rint(np.ldexp(np.asarray(bias, dtype=np.float64), frac_bits))
    worst = float(np.max(np.abs(scaled))) if scaled.size else 0.0
    if worst > _BIAS_MAX:
        raise BiasOverflowError(
            f"sesgo fuera de 16 bits con frac_bits={frac_bits} (|valor| escalado {worst:.0f})"
        )
    return scaled.astype(np.int64)


def choose_bias_frac_bits(
    bias: np.ndarray,
    max_frac_bits: int = 24,
    min_frac_bits: int = MIN_BIAS_FRAC_BITS,
) -> int:
    """
    Mayor número de bits fraccionarios que no desborda.

    Raises:
        BiasOverflowError: si ni siquiera `min_frac_bits` basta
    """
    for frac_bits in range(max_frac_bits, min_frac_bits - 1, -1):
        try:
            quantize_bias(bias, frac_bits)
        except BiasOverflowError:
            continue
        return frac_bits
    raise BiasOverflowError(f"el sesgo no cabe en 16 bits ni con frac_bits={min_frac_bits}")
