"""
Quantizer Module - Cuantización post-entrenamiento
==================================================

Búsqueda del factor de escala por tensor, selección del formato por red
y sesgos en punto fijo de 16 bits. Sin reentrenamiento.
"""

from .scale import ScaleSearch, quantize_tensor, dequantize_tensor, tensor_mse, search_scale
from .bias import quantize_bias, choose_bias_frac_bits
from .scheme import QuantScheme, QuantReport, TensorMse, FormatScore
from .search import (
    candidate_formats,
    tied_groups,
    network_tensors,
    search_tensors,
    scheme_for,
    search_format,
)

__all__ = [
    "ScaleSearch",
    "quantize_tensor",
    "dequantize_tensor",
    "tensor_mse",
    "search_scale",
    "quantize_bias",
    "choose_bias_frac_bits",
    "QuantScheme",
    "QuantReport",
    "TensorMse",
    "FormatScore",
    "candidate_formats",
    "tied_groups",
    "network_tensors",
    "search_tensors",
    "scheme_for",
    "search_format",
]
