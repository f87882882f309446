"""
LPFP Module - Formatos de coma flotante de baja precisión
=========================================================

Formatos MaEb (signo, mantisa, exponente) de hasta 8 bits con
subnormales y saturación, y su codificación exacta.
"""

from .format import (
    ExactReal,
    LpfpFormat,
    LpfpCode,
    CodeFields,
    decode,
    encode,
    max_value,
    min_value,
    code_fields,
    magnitude_grid,
    decode_array,
    encode_array,
    encode_scaled,
    formats_with_width,
    parse_format_list,
    format_table,
)

__all__ = [
    "ExactReal",
    "LpfpFormat",
    "LpfpCode",
    "CodeFields",
    "decode",
    "encode",
    "max_value",
    "min_value",
    "code_fields",
    "magnitude_grid",
    "decode_array",
    "encode_array",
    "encode_scaled",
    "formats_with_width",
    "parse_format_list",
    "format_table",
]
