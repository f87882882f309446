"""
LPFP Format - Formatos minifloat MaEb y codificación exacta
===========================================================

Un número LPFP tiene 1 bit de signo, `a` bits de mantisa y `b` bits de
exponente, dispuestos en ese orden (S | M | E) del bit más significativo
al menos significativo. No hay Inf ni NaN: el exponente máximo es normal
y la codificación satura al máximo representable.

Valores:
- normal (E > 0):     (-1)^S × 1.M × 2^(E - Eb)
- subnormal (E = 0):  (-1)^S × 0.M × 2^(1 - Eb)
- sin exponente (b = 0): (-1)^S × 0.M   (punto fijo puro)

con Eb = 2^(b-1) - 1 (0 cuando b = 0).

Internamente todo código se describe como significando entero `sig`
(a+1 bits, con el bit oculto) y exponente "crudo" `raw` (el que ve el
sumador de exponentes, sin sesgo):

    valor = (-1)^S × sig × 2^(raw - Eb - a)
"""

import re
import bisect
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from errors import FormatSpecError, NonFiniteValueError

logger = logging.getLogger(__name__)

# Valor exacto de referencia (racional de precisión arbitraria)
ExactReal = Fraction

_FORMAT_PATTERN = re.compile(r"^\s*M(\d+)E(\d+)\s*$", re.IGNORECASE)

MAX_TOTAL_BITS = 8


@dataclass(frozen=True)
class LpfpFormat:
    """Formato MaEb: `mantissa_bits` = a, `exponent_bits` = b."""
    mantissa_bits: int
    exponent_bits: int

    def __post_init__(self):
        if self.mantissa_bits < 1:
            raise FormatSpecError(f"mantissa_bits debe ser >= 1 (recibido {self.mantissa_bits})")
        if self.exponent_bits < 0:
            raise FormatSpecError(f"exponent_bits debe ser >= 0 (recibido {self.exponent_bits})")
        if 1 + self.mantissa_bits + self.exponent_bits > MAX_TOTAL_BITS:
            raise FormatSpecError(
                f"M{self.mantissa_bits}E{self.exponent_bits} ocupa más de {MAX_TOTAL_BITS} bits"
            )

    @classmethod
    def parse(cls, text: str) -> "LpfpFormat":
        """
        Interpreta una cadena "MaEb" (p. ej. "M4E3").

        Raises:
            FormatSpecError: si la cadena no tiene la forma MaEb o el formato es inválido
        """
        match = _FORMAT_PATTERN.match(text or "")
        if not match:
            raise FormatSpecError(f"formato inválido: '{text}' (se espera MaEb, p. ej. M4E3)")
        return cls(int(match.group(1)), int(match.group(2)))

    @property
    def name(self) -> str:
        return f"M{self.mantissa_bits}E{self.exponent_bits}"

    def __str__(self) -> str:
        return self.name

    @property
    def total_bits(self) -> int:
        return 1 + self.mantissa_bits + self.exponent_bits

    @property
    def code_count(self) -> int:
        return 1 << self.total_bits

    @property
    def magnitude_count(self) -> int:
        return 1 << (self.mantissa_bits + self.exponent_bits)

    def bias(self) -> int:
        """Sesgo del exponente: 2^(b-1) - 1, o 0 si no hay exponente."""
        if self.exponent_bits == 0:
            return 0
        return (1 << (self.exponent_bits - 1)) - 1

    @property
    def min_raw_exponent(self) -> int:
        """Exponente crudo efectivo de los subnormales (1) o 0 sin exponente."""
        return 1 if self.exponent_bits >= 1 else 0

    @property
    def max_raw_exponent(self) -> int:
        if self.exponent_bits == 0:
            return 0
        return (1 << self.exponent_bits) - 1

    def pack(self, sign: int, mantissa: int, exponent: int) -> int:
        """Compone el patrón de bits S | M | E."""
        return (
            (sign << (self.mantissa_bits + self.exponent_bits))
            | (mantissa << self.exponent_bits)
            | exponent
        )

    def unpack(self, bits: int) -> tuple[int, int, int]:
        """Devuelve (S, M, E) de un patrón de bits."""
        exponent = bits & ((1 << self.exponent_bits) - 1)
        mantissa = (bits >> self.exponent_bits) & ((1 << self.mantissa_bits) - 1)
        sign = bits >> (self.mantissa_bits + self.exponent_bits)
        return sign, mantissa, exponent


@dataclass(frozen=True)
class LpfpCode:
    """Patrón de bits codificado en un formato LPFP."""
    bits: int
    format: LpfpFormat

    def __post_init__(self):
        if not 0 <= self.bits < self.format.code_count:
            raise FormatSpecError(
                f"código {self.bits:#x} fuera de rango para {self.format} "
                f"(máximo {self.format.code_count - 1:#x})"
            )

    @property
    def sign(self) -> int:
        return self.format.unpack(self.bits)[0]

    @property
    def mantissa(self) -> int:
        return self.format.unpack(self.bits)[1]

    @property
    def exponent(self) -> int:
        return self.format.unpack(self.bits)[2]

    @property
    def hidden_bit(self) -> int:
        return 1 if (self.format.exponent_bits >= 1 and self.exponent > 0) else 0

    @property
    def significand(self) -> int:
        """Significando entero a+1 bits (bit oculto incluido)."""
        return (self.hidden_bit << self.format.mantissa_bits) | self.mantissa

    @property
    def raw_exponent(self) -> int:
        """Exponente que recibe el sumador (sin sesgo; 1 para subnormales)."""
        if self.format.exponent_bits == 0:
            return 0
        return self.exponent if self.exponent > 0 else 1

    @property
    def is_subnormal(self) -> bool:
        return self.format.exponent_bits >= 1 and self.exponent == 0

    @property
    def value(self) -> Fraction:
        return decode(self)

    def __int__(self) -> int:
        return self.bits


def decode(code: LpfpCode) -> Fraction:
    """
    Valor exacto de un código LPFP.

    E = 0 usa la regla subnormal; sin bits de exponente el valor es 0.M.
    """
    fmt = code.format
    value = Fraction(code.significand) * Fraction(2) ** (
        code.raw_exponent - fmt.bias() - fmt.mantissa_bits
    )
    return -value if code.sign else value


def max_value(fmt: LpfpFormat) -> Fraction:
    """Mayor valor finito representable."""
    return _exact_magnitudes(fmt)[-1]


def min_value(fmt: LpfpFormat) -> Fraction:
    """Menor valor representable (simétrico: -MAX)."""
    return -max_value(fmt)


def _magnitude_fields(fmt: LpfpFormat, k: int) -> tuple[int, int]:
    """Índice de magnitud k -> (M, E). El orden de k es el orden de valor."""
    if fmt.exponent_bits == 0:
        return k, 0
    return k & ((1 << fmt.mantissa_bits) - 1), k >> fmt.mantissa_bits


@lru_cache(maxsize=None)
def _exact_magnitudes(fmt: LpfpFormat) -> tuple[Fraction, ...]:
    """Magnitudes no negativas ordenadas por índice k (crecientes)."""
    values = []
    for k in range(fmt.magnitude_count):
        mantissa, exponent = _magnitude_fields(fmt, k)
        values.append(decode(LpfpCode(fmt.pack(0, mantissa, exponent), fmt)))
    return tuple(values)


@lru_cache(maxsize=None)
def _magnitude_bits(fmt: LpfpFormat) -> np.ndarray:
    """Índice k -> patrón de bits sin signo."""
    table = np.empty(fmt.magnitude_count, dtype=np.int64)
    for k in range(fmt.magnitude_count):
        mantissa, exponent = _magnitude_fields(fmt, k)
        table[k] = fmt.pack(0, mantissa, exponent)
    return table


@lru_cache(maxsize=None)
def magnitude_grid(fmt: LpfpFormat) -> np.ndarray:
    """Magnitudes representables en float64 (exactas) ordenadas crecientes."""
    return np.array([float(v) for v in _exact_magnitudes(fmt)], dtype=np.float64)


def _nearest_index(fmt: LpfpFormat, magnitude: Fraction) -> int:
    """Índice de la magnitud más cercana; empate -> índice par; satura en MAX."""
    grid = _exact_magnitudes(fmt)
    if magnitude >= grid[-1]:
        return len(grid) - 1
    hi = bisect.bisect_left(grid, magnitude)
    if grid[hi] == magnitude:
        return hi
    lo = hi - 1
    below = magnitude - grid[lo]
    above = grid[hi] - magnitude
    if below < above:
        return lo
    if above < below:
        return hi
    return lo if lo % 2 == 0 else hi


def encode(x, fmt: LpfpFormat) -> LpfpCode:
    """
    Codifica un valor al código de valor más cercano, con saturación.

    Args:
        x: Valor finito (Fraction, int o float; los float se toman exactos)
        fmt: Formato destino

    Returns:
        Código cuyo valor es el más cercano a x (empates a mantisa par);
        x <= MIN da MIN, x >= MAX da MAX y el cero siempre es +0.

    Raises:
        NonFiniteValueError: si x es NaN o infinito
    """
    if isinstance(x, float) and not math.isfinite(x):
        raise NonFiniteValueError(f"encode: valor no finito {x}")
    value = Fraction(x)
    k = _nearest_index(fmt, abs(value))
    sign = 1 if (value < 0 and k > 0) else 0
    bits = int(_magnitude_bits(fmt)[k]) | (sign << (fmt.mantissa_bits + fmt.exponent_bits))
    return LpfpCode(bits, fmt)


class CodeFields(NamedTuple):
    """Campos de todos los códigos de un formato, indexados por patrón de bits."""
    sign: np.ndarray
    mantissa: np.ndarray
    hidden: np.ndarray
    significand: np.ndarray
    raw_exponent: np.ndarray
    value: np.ndarray


@lru_cache(maxsize=None)
def code_fields(fmt: LpfpFormat) -> CodeFields:
    """Tablas (longitud 2^(1+a+b)) con los campos de cada código."""
    n = fmt.code_count
    sign = np.empty(n, dtype=np.int64)
    mantissa = np.empty(n, dtype=np.int64)
    hidden = np.empty(n, dtype=np.int64)
    raw = np.empty(n, dtype=np.int64)
    value = np.empty(n, dtype=np.float64)
    for bits in range(n):
        code = LpfpCode(bits, fmt)
        sign[bits] = code.sign
        mantissa[bits] = code.mantissa
        hidden[bits] = code.hidden_bit
        raw[bits] = code.raw_exponent
        value[bits] = float(decode(code))
    significand = (hidden << fmt.mantissa_bits) | mantissa
    for table in (sign, mantissa, hidden, significand, raw, value):
        table.flags.writeable = False
    return CodeFields(sign, mantissa, hidden, significand, raw, value)


def decode_array(codes: np.ndarray, fmt: LpfpFormat) -> np.ndarray:
    """Decodifica un array de códigos a float64 (exacto)."""
    return code_fields(fmt).value[np.asarray(codes, dtype=np.int64)]


def encode_array(values: np.ndarray, fmt: LpfpFormat) -> np.ndarray:
    """
    Versión vectorizada de `encode` para float64.

    La comparación con el punto medio es exacta en float64: vecinos de la
    rejilla difieren como mucho en un factor 2 y tienen pocos bits significativos.
    """
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError("encode_array: los valores deben ser finitos")

    grid = magnitude_grid(fmt)
    magnitude = np.minimum(np.abs(values), grid[-1])
    hi = np.searchsorted(grid, magnitude, side="left")
    lo = np.maximum(hi - 1, 0)
    mid = (grid[lo] + grid[hi]) * 0.5

    tie_choice = np.where(lo % 2 == 0, lo, hi)
    k = np.where(magnitude < mid, lo, np.where(magnitude > mid, hi, tie_choice))
    k = np.where(grid[hi] == magnitude, hi, k)

    sign = ((values < 0) & (k > 0)).astype(np.int64)
    bits = _magnitude_bits(fmt)[k] | (sign << (fmt.mantissa_bits + fmt.exponent_bits))
    return bits.astype(np.uint8)


def _is_wide(values: np.ndarray) -> bool:
    if values.dtype == object:
        return True
    if values.size == 0:
        return False
    return int(np.max(np.abs(values))) > (1 << 53)


def encode_scaled(
    integers: np.ndarray,
    exp2,
    fmt: LpfpFormat,
    divisor: int = 1,
) -> np.ndarray:
    """
    Codifica exactamente `integers × 2^exp2 / divisor`.

    Es el único punto con pérdida del datapath: una sola cuantización al
    más cercano, sin dobles redondeos. Los enteros de hasta 53 bits van por
    float64 (exacto); el resto y los divisores que no son potencia de dos
    se resuelven con racionales.

    Args:
        integers: Array de enteros (int64 u object)
        exp2: Exponente de escala (escalar o array con la forma de integers)
        fmt: Formato destino
        divisor: Divisor entero positivo (media de pooling)
    """
    integers = np.asarray(integers)
    exps = np.broadcast_to(np.asarray(exp2, dtype=np.int64), integers.shape)

    if divisor & (divisor - 1) == 0:
        exps = exps - (divisor.bit_length() - 1)
        if not _is_wide(integers):
            return encode_array(np.ldexp(integers.astype(np.float64), exps), fmt)
        divisor = 1

    flat = [
        encode(Fraction(int(v)) * Fraction(2) ** int(e) / divisor, fmt).bits
        for v, e in zip(integers.ravel(), exps.ravel())
    ]
    return np.array(flat, dtype=np.uint8).reshape(integers.shape)


def formats_with_width(total_bits: int) -> list[LpfpFormat]:
    """Todos los MaEb (a >= 1) de un ancho total dado, de más mantisa a menos."""
    if not 2 <= total_bits <= MAX_TOTAL_BITS:
        raise FormatSpecError(f"ancho total fuera de rango: {total_bits}")
    return [
        LpfpFormat(a, total_bits - 1 - a)
        for a in range(total_bits - 1, 0, -1)
    ]


def parse_format_list(text: str) -> list[LpfpFormat]:
    """Interpreta "M4E3,M5E2,..." conservando el orden y sin duplicados."""
    formats: list[LpfpFormat] = []
    for item in (text or "").split(","):
        if not item.strip():
            continue
        fmt = LpfpFormat.parse(item)
        if fmt not in formats:
            formats.append(fmt)
    if not formats:
        raise FormatSpecError("lista de formatos vacía")
    return formats


def format_table(fmt: LpfpFormat, by_code: bool = False) -> list[tuple[LpfpCode, Fraction]]:
    """Todos los códigos con su valor, ordenados por valor (o por código)."""
    rows = [(LpfpCode(bits, fmt), decode(LpfpCode(bits, fmt))) for bits in range(fmt.code_count)]
    if not by_code:
        rows.sort(key=lambda row: (row[1], row[0].bits))
    return rows
