"""
PE Arith - Datapath bit-exacto del elemento de proceso
======================================================

Multiplicación LPFP -> producto flotante exacto -> alineación sin pérdida
a punto fijo -> acumulación en punto fijo -> post-proceso (activación,
intermedio de 16 bits) -> conversión final a LPFP.

La única etapa con pérdida es `writeback`; todo lo anterior es aritmética
entera exacta.

Convenciones:
- Un operando LPFP en punto fijo es ±sig << (raw - raw_min), con
  `operand_frac_bits(fmt) = a + Eb - raw_min` bits fraccionarios.
- Un producto alineado tiene `product_frac_bits(fmt) = 2·operand_frac_bits`
  bits fraccionarios (12 para M4E3).
- El sesgo de los exponentes no entra en los sumadores; se aplica una vez
  al convertir (`2·Eb` dentro de los bits fraccionarios).
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np

from errors import AccumulatorOverflowError, FormatSpecError, ManifestError, UsageError
from lpfp import LpfpCode, LpfpFormat, code_fields, encode_scaled, max_value

logger = logging.getLogger(__name__)

# Ancho del intermedio que sale del PE hacia el OFMB
INTERMEDIATE_BITS = 16
_I16_MIN = -(1 << (INTERMEDIATE_BITS - 1))
_I16_MAX = (1 << (INTERMEDIATE_BITS - 1)) - 1

# Bits de margen del acumulador sobre el producto alineado
ACCUMULATOR_HEADROOM_BITS = 20

OfmbMode = Literal["output", "accumulator"]


# =============================================================================
# Activación del post-proceso
# =============================================================================

@dataclass(frozen=True)
class Activation:
    """
    Activación aplicada en punto fijo.

    `leaky` sólo admite pendientes potencia de dos: la pendiente es 2^-shift.
    """
    kind: Literal["none", "relu", "leaky"] = "none"
    shift: int = 0

    @classmethod
    def parse(cls, text: str) -> "Activation":
        """Interpreta "none", "relu" o "leaky:<pendiente>"."""
        text = (text or "none").strip().lower()
        if text in ("none", "relu"):
            return cls(text)
        if text.startswith("leaky:"):
            try:
                slope = Fraction(text.split(":", 1)[1])
            except (ValueError, ZeroDivisionError) as e:
                raise ManifestError(f"pendiente leaky inválida: '{text}'") from e
            if not (0 < slope < 1) or slope.numerator != 1 or slope.denominator & (slope.denominator - 1):
                raise ManifestError(
                    f"pendiente leaky {slope} no es una potencia de dos en (0, 1)"
                )
            return cls("leaky", slope.denominator.bit_length() - 1)
        raise ManifestError(f"activación desconocida: '{text}'")

    @property
    def slope(self) -> Fraction:
        if self.kind == "leaky":
            return Fraction(1, 1 << self.shift)
        return Fraction(0) if self.kind == "relu" else Fraction(1)

    def __str__(self) -> str:
        if self.kind == "leaky":
            return f"leaky:{float(self.slope)!r}"
        return self.kind

    def apply_float(self, values: np.ndarray) -> np.ndarray:
        """Activación en coma flotante (camino de referencia)."""
        if self.kind == "relu":
            return np.maximum(values, 0.0)
        if self.kind == "leaky":
            return np.where(values < 0, np.ldexp(values, -self.shift), values)
        return values

    def apply_fixed(self, values: np.ndarray, exp2) -> tuple[np.ndarray, np.ndarray]:
        """
        Activación sobre enteros en escala 2^exp2.

        Returns:
            (enteros, exponentes por elemento); leaky baja el exponente
            de los negativos en lugar de desplazar el entero.
        """
        exps = np.broadcast_to(np.asarray(exp2, dtype=np.int64), np.shape(values))
        if self.kind == "relu":
            return np.where(values < 0, 0, values).astype(values.dtype), exps
        if self.kind == "leaky":
            return values, np.where(values < 0, exps - self.shift, exps)
        return values, exps


NO_ACTIVATION = Activation()


# =============================================================================
# Parámetros derivados del formato
# =============================================================================

def operand_frac_bits(fmt: LpfpFormat) -> int:
    """Bits fraccionarios de un operando en punto fijo."""
    return fmt.mantissa_bits + fmt.bias() - fmt.min_raw_exponent


def product_frac_bits(fmt: LpfpFormat) -> int:
    """Bits fraccionarios de un producto alineado (12 para M4E3)."""
    return 2 * operand_frac_bits(fmt)


def aligned_width(fmt: LpfpFormat) -> int:
    """Ancho con signo que necesita el mayor producto alineado (23 para M4E3)."""
    max_sig = (1 << (fmt.mantissa_bits + 1)) - 1
    if fmt.exponent_bits == 0:
        max_sig = (1 << fmt.mantissa_bits) - 1
    magnitude = (max_sig * max_sig) << (2 * (fmt.max_raw_exponent - fmt.min_raw_exponent))
    return magnitude.bit_length() + 1


def accumulator_bits(fmt: LpfpFormat, configured: int = 48) -> int:
    """Ancho del acumulador: el configurado o el producto más 20 bits de margen."""
    return max(configured, aligned_width(fmt) + ACCUMULATOR_HEADROOM_BITS)


def ofmb_frac_bits(fmt: LpfpFormat) -> int:
    """
    Bits fraccionarios del intermedio de 16 bits en escala de salida.

    Deja la parte entera de MAX y dos bits de margen sobre ella.
    """
    integer_bits = math.ceil(max_value(fmt)).bit_length()
    return INTERMEDIATE_BITS - 1 - integer_bits - 2


def needs_wide_ints(fmt: LpfpFormat, terms: int = 1, configured: int = 48) -> bool:
    """True si la acumulación no cabe en int64 y hace falta aritmética de Python."""
    bound_bits = aligned_width(fmt) + max(terms, 1).bit_length()
    return accumulator_bits(fmt, configured) > 63 or bound_bits > 62


# =============================================================================
# Tipos del datapath
# =============================================================================

@dataclass(frozen=True)
class ExactProduct:
    """Producto flotante exacto de dos códigos LPFP."""
    sign: int
    mantissa_scaled: int
    exp_sum: int
    raw_exp_sum: int
    format: LpfpFormat

    @property
    def mantissa_bits(self) -> int:
        return self.format.mantissa_bits

    @property
    def value(self) -> Fraction:
        value = Fraction(self.mantissa_scaled) * Fraction(2) ** (
            self.exp_sum - 2 * self.format.mantissa_bits
        )
        return -value if self.sign else value


@dataclass(frozen=True)
class AlignedFixed:
    """Producto alineado a punto fijo: value × 2^-frac_bits."""
    value: int
    frac_bits: int
    width: int

    @property
    def exact(self) -> Fraction:
        return Fraction(self.value) / Fraction(2) ** self.frac_bits


@dataclass(frozen=True)
class Accum:
    """Acumulador de punto fijo con signo de `width` bits."""
    value: int
    frac_bits: int
    width: int = 48

    @classmethod
    def zero(cls, fmt: LpfpFormat, configured: int = 48) -> "Accum":
        return cls(0, product_frac_bits(fmt), accumulator_bits(fmt, configured))

    @property
    def exact(self) -> Fraction:
        return Fraction(self.value) / Fraction(2) ** self.frac_bits


def _check_range(value: int, width: int, layer: str | None, position: tuple | None) -> None:
    limit = 1 << (width - 1)
    if not -limit <= value < limit:
        where = f" en la capa '{layer}'" if layer else ""
        at = f", posición {position}" if position is not None else ""
        raise AccumulatorOverflowError(
            f"desbordamiento del acumulador de {width} bits{where}{at}",
            layer=layer,
            position=position,
        )


# =============================================================================
# Operaciones escalares
# =============================================================================

def lpfp_multiply(x: LpfpCode, y: LpfpCode) -> ExactProduct:
    """
    Multiplica dos códigos LPFP sin pérdida.

    El producto de significandos se descompone como el multiplicador de
    a bits más un término extra que recoge los bits ocultos:

        sig_x·sig_y = Mx·My + ((hx·hy·2^a + hy·Mx + hx·My) << a)

    Para operandos normales es la identidad 0.Mx·0.My + 1.Mx + 0.My = 1.Mx·1.My
    (en escala 2^-2a); un subnormal aporta bit oculto 0 y exponente efectivo 1.

    Raises:
        FormatSpecError: si los operandos tienen formatos distintos
    """
    if x.format != y.format:
        raise FormatSpecError(f"formatos distintos en la multiplicación: {x.format} y {y.format}")

    fmt = x.format
    a = fmt.mantissa_bits
    hx, hy = x.hidden_bit, y.hidden_bit
    mx, my = x.mantissa, y.mantissa

    extra = (hx * hy * (1 << a) + hy * mx + hx * my) << a
    mantissa = mx * my + extra

    raw_sum = x.raw_exponent + y.raw_exponent
    return ExactProduct(
        sign=x.sign ^ y.sign,
        mantissa_scaled=mantissa,
        exp_sum=raw_sum - 2 * fmt.bias(),
        raw_exp_sum=raw_sum,
        format=fmt,
    )


def align(p: ExactProduct) -> AlignedFixed:
    """
    Alinea un producto exacto a la rejilla fija del formato.

    El menor exponente crudo posible queda en el bit 0, así que todo
    producto es un entero exacto: no se descarta ningún bit.
    """
    fmt = p.format
    shift = p.raw_exp_sum - 2 * fmt.min_raw_exponent
    value = p.mantissa_scaled << shift
    return AlignedFixed(
        value=-value if p.sign else value,
        frac_bits=product_frac_bits(fmt),
        width=aligned_width(fmt),
    )


def accumulate(
    acc: Accum,
    v: AlignedFixed,
    layer: str | None = None,
    position: tuple | None = None,
) -> Accum:
    """
    Suma entera exacta de un producto alineado.

    Raises:
        AccumulatorOverflowError: si el resultado no cabe en `acc.width` bits
    """
    if v.frac_bits != acc.frac_bits:
        raise FormatSpecError(
            f"bits fraccionarios incompatibles: acumulador {acc.frac_bits}, producto {v.frac_bits}"
        )
    total = acc.value + v.value
    _check_range(total, acc.width, layer, position)
    return Accum(total, acc.frac_bits, acc.width)


def round_shift_int(value: int, shift: int) -> int:
    """value × 2^shift: exacto si shift >= 0, redondeo al más cercano (empate a par) si no."""
    if shift >= 0:
        return value << shift
    r = -shift
    q = value >> r
    rem = value - (q << r)
    half = 1 << (r - 1)
    if rem > half or (rem == half and q & 1):
        q += 1
    return q


def add_bias(
    acc: Accum,
    bias: int,
    frac_bits: int,
    layer: str | None = None,
    position: tuple | None = None,
) -> Accum:
    """
    Suma un sesgo de 16 bits (bias × 2^-frac_bits) al acumulador.

    Si el sesgo tiene menos bits fraccionarios que el acumulador el
    desplazamiento es exacto; si tiene más se redondea al más cercano.
    """
    term = round_shift_int(int(bias), acc.frac_bits - frac_bits)
    total = acc.value + term
    _check_range(total, acc.width, layer, position)
    return Accum(total, acc.frac_bits, acc.width)


def writeback(
    acc: Accum,
    sf_in: int,
    sf_w: int,
    sf_out: int,
    fmt: LpfpFormat,
    activation: Activation = NO_ACTIVATION,
    truncate16: bool = True,
    ofmb_mode: OfmbMode = "accumulator",
) -> tuple[LpfpCode, int]:
    """
    Convierte un acumulador a LPFP en la escala de salida.

    Returns:
        (código de salida, intermedio de 16 bits)
    """
    codes, inter = writeback_array(
        np.array([acc.value], dtype=object),
        acc.frac_bits,
        sf_in + sf_w,
        sf_out,
        fmt,
        activation,
        truncate16=truncate16,
        ofmb_mode=ofmb_mode,
    )
    return LpfpCode(int(codes[0]), fmt), int(inter[0])


# =============================================================================
# Operaciones vectorizadas
# =============================================================================

def multiply_array(
    x_codes: np.ndarray,
    y_codes: np.ndarray,
    fmt: LpfpFormat,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Productos de significandos directos (sin descomposición).

    Returns:
        (signo, mantissa_scaled, raw_exp_sum)
    """
    fields = code_fields(fmt)
    x = np.asarray(x_codes, dtype=np.int64)
    y = np.asarray(y_codes, dtype=np.int64)
    sign = fields.sign[x] ^ fields.sign[y]
    mantissa = fields.significand[x] * fields.significand[y]
    raw_sum = fields.raw_exponent[x] + fields.raw_exponent[y]
    return sign, mantissa, raw_sum


def align_array(
    sign: np.ndarray,
    mantissa: np.ndarray,
    raw_sum: np.ndarray,
    fmt: LpfpFormat,
) -> np.ndarray:
    """Alineación vectorizada; enteros de Python cuando no cabe en int64."""
    shift = raw_sum - 2 * fmt.min_raw_exponent
    if aligned_width(fmt) > 63:
        mantissa = mantissa.astype(object)
        shift = shift.astype(object)
    value = mantissa << shift
    return np.where(sign == 1, -value, value)


def operand_fixed(codes: np.ndarray, fmt: LpfpFormat, wide: bool = False) -> np.ndarray:
    """Operandos en punto fijo: ±sig << (raw - raw_min), escala 2^-operand_frac_bits."""
    fields = code_fields(fmt)
    codes = np.asarray(codes, dtype=np.int64)
    sig = fields.significand[codes]
    shift = fields.raw_exponent[codes] - fmt.min_raw_exponent
    if wide:
        sig = sig.astype(object)
        shift = shift.astype(object)
    value = sig << shift
    return np.where(fields.sign[codes] == 1, -value, value)


def round_shift(values: np.ndarray, shift) -> np.ndarray:
    """Versión vectorizada de `round_shift_int` (int64 u object)."""
    values = np.asarray(values)
    shift = np.broadcast_to(np.asarray(shift, dtype=np.int64), values.shape)
    if values.dtype == object:
        return np.frompyfunc(round_shift_int, 2, 1)(values, shift.astype(object)).astype(object)

    values = values.astype(np.int64)
    left = np.clip(shift, 0, 62)
    right = np.clip(-shift, 0, 62)
    shifted_left = values << left

    q = values >> right
    rem = values - (q << right)
    half = np.where(right > 0, np.left_shift(1, np.maximum(right - 1, 0)), 0)
    round_up = (right > 0) & ((rem > half) | ((rem == half) & ((q & 1) == 1)))
    shifted_right = q + round_up.astype(np.int64)

    return np.where(shift >= 0, shifted_left, shifted_right)


def saturate16(values: np.ndarray) -> np.ndarray:
    """Satura a entero de 16 bits con signo."""
    if np.asarray(values).dtype == object:
        values = np.array([max(_I16_MIN, min(_I16_MAX, int(v))) for v in np.ravel(values)]).reshape(np.shape(values))
    return np.clip(values, _I16_MIN, _I16_MAX).astype(np.int64)


def _bounded_shift(values: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """round_shift + saturación a 16 bits sin desbordar int64 en desplazamientos grandes."""
    if values.dtype != object:
        # a la izquierda, con |x| >= 1 un desplazamiento de 17 ya satura
        values = np.where(shift > 0, np.clip(values, -(1 << 17), 1 << 17), values)
        shift = np.minimum(shift, 20)
    return saturate16(round_shift(values, shift))


def writeback_array(
    acc: np.ndarray,
    acc_frac_bits: int,
    sf_in_total: int,
    sf_out: int,
    fmt: LpfpFormat,
    activation: Activation = NO_ACTIVATION,
    truncate16: bool = True,
    ofmb_mode: OfmbMode = "accumulator",
) -> tuple[np.ndarray, np.ndarray]:
    """
    Post-proceso y conversión a LPFP de un array de acumuladores.

    El valor real es acc × 2^-(acc_frac_bits + sf_in_total); en la escala
    de salida, acc × 2^exp con exp = sf_out - sf_in_total - acc_frac_bits.

    Intermedio de 16 bits:
    - "accumulator" (por defecto): acumulador desplazado aligned_width - 15 bits
      a la derecha, conservando la escala del acumulador
    - "output": valor en escala de salida, rejilla 2^-ofmb_frac_bits(fmt)
    Con `truncate16` el código sale del intermedio; sin él, del acumulador exacto.

    Returns:
        (códigos uint8, intermedios int64)
    """
    acc = np.asarray(acc)
    exp = sf_out - sf_in_total - acc_frac_bits
    act_values, exps = activation.apply_fixed(acc, exp)

    if ofmb_mode == "output":
        f16 = ofmb_frac_bits(fmt)
        inter = _bounded_shift(act_values, exps + f16)
        inter_exp = np.full(acc.shape, -f16, dtype=np.int64)
    elif ofmb_mode == "accumulator":
        drop = aligned_width(fmt) - (INTERMEDIATE_BITS - 1)
        rel = exps - exp
        inter = _bounded_shift(act_values, rel - drop)
        inter_exp = np.full(acc.shape, exp + drop, dtype=np.int64)
    else:
        raise UsageError(f"modo OFMB desconocido: {ofmb_mode}")

    if truncate16:
        codes = encode_scaled(inter, inter_exp, fmt)
    else:
        codes = encode_scaled(act_values, exps, fmt)
    return codes, inter
