"""
PE Packing - Cuatro MAC de 4 bits en un multiplicador-sumador ancho
===================================================================

Emula un bloque DSP que calcula P = A × B + C con puertos de 25, 18 y
48 bits. Dos mantisas de activación van en A y dos de peso en B, de modo
que (a + b) × (c + d) = ac + ad + bc + bd deja los cuatro productos en
campos separados de P. Los términos extra de los bits ocultos entran por C
en los mismos campos.

Tabla de desplazamientos (bits, congelada):

    A = Ma + (Mb << 20)                       # 25 bits
    B = Mc + (Md << 10)                       # 18 bits
    C = Ex_ac + (Ex_ad << 10) + (Ex_bc << 20) + (Ex_bd << 30)
    P: ac @ 0, ad @ 10, bc @ 20, bd @ 30      # campos de 10 bits

Cada campo acumula como mucho 31 × 31 = 961 < 2^10, así que no hay
acarreo entre carriles y P < 2^40.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from errors import FormatSpecError, PackingError
from lpfp import LpfpCode, LpfpFormat, code_fields, decode
from .arith import ExactProduct, aligned_width, align_array, lpfp_multiply, multiply_array, product_frac_bits

logger = logging.getLogger(__name__)

PORT_A_BITS = 25
PORT_B_BITS = 18
PORT_C_BITS = 48

FIELD_BITS = 10
FIELD_MASK = (1 << FIELD_BITS) - 1

A_OFFSETS = {"a": 0, "b": 20}
B_OFFSETS = {"c": 0, "d": 10}
LANE_OFFSETS = {"ac": 0, "ad": 10, "bc": 20, "bd": 30}

MAX_PACKED_MANTISSA_BITS = 4


@dataclass(frozen=True)
class QuadPack:
    """Operandos y puertos de una multiplicación empaquetada."""
    operand_a: LpfpCode
    operand_b: LpfpCode
    operand_c: LpfpCode
    operand_d: LpfpCode
    A: int
    B: int
    C: int
    P: int

    def field(self, lane: str) -> int:
        """Campo de 10 bits de un carril ("ac", "ad", "bc", "bd")."""
        return (self.P >> LANE_OFFSETS[lane]) & FIELD_MASK


class QuadMacResult(NamedTuple):
    """Los cuatro productos exactos y el empaquetado que los produjo."""
    ac: ExactProduct
    ad: ExactProduct
    bc: ExactProduct
    bd: ExactProduct
    pack: QuadPack


def _check_packable(fmt: LpfpFormat) -> None:
    if fmt.mantissa_bits > MAX_PACKED_MANTISSA_BITS:
        raise PackingError(
            f"el empaquetado sólo admite mantisas de hasta {MAX_PACKED_MANTISSA_BITS} bits "
            f"({fmt} tiene {fmt.mantissa_bits})"
        )


def _extra_term(h_act, m_act, h_w, m_w, a: int):
    """Término de bits ocultos de un carril, ya en la escala del producto de mantisas."""
    return (h_act * h_w * (1 << a) + h_w * m_act + h_act * m_w) << a


def packed_quad_mac(a: LpfpCode, b: LpfpCode, c: LpfpCode, d: LpfpCode) -> QuadMacResult:
    """
    Cuatro productos LPFP con una sola multiplicación ancha.

    Args:
        a, b: Códigos de activación
        c, d: Códigos de peso

    Raises:
        FormatSpecError: si los cuatro códigos no comparten formato
        PackingError: si el formato tiene más de 4 bits de mantisa
    """
    fmt = a.format
    if any(code.format != fmt for code in (b, c, d)):
        raise FormatSpecError("los cuatro operandos deben compartir formato")
    _check_packable(fmt)

    am = fmt.mantissa_bits
    port_a = a.mantissa + (b.mantissa << A_OFFSETS["b"])
    port_b = c.mantissa + (d.mantissa << B_OFFSETS["d"])
    port_c = (
        (_extra_term(a.hidden_bit, a.mantissa, c.hidden_bit, c.mantissa, am) << LANE_OFFSETS["ac"])
        + (_extra_term(a.hidden_bit, a.mantissa, d.hidden_bit, d.mantissa, am) << LANE_OFFSETS["ad"])
        + (_extra_term(b.hidden_bit, b.mantissa, c.hidden_bit, c.mantissa, am) << LANE_OFFSETS["bc"])
        + (_extra_term(b.hidden_bit, b.mantissa, d.hidden_bit, d.mantissa, am) << LANE_OFFSETS["bd"])
    )
    product = port_a * port_b + port_c
    pack = QuadPack(a, b, c, d, port_a, port_b, port_c, product)

    def lane(x: LpfpCode, y: LpfpCode, name: str) -> ExactProduct:
        raw_sum = x.raw_exponent + y.raw_exponent
        return ExactProduct(
            sign=x.sign ^ y.sign,
            mantissa_scaled=pack.field(name),
            exp_sum=raw_sum - 2 * fmt.bias(),
            raw_exp_sum=raw_sum,
            format=fmt,
        )

    return QuadMacResult(
        ac=lane(a, c, "ac"),
        ad=lane(a, d, "ad"),
        bc=lane(b, c, "bc"),
        bd=lane(b, d, "bd"),
        pack=pack,
    )


def packed_quad_mac_array(
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    d: np.ndarray,
    fmt: LpfpFormat,
) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """
    Versión vectorizada de `packed_quad_mac`.

    Returns:
        Por carril, (signo, mantissa_scaled, raw_exp_sum) extraídos de P
    """
    _check_packable(fmt)
    fields = code_fields(fmt)
    am = fmt.mantissa_bits
    ops = {name: np.asarray(v, dtype=np.int64) for name, v in zip("abcd", (a, b, c, d))}
    m = {name: fields.mantissa[v] for name, v in ops.items()}
    h = {name: fields.hidden[v] for name, v in ops.items()}

    port_a = m["a"] + (m["b"] << A_OFFSETS["b"])
    port_b = m["c"] + (m["d"] << B_OFFSETS["d"])
    port_c = np.zeros_like(port_a)
    for lane_name, offset in LANE_OFFSETS.items():
        x, y = lane_name
        port_c = port_c + (_extra_term(h[x], m[x], h[y], m[y], am) << offset)
    product = port_a * port_b + port_c

    lanes = {}
    for lane_name, offset in LANE_OFFSETS.items():
        x, y = lane_name
        lanes[lane_name] = (
            fields.sign[ops[x]] ^ fields.sign[ops[y]],
            (product >> offset) & FIELD_MASK,
            fields.raw_exponent[ops[x]] + fields.raw_exponent[ops[y]],
        )
    return lanes


@dataclass
class PackingReport:
    """Resultado de la verificación del empaquetado."""
    format: LpfpFormat
    checked: int
    total: int
    mismatches: int
    structured_checked: int
    structured_mismatches: int
    contamination_checked: int
    contamination_failures: int
    max_aligned_magnitude: int
    aligned_width: int
    max_raw_exp_sum: int

    @property
    def passed(self) -> bool:
        return (
            self.mismatches == 0
            and self.structured_mismatches == 0
            and self.contamination_failures == 0
        )

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.checked - self.mismatches}/{self.total}"


def _oracle_aligned(fmt: LpfpFormat) -> np.ndarray:
    """Tabla 2^n × 2^n del producto exacto decode(x)·decode(y) en la rejilla alineada."""
    scale = Fraction(2) ** product_frac_bits(fmt)
    values = [decode(LpfpCode(bits, fmt)) for bits in range(fmt.code_count)]
    table = np.empty((fmt.code_count, fmt.code_count), dtype=object)
    for x, vx in enumerate(values):
        for y, vy in enumerate(values):
            exact = vx * vy * scale
            table[x, y] = exact.numerator if exact.denominator == 1 else exact
    return table


def _lanes_match(lanes, pairs: dict[str, tuple[np.ndarray, np.ndarray]], fmt: LpfpFormat) -> np.ndarray:
    """Compara cada carril con la multiplicación independiente de sus operandos."""
    ok = np.ones(len(next(iter(pairs.values()))[0]), dtype=bool)
    for lane_name, (x, y) in pairs.items():
        sign, mantissa, raw_sum = lanes[lane_name]
        ref_sign, ref_mantissa, ref_raw = multiply_array(x, y, fmt)
        ok &= (mantissa == ref_mantissa) & (raw_sum == ref_raw) & (sign == ref_sign)
    return ok


def verify_packing(
    fmt: LpfpFormat,
    exhaustive: bool = True,
    random_quads: int = 1_000_000,
    seed: int = 0,
) -> PackingReport:
    """
    Verifica el empaquetado contra el oráculo racional.

    - Barrido de pares (x, y) alimentados como (x, x, y, y): todos los
      2^16 pares si `exhaustive`, si no una muestra de 4096.
    - Barrido estructurado: todos los pares en cada carril con el resto aleatorio.
    - Contaminación: perturbar el carril (a, c) nunca cambia P_bd.
    """
    _check_packable(fmt)
    rng = np.random.default_rng(seed)
    n = fmt.code_count
    logger.info(f"[Packing] Verificando {fmt} (exhaustivo={exhaustive}, cuádruplas={random_quads})")

    xs, ys = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    xs, ys = xs.ravel(), ys.ravel()
    if not exhaustive:
        pick = rng.choice(xs.size, size=min(4096, xs.size), replace=False)
        xs, ys = xs[pick], ys[pick]

    oracle = _oracle_aligned(fmt)
    lanes = packed_quad_mac_array(xs, xs, ys, ys, fmt)
    ok = np.ones(xs.size, dtype=bool)
    max_mag = 0
    max_raw = 0
    for lane_name in LANE_OFFSETS:
        sign, mantissa, raw_sum = lanes[lane_name]
        aligned = align_array(sign, mantissa, raw_sum, fmt)
        expected = oracle[xs, ys]
        ok &= np.array([int(p) == e for p, e in zip(aligned, expected)], dtype=bool)
        max_mag = max(max_mag, int(np.max(np.abs(aligned))))
        max_raw = max(max_raw, int(np.max(raw_sum)))
    mismatches = int(np.count_nonzero(~ok))

    structured = 0
    structured_bad = 0
    all_x, all_y = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    all_x, all_y = all_x.ravel(), all_y.ravel()
    for lane_name in LANE_OFFSETS:
        ops = {name: rng.integers(0, n, size=all_x.size) for name in "abcd"}
        ops[lane_name[0]] = all_x
        ops[lane_name[1]] = all_y
        lanes_s = packed_quad_mac_array(ops["a"], ops["b"], ops["c"], ops["d"], fmt)
        pairs = {ln: (ops[ln[0]], ops[ln[1]]) for ln in LANE_OFFSETS}
        good = _lanes_match(lanes_s, pairs, fmt)
        structured += good.size
        structured_bad += int(np.count_nonzero(~good))

    quads = {name: rng.integers(0, n, size=random_quads) for name in "abcd"}
    base = packed_quad_mac_array(quads["a"], quads["b"], quads["c"], quads["d"], fmt)
    pairs = {ln: (quads[ln[0]], quads[ln[1]]) for ln in LANE_OFFSETS}
    good = _lanes_match(base, pairs, fmt)
    perturbed = packed_quad_mac_array(
        rng.integers(0, n, size=random_quads), quads["b"],
        rng.integers(0, n, size=random_quads), quads["d"], fmt,
    )
    clean = perturbed["bd"][1] == base["bd"][1]
    contamination_failures = int(np.count_nonzero(~(good & clean)))

    report = PackingReport(
        format=fmt,
        checked=int(xs.size),
        total=int(xs.size),
        mismatches=mismatches,
        structured_checked=structured,
        structured_mismatches=structured_bad,
        contamination_checked=random_quads,
        contamination_failures=contamination_failures,
        max_aligned_magnitude=max_mag,
        aligned_width=aligned_width(fmt),
        max_raw_exp_sum=max_raw,
    )
    if report.passed:
        logger.info(f"[Packing] {report.summary()}")
    else:
        logger.warning(
            f"[Packing] {report.summary()} (estructurado: {structured_bad}, contaminación: {contamination_failures})"
        )
    return report


def multiply_matches_oracle(fmt: LpfpFormat) -> int:
    """Número de pares (x, y) en que `lpfp_multiply` difiere del oráculo racional."""
    bad = 0
    codes = [LpfpCode(bits, fmt) for bits in range(fmt.code_count)]
    values = [decode(code) for code in codes]
    for x, vx in zip(codes, values):
        for y, vy in zip(codes, values):
            if lpfp_multiply(x, y).value != vx * vy:
                bad += 1
    return bad
