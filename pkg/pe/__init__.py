"""
PE Module - Datapath del elemento de proceso
============================================

Multiplicación LPFP exacta, empaquetado de cuatro MAC por multiplicador
ancho, alineación y acumulación en punto fijo y conversión final.
"""

from .arith import (
    Activation,
    NO_ACTIVATION,
    ExactProduct,
    AlignedFixed,
    Accum,
    lpfp_multiply,
    align,
    accumulate,
    add_bias,
    writeback,
    multiply_array,
    align_array,
    operand_fixed,
    operand_frac_bits,
    product_frac_bits,
    aligned_width,
    accumulator_bits,
    ofmb_frac_bits,
    needs_wide_ints,
    round_shift,
    round_shift_int,
    saturate16,
    writeback_array,
)
from .packing import (
    QuadPack,
    QuadMacResult,
    PackingReport,
    LANE_OFFSETS,
    packed_quad_mac,
    packed_quad_mac_array,
    verify_packing,
    multiply_matches_oracle,
)

__all__ = [
    "Activation",
    "NO_ACTIVATION",
    "ExactProduct",
    "AlignedFixed",
    "Accum",
    "lpfp_multiply",
    "align",
    "accumulate",
    "add_bias",
    "writeback",
    "multiply_array",
    "align_array",
    "operand_fixed",
    "operand_frac_bits",
    "product_frac_bits",
    "aligned_width",
    "accumulator_bits",
    "ofmb_frac_bits",
    "needs_wide_ints",
    "round_shift",
    "round_shift_int",
    "saturate16",
    "writeback_array",
    "QuadPack",
    "QuadMacResult",
    "PackingReport",
    "LANE_OFFSETS",
    "packed_quad_mac",
    "packed_quad_mac_array",
    "verify_packing",
    "multiply_matches_oracle",
]
