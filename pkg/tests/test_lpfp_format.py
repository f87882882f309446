"""Pruebas de los formatos LPFP: decodificación, codificación y tablas."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from errors import FormatSpecError, NonFiniteValueError
from lpfp import (
    LpfpCode,
    LpfpFormat,
    decode,
    decode_array,
    encode,
    encode_array,
    encode_scaled,
    format_table,
    formats_with_width,
    magnitude_grid,
    max_value,
    min_value,
    parse_format_list,
)
from tests.conftest import EIGHT_BIT_FORMATS


class TestLpfpFormat:
    @pytest.mark.parametrize("name,a,b,bias", [
        ("M4E3", 4, 3, 3),
        ("M5E2", 5, 2, 1),
        ("M7E0", 7, 0, 0),
        ("M1E6", 1, 6, 31),
        ("m3e4", 3, 4, 7),
    ])
    def test_parse(self, name, a, b, bias):
        fmt = LpfpFormat.parse(name)
        assert (fmt.mantissa_bits, fmt.exponent_bits) == (a, b)
        assert fmt.bias() == bias
        assert fmt.total_bits == 1 + a + b

    @pytest.mark.parametrize("text", ["", "M4", "E3", "X4E3", "M4E3x", "M0E7", "M5E3", "M8E0"])
    def test_parse_rejects(self, text):
        with pytest.raises(FormatSpecError):
            LpfpFormat.parse(text)

    def test_pack_unpack_layout(self, m4e3):
        # S | M | E
        assert m4e3.pack(1, 0b1010, 0b011) == 0b1_1010_011
        assert m4e3.unpack(0b1_1010_011) == (1, 0b1010, 0b011)

    def test_code_out_of_range(self, m4e3):
        with pytest.raises(FormatSpecError):
            LpfpCode(256, m4e3)

    def test_formats_with_width(self):
        assert [f.name for f in formats_with_width(8)] == EIGHT_BIT_FORMATS
        assert [f.name for f in formats_with_width(4)] == ["M3E0", "M2E1", "M1E2"]

    def test_parse_format_list(self):
        assert [f.name for f in parse_format_list("M4E3, M5E2,M4E3")] == ["M4E3", "M5E2"]
        with pytest.raises(FormatSpecError):
            parse_format_list(" , ")


class TestDecode:
    @pytest.mark.parametrize("bits,value", [
        (0b0_0000_011, Fraction(1)),
        (0b0_1000_011, Fraction(3, 2)),
        (0b1_0000_100, Fraction(-2)),
        (0b0_0001_000, Fraction(1, 64)),      # menor subnormal
        (0b0_1111_000, Fraction(15, 64)),     # mayor subnormal
        (0b0_0000_001, Fraction(1, 4)),       # menor normal
        (0b0_1111_111, Fraction(31)),
        (0b1_0000_000, Fraction(0)),
    ])
    def test_m4e3_values(self, m4e3, bits, value):
        assert decode(LpfpCode(bits, m4e3)) == value

    @pytest.mark.parametrize("name,maximum", [
        ("M4E3", Fraction(31)),
        ("M5E2", Fraction(63, 8)),
        ("M7E0", Fraction(127, 128)),
        ("M1E6", Fraction(3 * 2**31)),
    ])
    def test_max_value(self, name, maximum):
        fmt = LpfpFormat.parse(name)
        assert max_value(fmt) == maximum
        assert min_value(fmt) == -maximum

    def test_no_exponent_is_fixed_point(self):
        fmt = LpfpFormat(7, 0)
        assert [decode(LpfpCode(b, fmt)) for b in range(4)] == [Fraction(k, 128) for k in range(4)]

    def test_subnormal_flags(self, m4e3):
        code = LpfpCode(0b0_0011_000, m4e3)
        assert code.is_subnormal and code.hidden_bit == 0 and code.raw_exponent == 1
        assert code.significand == 3


class TestEncode:
    @pytest.mark.parametrize("x,expected", [
        (3.1, Fraction(25, 8)),
        (3.0625, Fraction(3)),          # empate -> mantisa par
        (3.1875, Fraction(13, 4)),      # empate -> mantisa par
        (100.0, Fraction(31)),
        (-100.0, Fraction(-31)),
        (31.0, Fraction(31)),
        (0.0078125, Fraction(0)),       # mitad del menor subnormal
        (0.008, Fraction(1, 64)),
        (-0.2, Fraction(-13, 64)),
    ])
    def test_nearest(self, m4e3, x, expected):
        assert encode(x, m4e3).value == expected

    @pytest.mark.parametrize("x", [0.0, -0.0, -0.001, Fraction(-1, 1000)])
    def test_zero_is_positive(self, m4e3, x):
        assert encode(x, m4e3).bits == 0

    @pytest.mark.parametrize("name", EIGHT_BIT_FORMATS)
    def test_exhaustive_roundtrip(self, name):
        fmt = LpfpFormat.parse(name)
        for bits in range(fmt.code_count):
            value = decode(LpfpCode(bits, fmt))
            assert encode(value, fmt).value == value

    @pytest.mark.parametrize("name", EIGHT_BIT_FORMATS)
    def test_exhaustive_roundtrip_vectorized(self, name):
        fmt = LpfpFormat.parse(name)
        codes = np.arange(fmt.code_count)
        values = decode_array(codes, fmt)
        again = decode_array(encode_array(values, fmt), fmt)
        np.testing.assert_array_equal(again, values)

    @settings(max_examples=300, deadline=None)
    @given(
        name=st.sampled_from(EIGHT_BIT_FORMATS),
        x=st.floats(min_value=-1e4, max_value=1e4, allow_nan=False),
    )
    def test_is_nearest_representable(self, name, x):
        fmt = LpfpFormat.parse(name)
        exact = Fraction(x)
        got = encode(x, fmt).value
        best = min(abs(v - exact) for _, v in format_table(fmt))
        assert abs(got - exact) == best

    @settings(max_examples=200, deadline=None)
    @given(
        name=st.sampled_from(EIGHT_BIT_FORMATS),
        xs=st.lists(st.floats(min_value=-500, max_value=500, allow_nan=False), min_size=1, max_size=50),
    )
    def test_vectorized_matches_scalar(self, name, xs):
        fmt = LpfpFormat.parse(name)
        codes = encode_array(np.array(xs), fmt)
        assert [int(c) for c in codes] == [encode(x, fmt).bits for x in xs]

    @settings(max_examples=200, deadline=None)
    @given(
        x=st.floats(min_value=-50, max_value=50, allow_nan=False),
        y=st.floats(min_value=-50, max_value=50, allow_nan=False),
    )
    def test_monotone(self, x, y):
        fmt = LpfpFormat(4, 3)
        lo, hi = sorted((x, y))
        assert encode(lo, fmt).value <= encode(hi, fmt).value

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_rejects_non_finite(self, m4e3, bad):
        with pytest.raises(NonFiniteValueError):
            encode_array(np.array([1.0, bad]), m4e3)
        with pytest.raises(NonFiniteValueError):
            encode(float(bad), m4e3)


class TestEncodeScaled:
    def test_power_of_two_scale(self, m4e3):
        codes = encode_scaled(np.array([3 * 4096, -12698]), -12, m4e3)
        assert list(decode_array(codes, m4e3)) == [3.0, -3.125]

    def test_divisor(self, m4e3):
        codes = encode_scaled(np.array([9, 10, 7]), 0, m4e3, divisor=4)
        assert list(decode_array(codes, m4e3)) == [2.25, 2.5, 1.75]

    def test_non_power_of_two_divisor_single_rounding(self, m4e3):
        # 37/36 = 1.0277..., el vecino más cercano es 1.0 (paso 1/16)
        codes = encode_scaled(np.array([37, 36 * 3]), 0, m4e3, divisor=36)
        assert list(decode_array(codes, m4e3)) == [1.0, 3.0]

    def test_wide_integers(self):
        fmt = LpfpFormat(2, 5)
        big = np.array([(1 << 70) + 1], dtype=object)
        codes = encode_scaled(big, -70, fmt)
        assert decode_array(codes, fmt)[0] == 1.0


class TestTables:
    def test_format_table_sorted(self, m4e3):
        rows = format_table(m4e3)
        values = [v for _, v in rows]
        assert len(rows) == 256
        assert values == sorted(values)
        assert values[0] == -31 and values[-1] == 31

    def test_format_table_by_code(self, m4e3):
        rows = format_table(m4e3, by_code=True)
        assert [code.bits for code, _ in rows] == list(range(256))

    @pytest.mark.parametrize("name", EIGHT_BIT_FORMATS)
    def test_grid_strictly_increasing(self, name):
        grid = magnitude_grid(LpfpFormat.parse(name))
        assert grid[0] == 0.0
        assert np.all(np.diff(grid) > 0)
