"""Pruebas de la importación de redes y del camino cuantizado bit-exacto."""

from fractions import Fraction

import numpy as np
import pytest

from errors import AccumulatorOverflowError, CalibrationError, InputFileError, ManifestError, ShapeError
from inference import (
    DatapathConfig,
    LayerKind,
    Layer,
    LayerParams,
    Tensor,
    add_forward,
    build_network,
    capture_calibration,
    concat_forward,
    conv_accumulate,
    conv_forward,
    fc_forward,
    im2col,
    load_dataset,
    load_network,
    parse_manifest,
    pool_forward,
    prepare_model,
    quantized_forward,
    read_inputs,
    reference_forward,
    write_float_blob,
)
from inference.engine import _check_overflow
from lpfp import LpfpCode, LpfpFormat, decode, decode_array, encode, encode_array
from pe import Activation, aligned_width, ofmb_frac_bits, operand_frac_bits, product_frac_bits
from quantizer import QuantScheme, candidate_formats, search_format

M4E3 = LpfpFormat(4, 3)


def operand_table(fmt: LpfpFormat) -> np.ndarray:
    """Valor de cada código como entero en la rejilla 2^-operand_frac_bits."""
    scale = Fraction(2) ** operand_frac_bits(fmt)
    table = [decode(LpfpCode(code, fmt)) * scale for code in range(256)]
    assert all(v.denominator == 1 for v in table)
    return np.array([int(v) for v in table], dtype=object)


def oracle_bias_term(bias: int, bias_frac: int, sf_in_total: int, fmt: LpfpFormat) -> int:
    """Sesgo en la rejilla del acumulador, redondeado al más cercano con empate a par."""
    return round(Fraction(int(bias)) * Fraction(2) ** (product_frac_bits(fmt) - bias_frac + sf_in_total))


def oracle_writeback(
    acc: int,
    sf_in_total: int,
    sf_out: int,
    fmt: LpfpFormat,
    truncate16: bool = True,
    ofmb_mode: str = "accumulator",
    relu: bool = False,
) -> int:
    """Código de salida de un acumulador exacto con product_frac_bits(fmt) bits fraccionarios."""
    acc = max(int(acc), 0) if relu else int(acc)
    frac = product_frac_bits(fmt)
    to_out = Fraction(2) ** (sf_out - sf_in_total)
    value = Fraction(acc, 1 << frac) * to_out
    if truncate16 and ofmb_mode == "output":
        f16 = ofmb_frac_bits(fmt)
        inter = max(-32768, min(32767, round(value * Fraction(2) ** f16)))
        value = Fraction(inter) / Fraction(2) ** f16
    elif truncate16:
        drop = aligned_width(fmt) - 15
        inter = max(-32768, min(32767, round(Fraction(acc) / Fraction(2) ** drop)))
        value = inter * Fraction(2) ** drop / Fraction(2) ** frac * to_out
    return encode(value, fmt).bits


def oracle_conv_acc(x, w, bias, bias_frac, sf_in, sf_w, stride, pad, fmt) -> np.ndarray:
    """Convolución directa de ventana deslizante con enteros exactos de Python."""
    table = operand_table(fmt)
    xi = np.pad(table[x], ((0, 0), (pad, pad), (pad, pad)), constant_values=0)
    wi = table[w]
    oc_count, _, kh, kw = w.shape
    oh = (xi.shape[1] - kh) // stride + 1
    ow = (xi.shape[2] - kw) // stride + 1
    acc = np.zeros((oc_count, oh, ow), dtype=object)
    for ky in range(kh):
        for kx in range(kw):
            window = xi[:, ky:ky + stride * (oh - 1) + 1:stride, kx:kx + stride * (ow - 1) + 1:stride]
            acc = acc + np.tensordot(wi[:, :, ky, kx], window, axes=(1, 0))
    if bias is not None:
        terms = [oracle_bias_term(b, bias_frac, sf_in + sf_w, fmt) for b in bias]
        acc = acc + np.array(terms, dtype=object).reshape(-1, 1, 1)
    return acc


def oracle_codes(acc, sf_in_total, sf_out, fmt, truncate16=True, ofmb_mode="accumulator", relu=False) -> np.ndarray:
    flat = [oracle_writeback(a, sf_in_total, sf_out, fmt, truncate16, ofmb_mode, relu) for a in acc.reshape(-1)]
    return np.array(flat, dtype=np.uint8).reshape(acc.shape)


def random_conv_case(rng: np.random.Generator) -> dict:
    """Configuración de convolución aleatoria con todas las dimensiones <= 16."""
    while True:
        c, h, wd = (int(v) for v in rng.integers(1, 17, size=3))
        k = int(rng.integers(1, 6))
        pad = int(rng.integers(0, k))
        stride = int(rng.integers(1, 4))
        if min(h, wd) + 2 * pad >= k:
            return {"c": c, "h": h, "w": wd, "k": k, "oc": int(rng.integers(1, 5)), "stride": stride, "pad": pad}


def conv_layer(ic, oc, k, stride=1, pad=0, activation="none") -> Layer:
    return Layer(
        name="c", kind=LayerKind.CONV, sources=("input",), in_channels=ic, out_channels=oc,
        kernel=(k, k), stride=stride, pad=pad, activation=Activation.parse(activation),
    )


class TestManifest:
    TEXT = (
        "input shape=3x8x8\n"
        "conv name=c1 ic=3 oc=4 k=3x3 pad=1 act=relu w=c1.w b=c1.b\n"
        "maxpool k=2x2\n"
        "fc name=out ic=64 oc=10 w=out.w\n"
    )

    def test_parse(self):
        shape, layers = parse_manifest(self.TEXT)
        assert shape == (3, 8, 8)
        assert [layer.name for layer in layers] == ["c1", "L1", "out"]
        assert layers[0].activation.kind == "relu"
        assert layers[1].stride == 2
        assert layers[2].sources == ("L1",)

    def test_shapes(self):
        network = build_network(self.TEXT)
        assert network.shape_of("c1") == (4, 8, 8)
        assert network.shape_of("L1") == (4, 4, 4)
        assert network.output_shape == (10, 1, 1)

    @pytest.mark.parametrize("text", [
        "conv name=c ic=1 oc=1 w=c.w\n",                                  # sin input
        "input shape=1x4x4\n",                                            # sin capas
        "input shape=1x4x4\npool k=2\n",                                  # tipo desconocido
        "input shape=1x4x4\nconv ic=1 oc=1\n",                            # sin pesos
        "input shape=1x4x4\nconv ic=1 oc=1 w=a dilation=2\n",             # clave desconocida
        "input shape=1x4x4\nconv name=a ic=1 oc=1 w=a\nconv name=a ic=1 oc=1 w=b\n",
        "input shape=1x4x4\nadd src=input\n",
        "input shape=1x4x4\nconv ic=1 oc=1 k=3xx w=a\n",
        "input shape=1x4x4\nconv ic=0 oc=1 w=a\n",
        "input shape=1x4\nconv ic=1 oc=1 w=a\n",
        "input shape=1x4x4\nconv ic=1 oc=1 w=a src=later\n",
        "input shape=1x4x4\nconv ic=1 oc=1 act=sigmoid w=a\n",
        "input shape=1x4x4\nmaxpool k=2x2 pad=2\n",                          # ventanas sólo de relleno
        "input shape=1x4x4\nmaxpool k=3x1 pad=1\n",
    ])
    def test_rejects(self, text):
        with pytest.raises(ManifestError):
            build_network(text)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            build_network("input shape=2x4x4\nconv ic=3 oc=1 w=a\n")
        with pytest.raises(ShapeError):
            build_network("input shape=1x2x2\nconv ic=1 oc=1 k=3x3 w=a\n")

    def test_concat_and_add_shapes(self):
        network = build_network(
            "input shape=2x4x4\n"
            "conv name=a ic=2 oc=3 k=1x1 w=a.w\n"
            "conv name=b ic=2 oc=5 k=1x1 src=input w=b.w\n"
            "concat name=cat src=a,b\n"
            "conv name=c ic=8 oc=2 k=1x1 w=c.w\n"
            "add name=sum src=c,input\n"
        )
        assert network.shape_of("cat") == (8, 4, 4)
        assert network.shape_of("sum") == (2, 4, 4)

    def test_weight_blob_size(self, tmp_path):
        path = tmp_path / "w.bin"
        write_float_blob(path, [np.ones(5)])
        with pytest.raises(InputFileError):
            build_network("input shape=1x4x4\nconv ic=1 oc=1 k=3x3 w=a b=b\n", path)

    def test_non_finite_weights(self, tmp_path):
        path = tmp_path / "w.bin"
        weights = np.ones(9)
        weights[4] = np.nan
        write_float_blob(path, [weights])
        with pytest.raises(InputFileError, match="no finitos"):
            build_network("input shape=1x4x4\nconv ic=1 oc=1 k=3x3 w=a\n", path)

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_inputs(self, tmp_path, bad):
        path = tmp_path / "x.bin"
        values = np.zeros(32)
        values[17] = bad
        write_float_blob(path, [values])
        with pytest.raises(InputFileError, match="posición 17"):
            read_inputs(path, (2, 4, 4))

    def test_non_finite_dataset(self, tmp_path):
        path = tmp_path / "datos.npz"
        x = np.zeros((2, 1, 4, 4), dtype=np.float32)
        x[1, 0, 2, 2] = np.inf
        np.savez(path, x=x, y=np.array([0, 1]))
        with pytest.raises(InputFileError):
            load_dataset(path, (1, 4, 4))

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(InputFileError):
            load_network(tmp_path / "nada.manifest")


class TestBatchnormFolding:
    def test_folds_into_conv(self, tmp_path):
        path = tmp_path / "w.bin"
        # gamma, beta, media, varianza con eps = 1: escala [0.5, 1]
        write_float_blob(path, [
            np.array([2.0, 3.0]), np.array([1.0, -1.0]),
            np.array([[1.0, 2.0], [0.5, 0.0], [1.0, 0.0], [3.0, 3.0]]),
        ])
        network = build_network(
            "input shape=1x2x2\n"
            "conv name=c ic=1 oc=2 k=1x1 w=c.w b=c.b\n"
            "bn name=n c=2 eps=1 w=n.p\n"
            "act name=r kind=relu\n",
            path,
        )
        assert [layer.name for layer in network.layers] == ["c", "r"]
        assert network.layer("r").sources == ("c",)
        conv = network.layer("c")
        np.testing.assert_allclose(conv.weights.reshape(-1), [1.0, 3.0])
        np.testing.assert_allclose(conv.bias, [0.5, -1.0])

    def test_creates_bias_when_missing(self, tmp_path):
        path = tmp_path / "w.bin"
        write_float_blob(path, [np.array([1.0]), np.array([[1.0], [2.0], [0.0], [1.0]])])
        network = build_network("input shape=1x2x2\nconv name=c ic=1 oc=1 w=c.w\nbn c=1 eps=0 w=n.p\n", path)
        conv = network.layer("c")
        assert conv.bias_id == "c.b"
        np.testing.assert_allclose(conv.bias, [2.0])

    @pytest.mark.parametrize("text", [
        "input shape=1x4x4\nmaxpool k=2x2\nbn c=1 w=n.p\n",
        "input shape=1x4x4\nconv name=c ic=1 oc=1 act=relu w=c.w\nbn c=1 w=n.p\n",
        "input shape=1x4x4\nconv name=c ic=1 oc=2 w=c.w\nbn c=1 w=n.p\n",
        "input shape=1x4x4\nconv name=c ic=1 oc=1 w=c.w\nbn name=n c=1 w=n.p\nadd src=c,n\n",
    ])
    def test_rejects(self, text):
        with pytest.raises(ManifestError):
            build_network(text)


class TestIm2col:
    def test_order_is_kernel_then_channel(self):
        x = np.arange(2 * 3 * 3).reshape(2, 3, 3)
        cols = im2col(x, 2, 2, 1, 0)
        assert cols.shape == (4, 8)
        # primera ventana: (ky, kx) = (0, 0) para c = 0, 1; luego (0, 1) ...
        assert list(cols[0]) == [0, 9, 1, 10, 3, 12, 4, 13]

    def test_padding_fill(self):
        cols = im2col(np.ones((1, 2, 2)), 3, 3, 1, 1, fill=-5)
        assert cols.shape == (4, 9)
        assert cols[0, 0] == -5


class TestConv:
    def test_identity_kernel(self, rng):
        x_codes = rng.integers(0, 256, size=(1, 5, 5)).astype(np.uint8)
        weights = np.zeros((1, 1, 3, 3), dtype=np.uint8)
        weights[0, 0, 1, 1] = encode(1.0, M4E3).bits
        scheme = QuantScheme(M4E3, {"c": 0})
        out = conv_forward(conv_layer(1, 1, 3, pad=1), Tensor.quantized(x_codes, M4E3, 0), LayerParams(weights, 0), scheme)
        np.testing.assert_array_equal(decode_array(out.codes, M4E3), decode_array(x_codes, M4E3))

    @pytest.mark.parametrize("name,sf_out", [("M4E3", -3), ("M5E2", 0), ("M3E4", -6), ("M2E5", -12)])
    @pytest.mark.parametrize("truncate16,ofmb_mode", [(True, "accumulator"), (True, "output"), (False, "accumulator")])
    def test_matches_naive_oracle(self, rng, name, sf_out, truncate16, ofmb_mode):
        fmt = LpfpFormat.parse(name)
        x = rng.integers(0, 256, size=(2, 6, 6)).astype(np.uint8)
        w = rng.integers(0, 256, size=(3, 2, 3, 3)).astype(np.uint8)
        bias = rng.integers(-32767, 32768, size=3)
        sf_in, sf_w, bias_frac = 1, 2, 10
        layer = conv_layer(2, 3, 3, stride=2, pad=1)
        scheme = QuantScheme(fmt, {"c": sf_out})
        config = DatapathConfig(truncate16=truncate16, ofmb_mode=ofmb_mode)
        out = conv_forward(layer, Tensor.quantized(x, fmt, sf_in), LayerParams(w, sf_w, bias, bias_frac), scheme, config)
        acc = oracle_conv_acc(x, w, bias, bias_frac, sf_in, sf_w, 2, 1, fmt)
        np.testing.assert_array_equal(out.codes, oracle_codes(acc, sf_in + sf_w, sf_out, fmt, truncate16, ofmb_mode))

    def test_default_config_uses_accumulator_scale(self, rng):
        x = rng.integers(0, 256, size=(2, 5, 5)).astype(np.uint8)
        w = rng.integers(0, 256, size=(2, 2, 3, 3)).astype(np.uint8)
        layer = conv_layer(2, 2, 3, pad=1)
        scheme = QuantScheme(M4E3, {"c": -3})
        out = conv_forward(layer, Tensor.quantized(x, M4E3, 0), LayerParams(w, 0), scheme)
        acc = oracle_conv_acc(x, w, None, 0, 0, 0, 1, 1, M4E3)
        np.testing.assert_array_equal(out.codes, oracle_codes(acc, 0, -3, M4E3, True, "accumulator"))

    def test_random_configs_match_oracle_in_both_modes(self):
        rng = np.random.default_rng(2024)
        formats = [LpfpFormat.parse(name) for name in ("M4E3", "M5E2", "M3E4", "M6E1", "M7E0")]
        for _ in range(100):
            case = random_conv_case(rng)
            fmt = formats[int(rng.integers(len(formats)))]
            activation = "relu" if rng.random() < 0.3 else "none"
            sf_in, sf_w, sf_out = (int(v) for v in rng.integers(-3, 4, size=3))
            bias_frac = int(rng.integers(0, 16))
            x = rng.integers(0, 256, size=(case["c"], case["h"], case["w"])).astype(np.uint8)
            w = rng.integers(0, 256, size=(case["oc"], case["c"], case["k"], case["k"])).astype(np.uint8)
            bias = rng.integers(-32767, 32768, size=case["oc"])
            layer = conv_layer(case["c"], case["oc"], case["k"], case["stride"], case["pad"], activation)
            params = LayerParams(w, sf_w, bias, bias_frac)
            acc = oracle_conv_acc(x, w, bias, bias_frac, sf_in, sf_w, case["stride"], case["pad"], fmt)
            for mode in ("accumulator", "output"):
                out = conv_forward(
                    layer, Tensor.quantized(x, fmt, sf_in), params, QuantScheme(fmt, {"c": sf_out}),
                    DatapathConfig(ofmb_mode=mode),
                )
                expected = oracle_codes(acc, sf_in + sf_w, sf_out, fmt, True, mode, relu=activation == "relu")
                np.testing.assert_array_equal(out.codes, expected, err_msg=f"{fmt.name} {mode} {case}")

    def test_accumulator_is_exact_dot_product(self, rng):
        x = rng.integers(0, 256, size=(3, 4, 4)).astype(np.uint8)
        w = rng.integers(0, 256, size=(2, 3, 3, 3)).astype(np.uint8)
        acc = conv_accumulate(conv_layer(3, 2, 3), Tensor.quantized(x, M4E3, 0), w)
        for oc in range(2):
            for oy in range(2):
                for ox in range(2):
                    total = sum(
                        decode(LpfpCode(int(x[c, oy + ky, ox + kx]), M4E3)) * decode(LpfpCode(int(w[oc, c, ky, kx]), M4E3))
                        for c in range(3) for ky in range(3) for kx in range(3)
                    )
                    assert Fraction(int(acc[oc, oy, ox]), 4096) == total

    def test_relu_output(self, rng):
        x = encode_array(rng.normal(0.0, 1.0, size=(1, 4, 4)), M4E3)
        w = np.full((1, 1, 1, 1), encode(-1.0, M4E3).bits, dtype=np.uint8)
        out = conv_forward(
            conv_layer(1, 1, 1, activation="relu"), Tensor.quantized(x, M4E3, 0), LayerParams(w, 0),
            QuantScheme(M4E3, {"c": 0}),
        )
        values = decode_array(out.codes, M4E3)
        np.testing.assert_array_equal(values, np.maximum(-decode_array(x, M4E3), 0.0))
        assert not np.any(out.codes == 0x80)

    def test_wrong_input_channels(self):
        with pytest.raises(ShapeError):
            conv_accumulate(conv_layer(2, 1, 1), Tensor.quantized(np.zeros((1, 2, 2)), M4E3, 0), np.zeros((1, 2, 1, 1)))

    def test_overflow_locates_term(self):
        cols = np.array([[100, 100, 100]])
        wmat = np.array([[1, 1, 1], [1, -1, 1]])
        with pytest.raises(AccumulatorOverflowError) as info:
            _check_overflow(cols, wmat, 9, "c", (2, 1, 1))
        assert info.value.layer == "c"
        assert info.value.position == (0, 0, 0)


class TestFc:
    @pytest.mark.parametrize("ofmb_mode", ["accumulator", "output"])
    def test_matches_naive_oracle(self, rng, ofmb_mode):
        x = rng.integers(0, 256, size=(2, 2, 2)).astype(np.uint8)
        w = rng.integers(0, 256, size=(3, 8)).astype(np.uint8)
        bias = np.array([100, -2000, 0])
        layer = Layer(name="f", kind=LayerKind.FC, sources=("input",), in_channels=8, out_channels=3)
        out = fc_forward(
            layer, Tensor.quantized(x, M4E3, 0), LayerParams(w, 1, bias, 8), QuantScheme(M4E3, {"f": -4}),
            DatapathConfig(ofmb_mode=ofmb_mode),
        )
        flat = x.reshape(-1)
        for oc in range(3):
            total = sum(decode(LpfpCode(int(flat[i]), M4E3)) * decode(LpfpCode(int(w[oc, i]), M4E3)) for i in range(8))
            total += Fraction(int(bias[oc]), 256) * 2
            acc = total * 4096
            assert acc.denominator == 1
            assert out.codes[oc, 0, 0] == oracle_writeback(int(acc), 1, -4, M4E3, True, ofmb_mode)
        assert out.shape == (3, 1, 1)

    def test_random_configs_match_oracle_in_both_modes(self):
        rng = np.random.default_rng(77)
        formats = [LpfpFormat.parse(name) for name in ("M4E3", "M5E2", "M3E4")]
        for _ in range(100):
            c, h, wd = (int(v) for v in rng.integers(1, 17, size=3))
            oc = int(rng.integers(1, 17))
            fmt = formats[int(rng.integers(len(formats)))]
            sf_in, sf_w, sf_out = (int(v) for v in rng.integers(-3, 4, size=3))
            bias_frac = int(rng.integers(0, 16))
            x = rng.integers(0, 256, size=(c, h, wd)).astype(np.uint8)
            w = rng.integers(0, 256, size=(oc, c * h * wd)).astype(np.uint8)
            bias = rng.integers(-32767, 32768, size=oc)
            layer = Layer(name="f", kind=LayerKind.FC, sources=("input",), in_channels=c * h * wd, out_channels=oc)
            table = operand_table(fmt)
            acc = np.dot(table[w], table[x.reshape(-1)])
            acc = acc + np.array([oracle_bias_term(b, bias_frac, sf_in + sf_w, fmt) for b in bias], dtype=object)
            for mode in ("accumulator", "output"):
                out = fc_forward(
                    layer, Tensor.quantized(x, fmt, sf_in), LayerParams(w, sf_w, bias, bias_frac),
                    QuantScheme(fmt, {"f": sf_out}), DatapathConfig(ofmb_mode=mode),
                )
                expected = oracle_codes(acc, sf_in + sf_w, sf_out, fmt, True, mode).reshape(oc, 1, 1)
                np.testing.assert_array_equal(out.codes, expected, err_msg=f"{fmt.name} {mode} c={c} h={h} w={wd}")


class TestOtherLayers:
    def tensor(self, values, sf=0) -> Tensor:
        values = np.asarray(values, dtype=np.float64)
        return Tensor.quantized(encode_array(np.ldexp(values, sf), M4E3), M4E3, sf)

    def test_maxpool(self):
        layer = Layer(name="p", kind=LayerKind.MAXPOOL, sources=("input",), kernel=(2, 2), stride=2)
        x = self.tensor([[[1.0, -3.0, 0.5, 0.25], [2.5, 0.0, -1.0, 0.125]]])
        out = pool_forward(layer, x, sf_out=1)
        assert out.shape == (1, 1, 2)
        np.testing.assert_array_equal(out.dequantize(), [[[2.5, 0.5]]])
        np.testing.assert_array_equal(decode_array(out.codes, M4E3), [[[5.0, 1.0]]])

    def test_avgpool_rounds_once(self):
        layer = Layer(name="g", kind=LayerKind.AVGPOOL, sources=("input",), kernel=(2, 2), stride=2)
        out = pool_forward(layer, self.tensor([[[1.0, 2.0], [3.0, 3.5]]]), sf_out=0)
        assert out.dequantize()[0, 0, 0] == 2.375

    def test_avgpool_non_power_of_two_window(self):
        layer = Layer(name="g", kind=LayerKind.AVGPOOL, sources=("input",), kernel=(3, 3), stride=3)
        values = np.full((1, 3, 3), 1.0)
        values[0, 0, 0] = 1.25
        out = pool_forward(layer, self.tensor(values), sf_out=0)
        # 9.25 / 9 = 1.0277..., el vecino más cercano es 1.0
        assert out.dequantize()[0, 0, 0] == 1.0

    def test_add_aligns_scales(self):
        layer = Layer(name="s", kind=LayerKind.ADD, sources=("a", "b"))
        out = add_forward(layer, [self.tensor([[[1.5]]]), self.tensor([[[0.25]]], sf=1)], sf_out=0)
        assert out.dequantize()[0, 0, 0] == 1.75

    def test_add_with_relu(self):
        layer = Layer(name="s", kind=LayerKind.ADD, sources=("a", "b"), activation=Activation.parse("relu"))
        out = add_forward(layer, [self.tensor([[[1.5]]]), self.tensor([[[-2.0]]])], sf_out=0)
        assert out.codes[0, 0, 0] == 0

    def test_concat_requires_shared_sf(self):
        layer = Layer(name="cat", kind=LayerKind.CONCAT, sources=("a", "b"))
        a, b = self.tensor([[[1.0]]]), self.tensor([[[2.0]]], sf=1)
        with pytest.raises(CalibrationError):
            concat_forward(layer, [a, b], sf_out=0)
        out = concat_forward(layer, [a, self.tensor([[[2.0]]])], sf_out=0)
        np.testing.assert_array_equal(out.dequantize().reshape(-1), [1.0, 2.0])


class TestTinyNetwork:
    @pytest.fixture(scope="class")
    def network(self, tiny_cnn):
        return load_network(tiny_cnn.manifest, tiny_cnn.weights)

    @pytest.fixture(scope="class")
    def scheme(self, network, tiny_cnn):
        calibration = capture_calibration(network, read_inputs(tiny_cnn.calib, network.input_shape))
        scheme, _ = search_format(network, calibration, candidate_formats(8), (-8, 8))
        return scheme

    def test_reference_shapes(self, network, tiny_cnn):
        x, _ = load_dataset(tiny_cnn.dataset, network.input_shape)
        acts = reference_forward(network, x[0])
        assert acts["conv1"].shape == (4, 12, 12)
        assert acts["pool1"].shape == (4, 6, 6)
        assert acts["gap"].shape == (4, 1, 1)
        assert acts["fc"].shape == (6, 1, 1)
        assert np.all(acts["relu1"] >= 0)

    def test_calibration_stacks_samples(self, network, tiny_cnn):
        batch = read_inputs(tiny_cnn.calib, network.input_shape)
        calibration = capture_calibration(network, batch)
        assert calibration["input"].shape == (batch.shape[0], 1, 12, 12)
        assert set(calibration) == set(network.tensor_ids())

    def test_quantized_forward(self, network, scheme, tiny_cnn):
        x, _ = load_dataset(tiny_cnn.dataset, network.input_shape)
        model = prepare_model(network, scheme)
        tensors = quantized_forward(model, x[0])
        assert set(tensors) == set(network.tensor_ids())
        out = tensors[network.output_id]
        assert out.codes.dtype == np.uint8
        assert out.sf == scheme.sf("fc")
        assert out.shape == (6, 1, 1)

    def test_quantized_forward_is_deterministic(self, network, scheme, tiny_cnn):
        x, _ = load_dataset(tiny_cnn.dataset, network.input_shape)
        model = prepare_model(network, scheme)
        first = quantized_forward(model, x[1])["fc"].codes
        np.testing.assert_array_equal(quantized_forward(model, x[1])["fc"].codes, first)

    def test_input_shape_mismatch(self, network, scheme):
        with pytest.raises(ShapeError):
            quantized_forward(prepare_model(network, scheme), np.zeros((1, 8, 8)))

    def test_scheme_must_cover_tensors(self, network, scheme):
        partial = QuantScheme(scheme.format, dict(scheme.scale_factors), dict(scheme.bias_frac_bits))
        del partial.scale_factors["gap"]
        with pytest.raises(CalibrationError):
            prepare_model(network, partial)
