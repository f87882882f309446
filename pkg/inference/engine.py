"""
Inference Engine - Ejecución bit-exacta sobre el datapath del PE
================================================================

Cada salida de conv/fc se calcula como producto exacto -> alineación ->
acumulación entera -> sesgo -> writeback. La suma se hace con un producto
matricial entero (exacto) sobre columnas ordenadas por posición de kernel
y, dentro de ella, por canal de entrada; ese mismo orden es el que se usa
para localizar un desbordamiento del acumulador.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from errors import AccumulatorOverflowError, CalibrationError, ManifestError, ShapeError
from lpfp import LpfpFormat, decode_array, encode_array, encode_scaled
from pe import (
    accumulator_bits,
    needs_wide_ints,
    operand_fixed,
    operand_frac_bits,
    product_frac_bits,
    round_shift,
    writeback_array,
)
from quantizer.bias import quantize_bias
from quantizer.scale import quantize_tensor
from quantizer.scheme import QuantScheme
from .network import INPUT_ID, Layer, LayerKind, NetworkGraph, Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatapathConfig:
    """Opciones de simulación del datapath."""
    truncate16: bool = True
    ofmb_mode: str = "accumulator"
    accumulator_bits: int = 48

    @classmethod
    def from_settings(cls, pe_settings) -> "DatapathConfig":
        return cls(pe_settings.truncate16, pe_settings.ofmb_mode, pe_settings.accumulator_bits)


@dataclass
class LayerParams:
    """Pesos codificados y sesgo de 16 bits de una conv/fc."""
    weight_codes: np.ndarray
    sf_w: int
    bias: np.ndarray | None = None
    bias_frac: int = 0


@dataclass
class QuantizedModel:
    """Red + esquema + parámetros codificados, listos para inferencia."""
    network: NetworkGraph
    scheme: QuantScheme
    params: dict[str, LayerParams]
    config: DatapathConfig = DatapathConfig()

    @property
    def format(self) -> LpfpFormat:
        return self.scheme.format


def prepare_model(
    network: NetworkGraph,
    scheme: QuantScheme,
    config: DatapathConfig = DatapathConfig(),
) -> QuantizedModel:
    """
    Codifica pesos y sesgos según el esquema.

    Raises:
        ManifestError: si alguna conv/fc no tiene pesos
        CalibrationError: si el esquema no cubre algún tensor
    """
    fmt = scheme.format
    params: dict[str, LayerParams] = {}
    for layer in network.compute_layers():
        if layer.weights is None:
            raise ManifestError(f"la capa '{layer.name}' no tiene pesos cargados")
        sf_w = scheme.sf(layer.weight_id)
        bias = None
        bias_frac = 0
        if layer.bias is not None:
            bias_frac = scheme.bias_frac(layer.name)
            bias = quantize_bias(layer.bias, bias_frac)
        params[layer.name] = LayerParams(quantize_tensor(layer.weights, fmt, sf_w), sf_w, bias, bias_frac)
    for tensor_id in network.tensor_ids():
        scheme.sf(tensor_id)
    return QuantizedModel(network, scheme, params, config)


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int, fill=0) -> np.ndarray:
    """
    (C, H, W) -> (OH·OW, KH·KW·C), columnas por posición de kernel y canal.
    """
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)), constant_values=fill)
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    c, oh, ow = windows.shape[:3]
    return windows.transpose(1, 2, 3, 4, 0).reshape(oh * ow, kh * kw * c)


def conv_weight_matrix(weights: np.ndarray) -> np.ndarray:
    """(OC, IC, KH, KW) -> (OC, KH·KW·IC) en el orden de `im2col`."""
    oc = weights.shape[0]
    return weights.transpose(0, 2, 3, 1).reshape(oc, -1)


def _check_overflow(
    cols: np.ndarray,
    wmat: np.ndarray,
    width: int,
    layer: str,
    out_shape: tuple,
) -> None:
    """Localiza el primer término que saca al acumulador de `width` bits."""
    limit = 1 << (width - 1)
    bound = np.abs(cols) @ np.abs(wmat).T
    if bound.size == 0 or int(bound.max()) < limit:
        return
    for pos, oc in zip(*np.nonzero(bound >= limit)):
        partial = np.cumsum(cols[pos].astype(object) * wmat[oc].astype(object))
        bad = np.nonzero([(p < -limit) or (p >= limit) for p in partial])[0]
        if bad.size:
            spatial = np.unravel_index(int(pos), out_shape[1:])
            position = (int(oc),) + tuple(int(v) for v in spatial)
            raise AccumulatorOverflowError(
                f"desbordamiento del acumulador de {width} bits en la capa '{layer}', "
                f"posición {position}, término {int(bad[0])}",
                layer=layer,
                position=position,
            )


def _dot_accumulate(
    layer: Layer,
    cols_codes: np.ndarray,
    weight_codes_mat: np.ndarray,
    fmt: LpfpFormat,
    config: DatapathConfig,
    out_shape: tuple,
) -> np.ndarray:
    terms = cols_codes.shape[1]
    wide = needs_wide_ints(fmt, terms, config.accumulator_bits)
    cols = operand_fixed(cols_codes, fmt, wide)
    wmat = operand_fixed(weight_codes_mat, fmt, wide)
    _check_overflow(cols, wmat, accumulator_bits(fmt, config.accumulator_bits), layer.name, out_shape)
    acc = cols @ wmat.T
    return acc.T.reshape(out_shape)


def conv_accumulate(
    layer: Layer,
    x: Tensor,
    weight_codes: np.ndarray,
    config: DatapathConfig = DatapathConfig(),
) -> np.ndarray:
    """
    Sumas exactas antes del sesgo y el writeback, (OC, OH, OW).

    Escala: acc × 2^-product_frac_bits = Σ (x·2^sf_in)·(w·2^sf_w).
    """
    if x.shape[0] != layer.in_channels:
        raise ShapeError(f"capa '{layer.name}': entrada {x.shape}, se esperaban {layer.in_channels} canales")
    if weight_codes.shape != (layer.out_channels, layer.in_channels, layer.kh, layer.kw):
        raise ShapeError(f"capa '{layer.name}': pesos {weight_codes.shape} incompatibles")
    cols = im2col(x.codes.astype(np.int64), layer.kh, layer.kw, layer.stride, layer.pad)
    oh = (x.shape[1] + 2 * layer.pad - layer.kh) // layer.stride + 1
    ow = (x.shape[2] + 2 * layer.pad - layer.kw) // layer.stride + 1
    return _dot_accumulate(
        layer, cols, conv_weight_matrix(weight_codes.astype(np.int64)), x.format, config,
        (layer.out_channels, oh, ow),
    )


def fc_accumulate(
    layer: Layer,
    x: Tensor,
    weight_codes: np.ndarray,
    config: DatapathConfig = DatapathConfig(),
) -> np.ndarray:
    """Como `conv_accumulate` con la entrada aplanada en orden C-H-W; (OC, 1, 1)."""
    flat = x.codes.astype(np.int64).reshape(1, -1)
    if flat.shape[1] != layer.in_channels or weight_codes.shape != (layer.out_channels, layer.in_channels):
        raise ShapeError(
            f"capa '{layer.name}': entrada de {flat.shape[1]} valores y pesos {weight_codes.shape}"
        )
    return _dot_accumulate(
        layer, flat, weight_codes.astype(np.int64), x.format, config, (layer.out_channels, 1, 1)
    )


def _finish(
    layer: Layer,
    acc: np.ndarray,
    params: LayerParams,
    sf_in: int,
    sf_out: int,
    fmt: LpfpFormat,
    config: DatapathConfig,
) -> Tensor:
    frac = product_frac_bits(fmt)
    if params.bias is not None:
        shift = frac - (params.bias_frac - sf_in - params.sf_w)
        # 16 bits de sesgo desplazados no deben salirse de int64
        bias = params.bias.astype(object) if acc.dtype == object or shift > 46 else params.bias
        acc = acc + round_shift(bias, shift).reshape(-1, 1, 1)
        limit = 1 << (accumulator_bits(fmt, config.accumulator_bits) - 1)
        over = np.nonzero((acc < -limit) | (acc >= limit))
        if over[0].size:
            position = tuple(int(v[0]) for v in over)
            raise AccumulatorOverflowError(
                f"desbordamiento del acumulador al sumar el sesgo en la capa '{layer.name}', posición {position}",
                layer=layer.name,
                position=position,
            )
    codes, _ = writeback_array(
        acc, frac, sf_in + params.sf_w, sf_out, fmt, layer.activation,
        truncate16=config.truncate16, ofmb_mode=config.ofmb_mode,
    )
    return Tensor.quantized(codes, fmt, sf_out)


def conv_forward(
    layer: Layer,
    x: Tensor,
    params: LayerParams,
    scheme: QuantScheme,
    config: DatapathConfig = DatapathConfig(),
) -> Tensor:
    """Convolución bit-exacta: acumulación, sesgo, activación y writeback."""
    acc = conv_accumulate(layer, x, params.weight_codes, config)
    return _finish(layer, acc, params, x.sf, scheme.sf(layer.name), scheme.format, config)


def fc_forward(
    layer: Layer,
    x: Tensor,
    params: LayerParams,
    scheme: QuantScheme,
    config: DatapathConfig = DatapathConfig(),
) -> Tensor:
    """Capa totalmente conectada: conv 1×1 sobre la entrada aplanada."""
    acc = fc_accumulate(layer, x, params.weight_codes, config)
    return _finish(layer, acc, params, x.sf, scheme.sf(layer.name), scheme.format, config)


def pool_forward(layer: Layer, x: Tensor, sf_out: int) -> Tensor:
    """
    Max pool compara valores decodificados; avg pool suma en punto fijo y
    divide en la conversión final con redondeo al más cercano.
    """
    fmt = x.format
    if layer.kind == LayerKind.MAXPOOL:
        values = decode_array(x.codes, fmt)
        cols = im2col(values, layer.kh, layer.kw, layer.stride, layer.pad, fill=-np.inf)
        oh, ow = _pool_out(layer, x)
        cols = cols.reshape(oh * ow, layer.kh * layer.kw, x.shape[0])
        best = cols.max(axis=1).T.reshape(x.shape[0], oh, ow)
        return Tensor.quantized(encode_array(np.ldexp(best, sf_out - x.sf), fmt), fmt, sf_out)

    if layer.kind == LayerKind.AVGPOOL:
        window = layer.kh * layer.kw
        wide = needs_wide_ints(fmt, window)
        fixed = operand_fixed(x.codes, fmt, wide)
        cols = im2col(fixed, layer.kh, layer.kw, layer.stride, 0)
        oh, ow = _pool_out(layer, x)
        sums = cols.reshape(oh * ow, window, x.shape[0]).sum(axis=1).T.reshape(x.shape[0], oh, ow)
        exp2 = sf_out - x.sf - operand_frac_bits(fmt)
        return Tensor.quantized(encode_scaled(sums, exp2, fmt, divisor=window), fmt, sf_out)

    raise ShapeError(f"'{layer.name}' no es una capa de pooling")


def _pool_out(layer: Layer, x: Tensor) -> tuple[int, int]:
    oh = (x.shape[1] + 2 * layer.pad - layer.kh) // layer.stride + 1
    ow = (x.shape[2] + 2 * layer.pad - layer.kw) // layer.stride + 1
    return oh, ow


def add_forward(layer: Layer, inputs: list[Tensor], sf_out: int) -> Tensor:
    """Suma residual: enteros exactos a una escala común y un único writeback."""
    fmt = inputs[0].format
    if any(t.shape != inputs[0].shape for t in inputs):
        raise ShapeError(f"capa '{layer.name}': formas distintas en la suma")
    frac = operand_frac_bits(fmt)
    exps = [-frac - t.sf for t in inputs]
    base = min(exps)
    operand_bits = fmt.mantissa_bits + 2 + fmt.max_raw_exponent - fmt.min_raw_exponent
    wide = operand_bits + (max(exps) - base) + len(inputs).bit_length() > 62
    total = 0
    for tensor, exp in zip(inputs, exps):
        total = total + round_shift(operand_fixed(tensor.codes, fmt, wide), exp - base)
    values, value_exps = layer.activation.apply_fixed(np.asarray(total), base + sf_out)
    return Tensor.quantized(encode_scaled(values, value_exps, fmt), fmt, sf_out)


def concat_forward(layer: Layer, inputs: list[Tensor], sf_out: int) -> Tensor:
    """
    Concatena por canales sin aritmética.

    Raises:
        CalibrationError: si las fuentes no comparten sf con la salida
    """
    if any(t.sf != sf_out for t in inputs):
        raise CalibrationError(
            f"concat '{layer.name}' necesita el mismo sf en fuentes y salida: "
            f"{[t.sf for t in inputs]} -> {sf_out}"
        )
    if any(t.shape[1:] != inputs[0].shape[1:] for t in inputs):
        raise ShapeError(f"capa '{layer.name}': alto/ancho distintos en concat")
    return Tensor.quantized(np.concatenate([t.codes for t in inputs], axis=0), inputs[0].format, sf_out)


def act_forward(layer: Layer, x: Tensor, sf_out: int) -> Tensor:
    """Activación independiente en punto fijo."""
    fmt = x.format
    fixed = operand_fixed(x.codes, fmt, needs_wide_ints(fmt))
    values, exps = layer.activation.apply_fixed(fixed, sf_out - x.sf - operand_frac_bits(fmt))
    return Tensor.quantized(encode_scaled(values, exps, fmt), fmt, sf_out)


def quantize_input(values: np.ndarray, scheme: QuantScheme) -> Tensor:
    """Codifica una entrada (C, H, W) con el sf de `input`."""
    sf = scheme.sf(INPUT_ID)
    return Tensor.quantized(quantize_tensor(values, scheme.format, sf), scheme.format, sf)


def quantized_forward(model: QuantizedModel, x: np.ndarray) -> dict[str, Tensor]:
    """
    Ejecuta la red en LPFP.

    Args:
        model: Modelo preparado
        x: Entrada (C, H, W) de precisión completa

    Returns:
        Tensores LPFP por identificador (entrada y salida de cada capa)
    """
    network, scheme, config = model.network, model.scheme, model.config
    x = np.asarray(x, dtype=np.float64)
    if tuple(x.shape) != tuple(network.input_shape):
        raise ShapeError(f"entrada de forma {x.shape}, la red espera {network.input_shape}")

    tensors: dict[str, Tensor] = {INPUT_ID: quantize_input(x, scheme)}
    for layer in network.layers:
        inputs = [tensors[src] for src in layer.sources]
        sf_out = scheme.sf(layer.name)
        if layer.kind == LayerKind.CONV:
            out = conv_forward(layer, inputs[0], model.params[layer.name], scheme, config)
        elif layer.kind == LayerKind.FC:
            out = fc_forward(layer, inputs[0], model.params[layer.name], scheme, config)
        elif layer.kind in (LayerKind.MAXPOOL, LayerKind.AVGPOOL):
            out = pool_forward(layer, inputs[0], sf_out)
        elif layer.kind == LayerKind.ADD:
            out = add_forward(layer, inputs, sf_out)
        elif layer.kind == LayerKind.CONCAT:
            out = concat_forward(layer, inputs, sf_out)
        elif layer.kind == LayerKind.ACT:
            out = act_forward(layer, inputs[0], sf_out)
        else:
            raise ManifestError(f"capa '{layer.name}' de tipo {layer.kind.value} no ejecutable")
        tensors[layer.name] = out
    return tensors
