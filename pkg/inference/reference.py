"""
Inference Reference - Camino de precisión completa
==================================================

Misma red, aritmética float64 estándar. Sirve de línea base de precisión
y de fuente de activaciones para la calibración.
"""

import logging

import numpy as np

from errors import ManifestError, ShapeError
from .engine import conv_weight_matrix, im2col
from .network import INPUT_ID, Layer, LayerKind, NetworkGraph

logger = logging.getLogger(__name__)


def _conv(layer: Layer, x: np.ndarray) -> np.ndarray:
    cols = im2col(x, layer.kh, layer.kw, layer.stride, layer.pad)
    out = cols @ conv_weight_matrix(layer.weights).T
    oh = (x.shape[1] + 2 * layer.pad - layer.kh) // layer.stride + 1
    ow = (x.shape[2] + 2 * layer.pad - layer.kw) // layer.stride + 1
    out = out.T.reshape(layer.out_channels, oh, ow)
    if layer.bias is not None:
        out = out + layer.bias.reshape(-1, 1, 1)
    return out


def _pool(layer: Layer, x: np.ndarray) -> np.ndarray:
    fill = -np.inf if layer.kind == LayerKind.MAXPOOL else 0.0
    cols = im2col(x, layer.kh, layer.kw, layer.stride, layer.pad, fill=fill)
    oh = (x.shape[1] + 2 * layer.pad - layer.kh) // layer.stride + 1
    ow = (x.shape[2] + 2 * layer.pad - layer.kw) // layer.stride + 1
    cols = cols.reshape(oh * ow, layer.kh * layer.kw, x.shape[0])
    reduced = cols.max(axis=1) if layer.kind == LayerKind.MAXPOOL else cols.mean(axis=1)
    return reduced.T.reshape(x.shape[0], oh, ow)


def reference_forward(network: NetworkGraph, x: np.ndarray) -> dict[str, np.ndarray]:
    """
    Pasada hacia delante en float64.

    Args:
        network: Red con pesos de precisión completa
        x: Entrada (C, H, W)

    Returns:
        Activaciones por identificador (entrada y salida de cada capa)
    """
    x = np.asarray(x, dtype=np.float64)
    if tuple(x.shape) != tuple(network.input_shape):
        raise ShapeError(f"entrada de forma {x.shape}, la red espera {network.input_shape}")

    acts: dict[str, np.ndarray] = {INPUT_ID: x}
    for layer in network.layers:
        inputs = [acts[src] for src in layer.sources]
        kind = layer.kind
        if kind.is_compute and layer.weights is None:
            raise ManifestError(f"la capa '{layer.name}' no tiene pesos cargados")

        if kind == LayerKind.CONV:
            out = layer.activation.apply_float(_conv(layer, inputs[0]))
        elif kind == LayerKind.FC:
            flat = inputs[0].reshape(-1)
            out = layer.weights @ flat
            if layer.bias is not None:
                out = out + layer.bias
            out = layer.activation.apply_float(out).reshape(-1, 1, 1)
        elif kind in (LayerKind.MAXPOOL, LayerKind.AVGPOOL):
            out = _pool(layer, inputs[0])
        elif kind == LayerKind.ADD:
            out = layer.activation.apply_float(np.sum(inputs, axis=0))
        elif kind == LayerKind.CONCAT:
            out = np.concatenate(inputs, axis=0)
        elif kind == LayerKind.ACT:
            out = layer.activation.apply_float(inputs[0])
        else:
            raise ManifestError(f"capa '{layer.name}' de tipo {kind.value} no ejecutable")
        acts[layer.name] = out
    return acts


def capture_calibration(network: NetworkGraph, batch: np.ndarray) -> dict[str, np.ndarray]:
    """
    Activaciones de un lote de calibración, apiladas por tensor.

    Args:
        batch: (N, C, H, W)

    Returns:
        Por identificador de activación, array (N, ...) con las N muestras
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or batch.shape[0] == 0:
        raise ShapeError(f"lote de calibración con forma {batch.shape}, se espera (N, C, H, W)")
    per_sample = [reference_forward(network, sample) for sample in batch]
    logger.info(f"[Reference] Calibración capturada con {len(per_sample)} muestras")
    return {tid: np.stack([acts[tid] for acts in per_sample]) for tid in per_sample[0]}
