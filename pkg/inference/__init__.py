"""
Inference Module - Ejecución de CNN pequeñas
============================================

Red importada de un manifiesto, camino cuantizado bit-exacto sobre el
datapath del PE y camino de referencia en float64.
"""

from .network import INPUT_ID, LayerKind, Layer, NetworkGraph, Tensor, conv_output_size
from .manifest import (
    parse_manifest,
    build_network,
    load_network,
    fold_batchnorm,
    read_float_blob,
    write_float_blob,
    read_inputs,
    load_dataset,
)
from .engine import (
    DatapathConfig,
    LayerParams,
    QuantizedModel,
    prepare_model,
    im2col,
    conv_accumulate,
    fc_accumulate,
    conv_forward,
    fc_forward,
    pool_forward,
    add_forward,
    concat_forward,
    act_forward,
    quantize_input,
    quantized_forward,
)
from .reference import reference_forward, capture_calibration
from .evaluate import (
    AccuracyRow,
    AccuracyReport,
    evaluate,
    evaluate_many,
    select_format_by_accuracy,
    explore_bitwidths,
    topk_hits,
)

__all__ = [
    "INPUT_ID",
    "LayerKind",
    "Layer",
    "NetworkGraph",
    "Tensor",
    "conv_output_size",
    "parse_manifest",
    "build_network",
    "load_network",
    "fold_batchnorm",
    "read_float_blob",
    "write_float_blob",
    "read_inputs",
    "load_dataset",
    "DatapathConfig",
    "LayerParams",
    "QuantizedModel",
    "prepare_model",
    "im2col",
    "conv_accumulate",
    "fc_accumulate",
    "conv_forward",
    "fc_forward",
    "pool_forward",
    "add_forward",
    "concat_forward",
    "act_forward",
    "quantize_input",
    "quantized_forward",
    "reference_forward",
    "capture_calibration",
    "AccuracyRow",
    "AccuracyReport",
    "evaluate",
    "evaluate_many",
    "select_format_by_accuracy",
    "explore_bitwidths",
    "topk_hits",
]
