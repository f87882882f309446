"""
Perf Module - Modelo de rendimiento del array de PE
===================================================

Ciclos, rendimiento, utilización, anchos de búfer y ancho de banda
externo en función de (Nm, Np, Pifm, Pofm), y barrido de candidatos.
"""

from .networks import LayerDims, network_dims, load_dims, vgg16_dims, VGG16_MANIFEST
from .model import (
    PeConfig,
    BufferSizes,
    BufferWidths,
    LayerPerf,
    PerfReport,
    buffer_widths,
    reduction_steps,
    layer_cycles,
    layer_traffic,
    network_perf,
    bandwidth_requirement,
    splits,
    best_split,
)
from .sweep import SweepRow, SWEEP_COLUMNS, sweep, sweep_csv

__all__ = [
    "LayerDims",
    "network_dims",
    "load_dims",
    "vgg16_dims",
    "VGG16_MANIFEST",
    "PeConfig",
    "BufferSizes",
    "BufferWidths",
    "LayerPerf",
    "PerfReport",
    "buffer_widths",
    "reduction_steps",
    "layer_cycles",
    "layer_traffic",
    "network_perf",
    "bandwidth_requirement",
    "splits",
    "best_split",
    "SweepRow",
    "SWEEP_COLUMNS",
    "sweep",
    "sweep_csv",
]
