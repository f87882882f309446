"""
Perf Networks - Dimensiones de capa para el modelo de rendimiento
=================================================================
"""

import logging
from dataclasses import dataclass
from pathlib import Path

from inference.manifest import load_network
from inference.network import LayerKind, NetworkGraph

logger = logging.getLogger(__name__)

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "fixtures"
VGG16_MANIFEST = FIXTURES_DIR / "vgg16.manifest"


@dataclass(frozen=True)
class LayerDims:
    """Dimensiones de una capa de cómputo (fc: kernel y mapas 1×1)."""
    name: str
    ic: int
    oc: int
    kh: int = 1
    kw: int = 1
    ih: int = 1
    iw: int = 1
    oh: int = 1
    ow: int = 1

    @property
    def macs(self) -> int:
        return self.kh * self.kw * self.ic * self.oc * self.oh * self.ow


def network_dims(network: NetworkGraph) -> list[LayerDims]:
    """Capas conv/fc de una red con formas ya propagadas."""
    dims = []
    for layer in network.compute_layers():
        if layer.kind == LayerKind.CONV:
            _, ih, iw = layer.input_shape
            _, oh, ow = layer.output_shape
            dims.append(LayerDims(layer.name, layer.in_channels, layer.out_channels, layer.kh, layer.kw, ih, iw, oh, ow))
        else:
            dims.append(LayerDims(layer.name, layer.in_channels, layer.out_channels))
    return dims


def load_dims(manifest_path: str | Path) -> list[LayerDims]:
    """Dimensiones de un manifiesto (no hacen falta pesos)."""
    return network_dims(load_network(manifest_path))


def vgg16_dims() -> list[LayerDims]:
    """Las 13 conv y 3 fc de VGG16 con entrada 3×224×224."""
    return load_dims(VGG16_MANIFEST)
