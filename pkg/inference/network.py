"""
Inference Network - Grafo de capas y tensores
=============================================

Una red es una lista ordenada de capas. La salida de cada capa se
identifica por el nombre de la capa; la entrada de la red es `input`.
Las formas son (C, H, W).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from errors import ManifestError, ShapeError
from lpfp import LpfpFormat, decode_array
from pe import Activation, NO_ACTIVATION

logger = logging.getLogger(__name__)

INPUT_ID = "input"

Shape = tuple[int, int, int]


class LayerKind(str, Enum):
    """Tipos de capa admitidos."""
    CONV = "conv"
    FC = "fc"
    BN = "bn"
    ACT = "act"
    MAXPOOL = "maxpool"
    AVGPOOL = "avgpool"
    ADD = "add"
    CONCAT = "concat"

    @property
    def is_compute(self) -> bool:
        return self in (LayerKind.CONV, LayerKind.FC)


@dataclass
class Layer:
    """Una capa con sus dimensiones, activación y pesos de precisión completa."""
    name: str
    kind: LayerKind
    sources: tuple[str, ...] = ()
    in_channels: int = 0
    out_channels: int = 0
    kernel: tuple[int, int] = (1, 1)
    stride: int = 1
    pad: int = 0
    activation: Activation = NO_ACTIVATION
    weight_id: str | None = None
    bias_id: str | None = None
    eps: float = 1e-5
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    input_shape: Shape | None = None
    output_shape: Shape | None = None

    @property
    def source(self) -> str:
        return self.sources[0]

    @property
    def kh(self) -> int:
        return self.kernel[0]

    @property
    def kw(self) -> int:
        return self.kernel[1]

    def weight_count(self) -> int:
        if self.kind == LayerKind.CONV:
            return self.out_channels * self.in_channels * self.kh * self.kw
        if self.kind == LayerKind.FC:
            return self.out_channels * self.in_channels
        if self.kind == LayerKind.BN:
            return 4 * self.out_channels
        return 0

    def bias_count(self) -> int:
        return self.out_channels if self.bias_id and self.kind.is_compute else 0


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    """floor((size + 2·pad - kernel) / stride) + 1"""
    out = (size + 2 * pad - kernel) // stride + 1
    if out < 1:
        raise ShapeError(f"salida vacía: tamaño {size}, kernel {kernel}, stride {stride}, pad {pad}")
    return out


@dataclass
class NetworkGraph:
    """Red con formas propagadas y sin normalizaciones (ya plegadas)."""
    input_shape: Shape
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        self._index = {layer.name: layer for layer in self.layers}

    def layer(self, name: str) -> Layer:
        try:
            return self._index[name]
        except KeyError:
            raise ManifestError(f"capa desconocida: '{name}'") from None

    @property
    def output_id(self) -> str:
        return self.layers[-1].name if self.layers else INPUT_ID

    @property
    def output_shape(self) -> Shape:
        return self.shape_of(self.output_id)

    def shape_of(self, tensor_id: str) -> Shape:
        if tensor_id == INPUT_ID:
            return self.input_shape
        return self.layer(tensor_id).output_shape

    def compute_layers(self) -> list[Layer]:
        return [layer for layer in self.layers if layer.kind.is_compute]

    def tensor_ids(self) -> list[str]:
        """Activaciones: la entrada y la salida de cada capa, en orden."""
        return [INPUT_ID] + [layer.name for layer in self.layers]

    def infer_shapes(self) -> None:
        """
        Propaga formas y comprueba que encadenan.

        Raises:
            ShapeError: si alguna capa recibe una forma incompatible
            ManifestError: si una fuente no precede a su consumidor
        """
        known: dict[str, Shape] = {INPUT_ID: self.input_shape}
        for layer in self.layers:
            for src in layer.sources:
                if src not in known:
                    raise ManifestError(f"capa '{layer.name}': la fuente '{src}' no la precede")
            shapes = [known[src] for src in layer.sources]
            layer.input_shape = shapes[0]
            layer.output_shape = _output_shape(layer, shapes)
            known[layer.name] = layer.output_shape
        self._index = {layer.name: layer for layer in self.layers}


def _output_shape(layer: Layer, shapes: list[Shape]) -> Shape:
    c, h, w = shapes[0]
    kind = layer.kind
    if kind == LayerKind.CONV:
        if c != layer.in_channels:
            raise ShapeError(f"capa '{layer.name}': ic={layer.in_channels} pero la entrada tiene {c} canales")
        return (
            layer.out_channels,
            conv_output_size(h, layer.kh, layer.stride, layer.pad),
            conv_output_size(w, layer.kw, layer.stride, layer.pad),
        )
    if kind == LayerKind.FC:
        if c * h * w != layer.in_channels:
            raise ShapeError(f"capa '{layer.name}': ic={layer.in_channels} pero la entrada tiene {c * h * w} valores")
        return (layer.out_channels, 1, 1)
    if kind in (LayerKind.MAXPOOL, LayerKind.AVGPOOL):
        return (
            c,
            conv_output_size(h, layer.kh, layer.stride, layer.pad),
            conv_output_size(w, layer.kw, layer.stride, layer.pad),
        )
    if kind == LayerKind.ADD:
        if any(shape != shapes[0] for shape in shapes):
            raise ShapeError(f"capa '{layer.name}': formas distintas en la suma: {shapes}")
        return shapes[0]
    if kind == LayerKind.CONCAT:
        if any(shape[1:] != (h, w) for shape in shapes):
            raise ShapeError(f"capa '{layer.name}': concat con alto/ancho distintos: {shapes}")
        return (sum(shape[0] for shape in shapes), h, w)
    return shapes[0]


@dataclass
class Tensor:
    """
    Tensor (C, H, W) de precisión completa o codificado en LPFP con su sf.
    """
    shape: Shape
    values: np.ndarray | None = None
    codes: np.ndarray | None = None
    format: LpfpFormat | None = None
    sf: int | None = None

    def __post_init__(self):
        payload = self.values if self.values is not None else self.codes
        if payload is None:
            raise ShapeError("tensor sin contenido")
        if payload.size != int(np.prod(self.shape)):
            raise ShapeError(f"el contenido ({payload.size}) no coincide con la forma {self.shape}")

    @classmethod
    def full_precision(cls, values: np.ndarray) -> "Tensor":
        values = np.asarray(values, dtype=np.float64)
        return cls(tuple(values.shape), values=values)

    @classmethod
    def quantized(cls, codes: np.ndarray, fmt: LpfpFormat, sf: int) -> "Tensor":
        codes = np.asarray(codes, dtype=np.uint8)
        return cls(tuple(codes.shape), codes=codes, format=fmt, sf=sf)

    @property
    def is_quantized(self) -> bool:
        return self.codes is not None

    def dequantize(self) -> np.ndarray:
        """Valores en float64 (exactos para tensores LPFP)."""
        if not self.is_quantized:
            return self.values
        return np.ldexp(decode_array(self.codes, self.format), -self.sf)
