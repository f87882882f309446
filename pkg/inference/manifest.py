"""
Inference Manifest - Importación de redes
=========================================

Manifiesto de texto, una capa por línea:

    input shape=3x32x32
    conv name=c1 ic=3 oc=16 k=3x3 stride=1 pad=1 act=relu w=c1.w b=c1.b
    bn   name=n1 c=16 eps=1e-5 w=n1.p
    maxpool k=2x2 stride=2
    fc   ic=4096 oc=10 w=fc.w b=fc.b

Pesos: float32 little-endian, tensores concatenados en el orden del
manifiesto (por capa, primero `w` y después `b`). Las normalizaciones se
pliegan en la conv/fc que las precede.
"""

import logging
from pathlib import Path

import numpy as np

from errors import InputFileError, ManifestError, ShapeError
from pe import Activation
from .network import INPUT_ID, Layer, LayerKind, NetworkGraph, Shape

logger = logging.getLogger(__name__)

_ALLOWED_KEYS = {
    LayerKind.CONV: {"name", "ic", "oc", "k", "stride", "pad", "act", "w", "b", "src"},
    LayerKind.FC: {"name", "ic", "oc", "act", "w", "b", "src"},
    LayerKind.BN: {"name", "c", "eps", "w", "src"},
    LayerKind.ACT: {"name", "kind", "src"},
    LayerKind.MAXPOOL: {"name", "k", "stride", "pad", "src"},
    LayerKind.AVGPOOL: {"name", "k", "stride", "src"},
    LayerKind.ADD: {"name", "src", "act"},
    LayerKind.CONCAT: {"name", "src"},
}


def _parse_dims(text: str, count: int, what: str) -> tuple[int, ...]:
    parts = text.lower().split("x")
    if count == 2 and len(parts) == 1:
        parts = parts * 2
    if len(parts) != count:
        raise ManifestError(f"{what} inválido: '{text}'")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError as e:
        raise ManifestError(f"{what} inválido: '{text}'") from e
    if any(d < 1 for d in dims):
        raise ManifestError(f"{what} debe ser positivo: '{text}'")
    return dims


def _int(fields: dict, key: str, default: int | None = None, minimum: int = 1) -> int:
    if key not in fields:
        if default is None:
            raise ManifestError(f"falta '{key}='")
        return default
    try:
        value = int(fields[key])
    except ValueError as e:
        raise ManifestError(f"'{key}' debe ser entero: '{fields[key]}'") from e
    if value < minimum:
        raise ManifestError(f"'{key}' debe ser >= {minimum}: {value}")
    return value


def parse_manifest(text: str, source: str = "<manifiesto>") -> tuple[Shape, list[Layer]]:
    """
    Interpreta el manifiesto sin pesos ni formas.

    Raises:
        ManifestError: si alguna línea no sigue la gramática
    """
    input_shape: Shape | None = None
    layers: list[Layer] = []
    names: set[str] = {INPUT_ID}

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            fields = dict(item.split("=", 1) for item in rest)
        except ValueError:
            raise ManifestError(f"{source}:{number}: se esperaban pares clave=valor: '{raw}'") from None

        try:
            if head == "input":
                input_shape = _parse_dims(fields.get("shape", ""), 3, "shape")
                continue
            try:
                kind = LayerKind(head)
            except ValueError:
                raise ManifestError(f"tipo de capa desconocido: '{head}'") from None
            unknown = set(fields) - _ALLOWED_KEYS[kind]
            if unknown:
                raise ManifestError(f"claves desconocidas para {kind.value}: {sorted(unknown)}")
            layer = _build_layer(kind, fields, len(layers), layers)
        except ManifestError as e:
            raise ManifestError(f"{source}:{number}: {e}") from e

        if layer.name in names:
            raise ManifestError(f"{source}:{number}: nombre de capa repetido '{layer.name}'")
        names.add(layer.name)
        layers.append(layer)

    if input_shape is None:
        raise ManifestError(f"{source}: falta la línea 'input shape=CxHxW'")
    if not layers:
        raise ManifestError(f"{source}: la red no tiene capas")
    return input_shape, layers


def _build_layer(kind: LayerKind, fields: dict, index: int, previous: list[Layer]) -> Layer:
    name = fields.get("name", f"L{index}")
    default_src = previous[-1].name if previous else INPUT_ID
    sources = tuple(s for s in fields.get("src", default_src).split(",") if s)

    layer = Layer(name=name, kind=kind, sources=sources)
    if kind in (LayerKind.ADD, LayerKind.CONCAT) and len(sources) < 2:
        raise ManifestError(f"'{kind.value}' necesita al menos dos fuentes en src=")
    if kind not in (LayerKind.ADD, LayerKind.CONCAT) and len(sources) != 1:
        raise ManifestError(f"'{kind.value}' admite una única fuente")

    if kind == LayerKind.CONV:
        layer.in_channels = _int(fields, "ic")
        layer.out_channels = _int(fields, "oc")
        layer.kernel = _parse_dims(fields.get("k", "1x1"), 2, "k")
        layer.stride = _int(fields, "stride", 1)
        layer.pad = _int(fields, "pad", 0, minimum=0)
    elif kind == LayerKind.FC:
        layer.in_channels = _int(fields, "ic")
        layer.out_channels = _int(fields, "oc")
    elif kind == LayerKind.BN:
        layer.out_channels = layer.in_channels = _int(fields, "c")
        try:
            layer.eps = float(fields.get("eps", "1e-5"))
        except ValueError as e:
            raise ManifestError(f"eps inválido: '{fields['eps']}'") from e
    elif kind in (LayerKind.MAXPOOL, LayerKind.AVGPOOL):
        layer.kernel = _parse_dims(fields.get("k", ""), 2, "k")
        layer.stride = _int(fields, "stride", layer.kernel[0])
        layer.pad = _int(fields, "pad", 0, minimum=0)
        if layer.pad >= min(layer.kernel):
            raise ManifestError(
                f"pad={layer.pad} en '{name}': el relleno debe ser menor que el kernel {layer.kernel}"
            )

    if kind == LayerKind.ACT:
        layer.activation = Activation.parse(fields.get("kind", "relu"))
    elif "act" in fields:
        layer.activation = Activation.parse(fields["act"])

    if kind.is_compute or kind == LayerKind.BN:
        if "w" not in fields:
            raise ManifestError(f"'{kind.value}' necesita w=<tensor-id>")
        layer.weight_id = fields["w"]
        layer.bias_id = fields.get("b")
    return layer


def _check_finite(values: np.ndarray, source) -> None:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise InputFileError(f"{source}: {bad.size} valores no finitos (el primero en la posición {int(bad[0])})")


def read_float_blob(path: str | Path) -> np.ndarray:
    """
    Lee float32 little-endian.

    Raises:
        InputFileError: si el fichero no existe o su tamaño no es múltiplo de 4
            o contiene NaN o infinitos
    """
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"no existe el fichero {path}")
    if path.stat().st_size % 4:
        raise InputFileError(f"{path}: tamaño {path.stat().st_size} no es múltiplo de 4 bytes")
    data = np.fromfile(path, dtype="<f4").astype(np.float64)
    _check_finite(data, path)
    return data


def write_float_blob(path: str | Path, arrays: list[np.ndarray]) -> None:
    """Concatena tensores en float32 little-endian."""
    flat = [np.asarray(a, dtype="<f4").ravel() for a in arrays]
    data = np.concatenate(flat) if flat else np.zeros(0, dtype="<f4")
    data.astype("<f4").tofile(path)


def _assign_weights(layers: list[Layer], blob: np.ndarray, source: str) -> None:
    expected = sum(layer.weight_count() + layer.bias_count() for layer in layers)
    if blob.size != expected:
        raise InputFileError(
            f"{source}: el blob tiene {blob.size} valores y el manifiesto pide {expected}"
        )
    offset = 0
    for layer in layers:
        count = layer.weight_count()
        if not count:
            continue
        chunk = blob[offset:offset + count]
        offset += count
        if layer.kind == LayerKind.CONV:
            layer.weights = chunk.reshape(layer.out_channels, layer.in_channels, layer.kh, layer.kw)
        elif layer.kind == LayerKind.FC:
            layer.weights = chunk.reshape(layer.out_channels, layer.in_channels)
        else:
            layer.weights = chunk.reshape(4, layer.out_channels)
        bias_count = layer.bias_count()
        if bias_count:
            layer.bias = blob[offset:offset + bias_count].copy()
            offset += bias_count


def fold_batchnorm(layers: list[Layer], with_weights: bool = True) -> list[Layer]:
    """
    Pliega cada `bn` en la conv/fc que la precede.

    Raises:
        ManifestError: si la normalización no es plegable (fuente que no es
            conv/fc, con activación propia o con otros consumidores)
    """
    by_name = {layer.name: layer for layer in layers}
    alias: dict[str, str] = {}
    folded: list[Layer] = []

    for layer in layers:
        layer.sources = tuple(alias.get(src, src) for src in layer.sources)
        if layer.kind != LayerKind.BN:
            folded.append(layer)
            continue

        target = by_name.get(layer.source)
        if target is None or not target.kind.is_compute:
            raise ManifestError(f"normalización '{layer.name}' no plegable: su fuente no es conv/fc")
        if target.activation.kind != "none":
            raise ManifestError(f"normalización '{layer.name}' no plegable: '{target.name}' ya tiene activación")
        if target.out_channels != layer.out_channels:
            raise ManifestError(f"normalización '{layer.name}': c={layer.out_channels} ≠ oc={target.out_channels}")
        consumers = [other.name for other in layers if target.name in other.sources and other is not layer]
        if consumers:
            raise ManifestError(
                f"normalización '{layer.name}' no plegable: '{target.name}' también alimenta {consumers}"
            )

        if with_weights:
            gamma, beta, mean, var = layer.weights
            if np.any(var + layer.eps <= 0):
                raise ManifestError(f"normalización '{layer.name}': varianza no positiva")
            scale = gamma / np.sqrt(var + layer.eps)
            shape = (-1,) + (1,) * (target.weights.ndim - 1)
            target.weights = target.weights * scale.reshape(shape)
            bias = target.bias if target.bias is not None else np.zeros(target.out_channels)
            target.bias = (bias - mean) * scale + beta
        if target.bias_id is None:
            target.bias_id = f"{target.name}.b"
        alias[layer.name] = target.name
        logger.debug(f"[Manifest] Normalización '{layer.name}' plegada en '{target.name}'")

    return folded


def load_network(
    manifest_path: str | Path,
    weights_path: str | Path | None = None,
) -> NetworkGraph:
    """
    Importa una red del manifiesto y (opcionalmente) del blob de pesos.

    Sin pesos sólo se obtienen las dimensiones (suficiente para el modelo
    de rendimiento).

    Raises:
        InputFileError, ManifestError, ShapeError
    """
    manifest_path = Path(manifest_path)
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputFileError(f"no se pudo leer el manifiesto {manifest_path}: {e}") from e
    return build_network(text, weights_path, source=str(manifest_path))


def build_network(
    text: str,
    weights_path: str | Path | None = None,
    source: str = "<manifiesto>",
) -> NetworkGraph:
    input_shape, layers = parse_manifest(text, source)

    if weights_path is not None:
        _assign_weights(layers, read_float_blob(weights_path), str(weights_path))
    layers = fold_batchnorm(layers, with_weights=weights_path is not None)

    network = NetworkGraph(input_shape, layers)
    network.infer_shapes()
    logger.info(
        f"[Manifest] Red importada: {len(network.layers)} capas, entrada {input_shape}, salida {network.output_shape}"
    )
    return network


def read_inputs(path: str | Path, shape: Shape) -> np.ndarray:
    """
    Lee un blob de entradas como (N, C, H, W).

    Raises:
        InputFileError: si el tamaño no es múltiplo de C·H·W o hay valores no finitos
    """
    data = read_float_blob(path)
    per_sample = int(np.prod(shape))
    if data.size == 0 or data.size % per_sample:
        raise InputFileError(f"{path}: {data.size} valores no es múltiplo de {per_sample} (forma {shape})")
    return data.reshape((-1,) + tuple(shape))


def load_dataset(path: str | Path, shape: Shape) -> tuple[np.ndarray, np.ndarray]:
    """
    Lee un conjunto etiquetado `.npz` con `x` (N, C, H, W) e `y` (N).

    Raises:
        InputFileError: si falta el fichero o las claves, o `x` no es finito
        ShapeError: si las formas no coinciden con la red
    """
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"no existe el conjunto de datos {path}")
    try:
        with np.load(path) as data:
            x = np.asarray(data["x"], dtype=np.float64)
            y = np.asarray(data["y"], dtype=np.int64)
    except (KeyError, ValueError, OSError) as e:
        raise InputFileError(f"{path}: se esperan arrays 'x' e 'y' ({e})") from e
    _check_finite(x, path)
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(shape):
        raise ShapeError(f"{path}: x tiene forma {x.shape}, la red espera (N, {shape})")
    if y.shape != (x.shape[0],):
        raise ShapeError(f"{path}: y tiene forma {y.shape}, se esperaba ({x.shape[0]},)")
    return x, y
