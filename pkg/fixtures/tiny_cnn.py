"""
Tiny CNN Fixture - Generador determinista de la red de prueba
=============================================================

Produce, a partir de una semilla, los tres ficheros que necesita el
flujo quantize → eval con `fixtures/tiny_cnn.manifest`:

- <prefijo>.weights.bin: pesos float32 (filtros diseñados + FC ajustada)
- <prefijo>.calib.bin:   entradas de calibración float32
- <prefijo>.npz:         conjunto etiquetado (x, y)

Los filtros de la primera conv detectan franjas horizontales, verticales,
tablero y media local; la FC final se ajusta por mínimos cuadrados
regularizados sobre las características de la red.

Las seis clases se solapan: cada patrón lleva una mezcla
aleatoria de otro patrón y las proporciones de clases vecinas comparten
un tramo (p. ej. franjas horizontales con hasta 0.6 de verticales frente
a cuadrícula con al menos 0.4 de cada una). Con el ruido añadido ni la
referencia en float acierta todas las muestras, y la precisión depende
de distinguir proporciones entre características.

Uso:
    python -m fixtures.tiny_cnn [directorio]
"""

import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from inference import load_network, reference_forward, write_float_blob

logger = logging.getLogger(__name__)

MANIFEST = Path(__file__).parent / "tiny_cnn.manifest"
SIDE = 12
CHANNELS = 4
CLASSES = 6
NOISE_STD = 0.3
TRAIN_SAMPLES = 600


@dataclass(frozen=True)
class FixturePaths:
    manifest: Path
    weights: Path
    calib: Path
    dataset: Path


def _stripes(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Franjas horizontales, verticales y tablero de ±1 con fase aleatoria."""
    rows, cols = np.mgrid[0:SIDE, 0:SIDE]
    horizontal = rng.choice([-1.0, 1.0]) * np.where(rows % 2 == 0, 1.0, -1.0)
    vertical = rng.choice([-1.0, 1.0]) * np.where(cols % 2 == 0, 1.0, -1.0)
    checker = rng.choice([-1.0, 1.0]) * np.where((rows + cols) % 2 == 0, 1.0, -1.0)
    return horizontal, vertical, checker


def _blob(rng: np.random.Generator) -> np.ndarray:
    rows, cols = np.mgrid[0:SIDE, 0:SIDE]
    cy, cx = rng.uniform(3.5, 7.5, size=2)
    sigma = rng.uniform(1.5, 3.0)
    return 2 * np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2 * sigma**2))


def make_pattern(label: int, rng: np.random.Generator) -> np.ndarray:
    """Una muestra (1, 12, 12) de la clase dada."""
    amplitude = rng.uniform(0.5, 1.5)
    horizontal, vertical, checker = _stripes(rng)
    if label == 0:
        image = horizontal + rng.uniform(0.0, 0.6) * vertical
    elif label == 1:
        image = vertical + rng.uniform(0.0, 0.6) * horizontal
    elif label == 2:
        image = checker + rng.uniform(0.0, 0.3) * (horizontal if rng.random() < 0.5 else vertical)
    elif label == 3:
        image = _blob(rng) + rng.uniform(0.0, 0.4) * horizontal
    elif label == 4:
        image = rng.uniform(0.4, 1.0) * horizontal + rng.uniform(0.4, 1.0) * vertical
    else:
        image = _blob(rng) + rng.uniform(0.3, 0.8) * horizontal
    image = amplitude * image + rng.normal(0.0, NOISE_STD, size=image.shape)
    return image.reshape(1, SIDE, SIDE)


def make_samples(count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    labels = np.arange(count) % CLASSES
    x = np.stack([make_pattern(int(label), rng) for label in labels])
    return x, labels


def conv1_filters() -> np.ndarray:
    """(4, 1, 3, 3): franjas horizontales, verticales, tablero y media local."""
    horizontal = np.array([[1, 1, 1], [-2, -2, -2], [1, 1, 1]], dtype=np.float64) / 6
    checker = np.array([[1, -1, 1], [-1, 1, -1], [1, -1, 1]], dtype=np.float64) / 9
    mean = np.full((3, 3), 1 / 9)
    return np.stack([horizontal, horizontal.T, checker, mean])[:, None]


def bn_params() -> np.ndarray:
    """gamma, beta, media, varianza por canal."""
    return np.stack([
        np.full(CHANNELS, 2.0),
        np.full(CHANNELS, 0.1),
        np.full(CHANNELS, 0.05),
        np.full(CHANNELS, 1.0),
    ])


def conv2_filters(rng: np.random.Generator) -> np.ndarray:
    """Casi identidad: 0.5 en el centro del propio canal más ruido pequeño."""
    weights = rng.normal(0.0, 0.02, size=(CHANNELS, CHANNELS, 3, 3))
    for c in range(CHANNELS):
        weights[c, c, 1, 1] += 0.5
    return weights


def _weights(fc_weights: np.ndarray, fc_bias: np.ndarray, conv2: np.ndarray) -> list[np.ndarray]:
    return [
        conv1_filters(), np.zeros(CHANNELS),
        bn_params(),
        conv2, np.zeros(CHANNELS),
        fc_weights, fc_bias,
    ]


def fit_classifier(features: np.ndarray, labels: np.ndarray, ridge: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Mínimos cuadrados regularizados hacia objetivos one-hot; pesos (CLASSES, CHANNELS)."""
    design = np.hstack([features, np.ones((features.shape[0], 1))])
    targets = np.eye(CLASSES)[labels]
    gram = design.T @ design + ridge * features.shape[0] * np.eye(design.shape[1])
    solution = np.linalg.solve(gram, design.T @ targets)
    return solution[:-1].T, solution[-1]


def generate_fixture(
    out_dir: str | Path,
    samples: int = 240,
    calib_samples: int = 12,
    seed: int = 0,
    prefix: str = "tiny_cnn",
) -> FixturePaths:
    """
    Escribe pesos, calibración y conjunto de datos en `out_dir`.

    Returns:
        Rutas de los ficheros generados (el manifiesto es el del repositorio)
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = FixturePaths(
        manifest=MANIFEST,
        weights=out_dir / f"{prefix}.weights.bin",
        calib=out_dir / f"{prefix}.calib.bin",
        dataset=out_dir / f"{prefix}.npz",
    )

    conv2 = conv2_filters(rng)
    train_x, train_y = make_samples(TRAIN_SAMPLES, rng)

    # Primera pasada con la FC a cero para obtener las características
    write_float_blob(paths.weights, _weights(np.zeros((CLASSES, CHANNELS)), np.zeros(CLASSES), conv2))
    network = load_network(paths.manifest, paths.weights)
    features = np.stack([reference_forward(network, x)["gap"].reshape(-1) for x in train_x])
    fc_weights, fc_bias = fit_classifier(features, train_y)
    write_float_blob(paths.weights, _weights(fc_weights, fc_bias, conv2))

    x, y = make_samples(samples, rng)
    np.savez(paths.dataset, x=x.astype(np.float32), y=y.astype(np.int64))

    calib_x, _ = make_samples(calib_samples, rng)
    write_float_blob(paths.calib, [calib_x])

    train_hits = np.mean(np.argmax(features @ fc_weights.T + fc_bias, axis=1) == train_y)
    logger.info(
        f"[TinyCnn] {samples} muestras de {CLASSES} clases, {calib_samples} de calibración en {out_dir} "
        f"(acierto de la FC en entrenamiento {100 * train_hits:.1f}%)"
    )
    return paths


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    target = sys.argv[1] if len(sys.argv) > 1 else str(Path(__file__).parent / "data")
    print(generate_fixture(target))
