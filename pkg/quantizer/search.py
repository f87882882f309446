"""
Quantizer Search - Selección de formato y factores de escala
============================================================

Para cada formato candidato se busca el sf óptimo de cada tensor (pesos y
activaciones de calibración); el formato elegido minimiza la media de los
MSE normalizados por la varianza de cada tensor.

Algunas activaciones comparten sf porque la capa que las une no hace
aritmética: max pool, activación independiente y concat (fuentes y salida).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from errors import CalibrationError, ManifestError, UsageError
from lpfp import LpfpFormat, formats_with_width
from .bias import choose_bias_frac_bits
from .scale import search_scale, tensor_mse
from .scheme import FormatScore, QuantReport, QuantScheme, TensorMse

logger = logging.getLogger(__name__)

KIND_WEIGHT = "weight"
KIND_ACTIVATION = "activation"


def candidate_formats(total_bits: int = 8) -> list[LpfpFormat]:
    """Todos los MaEb de un ancho total (7 formatos para 8 bits)."""
    return formats_with_width(total_bits)


def tied_groups(network) -> list[list[str]]:
    """
    Grupos de activaciones que deben compartir sf, en orden de aparición.

    Cada activación aparece en exactamente un grupo.
    """
    parent: dict[str, str] = {tid: tid for tid in network.tensor_ids()}

    def find(tid: str) -> str:
        while parent[tid] != tid:
            parent[tid] = parent[parent[tid]]
            tid = parent[tid]
        return tid

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    for layer in network.layers:
        if layer.kind.value in ("maxpool", "act", "concat"):
            for src in layer.sources:
                union(src, layer.name)

    groups: dict[str, list[str]] = {}
    for tid in network.tensor_ids():
        groups.setdefault(find(tid), []).append(tid)
    return list(groups.values())


def _search_group(
    task: tuple[LpfpFormat, list[str]],
    tensors: dict[str, tuple[str, np.ndarray]],
    sf_window: tuple[int, int],
) -> list[TensorMse]:
    fmt, members = task
    pooled = np.concatenate([np.ravel(tensors[tid][1]) for tid in members])
    sf, _ = search_scale(pooled, fmt, sf_window)
    rows = []
    for tid in members:
        kind, values = tensors[tid]
        values = np.asarray(values, dtype=np.float64)
        rows.append(TensorMse(fmt, tid, kind, sf, tensor_mse(values, fmt, sf), float(np.var(values))))
    return rows


def search_tensors(
    tensors: dict[str, tuple[str, np.ndarray]],
    formats: Sequence[LpfpFormat],
    sf_window: tuple[int, int] = (-16, 16),
    groups: list[list[str]] | None = None,
    threads: int = 1,
) -> QuantReport:
    """
    Búsqueda de sf por tensor para cada formato y puntuación por formato.

    Args:
        tensors: id -> (tipo, valores), en el orden en que se informa
        formats: Formatos candidatos, en orden de preferencia para empates
        sf_window: Ventana de sf
        groups: Grupos de tensores con sf compartido (por defecto, uno por tensor)
        threads: Hilos para las búsquedas independientes

    Returns:
        QuantReport con una fila por (formato, tensor) y el formato elegido marcado
    """
    if not formats:
        raise UsageError("no hay formatos candidatos")
    groups = groups or [[tid] for tid in tensors]
    order = {tid: i for i, tid in enumerate(tensors)}
    tasks = [(fmt, members) for fmt in formats for members in groups]

    def run(task):
        return _search_group(task, tensors, sf_window)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(task) for task in tasks]

    rows: list[TensorMse] = []
    summary: list[FormatScore] = []
    per_format = len(groups)
    for i, fmt in enumerate(formats):
        fmt_rows = [row for chunk in results[i * per_format:(i + 1) * per_format] for row in chunk]
        fmt_rows.sort(key=lambda row: order[row.tensor])
        rows.extend(fmt_rows)
        score = float(np.mean([row.normalized for row in fmt_rows]))
        summary.append(FormatScore(fmt, score))
        logger.info(f"[Quantizer] {fmt}: puntuación {score:.6e}")

    best = min(range(len(summary)), key=lambda i: (summary[i].score, i))
    summary[best] = FormatScore(summary[best].format, summary[best].score, selected=True)
    logger.info(f"[Quantizer] Formato elegido: {summary[best].format}")
    return QuantReport(rows, summary)


def network_tensors(network, calibration: dict[str, np.ndarray]) -> dict[str, tuple[str, np.ndarray]]:
    """
    Tensores a cuantizar en orden de esquema: entrada y, por capa, su
    activación de salida y sus pesos.

    Raises:
        CalibrationError: si falta la calibración de alguna capa
    """
    tensors: dict[str, tuple[str, np.ndarray]] = {}
    for tid in network.tensor_ids():
        if tid not in calibration:
            raise CalibrationError(f"falta la calibración de '{tid}'")
        tensors[tid] = (KIND_ACTIVATION, calibration[tid])
        if tid == network.tensor_ids()[0]:
            continue
        layer = network.layer(tid)
        if layer.kind.is_compute:
            if layer.weight_id in tensors or layer.weight_id in calibration:
                raise ManifestError(f"el tensor de pesos '{layer.weight_id}' choca con otro identificador")
            if layer.weights is None:
                raise CalibrationError(f"la capa '{tid}' no tiene pesos para cuantizar")
            tensors[layer.weight_id] = (KIND_WEIGHT, layer.weights)
    return tensors


def scheme_for(
    network,
    report: QuantReport,
    fmt: LpfpFormat,
    max_bias_frac_bits: int = 24,
) -> QuantScheme:
    """Esquema de un formato a partir de las filas del informe."""
    scale_factors = {row.tensor: row.sf for row in report.rows_for(fmt)}
    bias_frac = {
        layer.name: choose_bias_frac_bits(layer.bias, max_bias_frac_bits)
        for layer in network.compute_layers()
        if layer.bias is not None
    }
    return QuantScheme(fmt, scale_factors, bias_frac)


def search_format(
    network,
    calibration: dict[str, np.ndarray],
    formats: Sequence[LpfpFormat],
    sf_window: tuple[int, int] = (-16, 16),
    max_bias_frac_bits: int = 24,
    threads: int = 1,
) -> tuple[QuantScheme, QuantReport]:
    """
    Elige formato y factores de escala para una red.

    Args:
        network: Red con pesos de precisión completa
        calibration: Activaciones capturadas por identificador
        formats: Formatos candidatos

    Returns:
        (esquema del formato elegido, informe completo)

    Raises:
        CalibrationError: si falta la calibración de alguna capa
    """
    tensors = network_tensors(network, calibration)
    groups = tied_groups(network) + [
        [tid] for tid, (kind, _) in tensors.items() if kind == KIND_WEIGHT
    ]
    logger.info(
        f"[Quantizer] Buscando entre {len(formats)} formatos, {len(tensors)} tensores, ventana {sf_window}"
    )
    report = search_tensors(tensors, formats, sf_window, groups, threads)
    return scheme_for(network, report, report.selected, max_bias_frac_bits), report
