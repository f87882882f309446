"""
Inference Evaluate - Precisión del camino cuantizado frente a la referencia
===========================================================================

Ejecuta las dos rutas sobre un conjunto etiquetado y compara top-k.
También recorre anchos de bits (8 a 4) eligiendo el mejor formato de
cada ancho por MSE.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from errors import EmptyDatasetError, ShapeError
from quantizer import QuantReport, QuantScheme, candidate_formats, search_format
from reporting import csv_text
from .engine import DatapathConfig, prepare_model, quantized_forward
from .network import NetworkGraph
from .reference import reference_forward

logger = logging.getLogger(__name__)

REFERENCE_LABEL = "fp32"


@dataclass
class AccuracyRow:
    """Precisión de una ruta (referencia o un esquema)."""
    label: str
    topk: dict[int, float]
    per_class: dict[int, float]
    samples: int
    predictions: np.ndarray = field(repr=False, default=None)

    @property
    def top1(self) -> float:
        return self.topk[1]


@dataclass
class AccuracyReport:
    """Filas de precisión; la primera es siempre la referencia fp32."""
    rows: list[AccuracyRow] = field(default_factory=list)

    @property
    def reference(self) -> AccuracyRow:
        return self.rows[0]

    def row(self, label: str) -> AccuracyRow:
        for row in self.rows:
            if row.label == label:
                return row
        raise KeyError(label)

    def gap(self, label: str) -> float:
        """Puntos porcentuales de top-1 perdidos frente a la referencia."""
        return self.reference.top1 - self.row(label).top1

    def to_csv(self, stamp: bool = False) -> str:
        ks = sorted(self.reference.topk)
        header = ["model"] + [f"top{k}" for k in ks] + ["gap_top1", "samples"]
        rows = [
            [row.label]
            + [format(row.topk[k], ".2f") for k in ks]
            + [format(self.reference.top1 - row.top1, ".2f"), row.samples]
            for row in self.rows
        ]
        return csv_text(header, rows, stamp=stamp)

    def per_class_csv(self) -> str:
        classes = sorted(self.reference.per_class)
        header = ["model"] + [f"class{c}" for c in classes]
        rows = [[row.label] + [format(row.per_class.get(c, 0.0), ".2f") for c in classes] for row in self.rows]
        return csv_text(header, rows)


def topk_hits(logits: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """True donde la etiqueta está entre las k mayores (empates por índice menor)."""
    k = min(k, logits.shape[1])
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return np.any(order == labels[:, None], axis=1)


def _accuracy_row(label: str, logits: np.ndarray, labels: np.ndarray, topk: Sequence[int]) -> AccuracyRow:
    per_class = {}
    top1 = topk_hits(logits, labels, 1)
    for cls in np.unique(labels):
        mask = labels == cls
        per_class[int(cls)] = 100.0 * float(np.mean(top1[mask]))
    return AccuracyRow(
        label=label,
        topk={int(k): 100.0 * float(np.mean(topk_hits(logits, labels, k))) for k in sorted(set(topk) | {1})},
        per_class=per_class,
        samples=int(labels.size),
        predictions=np.argmax(logits, axis=1),
    )


def _map(fn, items, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def reference_logits(network: NetworkGraph, x: np.ndarray, threads: int = 1) -> np.ndarray:
    out_id = network.output_id
    return np.stack(_map(lambda s: reference_forward(network, s)[out_id].reshape(-1), list(x), threads))


def quantized_logits(
    network: NetworkGraph,
    scheme: QuantScheme,
    x: np.ndarray,
    config: DatapathConfig = DatapathConfig(),
    threads: int = 1,
) -> np.ndarray:
    model = prepare_model(network, scheme, config)
    out_id = network.output_id
    return np.stack(_map(lambda s: quantized_forward(model, s)[out_id].dequantize().reshape(-1), list(x), threads))


def _check_dataset(network: NetworkGraph, dataset: tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    x, y = dataset
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise EmptyDatasetError("el conjunto de evaluación está vacío")
    if tuple(x.shape[1:]) != tuple(network.input_shape):
        raise ShapeError(f"muestras de forma {x.shape[1:]}, la red espera {network.input_shape}")
    return x, y


def evaluate_many(
    network: NetworkGraph,
    schemes: Sequence[tuple[str, QuantScheme]],
    dataset: tuple[np.ndarray, np.ndarray],
    topk: Sequence[int] = (1, 5),
    config: DatapathConfig = DatapathConfig(),
    threads: int = 1,
) -> AccuracyReport:
    """
    Precisión de la referencia y de cada esquema sobre el mismo conjunto.

    Args:
        schemes: Pares (etiqueta de fila, esquema)

    Raises:
        EmptyDatasetError: si el conjunto está vacío
    """
    x, y = _check_dataset(network, dataset)
    report = AccuracyReport([_accuracy_row(REFERENCE_LABEL, reference_logits(network, x, threads), y, topk)])
    for label, scheme in schemes:
        logits = quantized_logits(network, scheme, x, config, threads)
        report.rows.append(_accuracy_row(label, logits, y, topk))
        logger.info(
            f"[Evaluate] {label}: top-1 {report.rows[-1].top1:.2f}% "
            f"(referencia {report.reference.top1:.2f}%, diferencia {report.gap(label):.2f})"
        )
    return report


def evaluate(
    network: NetworkGraph,
    scheme: QuantScheme,
    dataset: tuple[np.ndarray, np.ndarray],
    topk: Sequence[int] = (1, 5),
    config: DatapathConfig = DatapathConfig(),
    threads: int = 1,
) -> AccuracyReport:
    """Referencia fp32 y un esquema; la diferencia sale de `report.gap(formato)`."""
    return evaluate_many(network, [(scheme.format.name, scheme)], dataset, topk, config, threads)


def select_format_by_accuracy(report: AccuracyReport, scores: dict[str, float] | None = None) -> str:
    """
    Etiqueta con mejor top-1 (sin contar la referencia).

    Empates: menor puntuación MSE si se da `scores`, después el orden de filas.
    """
    scores = scores or {}
    candidates = list(enumerate(report.rows[1:]))
    if not candidates:
        raise EmptyDatasetError("no hay filas cuantizadas que comparar")
    _, best = min(
        candidates,
        key=lambda item: (-item[1].top1, scores.get(item[1].label, float("inf")), item[0]),
    )
    return best.label


def explore_bitwidths(
    network: NetworkGraph,
    calibration: dict[str, np.ndarray],
    dataset: tuple[np.ndarray, np.ndarray],
    widths: Sequence[int] = (8, 7, 6, 5, 4),
    sf_window: tuple[int, int] = (-16, 16),
    max_bias_frac_bits: int = 24,
    topk: Sequence[int] = (1, 5),
    config: DatapathConfig = DatapathConfig(),
    threads: int = 1,
) -> tuple[AccuracyReport, dict[int, QuantReport]]:
    """
    Para cada ancho total elige el formato de menor MSE y mide su precisión.

    Returns:
        (informe de precisión con filas "<ancho>b:<formato>", informes de cuantización por ancho)
    """
    schemes: list[tuple[str, QuantScheme]] = []
    quant_reports: dict[int, QuantReport] = {}
    for width in widths:
        scheme, qreport = search_format(
            network, calibration, candidate_formats(width), sf_window, max_bias_frac_bits, threads
        )
        quant_reports[width] = qreport
        schemes.append((f"{width}b:{scheme.format.name}", scheme))
        logger.info(f"[Evaluate] {width} bits: formato {scheme.format}")
    return evaluate_many(network, schemes, dataset, topk, config, threads), quant_reports
