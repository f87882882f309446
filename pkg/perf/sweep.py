"""
Perf Sweep - Exploración de (Nm, Np)
====================================

Para cada red y cada par candidato se elige el reparto (Pifm, Pofm) con
`best_split` y se ordenan los resultados por rendimiento.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from reporting import csv_text, format_number
from .model import BufferSizes, PackingMode, PerfReport, best_split
from .networks import LayerDims

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "model", "rank", "Nm", "Np", "Pifm", "Pofm", "GOPS", "utilization", "gops_per_dsp",
    "bandwidth_MBps", "bandwidth_ok", "ifmb_bits", "wb_bits", "ofmb_bits",
]


@dataclass
class SweepRow:
    """Una fila del barrido: la mejor configuración para (red, Nm, Np)."""
    model: str
    rank: int
    report: PerfReport

    def values(self) -> list:
        cfg = self.report.config
        buffers = self.report.buffers
        return [
            self.model,
            self.rank,
            cfg.nm,
            cfg.np,
            cfg.pifm,
            cfg.pofm,
            format_number(self.report.gops, ".2f"),
            format_number(self.report.utilization, ".4f"),
            format_number(self.report.gops_per_dsp, ".4f"),
            format_number(self.report.bandwidth / 1e6, ".2f"),
            format_number(self.report.bandwidth_ok),
            buffers.ifmb,
            buffers.wb,
            buffers.ofmb,
        ]


def sweep(
    networks: Sequence[tuple[str, Sequence[LayerDims]]],
    candidates: Sequence[tuple[int, int]],
    dsp_count: int = 768,
    freq_hz: float = 200e6,
    bw_code_bits: int = 8,
    packing: PackingMode = "channel",
    buffers: BufferSizes = BufferSizes(),
    board_bandwidth: float | None = None,
    threads: int = 1,
) -> list[SweepRow]:
    """
    Evalúa cada (Nm, Np) en cada red.

    Returns:
        Filas ordenadas por (red, Nm, Np); `rank` es la posición por
        rendimiento dentro de su red (empate: menor ancho de banda)

    Raises:
        ConfigConstraintError: si algún candidato viola Nm·Np = 4·DSP
    """
    candidates = sorted(set(candidates))
    tasks = [(name, dims, nm, np_count) for name, dims in networks for nm, np_count in candidates]

    def run(task):
        name, dims, nm, np_count = task
        return best_split(dims, nm, np_count, dsp_count, freq_hz, bw_code_bits, packing, buffers, board_bandwidth)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run, tasks))
    else:
        reports = [run(task) for task in tasks]

    rows: list[SweepRow] = []
    for name, _ in networks:
        mine = [report for task, report in zip(tasks, reports) if task[0] == name]
        ranked = sorted(
            range(len(mine)),
            key=lambda i: (-mine[i].gops, mine[i].bandwidth, i),
        )
        rank_of = {i: position + 1 for position, i in enumerate(ranked)}
        rows.extend(SweepRow(name, rank_of[i], report) for i, report in enumerate(mine))
        best = mine[ranked[0]].config
        logger.info(f"[Sweep] {name}: mejor Nm={best.nm} Np={best.np} ({mine[ranked[0]].gops:.1f} GOPS)")
    return rows


def sweep_csv(rows: Sequence[SweepRow], stamp: bool = False) -> str:
    return csv_text(SWEEP_COLUMNS, (row.values() for row in rows), stamp=stamp)
