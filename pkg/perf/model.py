"""
Perf Model - Modelo analítico de rendimiento del array de PE
============================================================

Cada PE produce 2 píxeles × 2 canales de salida por pasada y procesa
Nm/4 canales de entrada por ciclo. Con Np = Pifm × Pofm PE:

    ciclos = KW·KH · ceil(IC / (Nm/4)) · ceil(OC / (2·Pofm)) · ceil(OH·OW / (2·Pifm))

Las techos modelan carriles desperdiciados. Pooling, activación y sumas
residuales no cuestan ciclos (se solapan en el post-proceso). Las paradas
por memoria no se modelan; con un límite de ancho de banda de placa se
marcan las capas que lo superan.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

from errors import ConfigConstraintError
from .networks import LayerDims

logger = logging.getLogger(__name__)

PackingMode = Literal["channel", "kernel"]

# Bits del intermedio en OFMB por PE
OFMB_BITS_PER_PE = 64
PSUM_BYTES = 2


@dataclass(frozen=True)
class PeConfig:
    """Paralelismo del array: Nm multiplicadores por PE, Np PE."""
    nm: int
    np: int
    pifm: int
    pofm: int
    dsp_count: int = 768
    freq_hz: float = 200e6
    bw_code_bits: int = 8

    def __post_init__(self):
        if self.nm < 4 or self.nm % 4:
            raise ConfigConstraintError(f"Nm={self.nm} debe ser múltiplo de 4")
        if self.nm * self.np != 4 * self.dsp_count:
            raise ConfigConstraintError(
                f"Nm·Np = {self.nm * self.np} ≠ 4·DSP = {4 * self.dsp_count}"
            )
        if self.pifm < 1 or self.pofm < 1 or self.pifm * self.pofm != self.np:
            raise ConfigConstraintError(
                f"Pifm·Pofm = {self.pifm}·{self.pofm} ≠ Np = {self.np}"
            )

    @property
    def lanes(self) -> int:
        """Canales de entrada por ciclo en cada PE."""
        return self.nm // 4

    @property
    def peak_gops(self) -> float:
        return 2 * self.nm * self.np * self.freq_hz / 1e9


@dataclass(frozen=True)
class BufferSizes:
    """Profundidades de IFMB (palabras) y WB (filas)."""
    ifmb_depth: int = 2048
    wb_depth: int = 64


@dataclass(frozen=True)
class BufferWidths:
    """Anchos en bits de los búferes on-chip."""
    ifmb: int
    wb: int
    ofmb: int


def buffer_widths(cfg: PeConfig) -> BufferWidths:
    """IFMB = Nm/2·Pifm·BW, WB = Nm/2·Pofm·BW, OFMB = 64·Np."""
    return BufferWidths(
        ifmb=cfg.nm // 2 * cfg.pifm * cfg.bw_code_bits,
        wb=cfg.nm // 2 * cfg.pofm * cfg.bw_code_bits,
        ofmb=OFMB_BITS_PER_PE * cfg.np,
    )


def reduction_steps(dims: LayerDims, cfg: PeConfig, packing: PackingMode = "channel") -> int:
    """Ciclos de reducción por pasada de salida."""
    if packing == "kernel":
        return math.ceil(dims.kh * dims.kw * dims.ic / cfg.lanes)
    return dims.kh * dims.kw * math.ceil(dims.ic / cfg.lanes)


def layer_cycles(dims: LayerDims, cfg: PeConfig, packing: PackingMode = "channel") -> int:
    """Ciclos de una capa conv/fc (ver fórmula del módulo)."""
    return (
        reduction_steps(dims, cfg, packing)
        * math.ceil(dims.oc / (2 * cfg.pofm))
        * math.ceil(dims.oh * dims.ow / (2 * cfg.pifm))
    )


def layer_traffic(
    dims: LayerDims,
    cfg: PeConfig,
    buffers: BufferSizes = BufferSizes(),
    packing: PackingMode = "channel",
) -> float:
    """
    Bytes de memoria externa de una capa.

    Pesos una vez; entradas una vez si caben en IFMB, si no una por pasada
    de canales de salida; vertidos de sumas parciales de 16 bits cuando la
    reducción no cabe en WB; salidas una vez.
    """
    value_bytes = cfg.bw_code_bits / 8
    weights = dims.kh * dims.kw * dims.ic * dims.oc
    inputs = dims.ic * dims.ih * dims.iw
    outputs = dims.oc * dims.oh * dims.ow

    ifmb_capacity = buffers.ifmb_depth * (cfg.nm // 2) * cfg.pifm
    input_loads = 1 if inputs <= ifmb_capacity else math.ceil(dims.oc / (2 * cfg.pofm))

    steps = reduction_steps(dims, cfg, packing)
    spills = max(math.ceil(steps / buffers.wb_depth) - 1, 0)
    psum_bytes = spills * 2 * PSUM_BYTES * outputs

    return (weights + inputs * input_loads + outputs) * value_bytes + psum_bytes


@dataclass
class LayerPerf:
    """Rendimiento de una capa."""
    name: str
    cycles: int
    macs: int
    gops: float
    utilization: float
    traffic_bytes: float
    bandwidth: float
    bandwidth_ok: bool = True


@dataclass
class PerfReport:
    """Rendimiento agregado de una red con un PeConfig."""
    config: PeConfig
    packing: PackingMode
    layers: list[LayerPerf] = field(default_factory=list)

    @property
    def total_cycles(self) -> int:
        return sum(layer.cycles for layer in self.layers)

    @property
    def total_macs(self) -> int:
        return sum(layer.macs for layer in self.layers)

    @property
    def time_s(self) -> float:
        return self.total_cycles / self.config.freq_hz

    @property
    def gops(self) -> float:
        if not self.total_cycles:
            return 0.0
        return 2 * self.total_macs / self.time_s / 1e9

    @property
    def utilization(self) -> float:
        if not self.total_cycles:
            return 0.0
        return self.total_macs / (self.total_cycles * self.config.nm * self.config.np)

    @property
    def gops_per_dsp(self) -> float:
        return self.gops / self.config.dsp_count

    @property
    def traffic_bytes(self) -> float:
        return sum(layer.traffic_bytes for layer in self.layers)

    @property
    def bandwidth(self) -> float:
        """Bytes/s medios: tráfico total / tiempo de cómputo."""
        return self.traffic_bytes / self.time_s if self.total_cycles else 0.0

    @property
    def bandwidth_ok(self) -> bool:
        return all(layer.bandwidth_ok for layer in self.layers)

    @property
    def buffers(self) -> BufferWidths:
        return buffer_widths(self.config)


def network_perf(
    dims: Sequence[LayerDims],
    cfg: PeConfig,
    packing: PackingMode = "channel",
    buffers: BufferSizes = BufferSizes(),
    board_bandwidth: float | None = None,
) -> PerfReport:
    """Ciclos, GOPS, utilización y tráfico por capa y totales."""
    report = PerfReport(cfg, packing)
    for layer in dims:
        cycles = layer_cycles(layer, cfg, packing)
        time_s = cycles / cfg.freq_hz
        traffic = layer_traffic(layer, cfg, buffers, packing)
        bandwidth = traffic / time_s
        report.layers.append(LayerPerf(
            name=layer.name,
            cycles=cycles,
            macs=layer.macs,
            gops=2 * layer.macs / time_s / 1e9,
            utilization=layer.macs / (cycles * cfg.nm * cfg.np),
            traffic_bytes=traffic,
            bandwidth=bandwidth,
            bandwidth_ok=board_bandwidth is None or bandwidth <= board_bandwidth,
        ))
        if board_bandwidth is not None and bandwidth > board_bandwidth:
            logger.warning(
                f"[PerfModel] {layer.name}: requiere {bandwidth / 1e6:.1f} MB/s, "
                f"la placa ofrece {board_bandwidth / 1e6:.1f} MB/s"
            )
    return report


def bandwidth_requirement(
    dims: Sequence[LayerDims],
    cfg: PeConfig,
    buffers: BufferSizes = BufferSizes(),
    packing: PackingMode = "channel",
) -> float:
    """Ancho de banda externo medio (bytes/s) de la red."""
    return network_perf(dims, cfg, packing, buffers).bandwidth


def splits(np_count: int) -> list[tuple[int, int]]:
    """Todas las (Pifm, Pofm) con Pifm·Pofm = Np, Pifm creciente."""
    return [(p, np_count // p) for p in range(1, np_count + 1) if np_count % p == 0]


def best_split(
    dims: Sequence[LayerDims],
    nm: int,
    np_count: int,
    dsp_count: int = 768,
    freq_hz: float = 200e6,
    bw_code_bits: int = 8,
    packing: PackingMode = "channel",
    buffers: BufferSizes = BufferSizes(),
    board_bandwidth: float | None = None,
) -> PerfReport:
    """
    Reparto (Pifm, Pofm) de mayor rendimiento para (Nm, Np).

    Empates: menor ancho de banda, después menor Pifm.

    Raises:
        ConfigConstraintError: si Nm·Np ≠ 4·DSP o Nm no es múltiplo de 4
    """
    PeConfig(nm, np_count, 1, np_count, dsp_count, freq_hz, bw_code_bits)
    best: PerfReport | None = None
    best_key = None
    for pifm, pofm in splits(np_count):
        cfg = PeConfig(nm, np_count, pifm, pofm, dsp_count, freq_hz, bw_code_bits)
        report = network_perf(dims, cfg, packing, buffers, board_bandwidth)
        key = (report.total_cycles, report.bandwidth, pifm)
        if best_key is None or key < best_key:
            best, best_key = report, key
    logger.debug(
        f"[PerfModel] Nm={nm} Np={np_count}: Pifm={best.config.pifm} Pofm={best.config.pofm}, {best.gops:.1f} GOPS"
    )
    return best
