"""
CLI - Punto de entrada único del golden model
=============================================

Subcomandos:
- quantize:    búsqueda de formato y factores de escala → fichero de esquema
- infer:       inferencia cuantizada → flujo de códigos + predicciones
- eval:        precisión fp32 frente a uno o varios esquemas (o por ancho de bits)
- verify-pack: equivalencia del empaquetado de cuatro MAC por DSP
- sweep:       barrido (Nm, Np) del modelo de rendimiento → CSV
- fmt-table:   tabla de los 2^n valores de un formato

Los valores por defecto salen de config.yaml; cualquier flag explícito
los sustituye. Cada error termina con el código de salida de su clase.
"""

import argparse
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TextIO

import numpy as np

from errors import InputFileError, LpfpError, UsageError, VerificationError
from guardrails import RunGuardrail
from inference import (
    DatapathConfig,
    capture_calibration,
    evaluate_many,
    explore_bitwidths,
    load_dataset,
    load_network,
    prepare_model,
    quantized_forward,
    read_inputs,
)
from lpfp import LpfpFormat, format_table, parse_format_list
from pe import verify_packing
from perf import BufferSizes, load_dims, sweep, sweep_csv, vgg16_dims
from persistence import ResultStore
from quantizer import QuantScheme, search_format
from reporting import csv_text, format_number, write_text
from settings import Settings, configure_logging, get_settings

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("quantize", "infer", "eval", "verify-pack", "sweep", "fmt-table")


@dataclass
class RunConfig:
    """Una invocación de la CLI, ya combinada con config.yaml."""
    subcommand: str
    # Rutas
    model: str | None = None
    weights: str | None = None
    schemes: list[str] = field(default_factory=list)
    dataset: str | None = None
    input: str | None = None
    calib: str | None = None
    out: str | None = None
    report: str | None = None
    models: list[str] = field(default_factory=list)
    db: str | None = None
    # Cuantización
    formats: str | None = None
    sf_min: int | None = None
    sf_max: int | None = None
    calib_batch: int | None = None
    # Datapath
    truncate16: bool = True
    ofmb_mode: str = "accumulator"
    # Evaluación
    topk: list[int] = field(default_factory=list)
    bitwidths: list[int] = field(default_factory=list)
    # verify-pack
    format: str | None = None
    exhaustive: bool = False
    quads: int = 1_000_000
    # sweep
    vgg16: bool = False
    dsp: int = 768
    freq: float = 200e6
    bw: int = 8
    packing: str = "channel"
    board_bw: float | None = None
    candidates: list[tuple[int, int]] = field(default_factory=list)
    # fmt-table
    fmt_names: list[str] = field(default_factory=list)
    by_code: bool = False
    # Salida
    stamp: bool = False
    verbose: bool = False
    threads: int = 1


class _Parser(argparse.ArgumentParser):
    """ArgumentParser que lanza UsageError en lugar de terminar el proceso."""

    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"se esperaba una lista de enteros: {text}") from e


def _candidate_list(text: str) -> list[tuple[int, int]]:
    """"96x32,48x64" → [(96, 32), (48, 64)]."""
    pairs = []
    for item in text.split(","):
        try:
            nm, np_count = item.lower().split("x")
            pairs.append((int(nm), int(np_count)))
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"candidato inválido '{item}' (se espera NmxNp)") from e
    return pairs


def build_parser() -> argparse.ArgumentParser:
    """Parser con un subparser por subcomando; los defaults se resuelven después."""
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="logging en nivel DEBUG")
    common.add_argument("--stamp", action="store_true", help="añadir fecha a los informes")
    common.add_argument("--db", nargs="?", const="", default=None, help="guardar la ejecución en SQLite")

    network = _Parser(add_help=False)
    network.add_argument("--model", help="manifiesto de la red")
    network.add_argument("--weights", help="blob float32 de pesos")

    datapath = _Parser(add_help=False)
    datapath.add_argument("--no-truncate16", dest="truncate16", action="store_false", default=None)
    datapath.add_argument("--ofmb-mode", choices=["accumulator", "output"])

    parser = _Parser(prog="lpfp", description="Golden model LPFP: cuantización, inferencia y rendimiento")
    sub = parser.add_subparsers(dest="subcommand", metavar="{" + ",".join(SUBCOMMANDS) + "}")

    p = sub.add_parser("quantize", parents=[common, network], help="elegir formato y factores de escala")
    p.add_argument("--formats", help="candidatos, p. ej. M4E3,M5E2")
    p.add_argument("--sf-min", type=int)
    p.add_argument("--sf-max", type=int)
    p.add_argument("--calib", help="blob float32 de entradas de calibración")
    p.add_argument("--calib-batch", type=int)
    p.add_argument("--out", help="fichero de esquema")
    p.add_argument("--report", help="CSV de MSE por tensor")

    p = sub.add_parser("infer", parents=[common, network, datapath], help="inferencia cuantizada")
    p.add_argument("--scheme", dest="schemes", action="append", default=[])
    p.add_argument("--input", help="blob float32 de entradas")
    p.add_argument("--out", help="flujo de códigos de salida (un byte por código)")

    p = sub.add_parser("eval", parents=[common, network, datapath], help="precisión frente a fp32")
    p.add_argument("--scheme", dest="schemes", action="append", default=[])
    p.add_argument("--dataset", help=".npz con x e y")
    p.add_argument("--topk", type=_int_list)
    p.add_argument("--bitwidths", type=_int_list, default=[], help="p. ej. 8,7,6,5,4")
    p.add_argument("--calib", help="entradas de calibración para --bitwidths")
    p.add_argument("--calib-batch", type=int)
    p.add_argument("--sf-min", type=int)
    p.add_argument("--sf-max", type=int)
    p.add_argument("--report", help="CSV de precisión")

    p = sub.add_parser("verify-pack", parents=[common], help="verificar el empaquetado del DSP")
    p.add_argument("--format")
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--quads", type=int, default=1_000_000)

    p = sub.add_parser("sweep", parents=[common], help="barrido (Nm, Np)")
    p.add_argument("--model", "--models", dest="models", action="append", default=[],
                   help="manifiesto (repetible)")
    p.add_argument("--vgg16", action="store_true", help="incluir las dimensiones públicas de VGG16")
    p.add_argument("--dsp", type=int)
    p.add_argument("--freq", type=float)
    p.add_argument("--bw", type=int)
    p.add_argument("--packing", choices=["channel", "kernel"])
    p.add_argument("--board-bw", type=float, help="límite de la placa en bytes/s")
    p.add_argument("--candidates", type=_candidate_list, help="p. ej. 96x32,48x64")
    p.add_argument("--out", help="CSV del barrido")

    p = sub.add_parser("fmt-table", parents=[common], help="tabla de valores de un formato")
    p.add_argument("fmt_names", nargs="*", metavar="FORMATO")
    p.add_argument("--sorted", dest="by_code", action="store_false", default=False)
    p.add_argument("--by-code", dest="by_code", action="store_true")
    p.add_argument("--out")

    return parser


def _pick(value, default):
    return default if value is None else value


def parse_args(argv: list[str], settings: Settings) -> RunConfig:
    """
    Interpreta argv y rellena lo no indicado con config.yaml.

    Raises:
        UsageError: subcomando ausente o desconocido, flag inválido
    """
    args = build_parser().parse_args(argv)
    if not args.subcommand:
        raise UsageError(f"falta el subcomando ({', '.join(SUBCOMMANDS)})")
    given = vars(args)

    q, pe, perf = settings.quantizer, settings.pe, settings.perf
    config = RunConfig(
        subcommand=args.subcommand,
        model=given.get("model"),
        weights=given.get("weights"),
        schemes=given.get("schemes") or [],
        dataset=given.get("dataset"),
        input=given.get("input"),
        calib=given.get("calib"),
        out=given.get("out"),
        report=given.get("report"),
        models=given.get("models") or [],
        db=(given["db"] or settings.persistence.database_path) if given.get("db") is not None else None,
        formats=_pick(given.get("formats"), ",".join(settings.lpfp.candidate_formats)),
        sf_min=_pick(given.get("sf_min"), q.sf_min),
        sf_max=_pick(given.get("sf_max"), q.sf_max),
        calib_batch=_pick(given.get("calib_batch"), q.calib_batch),
        truncate16=_pick(given.get("truncate16"), pe.truncate16),
        ofmb_mode=_pick(given.get("ofmb_mode"), pe.ofmb_mode),
        topk=_pick(given.get("topk"), list(settings.evaluation.topk)),
        bitwidths=given.get("bitwidths") or [],
        format=given.get("format"),
        exhaustive=given.get("exhaustive", False),
        quads=given.get("quads", 1_000_000),
        vgg16=given.get("vgg16", False),
        dsp=_pick(given.get("dsp"), perf.dsp_count),
        freq=_pick(given.get("freq"), perf.freq_hz),
        bw=_pick(given.get("bw"), perf.bw_code_bits),
        packing=_pick(given.get("packing"), perf.packing),
        board_bw=_pick(given.get("board_bw"), perf.board_bandwidth),
        candidates=_pick(given.get("candidates"), list(perf.candidates)),
        fmt_names=given.get("fmt_names") or [],
        by_code=given.get("by_code", False),
        stamp=args.stamp,
        verbose=args.verbose,
        threads=settings.threads,
    )
    if config.subcommand == "fmt-table" and not config.fmt_names:
        config.fmt_names = [settings.lpfp.default_format]
    if config.subcommand == "verify-pack" and not config.format:
        config.format = settings.lpfp.default_format
    return config


def _emit(text: str, path: str | None, stdout: TextIO) -> None:
    if path:
        write_text(path, text)
    else:
        stdout.write(text)


def _datapath(config: RunConfig, settings: Settings) -> DatapathConfig:
    return DatapathConfig(
        truncate16=config.truncate16,
        ofmb_mode=config.ofmb_mode,
        accumulator_bits=settings.pe.accumulator_bits,
    )


def cmd_quantize(config: RunConfig, settings: Settings, stdout: TextIO) -> list:
    network = load_network(config.model, config.weights)
    batch = read_inputs(config.calib, network.input_shape)[: config.calib_batch]
    calibration = capture_calibration(network, batch)
    scheme, report = search_format(
        network,
        calibration,
        parse_format_list(config.formats),
        (config.sf_min, config.sf_max),
        settings.quantizer.max_bias_frac_bits,
        config.threads,
    )
    scheme.save(config.out)
    if config.report:
        write_text(config.report, report.to_csv(stamp=config.stamp))
    stdout.write(report.summary_csv())
    logger.info(f"[CLI] Formato elegido: {scheme.format}; esquema en {config.out}")
    return [
        {"format": s.format.name, "score": s.score, "selected": s.selected}
        for s in report.summary
    ]


def cmd_infer(config: RunConfig, settings: Settings, stdout: TextIO) -> list:
    network = load_network(config.model, config.weights)
    scheme = QuantScheme.load(config.schemes[0])
    samples = read_inputs(config.input, network.input_shape)
    model = prepare_model(network, scheme, _datapath(config, settings))

    outputs = [quantized_forward(model, sample)[network.output_id] for sample in samples]
    if config.out:
        stream = np.concatenate([t.codes.ravel() for t in outputs]).astype(np.uint8)
        try:
            Path(config.out).parent.mkdir(parents=True, exist_ok=True)
            Path(config.out).write_bytes(stream.tobytes())
        except OSError as e:
            raise InputFileError(f"no se pudo escribir {config.out}: {e}") from e
        logger.info(f"[CLI] {stream.size} códigos escritos en {config.out}")

    predictions = [int(np.argmax(t.dequantize().reshape(-1))) for t in outputs]
    stdout.write(csv_text(["sample", "prediction"], enumerate(predictions)))
    return [{"sample": i, "prediction": p} for i, p in enumerate(predictions)]


def _scheme_labels(paths: list[str], schemes: list[QuantScheme]) -> list[str]:
    """Nombre del formato como etiqueta; el nombre del fichero si hay repetidos."""
    names = [s.format.name for s in schemes]
    return [
        name if names.count(name) == 1 else f"{name}:{Path(path).stem}"
        for name, path in zip(names, paths)
    ]


def cmd_eval(config: RunConfig, settings: Settings, stdout: TextIO) -> list:
    network = load_network(config.model, config.weights)
    dataset = load_dataset(config.dataset, network.input_shape)
    datapath = _datapath(config, settings)

    if config.bitwidths:
        batch = (
            read_inputs(config.calib, network.input_shape) if config.calib else dataset[0]
        )[: config.calib_batch]
        report, _ = explore_bitwidths(
            network,
            capture_calibration(network, batch),
            dataset,
            config.bitwidths,
            (config.sf_min, config.sf_max),
            settings.quantizer.max_bias_frac_bits,
            config.topk,
            datapath,
            config.threads,
        )
    else:
        schemes = [QuantScheme.load(path) for path in config.schemes]
        labels = _scheme_labels(config.schemes, schemes)
        report = evaluate_many(network, list(zip(labels, schemes)), dataset, config.topk, datapath, config.threads)

    text = report.to_csv(stamp=config.stamp)
    if config.report:
        write_text(config.report, text)
    stdout.write(text)
    return [
        {"model": row.label, **{f"top{k}": v for k, v in row.topk.items()}, "samples": row.samples}
        for row in report.rows
    ]


def cmd_verify_pack(config: RunConfig, settings: Settings, stdout: TextIO) -> list:
    fmt = LpfpFormat.parse(config.format)
    report = verify_packing(fmt, exhaustive=config.exhaustive, random_quads=config.quads)
    stdout.write(f"{report.summary()}\n")
    stdout.write(
        f"max |producto alineado| = {report.max_aligned_magnitude} "
        f"(cabe en {report.aligned_width} bits con signo), "
        f"suma máx. de exponentes = {report.max_raw_exp_sum}, "
        f"estructurado {report.structured_checked - report.structured_mismatches}/{report.structured_checked}, "
        f"contaminación {report.contamination_checked - report.contamination_failures}/{report.contamination_checked}\n"
    )
    if not report.passed:
        raise VerificationError(f"{fmt}: {report.summary()}")
    return [{"format": fmt.name, "summary": report.summary()}]


def cmd_sweep(config: RunConfig, settings: Settings, stdout: TextIO) -> list:
    networks = [(Path(path).stem, load_dims(path)) for path in config.models]
    if config.vgg16:
        networks.append(("vgg16", vgg16_dims()))
    rows = sweep(
        networks,
        config.candidates,
        config.dsp,
        config.freq,
        config.bw,
        config.packing,
        BufferSizes(settings.perf.ifmb_depth, settings.perf.wb_depth),
        config.board_bw,
        config.threads,
    )
    _emit(sweep_csv(rows, stamp=config.stamp), config.out, stdout)
    return [row.values() for row in rows]


def cmd_fmt_table(config: RunConfig, settings: Settings, stdout: TextIO) -> list:
    rows = []
    for name in config.fmt_names:
        fmt = LpfpFormat.parse(name)
        for code, value in format_table(fmt, by_code=config.by_code):
            rows.append([
                fmt.name,
                code.bits,
                format(code.bits, f"0{fmt.total_bits}b"),
                code.sign,
                code.mantissa,
                code.exponent,
                int(code.is_subnormal),
                format_number(value, ""),
            ])
    header = ["format", "code", "bits", "sign", "mantissa", "exponent", "subnormal", "value"]
    _emit(csv_text(header, rows, stamp=config.stamp), config.out, stdout)
    return rows


COMMANDS = {
    "quantize": cmd_quantize,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "verify-pack": cmd_verify_pack,
    "sweep": cmd_sweep,
    "fmt-table": cmd_fmt_table,
}


def run(argv: list[str], settings: Settings | None = None, stdout: TextIO | None = None) -> int:
    """
    Ejecuta una invocación.

    Returns:
        0 si todo fue bien; si no, el `exit_code` de la excepción
    """
    stdout = stdout or sys.stdout
    try:
        settings = settings or get_settings()
        config = parse_args(argv, settings)
        configure_logging(settings, "DEBUG" if config.verbose else None)
        RunGuardrail().enforce(config)

        logger.info(f"[CLI] Ejecutando '{config.subcommand}'")
        rows = COMMANDS[config.subcommand](config, settings, stdout)

        if config.db:
            args = {k: v for k, v in asdict(config).items() if k not in ("db", "verbose", "stamp")}
            ResultStore(config.db).save_run(config.subcommand, args, rows)
        return 0
    except LpfpError as e:
        logger.error(f"[CLI] Error ({e.category}): {e}")
        sys.stderr.write(f"error [{e.category}]: {e}\n")
        return e.exit_code
