"""
Quantizer Scheme - Esquema de cuantización e informe
====================================================

El esquema es un fichero de texto por líneas:

    format M4E3
    tensor <id> sf <int>
    bias <layer-id> frac <int>
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

from errors import CalibrationError, InputFileError, ManifestError
from lpfp import LpfpFormat
from reporting import csv_text, format_number

logger = logging.getLogger(__name__)


@dataclass
class QuantScheme:
    """Un formato por red, un sf por tensor y los bits fraccionarios de cada sesgo."""
    format: LpfpFormat
    scale_factors: dict[str, int] = field(default_factory=dict)
    bias_frac_bits: dict[str, int] = field(default_factory=dict)

    def sf(self, tensor_id: str) -> int:
        """
        Raises:
            CalibrationError: si el esquema no cubre el tensor
        """
        try:
            return self.scale_factors[tensor_id]
        except KeyError:
            raise CalibrationError(f"el esquema no tiene sf para el tensor '{tensor_id}'") from None

    def bias_frac(self, layer_id: str) -> int:
        try:
            return self.bias_frac_bits[layer_id]
        except KeyError:
            raise CalibrationError(f"el esquema no tiene frac de sesgo para la capa '{layer_id}'") from None

    def to_text(self) -> str:
        lines = [f"format {self.format.name}"]
        lines += [f"tensor {tid} sf {sf}" for tid, sf in self.scale_factors.items()]
        lines += [f"bias {lid} frac {frac}" for lid, frac in self.bias_frac_bits.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<esquema>") -> "QuantScheme":
        """
        Raises:
            ManifestError: si alguna línea no sigue la gramática del esquema
        """
        fmt: LpfpFormat | None = None
        scale_factors: dict[str, int] = {}
        bias_frac: dict[str, int] = {}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "format" and len(parts) == 2:
                    fmt = LpfpFormat.parse(parts[1])
                elif parts[0] == "tensor" and len(parts) == 4 and parts[2] == "sf":
                    scale_factors[parts[1]] = int(parts[3])
                elif parts[0] == "bias" and len(parts) == 4 and parts[2] == "frac":
                    bias_frac[parts[1]] = int(parts[3])
                else:
                    raise ValueError(line)
            except ValueError as e:
                raise ManifestError(f"{source}:{number}: línea de esquema inválida: '{raw}'") from e
        if fmt is None:
            raise ManifestError(f"{source}: falta la línea 'format'")
        return cls(fmt, scale_factors, bias_frac)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")
        logger.info(f"[Scheme] Esquema {self.format} guardado en {path}")

    @classmethod
    def load(cls, path: str | Path) -> "QuantScheme":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise InputFileError(f"no se pudo leer el esquema {path}: {e}") from e
        return cls.from_text(text, source=str(path))


@dataclass(frozen=True)
class TensorMse:
    """Fila del informe: error de un tensor con un formato."""
    format: LpfpFormat
    tensor: str
    kind: str
    sf: int
    mse: float
    variance: float

    @property
    def normalized(self) -> float:
        return self.mse / self.variance if self.variance > 0 else self.mse


@dataclass(frozen=True)
class FormatScore:
    """Fila resumen: puntuación de un formato candidato."""
    format: LpfpFormat
    score: float
    selected: bool = False


@dataclass
class QuantReport:
    """MSE por tensor y formato, más la tabla resumen por formato."""
    rows: list[TensorMse] = field(default_factory=list)
    summary: list[FormatScore] = field(default_factory=list)

    @property
    def selected(self) -> LpfpFormat | None:
        for row in self.summary:
            if row.selected:
                return row.format
        return None

    def rows_for(self, fmt: LpfpFormat) -> list[TensorMse]:
        return [row for row in self.rows if row.format == fmt]

    def to_csv(self, stamp: bool = False) -> str:
        return csv_text(
            ["format", "tensor", "kind", "sf", "mse", "variance"],
            (
                [r.format.name, r.tensor, r.kind, r.sf, format(r.mse, ".6e"), format(r.variance, ".6e")]
                for r in self.rows
            ),
            stamp=stamp,
        )

    def summary_csv(self) -> str:
        return csv_text(
            ["format", "score", "selected"],
            ([s.format.name, format(s.score, ".6e"), format_number(s.selected)] for s in self.summary),
        )
