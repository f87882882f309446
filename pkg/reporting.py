"""
Reporting - Emisión determinista de informes
============================================

Todos los números salen con precisión explícita y los valores enteros
exactos se imprimen como enteros, para que los diffs entre ejecuciones
sean estables.
"""

import csv
import io
import logging
from datetime import datetime
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from errors import InputFileError

logger = logging.getLogger(__name__)


def format_number(value, precision: str = ".6g") -> str:
    """Entero si el valor es entero exacto; si no, con la precisión dada."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        value = float(value)
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return format(value, precision)


def csv_text(header: Sequence[str], rows: Iterable[Sequence], stamp: bool = False) -> str:
    """CSV con saltos de línea '\\n'; `stamp` antepone un comentario con la fecha."""
    buffer = io.StringIO()
    if stamp:
        buffer.write(f"# generado {datetime.now().isoformat(timespec='seconds')}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def write_text(path: str | Path, text: str) -> None:
    """Escribe un informe en UTF-8 creando el directorio si hace falta."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise InputFileError(f"no se pudo escribir {path}: {e}") from e
    logger.info(f"[Reporting] Escrito {path}")
