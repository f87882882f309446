"""
Run Guardrail - Validación previa de una invocación
===================================================

Comprueba un RunConfig antes de empezar a trabajar, para que una ruta
mal escrita o un flag ausente se detecte antes de minutos de cálculo:

- Flags obligatorios por subcomando
- Rutas de entrada existentes
- Formatos MaEb interpretables
- Listas top-k y anchos de bits positivos
"""

import logging
from pathlib import Path
from typing import Any

from errors import FormatSpecError, InputFileError, LpfpError, UsageError
from lpfp import LpfpFormat, parse_format_list
from .validation import ValidationResult

logger = logging.getLogger(__name__)


class RunGuardrail:
    """
    Guardrail de entrada de la CLI.

    `validate` devuelve un ValidationResult; `enforce` lo convierte en la
    excepción que corresponde (UsageError, InputFileError o FormatSpecError).
    """

    # Flags obligatorios por subcomando (nombre del campo en RunConfig)
    REQUIRED_FLAGS: dict[str, tuple[str, ...]] = {
        "quantize": ("model", "weights", "calib", "out"),
        "infer": ("model", "weights", "schemes", "input"),
        "eval": ("model", "weights", "dataset"),
        "verify-pack": ("format",),
        "sweep": (),
        "fmt-table": ("fmt_names",),
    }

    FLAG_NAMES = {"schemes": "--scheme", "fmt_names": "<formato>"}

    # Campos que son rutas de lectura
    INPUT_PATHS = ("model", "weights", "calib", "input", "dataset")

    def validate(self, run_config: Any) -> ValidationResult:
        """
        Valida una invocación.

        Args:
            run_config: RunConfig ya combinado con los valores por defecto

        Returns:
            ValidationResult; en caso de fallo `details["kind"]` es
            "usage", "input-file" o "format"
        """
        subcommand = run_config.subcommand
        logger.debug(f"[RunGuardrail] Validando '{subcommand}'")

        # 1. Subcomando conocido
        if subcommand not in self.REQUIRED_FLAGS:
            return self._failed("usage", f"subcomando desconocido: {subcommand}")

        # 2. Flags obligatorios
        missing = [
            name for name in self.REQUIRED_FLAGS[subcommand]
            if not getattr(run_config, name, None)
        ]
        if missing:
            flags = ", ".join(self.FLAG_NAMES.get(name, "--" + name) for name in missing)
            return self._failed("usage", f"{subcommand} requiere {flags}", missing=missing)

        combination = self._check_combinations(run_config)
        if not combination.is_valid:
            return combination

        # 3. Rutas existentes
        paths = [getattr(run_config, name, None) for name in self.INPUT_PATHS]
        paths += list(run_config.schemes or [])
        if subcommand == "sweep":
            paths += list(run_config.models or [])
        for path in paths:
            if path and not Path(path).is_file():
                return self._failed("input-file", f"no existe el fichero {path}", path=str(path))

        # 4. Formatos y listas numéricas
        try:
            if run_config.formats:
                parse_format_list(run_config.formats)
            if run_config.format:
                LpfpFormat.parse(run_config.format)
            for name in run_config.fmt_names or []:
                LpfpFormat.parse(name)
        except FormatSpecError as e:
            return self._failed("format", str(e))

        if any(k < 1 for k in run_config.topk or []):
            return self._failed("usage", f"top-k debe ser positivo: {run_config.topk}")
        if any(not 2 <= w <= 8 for w in run_config.bitwidths or []):
            return self._failed("usage", f"anchos de bits fuera de [2, 8]: {run_config.bitwidths}")
        if run_config.sf_min is not None and run_config.sf_max is not None and run_config.sf_min > run_config.sf_max:
            return self._failed("usage", f"ventana de sf vacía: [{run_config.sf_min}, {run_config.sf_max}]")

        return ValidationResult.passed("Invocación válida", subcommand=subcommand)

    def _check_combinations(self, run_config: Any) -> ValidationResult:
        """Flags que se requieren o excluyen mutuamente."""
        subcommand = run_config.subcommand
        if subcommand == "infer" and len(run_config.schemes) != 1:
            return self._failed("usage", "infer admite exactamente un --scheme")
        if subcommand == "eval" and not run_config.schemes and not run_config.bitwidths:
            return self._failed("usage", "eval requiere --scheme o --bitwidths")
        if subcommand == "eval" and run_config.schemes and run_config.bitwidths:
            return self._failed("usage", "--scheme y --bitwidths son incompatibles")
        if subcommand == "sweep" and not run_config.models and not run_config.vgg16:
            return self._failed("usage", "sweep requiere --model o --vgg16")
        return ValidationResult.passed()

    @staticmethod
    def _failed(kind: str, message: str, **details) -> ValidationResult:
        logger.warning(f"[RunGuardrail] {message}")
        return ValidationResult.failed(kind, message, **details)

    def enforce(self, run_config: Any) -> ValidationResult:
        """
        Valida y lanza la excepción correspondiente si falla.

        Raises:
            UsageError, InputFileError, FormatSpecError
        """
        result = self.validate(run_config)
        if result.is_valid:
            return result
        error: type[LpfpError] = {
            "input-file": InputFileError,
            "format": FormatSpecError,
        }.get(result.kind, UsageError)
        raise error(result.message)
