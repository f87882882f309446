"""
Validation - Resultado común de las validaciones
================================================

`details["kind"]` clasifica un fallo según la excepción que le corresponde
en la CLI: "usage", "input-file" o "format".
"""

from dataclasses import dataclass, field
from enum import Enum


class ValidationStatus(Enum):
    """Estados posibles de validación."""
    PASSED = "passed"
    WARNING = "warning"
    FAILED = "failed"


@dataclass
class ValidationResult:
    """Resultado de validar una invocación."""
    status: ValidationStatus
    message: str
    details: dict = field(default_factory=dict)

    @classmethod
    def passed(cls, message: str = "ok", **details) -> "ValidationResult":
        return cls(ValidationStatus.PASSED, message, details)

    @classmethod
    def failed(cls, kind: str, message: str, **details) -> "ValidationResult":
        return cls(ValidationStatus.FAILED, message, {"kind": kind, **details})

    @property
    def kind(self) -> str | None:
        """Clase del fallo, o None si la validación pasó."""
        return self.details.get("kind")

    @property
    def is_valid(self) -> bool:
        """True si la validación pasó o es warning."""
        return self.status in (ValidationStatus.PASSED, ValidationStatus.WARNING)

    @property
    def is_passed(self) -> bool:
        """True sólo si la validación pasó completamente."""
        return self.status == ValidationStatus.PASSED
