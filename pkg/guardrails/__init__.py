"""
Guardrails Module - Validaciones previas a la ejecución
=======================================================

Comprueban la invocación de la CLI antes de cargar redes o pesos.
"""

from .validation import ValidationResult, ValidationStatus
from .run_guardrail import RunGuardrail

__all__ = [
    "ValidationResult",
    "ValidationStatus",
    "RunGuardrail",
]
