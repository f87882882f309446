"""
Settings - Configuración del golden model
=========================================

Carga `config.yaml` (valores por defecto de la CLI) y `.env`, y los valida
con pydantic. La única variable de entorno que se consulta es LPFP_THREADS.
"""

import os
import logging
import sys
from pathlib import Path
from typing import Literal

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).parent / "config.yaml"


class LpfpSettings(BaseModel):
    """Formatos por defecto."""
    default_format: str = "M4E3"
    candidate_formats: list[str] = Field(
        default_factory=lambda: ["M7E0", "M6E1", "M5E2", "M4E3", "M3E4", "M2E5", "M1E6"]
    )


class QuantizerSettings(BaseModel):
    """Parámetros de la cuantización post-entrenamiento."""
    sf_min: int = -16
    sf_max: int = 16
    calib_batch: int = Field(default=8, ge=1)
    max_bias_frac_bits: int = 24

    @model_validator(mode="after")
    def _check_window(self) -> "QuantizerSettings":
        if self.sf_min > self.sf_max:
            raise ValueError(f"ventana de sf vacía: [{self.sf_min}, {self.sf_max}]")
        return self


class PeSettings(BaseModel):
    """Parámetros del datapath del PE."""
    truncate16: bool = True
    ofmb_mode: Literal["accumulator", "output"] = "accumulator"
    accumulator_bits: int = Field(default=48, ge=16)


class PerfSettings(BaseModel):
    """Parámetros del modelo analítico de rendimiento."""
    dsp_count: int = Field(default=768, ge=1)
    freq_hz: float = Field(default=200e6, gt=0)
    bw_code_bits: int = Field(default=8, ge=2, le=8)
    packing: Literal["channel", "kernel"] = "channel"
    ifmb_depth: int = Field(default=2048, ge=1)
    wb_depth: int = Field(default=64, ge=1)
    board_bandwidth: float | None = None
    candidates: list[tuple[int, int]] = Field(
        default_factory=lambda: [(48, 64), (64, 48), (96, 32), (128, 24), (192, 16)]
    )


class EvaluationSettings(BaseModel):
    """Parámetros de evaluación."""
    topk: list[int] = Field(default_factory=lambda: [1, 5])

    @field_validator("topk")
    @classmethod
    def _positive(cls, value: list[int]) -> list[int]:
        if not value or any(k < 1 for k in value):
            raise ValueError("top-k debe contener enteros positivos")
        return value


class PersistenceSettings(BaseModel):
    """Ruta por defecto de la base de datos de resultados."""
    database_path: str = "./data/lpfp_runs.db"


class LoggingSettings(BaseModel):
    """Configuración del logging."""
    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file: str | None = None


class Settings(BaseModel):
    """Configuración completa."""
    lpfp: LpfpSettings = Field(default_factory=LpfpSettings)
    quantizer: QuantizerSettings = Field(default_factory=QuantizerSettings)
    pe: PeSettings = Field(default_factory=PeSettings)
    perf: PerfSettings = Field(default_factory=PerfSettings)
    evaluation: EvaluationSettings = Field(default_factory=EvaluationSettings)
    persistence: PersistenceSettings = Field(default_factory=PersistenceSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)
    threads: int = Field(default=1, ge=1)


def load_settings(path: str | Path | None = None) -> Settings:
    """
    Carga y valida la configuración.

    Args:
        path: Ruta a un config.yaml; por defecto el de la raíz del repositorio

    Returns:
        Settings validado

    Raises:
        ConfigError: si el fichero no es YAML válido o no pasa la validación
    """
    load_dotenv()

    config_path = Path(path) if path else DEFAULT_CONFIG_PATH
    raw: dict = {}
    if config_path.exists():
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"config.yaml inválido ({config_path}): {e}") from e
    else:
        logger.warning(f"[Settings] {config_path} no encontrado, usando valores por defecto")

    threads = os.getenv("LPFP_THREADS")
    if threads:
        raw["threads"] = threads

    try:
        settings = Settings.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"configuración inválida: {e}") from e

    logger.debug(f"[Settings] Configuración cargada desde {config_path}")
    return settings


_settings_instance: Settings | None = None


def get_settings() -> Settings:
    """Obtiene la configuración (instancia única, se carga en la primera llamada)."""
    global _settings_instance

    if _settings_instance is None:
        _settings_instance = load_settings()

    return _settings_instance


def configure_logging(settings: Settings, level: str | None = None) -> None:
    """
    Configura el logging raíz.

    Args:
        settings: Configuración cargada
        level: Nivel que sustituye al de config.yaml (p. ej. desde --verbose)
    """
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if settings.logging.file:
        handlers.append(logging.FileHandler(settings.logging.file, encoding="utf-8"))

    logging.basicConfig(
        level=getattr(logging, (level or settings.logging.level).upper(), logging.INFO),
        format=settings.logging.format,
        handlers=handlers,
        force=True,
    )
