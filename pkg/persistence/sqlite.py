"""
SQLite Result Store - Histórico de ejecuciones en SQLite
========================================================

Guarda opcionalmente (flag --db) el resultado de cada ejecución de la CLI.

Funcionalidades:
- Filas del informe guardadas como JSON
- Clave compuesta: (kind, run_key), con run_key derivada de los argumentos
- Repetir la misma invocación sobrescribe su resultado anterior

El histórico se consulta fuera de la herramienta (sqlite3, pandas, ...);
la CLI sólo escribe.
"""

import sqlite3
import json
import logging
from pathlib import Path
from typing import Any
from contextlib import contextmanager

from errors import PersistenceError

logger = logging.getLogger(__name__)


class ResultStore:
    """
    Almacén de resultados persistente usando SQLite.

    Cada entrada está indexada por (kind, run_key).
    """

    def __init__(self, db_path: str = "./data/lpfp_runs.db"):
        """
        Args:
            db_path: Ruta al archivo de base de datos SQLite

        Raises:
            PersistenceError: si no se puede crear el directorio o la base de datos
        """
        self.db_path = Path(db_path)
        try:
            self.db_path.parent.mkdir(parents=True, exist_ok=True)
            self._init_db()
        except (OSError, sqlite3.Error) as e:
            raise PersistenceError(f"no se puede abrir la base de datos {self.db_path}: {e}") from e
        logger.info(f"[ResultStore] Base de datos inicializada: {self.db_path}")

    def _init_db(self) -> None:
        """Crea las tablas necesarias si no existen."""
        with self._get_connection() as conn:
            cursor = conn.cursor()

            cursor.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    kind TEXT NOT NULL,
                    run_key TEXT NOT NULL,
                    args_json TEXT NOT NULL,
                    rows_json TEXT NOT NULL,
                    exit_code INTEGER NOT NULL DEFAULT 0,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    updated_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    PRIMARY KEY (kind, run_key)
                )
            """)

            cursor.execute("""
                CREATE INDEX IF NOT EXISTS idx_runs_kind
                ON runs(kind)
            """)

            conn.commit()

    @contextmanager
    def _get_connection(self):
        """Context manager para conexiones a la base de datos."""
        conn = sqlite3.connect(str(self.db_path))
        conn.row_factory = sqlite3.Row
        try:
            yield conn
        finally:
            conn.close()

    @staticmethod
    def run_key(args: dict[str, Any]) -> str:
        """Clave determinista a partir de los argumentos de la ejecución."""
        return json.dumps(args, sort_keys=True, ensure_ascii=False, default=str)

    def save_run(
        self,
        kind: str,
        args: dict[str, Any],
        rows: list[Any],
        exit_code: int = 0,
    ) -> None:
        """
        Guarda el resultado de una ejecución.

        Args:
            kind: Subcomando (quantize, eval, sweep, ...)
            args: Argumentos que identifican la ejecución
            rows: Filas del informe (serializables a JSON; lo demás se guarda como texto)
            exit_code: Estado de salida

        Raises:
            PersistenceError: si las filas no se pueden serializar o SQLite falla
        """
        key = self.run_key(args)
        try:
            rows_json = json.dumps(rows, ensure_ascii=False, default=str)
        except (TypeError, ValueError) as e:
            raise PersistenceError(f"no se puede serializar el resultado de '{kind}': {e}") from e

        with self._get_connection() as conn:
            cursor = conn.cursor()
            try:
                cursor.execute("""
                    INSERT INTO runs (kind, run_key, args_json, rows_json, exit_code, updated_at)
                    VALUES (?, ?, ?, ?, ?, CURRENT_TIMESTAMP)
                    ON CONFLICT (kind, run_key)
                    DO UPDATE SET
                        rows_json = excluded.rows_json,
                        exit_code = excluded.exit_code,
                        updated_at = CURRENT_TIMESTAMP
                """, (kind, key, key, rows_json, exit_code))
                conn.commit()
            except sqlite3.Error as e:
                conn.rollback()
                raise PersistenceError(f"no se pudo guardar la ejecución '{kind}' en {self.db_path}: {e}") from e
        logger.info(f"[ResultStore] Ejecución '{kind}' guardada ({len(rows)} filas)")
