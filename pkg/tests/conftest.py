"""Fixtures compartidas de las pruebas."""

import json
import sqlite3
from fractions import Fraction

import numpy as np
import pytest

from fixtures.tiny_cnn import generate_fixture
from lpfp import LpfpFormat, encode
from settings import Settings

EIGHT_BIT_FORMATS = ["M7E0", "M6E1", "M5E2", "M4E3", "M3E4", "M2E5", "M1E6"]


def stored_runs(path) -> list[dict]:
    """Filas de la tabla `runs` del histórico, leídas directamente con sqlite3."""
    conn = sqlite3.connect(str(path))
    try:
        cursor = conn.execute("SELECT kind, args_json, rows_json, exit_code FROM runs ORDER BY kind, run_key")
        return [
            {"kind": kind, "args": json.loads(args), "rows": json.loads(rows), "exit_code": code}
            for kind, args, rows, code in cursor.fetchall()
        ]
    finally:
        conn.close()


@pytest.fixture
def m4e3() -> LpfpFormat:
    return LpfpFormat(4, 3)


@pytest.fixture
def code_of(m4e3):
    """Código M4E3 de un valor exacto."""
    def make(value, fmt: LpfpFormat = m4e3):
        code = encode(Fraction(value), fmt)
        assert code.value == Fraction(value), f"{value} no es representable en {fmt}"
        return code
    return make


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def default_settings() -> Settings:
    return Settings()


@pytest.fixture(scope="session")
def tiny_cnn(tmp_path_factory):
    """Pesos, calibración y conjunto de datos de la CNN pequeña."""
    return generate_fixture(tmp_path_factory.mktemp("tiny_cnn"))
