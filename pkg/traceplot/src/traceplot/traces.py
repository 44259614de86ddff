"""Reader for solver trace CSVs.

The expected file layout is ``# key=value`` comment lines followed by one
header row and data rows. Mandatory columns: ``k``, ``residual``,
``consensus``, ``N_k``, ``oracle_calls``, ``wall_ms``, ``status``; ``dist``
is optional. Everything numeric is parsed as float except ``status``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

REQUIRED_COLUMNS = ("k", "residual", "consensus", "N_k", "oracle_calls",
                    "wall_ms", "status")


class SchemaError(ValueError):
    """The file does not follow the trace schema."""


@dataclass
class Trace:
    path: Path
    header: dict
    columns: dict           # name -> float ndarray
    status: str

    @property
    def solver(self) -> str:
        return self.header.get("solver", self.path.stem)

    @property
    def seed(self) -> str:
        return self.header.get("seed", "?")

    @property
    def label(self) -> str:
        return f"{self.solver} seed={self.seed}"

    def __len__(self) -> int:
        return int(self.columns["k"].size)


def load_trace(path) -> Trace:
    path = Path(path)
    header: dict = {}
    names: list[str] | None = None
    rows: list[list[str]] = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                header[key.strip()] = value.strip()
            continue
        if names is None:
            names = line.split(",")
            continue
        rows.append(line.split(","))
    if names is None or not rows:
        raise SchemaError(f"{path} contains no trace table")
    missing = [c for c in REQUIRED_COLUMNS if c not in names]
    if missing:
        raise SchemaError(f"{path} lacks required columns {missing}")
    if any(len(r) != len(names) for r in rows):
        raise SchemaError(f"{path} has ragged rows")

    columns = {}
    for i, name in enumerate(names):
        if name == "status":
            continue
        try:
            columns[name] = np.array([float(r[i]) for r in rows])
        except ValueError as exc:
            raise SchemaError(f"{path} column {name!r} is not numeric") from exc
    status = rows[-1][names.index("status")]
    return Trace(path=path, header=header, columns=columns, status=status)
