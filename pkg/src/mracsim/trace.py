"""Run output container plus CSV and summary writers.

Traces are decimated row-per-step time series with a fixed column set per
mode. Metrics are computed on the undecimated streams, which ride along in
SimTrace.full but are never written to the CSV. Floats are serialized with
repr (shortest round-trip), so a run is byte-reproducible from (scenario,
seed, backend).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

ACC_COLUMNS = [
    "t", "v_l", "v", "v_m", "x_r", "s_d", "v_r", "delta", "e", "u",
    "k1", "k2", "k3", "P11", "P22", "P33", "pe_level", "V", "clamp_flag",
]


def mrac_columns(m: int, law: str):
    theta = [f"theta_{i}" for i in range(m)]
    prefix = "Pdiag" if law == "rls" else "Gammadiag"
    gains = [f"{prefix}_{i}" for i in range(m)]
    return ["t", "r", "y_p", "y_m", "e1", "u_p", *theta, *gains, "pe_level", "V"]


@dataclass
class SimTrace:
    mode: str
    columns: list
    data: dict
    metadata: dict
    metrics: dict = field(default_factory=dict)
    full: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return len(self.data[self.columns[0]])

    def column(self, name):
        if name not in self.data:
            raise KeyError(f"trace has no column {name!r}")
        return self.data[name]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            for key in sorted(self.metadata):
                fh.write(f"# {key}={self.metadata[key]}\n")
            fh.write(",".join(self.columns) + "\n")
            n = self.n_rows
            cols = [self.data[c] for c in self.columns]
            for i in range(n):
                fh.write(",".join(_cell(col[i]) for col in cols) + "\n")

    def write_summary(self, path):
        payload = {
            "metadata": self.metadata,
            "metrics": _jsonable(self.metrics),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _cell(v) -> str:
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    f = float(v)
    if math.isnan(f):
        return ""
    return repr(f)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return None if math.isnan(f) else f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def read_csv(path):
    """Parse a trace CSV back into (metadata, columns, arrays).

    Blank cells become NaN. Used by tests; the plotting frontend has its
    own reader against the same schema.
    """
    metadata = {}
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, val = body.split("=", 1)
                    metadata[key.strip()] = val
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
    if header is None:
        raise ConfigError(f"{path}: no header row found")
    arrays = {}
    for idx, name in enumerate(header):
        vals = [r[idx] if idx < len(r) else "" for r in rows]
        arrays[name] = np.array(
            [float(v) if v != "" else math.nan for v in vals], dtype=float
        )
    return metadata, header, arrays


def unpack_sym(packed, m):
    M = np.zeros((m, m))
    k = 0
    for i in range(m):
        for j in range(i, m):
            M[i, j] = packed[k]
            M[j, i] = packed[k]
            k += 1
    return M


def pe_levels(peM_rows, row_dt, T0):
    """Excitation level per decimated row from cumulative integral snapshots.

    The window is T0 rounded to the row grid; rows before one full window
    get NaN (indeterminate).
    """
    n_rows, n_pack = peM_rows.shape
    m = int((math.isqrt(8 * n_pack + 1) - 1) // 2)
    w = max(1, int(round(T0 / row_dt)))
    out = np.full(n_rows, np.nan)
    for k in range(w, n_rows):
        M = unpack_sym(peM_rows[k] - peM_rows[k - w], m)
        out[k] = float(np.linalg.eigvalsh(M)[0]) / T0
    return out
