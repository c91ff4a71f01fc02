"""Trace CSV reader against the published mracsim schema.

Traces start with '# key=value' metadata lines, then a header row, then
one data row per output step. Blank cells (indeterminate excitation level,
decrease function outside analysis mode) parse as NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import pandas as pd


class TraceError(ValueError):
    """Malformed or incompatible trace file."""


@dataclass
class Trace:
    path: Path
    metadata: dict
    frame: pd.DataFrame

    @property
    def label(self) -> str:
        law = self.metadata.get("law", "?")
        seed = self.metadata.get("seed")
        return f"{law} (seed {seed})" if seed is not None else law

    @property
    def mode(self) -> str:
        return self.metadata.get("mode", "acc")

    def require_columns(self, names):
        for name in names:
            if name not in self.frame.columns:
                raise TraceError(
                    f"{self.path}: trace has no column {name!r} "
                    f"(available: {', '.join(self.frame.columns)})"
                )


def read_trace(path) -> Trace:
    path = Path(path)
    metadata = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, val = body.split("=", 1)
                metadata[key.strip()] = val.strip()
    try:
        frame = pd.read_csv(path, comment="#")
    except pd.errors.EmptyDataError:
        raise TraceError(f"{path}: empty trace file") from None
    if frame.empty or "t" not in frame.columns:
        raise TraceError(f"{path}: no data rows or missing time column")
    return Trace(path, metadata, frame)
