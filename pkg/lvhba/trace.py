"""
Run traces: per-record diagnostics plus run metadata.

CSV layout is fixed (k,c_k,F,f,gap,residual,merit,dxy,dz,dtl,sec,c_prev,inner_err)
followed by any extra metric columns. Floats use 17 significant digits so a
trace read back from disk equals the in-memory one exactly; missing values
(cadenced fields between cadence points) are written as empty cells.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from .core import IterateState
from .errors import PreconditionError

COLUMNS = ("k", "c_k", "F", "f", "gap", "residual", "merit", "dxy", "dz", "dtl", "sec", "c_prev", "inner_err")
CADENCED = ("gap", "residual", "merit", "inner_err")

STATUS_COMPLETED = "completed"
STATUS_STOPPED = "stopped"
STATUS_ABORTED = "aborted"


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, np.floating):
        return _json_safe(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


@dataclass
class Trace:
    records: List[Dict[str, float]] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)
    status: str = STATUS_COMPLETED
    error: Optional[str] = None
    extra_columns: List[str] = field(default_factory=list)
    final_state: Optional[IterateState] = None

    def append(self, record: Dict[str, float]) -> None:
        if self.records and record["k"] <= self.records[-1]["k"]:
            raise PreconditionError(f"trace records must have increasing k ({record['k']} after {self.records[-1]['k']})")
        for name in record:
            if name not in COLUMNS and name not in self.extra_columns:
                self.extra_columns.append(name)
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def columns(self) -> List[str]:
        return list(COLUMNS) + list(self.extra_columns)

    @property
    def aborted(self) -> bool:
        return self.status == STATUS_ABORTED

    @property
    def last(self) -> Dict[str, float]:
        return self.records[-1] if self.records else {}

    def to_frame(self, timing: bool = True) -> pd.DataFrame:
        frame = pd.DataFrame.from_records(self.records, columns=self.columns)
        frame["k"] = frame["k"].astype("int64")
        for name in self.columns[1:]:
            frame[name] = frame[name].astype("float64")
        if not timing:
            frame["sec"] = np.nan
        return frame

    def column(self, name: str) -> np.ndarray:
        return self.to_frame()[name].to_numpy()

    def best_so_far(self, name: str) -> np.ndarray:
        """Running minimum of a column over the records where it is present."""
        values = self.column(name)
        values = values[~np.isnan(values)]
        return np.minimum.accumulate(values) if values.size else values

    def first_k_where(self, name: str, threshold: float) -> Optional[int]:
        frame = self.to_frame()
        hit = frame.loc[frame[name] <= threshold, "k"]
        return int(hit.iloc[0]) if len(hit) else None

    # --- persistence ---

    def write_csv(self, path: str, timing: bool = False) -> None:
        self.to_frame(timing=timing).to_csv(path, index=False, float_format="%.17g", na_rep="")

    @classmethod
    def read_csv(cls, path: str, metadata: Optional[Dict[str, Any]] = None) -> "Trace":
        frame = pd.read_csv(path, float_precision="round_trip")
        return cls.from_frame(frame, metadata=metadata)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, metadata: Optional[Dict[str, Any]] = None) -> "Trace":
        missing = [c for c in COLUMNS if c not in frame.columns]
        if missing:
            raise PreconditionError(f"trace table lacks columns {missing}")
        extras = [c for c in frame.columns if c not in COLUMNS]
        records = []
        for row in frame.to_dict(orient="records"):
            row = {name: float(value) for name, value in row.items()}
            row["k"] = int(row["k"])
            records.append(row)
        meta = dict(metadata or {})
        return cls(records=records, metadata=meta, status=meta.get("status", STATUS_COMPLETED),
                   error=meta.get("error"), extra_columns=extras)

    def to_json_dict(self, timing: bool = False) -> Dict[str, Any]:
        frame = self.to_frame(timing=timing)
        records = [{k: _json_safe(v) for k, v in row.items()} for row in frame.to_dict(orient="records")]
        meta = {k: _json_safe(v) for k, v in self.metadata.items()}
        meta.update(status=self.status, error=self.error)
        return {"metadata": meta, "records": records}

    def write_json(self, path: str, timing: bool = False) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(timing=timing), f, indent=2, allow_nan=False)

    @classmethod
    def read_json(cls, path: str) -> "Trace":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        frame = pd.DataFrame.from_records(data.get("records", []))
        if frame.empty:
            frame = pd.DataFrame(columns=list(COLUMNS))
        frame = frame.astype({c: "float64" for c in frame.columns if c != "k"})
        return cls.from_frame(frame, metadata=data.get("metadata"))
