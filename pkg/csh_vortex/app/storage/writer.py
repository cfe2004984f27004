"""Artifacts on disk: JSON reports, the sweep CSV and field dumps."""

import logging
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from csh_vortex.app.errors import ConfigurationError
from csh_vortex.app.schemas.reports import SweepReport
from csh_vortex.app.services.torus_field import TorusGrid

logger = logging.getLogger(__name__)


def _ensure(out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def write_report(report: BaseModel, out_dir: Path, name: str) -> Path:
    path = _ensure(out_dir) / f"{name}.json"
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"wrote {path}")
    return path


def sweep_frame(report: SweepReport) -> pd.DataFrame:
    n = max((len(row.distances) for row in report.rows), default=0)
    records = []
    for row in report.rows:
        record = {"lambda": row.lam, "J": row.J}
        for i in range(n):
            record[f"d_{i + 1}"] = row.distances[i] if row.distances else np.nan
        for i in range(n):
            record[f"quantized_error_{i + 1}"] = row.quantized_errors[i] if row.quantized_errors else np.nan
        record["iterations"] = row.iterations
        record["converged"] = row.converged
        record["outcome"] = row.outcome
        records.append(record)
    return pd.DataFrame.from_records(records)


def write_sweep_csv(report: SweepReport, out_dir: Path) -> Path:
    path = _ensure(out_dir) / "sweep.csv"
    sweep_frame(report).to_csv(path, index=False, float_format="%.17g")
    logger.info(f"wrote {path} ({len(report.rows)} rows)")
    return path


# ---------------------------------------------------------------------------
# Field dumps
# ---------------------------------------------------------------------------
#
# csv:    first line "# L1=<..> L2=<..> M1=<..> M2=<..>", then M1 rows of M2 values
# binary: float64 header (L1, L2, M1, M2) followed by the values in C order

def _csv_header(grid: TorusGrid) -> str:
    return f"# L1={grid.L1!r} L2={grid.L2!r} M1={grid.M1} M2={grid.M2}\n"


def write_fields(grid: TorusGrid, v: np.ndarray, out_dir: Path, fmt: str = "csv") -> List[Path]:
    if fmt not in ("csv", "binary"):
        raise ConfigurationError(f"unknown field format {fmt!r}")
    fields_dir = _ensure(Path(out_dir) / "fields")
    paths = []
    for i, values in enumerate(v):
        if fmt == "csv":
            path = fields_dir / f"v_{i + 1}.csv"
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(_csv_header(grid))
                pd.DataFrame(values).to_csv(fh, header=False, index=False, float_format="%.17g")
        else:
            path = fields_dir / f"v_{i + 1}.bin"
            header = np.array([grid.L1, grid.L2, grid.M1, grid.M2], dtype=np.float64)
            np.concatenate([header, values.astype(np.float64).ravel()]).tofile(path)
        paths.append(path)
    logger.info(f"wrote {len(paths)} field files to {fields_dir}")
    return paths


def read_field(path: Path) -> Tuple[TorusGrid, np.ndarray]:
    path = Path(path)
    if path.suffix == ".bin":
        raw = np.fromfile(path, dtype=np.float64)
        L1, L2, M1, M2 = raw[:4]
        grid = TorusGrid(float(L1), float(L2), int(M1), int(M2))
        return grid, raw[4:].reshape(grid.shape)

    with open(path, encoding="utf-8") as fh:
        header = fh.readline().lstrip("#").split()
    meta = dict(item.split("=", 1) for item in header)
    grid = TorusGrid(float(meta["L1"]), float(meta["L2"]), int(meta["M1"]), int(meta["M2"]))
    values = pd.read_csv(path, comment="#", header=None, float_precision="round_trip").to_numpy(dtype=float)
    if values.shape != grid.shape:
        raise ConfigurationError(f"{path}: {values.shape} values for a {grid.shape} grid")
    return grid, values
