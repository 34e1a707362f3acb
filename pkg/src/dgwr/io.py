"""CSV ingestion and stable machine-readable output writing.

Input CSVs need a header row, comma separators, and '.' decimals. JSON is the
primary output format; every payload carries a schema version and the full
effective configuration, and validates against the bundled JSON schema.
Non-finite numbers are serialized as null so the JSON stays strict.
"""

from __future__ import annotations

import csv
import io as _io
import json
from importlib import resources

import numpy as np
import pandas as pd

from .data import SpatialDataset
from .errors import InputError

SCHEMA_VERSION = "1"


def schema_path():
    """Filesystem path of the bundled output schema."""
    return resources.files("dgwr").joinpath("schemas/output.schema.json")


def load_schema() -> dict:
    with schema_path().open("r", encoding="utf-8") as fh:
        return json.load(fh)


def _require_columns(df: pd.DataFrame, names) -> None:
    missing = [c for c in names if c not in df.columns]
    if missing:
        raise InputError(f"missing column(s) {missing}; file has {list(df.columns)}")


def _numeric_column(df: pd.DataFrame, name: str) -> np.ndarray:
    raw = df[name]
    vals = pd.to_numeric(raw, errors="coerce")
    bad = vals.isna()
    if bad.any():
        row = int(bad.idxmax())
        # +2: one for the header line, one for 1-based numbering.
        raise InputError(f"non-numeric value {raw.iloc[row]!r} in column {name!r}, line {row + 2}")
    return vals.to_numpy(dtype=float)


def ingest_csv(
    path,
    *,
    coord_columns,
    response_column: str,
    covariate_columns,
    transform: str = "none",
    area_column: str | None = None,
    standardize: bool = False,
):
    """Build a SpatialDataset from a CSV file.

    An all-ones intercept column is prepended to the covariates. With
    transform='log1p_per_area' the response becomes log(1 + y / area), a
    density-style transform for count data. With standardize=True each
    covariate is centered and scaled to unit standard deviation; the applied
    means and sds are echoed in the returned metadata so downstream outputs
    carry no silent defaults.

    Returns (dataset, meta).
    """
    coord_columns = list(coord_columns)
    covariate_columns = list(covariate_columns)
    if len(coord_columns) != 2:
        raise InputError(f"exactly two coordinate columns required, got {coord_columns}")
    if transform not in ("none", "log1p_per_area"):
        raise InputError(f"unknown transform {transform!r}")
    if transform == "log1p_per_area" and not area_column:
        raise InputError("transform log1p_per_area requires an area column")

    try:
        df = pd.read_csv(path)
    except FileNotFoundError as err:
        raise InputError(f"cannot read {path}: {err}") from err
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as err:
        raise InputError(f"cannot parse {path}: {err}") from err

    needed = coord_columns + [response_column] + covariate_columns
    if area_column:
        needed.append(area_column)
    _require_columns(df, needed)

    coords = np.column_stack([_numeric_column(df, c) for c in coord_columns])
    y = _numeric_column(df, response_column)
    covs = (
        np.column_stack([_numeric_column(df, c) for c in covariate_columns])
        if covariate_columns
        else np.empty((len(df), 0))
    )

    meta: dict = {
        "coord_columns": coord_columns,
        "response_column": response_column,
        "covariate_columns": covariate_columns,
        "transform": transform,
        "n_rows": int(len(df)),
    }
    if transform == "log1p_per_area":
        area = _numeric_column(df, area_column)
        if np.any(area <= 0):
            row = int(np.flatnonzero(area <= 0)[0])
            raise InputError(f"area must be positive, got {area[row]} at line {row + 2}")
        y = np.log1p(y / area)
        meta["area_column"] = area_column

    if standardize and covariate_columns:
        means = covs.mean(axis=0)
        sds = covs.std(axis=0)
        if np.any(sds == 0):
            k = int(np.flatnonzero(sds == 0)[0])
            raise InputError(f"cannot standardize constant column {covariate_columns[k]!r}")
        covs = (covs - means) / sds
        meta["standardize"] = {
            "means": {c: float(m) for c, m in zip(covariate_columns, means)},
            "sds": {c: float(s) for c, s in zip(covariate_columns, sds)},
        }
    else:
        meta["standardize"] = None

    design = np.column_stack([np.ones(len(df)), covs])
    return SpatialDataset(coords, design, y), meta


def looks_geographic(coords: np.ndarray) -> bool:
    """Heuristic: values inside lon/lat bounds spanning several degrees."""
    c = np.asarray(coords, dtype=float)
    in_lon = np.all(np.abs(c[:, 0]) <= 180.0)
    in_lat = np.all(np.abs(c[:, 1]) <= 90.0)
    span = c.max(axis=0) - c.min(axis=0)
    return bool(in_lon and in_lat and np.any(span > 5.0))


def sanitize(obj):
    """Recursively convert to plain JSON types; non-finite numbers become null."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else None
    return obj


def dumps_payload(payload: dict) -> str:
    return json.dumps(sanitize(payload), indent=2, allow_nan=False) + "\n"


def location_rows(payload: dict) -> list:
    """Flatten the per-location records for CSV export with stable columns."""
    rows = []
    for loc in payload.get("locations", []):
        row = {"index": loc["index"]}
        if "coords" in loc:
            row["coord_x"], row["coord_y"] = loc["coords"]
        if isinstance(loc.get("beta"), list):
            for k, v in enumerate(loc["beta"]):
                row[f"beta_{k}"] = v
        if isinstance(loc.get("se"), list):
            for k, v in enumerate(loc["se"]):
                row[f"se_{k}"] = v
        for key in ("sigma2", "residual", "U", "outlier", "cn", "iterations", "converged"):
            if key in loc:
                row[key] = loc[key]
        rows.append(row)
    return rows


def dumps_csv(rows: list) -> str:
    if not rows:
        return ""
    fields = list(rows[0].keys())
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def read_fit_file(path) -> dict:
    """Load a previously written fit payload for re-diagnosis."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError as err:
        raise InputError(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise InputError(f"{path} is not valid JSON: {err}") from err
    if "locations" not in payload or "meta" not in payload:
        raise InputError(f"{path} does not look like a fit output (needs meta and locations)")
    return payload
