"""CSV ingestion and JSON report documents."""
from __future__ import annotations

import csv
import dataclasses
import enum
import hashlib
import json
import math
import os
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .data import Dataset
from .errors import DataError, ReportIOError

SCHEMA_VERSION = 1


def read_csv(path) -> Dataset:
    """Parse a CSV with a header naming ``y``, ``d`` and the covariates.

    Covariates keep their file order. Rows are numbered from 1 after the header
    in error messages. Decimal points only; no locale-dependent parsing.
    """
    path = os.fspath(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ReportIOError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    for required in ("y", "d"):
        if required not in header:
            raise DataError(f"missing required column {required!r}", column=required)
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    covariates = [h for h in header if h not in ("y", "d")]
    if not covariates:
        raise DataError("no covariate columns")
    body = rows[1:]
    if not body:
        raise DataError(f"{path} has a header but no data rows")
    idx = {h: k for k, h in enumerate(header)}
    y = np.empty(len(body))
    d = np.empty(len(body), dtype=np.int8)
    z = np.empty((len(body), len(covariates)))
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} fields, got {len(row)}", row=i)
        y[i - 1] = _parse_float(row[idx["y"]], i, "y")
        d_val = _parse_float(row[idx["d"]], i, "d")
        if d_val not in (0.0, 1.0):
            raise DataError(f"treatment must be 0 or 1, got {row[idx['d']].strip()!r}",
                            row=i, column="d")
        d[i - 1] = int(d_val)
        for j, name in enumerate(covariates):
            z[i - 1, j] = _parse_float(row[idx[name]], i, name)
    return Dataset(y, d, z, tuple(covariates))


def _parse_float(cell: str, row: int, column: str) -> float:
    text = cell.strip()
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"cannot parse {cell!r} as a number", row=row, column=column) from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {cell!r}", row=row, column=column)
    return value


def write_csv(ds: Dataset, path) -> None:
    path = os.fspath(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "d", *ds.covariate_names])
            for i in range(ds.n):
                w.writerow([repr(float(ds.y[i])), int(ds.d[i]), *(repr(float(v)) for v in ds.z[i])])
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc


def to_plain(obj):
    """Recursively convert dataclasses, enums and numpy values to JSON-ready objects."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(to_plain(k)): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def estimate_record(report) -> dict:
    """Flat record of an estimate, with stable key names."""
    ci = report.ci
    choice = report.choice
    return {
        "theta_sig": report.theta_sig,
        "theta_naive": report.theta_naive,
        "theta_mbdml": report.theta_mbdml,
        "se_formula": report.se_formula,
        "se_empirical": report.se_empirical,
        "bias_bound": report.bias_bound,
        "bias_bound_lower": None if report.bound is None else report.bound.lower,
        "ci_lo": None if ci is None else ci.lo,
        "ci_hi": None if ci is None else ci.hi,
        "critical_value": None if ci is None else ci.critical_value,
        "level": None if ci is None else ci.level,
        "share_positive": report.share_positive,
        "s_used": report.s_used,
        "c2": None if choice is None else choice.c2,
        "rate_exponent": None if choice is None else choice.rate_exponent,
        "smoothing": to_plain(report.smoothing),
        "moments": to_plain(report.moments),
        "fold_count": report.fold_count,
        "seed": report.seed,
        "n": report.n,
        "p": report.p,
        "max_abs_alpha": report.max_abs_alpha,
        "all_converged": report.all_converged,
    }


def config_hash(config: dict) -> str:
    blob = json.dumps(to_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def provenance(config: dict, seed) -> dict:
    return {
        "config_hash": config_hash(config),
        "seed": seed,
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": to_plain(config),
    }


def timestamped_path(directory, stem: str, suffix: str = ".json") -> str:
    """``directory/stem-YYYYmmddTHHMMSSffffffZ.suffix``; never overwrites an existing file."""
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    base = os.path.join(os.fspath(directory), f"{stem}-{stamp}")
    path, k = base + suffix, 1
    while os.path.exists(path):
        path, k = f"{base}-{k}{suffix}", k + 1
    return path


def write_report(kind: str, record: dict, path, config: dict, seed=None) -> str:
    """Write ``record`` with a provenance block; returns the path written."""
    path = os.fspath(path)
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind, "result": to_plain(record),
           "provenance": provenance(config, seed)}
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise ReportIOError(f"cannot write report {path}: {exc}") from exc
    return path


def read_report(path) -> dict:
    path = os.fspath(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ReportIOError(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not a JSON report: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported report schema {doc.get('schema_version')!r}")
    return doc
