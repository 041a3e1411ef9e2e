import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from config import FLOAT_FORMAT, SCHEMA_VERSION
from distributions import AtomicRV
from duality import Density
from errors import SchemaError
from orlicz import OrliczFunction, custom_table
from partitions import Partition, from_labels
from risk import KusuokaCandidate, KusuokaSpec

PathLike = Union[str, Path]


# ─────────────────────────────────────────────────────────────────────────────
# CSV loaders
# ─────────────────────────────────────────────────────────────────────────────

def _read_table(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    """Read a headed CSV and check the required columns are present and nonempty."""
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise SchemaError(f"{path}: empty file")
    except pd.errors.ParserError as e:
        raise SchemaError(f"{path}: {e}")
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    if df.empty:
        raise SchemaError(f"{path}: no rows")
    return df


def _numeric(df: pd.DataFrame, column: str, path: PathLike, allow_inf: bool = False) -> np.ndarray:
    values = pd.to_numeric(df[column], errors="coerce").to_numpy(dtype=float)
    bad = np.isnan(values) if allow_inf else ~np.isfinite(values)
    if np.any(bad):
        row = int(np.flatnonzero(bad)[0])
        raise SchemaError(f"{path}: column {column!r} row {row + 1} is not a valid number")
    return values


def read_scenarios(path: PathLike) -> AtomicRV:
    """One atom per row, column `value`."""
    df = _read_table(path, ["value"])
    return AtomicRV(_numeric(df, "value", path))


def read_partition(path: PathLike, n: Optional[int] = None) -> Partition:
    """One row per atom, column `block_id` (nonnegative integers)."""
    df = _read_table(path, ["block_id"])
    ids = _numeric(df, "block_id", path)
    if np.any(ids < 0) or np.any(ids != np.floor(ids)):
        raise SchemaError(f"{path}: block_id must be nonnegative integers")
    if n is not None and ids.size != n:
        raise SchemaError(f"{path}: {ids.size} rows for {n} atoms")
    return from_labels(ids.astype(np.int64))


def read_densities(path: PathLike, cap: Optional[float] = None) -> List[Density]:
    """Column `z`; an optional `density_id` column stacks several densities in one file."""
    df = _read_table(path, ["z"])
    groups = df.groupby("density_id", sort=False) if "density_id" in df.columns else [(0, df)]
    out = []
    for key, frame in groups:
        z = _numeric(frame, "z", path)
        try:
            out.append(Density(z, cap=cap))
        except ValueError as e:
            raise SchemaError(f"{path}: density {key!r}: {e}")
    return out


def read_kusuoka(path: PathLike) -> KusuokaSpec:
    """Columns candidate_id, alpha, weight, gamma (gamma constant per candidate, may be inf)."""
    df = _read_table(path, ["candidate_id", "alpha", "weight", "gamma"])
    alphas = _numeric(df, "alpha", path)
    weights = _numeric(df, "weight", path)
    gammas = _numeric(df, "gamma", path, allow_inf=True)
    candidates = []
    for cid, idx in df.groupby("candidate_id", sort=False).indices.items():
        g = set(gammas[idx].tolist())
        if len(g) != 1:
            raise SchemaError(f"{path}: candidate {cid!r} has more than one gamma")
        try:
            candidates.append(
                KusuokaCandidate(tuple(alphas[idx]), tuple(weights[idx]), g.pop(), str(cid))
            )
        except ValueError as e:
            raise SchemaError(f"{path}: {e}")
    return KusuokaSpec(tuple(candidates))


def read_phi_table(path: PathLike) -> OrliczFunction:
    df = _read_table(path, ["t", "phi_t"])
    try:
        return custom_table(_numeric(df, "t", path), _numeric(df, "phi_t", path))
    except ValueError as e:
        raise SchemaError(f"{path}: {e}")


# ─────────────────────────────────────────────────────────────────────────────
# CSV writers (17 significant digits, so every file re-reads to the same floats)
# ─────────────────────────────────────────────────────────────────────────────

def frame_to_csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_scenarios(X: AtomicRV, path: PathLike):
    Path(path).write_text(frame_to_csv(pd.DataFrame({"value": X.values})))


def write_partition(pi: Partition, path: PathLike):
    Path(path).write_text(frame_to_csv(pd.DataFrame({"block_id": pi.labels})))


def trace_frame(depths: Sequence[int], values: Sequence[float], stabilized: bool) -> pd.DataFrame:
    return pd.DataFrame({
        "depth": list(depths),
        "value": list(values),
        "stabilized": [stabilized] * len(values),
    })


# ─────────────────────────────────────────────────────────────────────────────
# JSON reports
# ─────────────────────────────────────────────────────────────────────────────

def _encode(value):
    if isinstance(value, dict):
        return {str(k): _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_encode(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "+inf" if value > 0 else "-inf"
        return value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dump_report(payload: Dict) -> str:
    """JSON with schema_version first; non-finite floats are written as strings."""
    doc = {"schema_version": SCHEMA_VERSION}
    doc.update(_encode(payload))
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def decode_float(value) -> float:
    """Inverse of the non-finite encoding used by dump_report."""
    if isinstance(value, str):
        return {"+inf": math.inf, "-inf": -math.inf, "nan": math.nan}[value]
    return float(value)
