import hashlib
import json
import os
from datetime import datetime, timezone
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from loguru import logger

from ... import __version__
from ...exceptions import DataError
from ...schemas import (
    BacktestLedger, BicopSpec, MarginalFit, ReturnPanel, RunManifest, SimpleCopula, VineModel, VineStructure,
)
from ..services.bicop_service import transpose_spec
from ..services.vine_structure import from_structure_matrix, structure_matrix

FLOAT_FORMAT = "%.6f"
FULL_PRECISION = "%.17g"


def ensure_output_dir(output_dir: str) -> str:
    os.makedirs(output_dir, exist_ok=True)
    return output_dir


def file_digest(path: str) -> str:
    """sha256 of a file's bytes"""
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            sha.update(block)
    return sha.hexdigest()


def load_returns(path: str, prices: bool = False, units: str = "percent") -> ReturnPanel:
    """Read a date-indexed CSV panel; rows with missing cells are dropped"""
    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")

    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if frame.shape[1] < 3:
        raise DataError(f"{path}: need a date column and at least 2 assets, found {frame.shape[1] - 1} asset column(s)")

    date_col, assets = frame.columns[0], [str(c) for c in frame.columns[1:]]
    dates = pd.to_datetime(frame[date_col], errors="coerce")
    bad_dates = [i + 2 for i in np.flatnonzero(dates.isna().to_numpy())]
    if bad_dates:
        raise DataError(f"{path}: unparseable date on line(s) {bad_dates[:10]}")

    cells = frame[assets].apply(lambda col: col.str.strip())
    missing = cells.eq("") | cells.apply(lambda col: col.str.upper().isin(["NA", "NAN", "NULL"]))
    numeric = cells.where(~missing).apply(pd.to_numeric, errors="coerce")
    unparseable = numeric.isna() & ~missing
    if unparseable.to_numpy().any():
        lines = sorted({int(i) + 2 for i in np.flatnonzero(unparseable.any(axis=1).to_numpy())})
        raise DataError(f"{path}: unparseable value on line(s) {lines[:10]}")

    keep = ~missing.any(axis=1).to_numpy()
    dropped = int((~keep).sum())
    if dropped:
        logger.warning(f"⚠️ Dropped {dropped} row(s) with missing cells from {path}")

    table = pd.DataFrame(numeric.to_numpy(dtype=float)[keep], index=dates[keep].dt.date, columns=assets)
    duplicated = table.index[table.index.duplicated()]
    if len(duplicated):
        raise DataError(f"{path}: duplicate date {duplicated[0]}")
    table = table.sort_index()

    if prices:
        if (table.to_numpy() <= 0).any():
            raise DataError(f"{path}: prices must be strictly positive")
        scale = 100.0 if units == "percent" else 1.0
        table = (scale * np.log(table / table.shift(1))).iloc[1:]

    if len(table) == 0:
        raise DataError(f"{path}: no complete rows")

    logger.info(f"📂 Loaded {len(table)} x {len(assets)} return panel from {path}")
    return ReturnPanel(dates=list(table.index), assets=assets, values=table.to_numpy(dtype=float), units=units)


def write_csv(frame: pd.DataFrame, path: str, index: bool = False, float_format: str = FLOAT_FORMAT) -> str:
    """CSV with fixed 6-decimal floats unless another format is given"""
    frame.to_csv(path, index=index, float_format=float_format, lineterminator="\n")
    logger.debug(f"Wrote {path}")
    return path


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, (datetime,)):
        return value.isoformat()
    if hasattr(value, "isoformat"):
        return value.isoformat()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def write_json(payload, path: str) -> str:
    """JSON with full-precision floats and deterministic key order"""
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=False, default=_json_default)
        handle.write("\n")
    logger.debug(f"Wrote {path}")
    return path


def read_json(path: str) -> Dict:
    if not os.path.exists(path):
        raise DataError(f"artifact not found: {path} (run the producing command first)")
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def start_manifest(command: str, config: Dict, seed: int, input_path: Optional[str]) -> RunManifest:
    digest = file_digest(input_path) if input_path and os.path.exists(input_path) else ""
    return RunManifest(
        command=command,
        config=config,
        seed=seed,
        version=__version__,
        input_digest=digest,
        started_at=datetime.now(timezone.utc),
    )


def finish_manifest(manifest: RunManifest, outputs: List[str], output_dir: str) -> str:
    done = manifest.model_copy(update={
        "finished_at": datetime.now(timezone.utc),
        "outputs": [os.path.basename(p) for p in outputs],
    })
    return write_json(done.model_dump(mode="json"), os.path.join(output_dir, "manifest.json"))


def read_csv_artifact(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise DataError(f"artifact not found: {path} (run the producing command first)")
    return pd.read_csv(path)


def write_ledger(ledger: BacktestLedger, path: str) -> str:
    return write_csv(ledger.frame, path)


def read_ledger(path: str, units: str = "percent") -> BacktestLedger:
    """Reload a ledger CSV; the label is the file name without extension"""
    frame = read_csv_artifact(path)
    weight_cols = [c for c in frame.columns if c.startswith("w") and c[1:].isdigit()]
    if not weight_cols or "ret" not in frame.columns:
        raise DataError(f"{path} is not a backtest ledger")
    levels = sorted(float(c[4:]) / 100.0 for c in frame.columns if c.startswith("var_"))
    frame["date"] = frame["date"].astype(str)
    if "flag" in frame.columns:
        frame["flag"] = frame["flag"].fillna("").astype(str)
    label = os.path.splitext(os.path.basename(path))[0]
    return BacktestLedger(frame=frame, assets=[f"x{j + 1}" for j in range(len(weight_cols))],
                          var_levels=levels, units=units, label=label)


def _vine_payload(model: VineModel, assets: Optional[List[str]]) -> Dict:
    structure = model.structure
    edges = []
    for edge, spec in zip(structure.edges(), (s for tree in model.edge_specs for s in tree)):
        edges.append({
            "tree": edge.tree + 1,
            "conditioned": [x + 1 for x in edge.conditioned],
            "conditioning": [x + 1 for x in edge.conditioning],
            "code": spec.code,
            "rotation": spec.rotation,
            "params": list(spec.params),
        })
    return {
        "type": "vine",
        "assets": assets,
        "kind": structure.kind,
        "dim": structure.dim,
        "order": structure.order,
        "structure_matrix": structure_matrix(structure).tolist(),
        "edges": edges,
        "loglik": model.loglik,
        "method": model.method,
        "converged": model.converged,
        "flags": model.flags,
    }


def _vine_from_payload(payload: Dict, path: str) -> VineModel:
    """Rebuild through the structure matrix; edge specs are matched by their labels"""
    try:
        rebuilt = from_structure_matrix(np.asarray(payload["structure_matrix"], dtype=int), payload["kind"])
        stored = {}
        for entry in payload["edges"]:
            conditioned = tuple(int(x) - 1 for x in entry["conditioned"])
            conditioning = tuple(sorted(int(x) - 1 for x in entry["conditioning"]))
            spec = BicopSpec.from_code(entry["code"], tuple(entry["params"]))
            if spec.rotation != entry["rotation"]:
                raise DataError(f"{path}: family code {entry['code']} disagrees with rotation {entry['rotation']}")
            stored[(int(entry["tree"]) - 1, frozenset(conditioned), conditioning)] = (conditioned, spec)
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path} is not a valid vine model: {e}")

    edge_specs = []
    for tree in rebuilt.trees:
        specs = []
        for edge in tree:
            key = (edge.tree, frozenset(edge.conditioned), tuple(edge.conditioning))
            if key not in stored:
                raise DataError(f"{path}: no pair copula stored for edge {edge.conditioned}|{edge.conditioning}")
            conditioned, spec = stored[key]
            specs.append(spec if conditioned == edge.conditioned else transpose_spec(spec))
        edge_specs.append(specs)
    if len(stored) != rebuilt.n_edges:
        raise DataError(f"{path}: {len(stored)} edges stored for a vine with {rebuilt.n_edges}")

    structure = VineStructure(kind=rebuilt.kind, dim=rebuilt.dim, order=payload.get("order"), trees=rebuilt.trees)
    return VineModel(structure=structure, edge_specs=edge_specs, loglik=payload["loglik"],
                     method=payload.get("method", "sequential"), converged=payload.get("converged", True),
                     flags=payload.get("flags", []))


def write_copula_model(model, path: str, assets: Optional[List[str]] = None) -> str:
    """
    Vine or simple copula as JSON, floats at full precision.

    A vine is stored as its structure matrix (row-major, 1-based labels)
    plus one record per edge with the numeric family code, rotation and
    parameters.
    """
    if isinstance(model, VineModel):
        return write_json(_vine_payload(model, assets), path)
    return write_json({"type": "simple", "assets": assets, "model": model.model_dump(mode="python")}, path)


def read_copula_model(path: str):
    payload = read_json(path)
    if payload.get("type") == "vine":
        return _vine_from_payload(payload, path)
    raw = dict(payload["model"])
    if raw.get("correlation") is not None:
        raw["correlation"] = np.asarray(raw["correlation"], dtype=float)
    return SimpleCopula.model_validate(raw)


def write_marginal_fits(fits: List[MarginalFit], path: str) -> str:
    return write_json([fit.model_dump(mode="python") for fit in fits], path)


def read_marginal_fits(path: str) -> List[MarginalFit]:
    fits = []
    for raw in read_json(path):
        raw = dict(raw)
        raw["variances"] = np.asarray(raw["variances"], dtype=float)
        raw["residuals"] = np.asarray(raw["residuals"], dtype=float)
        fits.append(MarginalFit.model_validate(raw))
    return fits
