"""CSV round logs and the JSON run manifest."""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import NonFiniteError
from .orchestrator import ExperimentResult, RoundRecord

CSV_COLUMNS = ["round", "active_clients", "loss", "acc", "uploaded_params",
               "normalized_cost_cum", "recycled_layers", "n_norm_sq", "kappa_hat", "wall_ms"]


def fmt_float(x: float | None) -> str:
    if x is None:
        return ""
    if not math.isfinite(x):
        raise NonFiniteError(f"refusing to serialize non-finite value {x!r}")
    return format(x, ".9g")


def _ids(ids: Sequence[int]) -> str:
    return ";".join(str(i) for i in ids)


def record_row(r: RoundRecord) -> list[str]:
    return [str(r.round), _ids(r.active_client_ids), fmt_float(r.eval_loss),
            fmt_float(r.eval_accuracy), str(r.uploaded_params), fmt_float(r.normalized_cost_cum),
            _ids(r.recycled_set), fmt_float(r.n_norm_sq), fmt_float(r.kappa_hat),
            fmt_float(r.wall_ms)]


def records_to_csv(records: Sequence[RoundRecord]) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(record_row(r))
    return buf.getvalue()


def read_records_csv(path: str | Path) -> list[dict]:
    """Parse a round log back into typed dicts (blank cells become ``None``)."""
    def num(s, kind=float):
        return None if s == "" else kind(s)

    def ids(s):
        return [int(x) for x in s.split(";")] if s else []

    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for row in reader:
            rows.append({
                "round": int(row["round"]),
                "active_clients": ids(row["active_clients"]),
                "loss": num(row["loss"]),
                "acc": num(row["acc"]),
                "uploaded_params": int(row["uploaded_params"]),
                "normalized_cost_cum": num(row["normalized_cost_cum"]),
                "recycled_layers": ids(row["recycled_layers"]),
                "n_norm_sq": num(row["n_norm_sq"]),
                "kappa_hat": num(row["kappa_hat"]),
                "wall_ms": num(row["wall_ms"]),
            })
    return rows


def _finite_or_none(x):
    if x is None:
        return None
    if not math.isfinite(x):
        raise NonFiniteError(f"refusing to serialize non-finite value {x!r}")
    return float(format(x, ".9g"))


def build_manifest(result: ExperimentResult) -> dict:
    cfg = result.config
    ledger = result.ledger
    return {
        "run_hash": cfg.run_hash(),
        "version": __version__,
        "config": cfg.to_dict(),
        "model": {
            "layer_sizes": result.federation.layer_sizes,
            "total_params": result.federation.network.total_dim,
        },
        "final": {
            "rounds": len(result.records),
            "eval_loss": _finite_or_none(result.final_loss),
            "eval_accuracy": _finite_or_none(result.final_accuracy),
            "normalized_cost": _finite_or_none(result.normalized_cost),
            "uploaded_params": sum(ledger.uploads),
            "recycled_params": sum(ledger.recycled_scalars),
            "downloaded_params": sum(ledger.downloads),
            "control_ints": sum(ledger.control_ints),
            "upload_bytes": ledger.upload_bytes,
            "download_bytes": ledger.download_bytes,
            "per_layer_aggregations": list(ledger.per_layer_counts),
        },
        "wall_seconds": _finite_or_none(result.wall_seconds),
    }


def serialize_records(records: Sequence[RoundRecord], out_dir: str | Path,
                      result: ExperimentResult | None = None,
                      run_hash: str | None = None) -> tuple[Path, Path | None]:
    """Write ``records_<hash>.csv`` and, given a result, ``manifest_<hash>.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = run_hash or (result.config.run_hash() if result is not None else "run")
    csv_path = out / f"records_{tag}.csv"
    csv_path.write_text(records_to_csv(records))
    manifest_path = None
    if result is not None:
        manifest_path = out / f"manifest_{tag}.json"
        manifest_path.write_text(json.dumps(build_manifest(result), indent=2, sort_keys=True,
                                            allow_nan=False) + "\n")
    return csv_path, manifest_path
