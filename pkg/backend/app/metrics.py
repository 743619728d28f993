"""
Run artifacts: per-round metrics CSV, per-client report, the full round
stream and the resolved config snapshot.
"""
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from .data.dataset import Dataset
from .errors import NumericError
from .models import ClientState, EvalResult, RoundRecord
from .schemas import ExperimentConfig

logger = logging.getLogger(__name__)

METRICS_CSV = "metrics.csv"
CLIENTS_JSON = "clients.json"
CLIENTS_CSV = "clients.csv"
ROUNDS_JSON = "rounds.json"
CHECKPOINT = "final.fspm"
RESOLVED_CONFIG = "resolved_config.json"

METRIC_COLUMNS = ["round", "global_test_loss", "global_test_acc"]


def _check_finite(values: Sequence[float], what: str) -> None:
    for v in values:
        if not math.isfinite(v):
            raise NumericError(f"non-finite value in {what}: {v}")


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    # RFC 4180: header row, comma separated, CRLF line endings
    frame.to_csv(path, index=False, lineterminator="\r\n")


def _write_json(data, path: Path) -> None:
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def metrics_frame(records: Sequence[RoundRecord]) -> pd.DataFrame:
    frame = pd.DataFrame([{col: getattr(r, col) for col in METRIC_COLUMNS} for r in records], columns=METRIC_COLUMNS)
    _check_finite(frame["global_test_loss"].tolist() + frame["global_test_acc"].tolist(), "round metrics")
    return frame


def clients_frame(records: Sequence[RoundRecord]) -> pd.DataFrame:
    """Long format: one row per (round, sampled client)."""
    rows = []
    for r in records:
        for cid, n, loss, acc in zip(r.sampled_clients, r.client_samples, r.client_train_loss, r.client_train_acc):
            rows.append({"round": r.round, "client_id": cid, "n_samples": n,
                         "client_train_loss": loss, "client_train_acc": acc})
    return pd.DataFrame(rows, columns=["round", "client_id", "n_samples", "client_train_loss", "client_train_acc"])


def client_report(
    clients: Sequence[ClientState],
    train: Dataset,
    final_eval: EvalResult,
    class_names: Sequence[str],
) -> Dict:
    """Per-client accuracy after the last round each client took part in (training accuracy)."""
    entries: List[Dict] = []
    for client in clients:
        last = client.last_stats
        histogram = np.bincount(train.labels[client.indices], minlength=train.num_classes)
        entries.append({
            "client_id": client.client_id,
            "n_samples": client.n_samples,
            "label_histogram": histogram.tolist(),
            "last_round": max(client.history) if client.history else None,
            "train_loss": last.loss if last else None,
            "train_acc": last.accuracy if last else None,
            "rounds_participated": len(client.history),
        })
    sampled = [e["train_acc"] for e in entries if e["train_acc"] is not None]
    return {
        "accuracy_kind": "training",
        "mean_client_train_acc": float(np.mean(sampled)) if sampled else None,
        "clients": entries,
        "global_test": {
            "accuracy": final_eval.accuracy,
            "loss": final_eval.loss,
            "per_class_accuracy": {
                name: (None if math.isnan(acc) else acc)
                for name, acc in zip(class_names, final_eval.per_class_accuracy)
            },
        },
    }


def write_run_artifacts(
    out_dir: Path,
    config: ExperimentConfig,
    records: Sequence[RoundRecord],
    clients: Sequence[ClientState],
    train: Dataset,
    final_eval: EvalResult,
) -> List[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / METRICS_CSV
    _write_csv(metrics_frame(records), path)
    written.append(path)

    path = out_dir / CLIENTS_JSON
    _write_json(client_report(clients, train, final_eval, train.class_names), path)
    written.append(path)

    if "csv" in config.emit:
        path = out_dir / CLIENTS_CSV
        _write_csv(clients_frame(records), path)
        written.append(path)
    if "json" in config.emit:
        path = out_dir / ROUNDS_JSON
        _write_json([r.as_dict() for r in records], path)
        written.append(path)

    path = out_dir / RESOLVED_CONFIG
    _write_json(config.model_dump(mode="json"), path)
    written.append(path)

    for p in written:
        logger.debug("wrote %s", p)
    return written
