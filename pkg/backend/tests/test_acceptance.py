"""Scaled-down behavioural runs on the default synthetic experiment."""
import statistics

import pytest

from app.cli import build_partition, load_splits, model_spec_for
from app.fed.engine import TrainingTask, run_federation
from app.schemas import ExperimentConfig, FederationConfig, PartitionConfig, SyntheticSource
from scripts.heterogeneity_check import compare_partitions

pytestmark = pytest.mark.slow


def run_default(seed):
    config = ExperimentConfig(
        dataset=SyntheticSource(seed=seed),
        partition=PartitionConfig(scheme="iid"),
        federation=FederationConfig(num_clients=8, clients_per_round=8, rounds=30, local_epochs=2, seed=seed),
    )
    train, test = load_splits(config.dataset)
    task = TrainingTask(spec=model_spec_for("mlp", train, config), train=train, preprocess=config.preprocess)
    return run_federation(config.federation, task, test, build_partition(config, train)).records


def test_iid_federation_converges():
    peaks, loss_ok = [], []
    for seed in range(3):
        records = run_default(seed)
        assert len(records) == 30
        peaks.append(max(r.global_test_acc for r in records))
        first = records[0].global_test_loss
        loss_ok.append(all(r.global_test_loss < first for r in records[4:]))
    assert statistics.median(peaks) >= 0.95
    assert sum(loss_ok) >= 2


def test_label_skew_hurts_and_destabilizes():
    summary = compare_partitions(range(5), rounds=30, alpha=0.1)
    assert summary["dirichlet_median_final_acc"] < summary["iid_median_final_acc"]
    assert summary["accuracy_drops_under_skew"]
    assert summary["iid_is_steadier"]
