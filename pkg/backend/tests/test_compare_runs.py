import numpy as np
import pandas as pd
import pytest

from scripts.compare_runs import compare_runs, summarize_run
from scripts.heterogeneity_check import fluctuation


def write_metrics(run_dir, acc, loss):
    run_dir.mkdir(parents=True)
    pd.DataFrame({
        "round": list(range(1, len(acc) + 1)),
        "global_test_loss": loss,
        "global_test_acc": acc,
    }).to_csv(run_dir / "metrics.csv", index=False, lineterminator="\r\n")
    return run_dir


def test_summarize_run(tmp_path):
    run = write_metrics(tmp_path / "iid", [0.5, 0.9, 0.8], [1.2, 0.4, 0.6])
    summary = summarize_run(run)
    assert summary["run"] == "iid"
    assert summary["rounds"] == 3
    assert summary["max_test_acc"] == 0.9 and summary["max_test_acc_round"] == 2
    assert summary["min_test_loss"] == 0.4 and summary["min_test_loss_round"] == 2
    assert summary["final_test_acc"] == 0.8
    assert summary["acc_round_to_round_var"] == pytest.approx(np.var([0.4, -0.1]))


def test_compare_runs_indexes_by_name(tmp_path):
    a = write_metrics(tmp_path / "a", [0.3, 0.6], [1.0, 0.8])
    b = write_metrics(tmp_path / "b", [0.5, 0.7], [0.9, 0.7])
    table = compare_runs([a, b])
    assert list(table.index) == ["a", "b"]
    assert table["max_test_acc"].idxmax() == "b"


def test_empty_metrics_are_rejected(tmp_path):
    run = tmp_path / "empty"
    run.mkdir()
    (run / "metrics.csv").write_text("round,global_test_loss,global_test_acc\r\n")
    with pytest.raises(ValueError, match="empty"):
        summarize_run(run)


def test_fluctuation():
    assert fluctuation([0.5]) == 0.0
    assert fluctuation([0.1, 0.2, 0.3]) == pytest.approx(0.0, abs=1e-15)
    assert fluctuation([0.1, 0.5, 0.1, 0.5]) > fluctuation([0.1, 0.2, 0.3, 0.4])
