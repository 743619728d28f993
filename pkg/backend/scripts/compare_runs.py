#!/usr/bin/env python3
"""
Run Comparison - Summarize finished runs side by side
Reads metrics.csv from each run directory and reports peak test accuracy,
minimum test loss and the round each was reached
"""
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pathlib import Path
from typing import Dict, List

import pandas as pd

from app.metrics import METRICS_CSV


def summarize_run(run_dir: Path) -> Dict:
    """Table-style summary of one run's metrics.csv"""
    frame = pd.read_csv(Path(run_dir) / METRICS_CSV)
    if frame.empty:
        raise ValueError(f"{run_dir} has an empty {METRICS_CSV}")
    best_acc = frame.loc[frame["global_test_acc"].idxmax()]
    best_loss = frame.loc[frame["global_test_loss"].idxmin()]
    last = frame.iloc[-1]
    return {
        "run": Path(run_dir).name,
        "rounds": int(len(frame)),
        "max_test_acc": float(best_acc["global_test_acc"]),
        "max_test_acc_round": int(best_acc["round"]),
        "min_test_loss": float(best_loss["global_test_loss"]),
        "min_test_loss_round": int(best_loss["round"]),
        "final_test_acc": float(last["global_test_acc"]),
        "final_test_loss": float(last["global_test_loss"]),
        "acc_round_to_round_var": float(frame["global_test_acc"].diff().dropna().var(ddof=0))
        if len(frame) > 1 else 0.0,
    }


def compare_runs(run_dirs: List[Path]) -> pd.DataFrame:
    return pd.DataFrame([summarize_run(d) for d in run_dirs]).set_index("run")


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Compare finished FedSim runs")
    parser.add_argument("runs", nargs="+", type=Path, help="Run output directories")
    parser.add_argument("--out", type=Path, help="Also write the summary table as CSV")

    args = parser.parse_args()

    table = compare_runs(args.runs)
    print("📊 RUN COMPARISON")
    print("=" * 60)
    print(table[["max_test_acc", "min_test_loss", "final_test_acc", "max_test_acc_round"]].to_string())

    leader = table["max_test_acc"].idxmax()
    print(f"\n🏆 Highest peak accuracy: {leader} ({table.loc[leader, 'max_test_acc']:.2%})")

    if args.out:
        table.to_csv(args.out)
        print(f"💾 Summary saved to: {args.out}")
