"""
From per-seed runs to comparison tables
=======================================

A reduced sweep (2 epochs, 3 seeds, two privacy levels) goes through the
same reporting path as the full experiment: per-cell summaries, pooled
t-tests at the strictest privacy setting and a dummy-coded regression of
cell means on epsilon and delta.
"""

import tempfile
from pathlib import Path

from dpfair import ExperimentConfig, build_report, emit, load_adult, sweep
from dpfair.data import SplitSpec
from dpfair.report import regression_text, summary_markdown

DATA = Path(__file__).resolve().parents[1] / "data" / "adult"

config = ExperimentConfig(
    data_dir=str(DATA),
    epsilon_grid=(0.1, 10.0),
    delta_grid=(1e-5, 1e-2),
    seeds=(0, 1, 2),
    epochs=2,
)
records = sweep(config, load_adult(DATA, SplitSpec()))
print(f"{len(records)} runs, {sum(not r.ok for r in records)} failed")

report = build_report(records)
print(summary_markdown(report))
print(regression_text(report))

out = Path(tempfile.mkdtemp())
for path in emit(report, out):
    print("wrote", path)
