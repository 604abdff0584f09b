"""Run the four model pipelines over seeds and the (epsilon, delta) grid.

=======  ==============================================================
snn      plain Adam, test labels thresholded at 0.5
fnn      plain Adam, ROC policy fit on validation, applied to test
dpnn     DP-Adam calibrated to (epsilon, delta), thresholded at 0.5
dpfnn    DP-Adam plus ROC
=======  ==============================================================
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import nn
from .data import ProcessedDataset, SplitSpec, load_adult
from .fairness import ROCPolicy, accuracy, apply_roc, fit_roc, risk_difference
from .privacy import PrivacySpec, calibrate_noise_multiplier

log = logging.getLogger(__name__)

MODEL_KINDS = ("snn", "fnn", "dpnn", "dpfnn")
DP_MODELS = ("dpnn", "dpfnn")
FAIR_MODELS = ("fnn", "dpfnn")
EPSILON_GRID = (0.1, 1.0, 10.0, 100.0)
DELTA_GRID = (0.01, 0.001, 0.0001, 0.00001)
FOCAL_CELL = (0.1, 0.00001)
DEFAULT_DATA_DIR = Path(__file__).resolve().parents[2] / "data" / "adult"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    data_dir: str = str(DEFAULT_DATA_DIR)
    models: tuple[str, ...] = MODEL_KINDS
    epsilon_grid: tuple[float, ...] = EPSILON_GRID
    delta_grid: tuple[float, ...] = DELTA_GRID
    seeds: tuple[int, ...] = tuple(range(10))
    epochs: int = 20
    minibatch_size: int = 20
    lr: float = 0.001
    clip_norm: float = 1.0
    rd_bound: float = 0.05
    split_seed: int = 0
    workers: int = 1
    out_dir: str = "results"
    focal_epsilon: float = FOCAL_CELL[0]
    focal_delta: float = FOCAL_CELL[1]

    def __post_init__(self):
        unknown = set(self.models) - set(MODEL_KINDS)
        if not self.models or unknown:
            raise ConfigError(f"models must be a non-empty subset of {MODEL_KINDS}, got {self.models}")
        if any(m in DP_MODELS for m in self.models) and not (self.epsilon_grid and self.delta_grid):
            raise ConfigError("DP models need non-empty epsilon and delta grids")
        if any(e <= 0 for e in self.epsilon_grid):
            raise ConfigError("epsilon values must be > 0")
        if any(not 0 < d < 1 for d in self.delta_grid):
            raise ConfigError("delta values must be in (0, 1)")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be non-empty and distinct")
        if self.epochs < 1 or self.minibatch_size < 1:
            raise ConfigError("epochs and minibatch_size must be >= 1")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be > 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def train_config(self) -> nn.TrainConfig:
        return nn.TrainConfig(epochs=self.epochs, minibatch_size=self.minibatch_size, lr=self.lr)

    def cells(self) -> list[tuple[str, float | None, float | None, int]]:
        """Every (model, epsilon, delta, seed) to run, in canonical order."""
        out = []
        for model in MODEL_KINDS:
            if model not in self.models:
                continue
            grid = (
                [(e, d) for e in sorted(self.epsilon_grid) for d in sorted(self.delta_grid, reverse=True)]
                if model in DP_MODELS
                else [(None, None)]
            )
            for eps, delta in grid:
                for seed in self.seeds:
                    out.append((model, eps, delta, seed))
        return out


@dataclass
class RunRecord:
    model_kind: str
    epsilon: float | None
    delta: float | None
    seed: int
    test_accuracy: float = math.nan
    test_risk_difference: float = math.nan
    achieved_epsilon: float | None = None
    noise_multiplier: float | None = None
    roc_tau: float | None = None
    roc_margin: float | None = None
    wall_time: float = 0.0
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    @property
    def cell(self) -> tuple[str, float | None, float | None]:
        return (self.model_kind, self.epsilon, self.delta)

    def sort_key(self):
        return (
            MODEL_KINDS.index(self.model_kind),
            -1.0 if self.epsilon is None else self.epsilon,
            -1.0 if self.delta is None else -self.delta,
            self.seed,
        )


RECORD_FIELDS = tuple(f.name for f in fields(RunRecord))


def derive_seeds(model: str, epsilon, delta, seed: int) -> tuple[int, int, int]:
    """(weight_init_seed, shuffle_seed, noise_seed) from a hash of the cell."""
    key = f"{model}|{epsilon!r}|{delta!r}|{seed}".encode()
    digest = hashlib.sha256(key).digest()
    return tuple(int.from_bytes(digest[i : i + 8], "little") for i in (0, 8, 16))


@lru_cache(maxsize=None)
def _calibrate(epsilon: float, delta: float, q: float, steps: int) -> tuple[float, float]:
    return calibrate_noise_multiplier(epsilon, delta, q, steps)


def privacy_spec(epsilon: float, delta: float, train_rows: int, config: ExperimentConfig) -> PrivacySpec:
    q = config.minibatch_size / train_rows
    steps = config.epochs * math.ceil(train_rows / config.minibatch_size)
    sigma, achieved = _calibrate(epsilon, delta, q, steps)
    return PrivacySpec(epsilon, delta, config.clip_norm, sigma, q, steps, achieved)


@dataclass(frozen=True, eq=False)
class Splits:
    train: ProcessedDataset
    validation: ProcessedDataset
    test: ProcessedDataset

    @classmethod
    def of(cls, dataset: ProcessedDataset) -> "Splits":
        return cls(dataset.subset("train"), dataset.subset("validation"), dataset.subset("test"))


def run_pipeline(
    splits: Splits | ProcessedDataset,
    model_kind: str,
    epsilon: float | None,
    delta: float | None,
    seed: int,
    config: ExperimentConfig = ExperimentConfig(),
) -> RunRecord:
    """Train and evaluate one cell; failures come back as a record with ``error`` set."""
    if isinstance(splits, ProcessedDataset):
        splits = Splits.of(splits)
    record = RunRecord(model_kind, epsilon, delta, seed)
    start = time.perf_counter()
    try:
        if model_kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {model_kind!r}")
        init_seed, shuffle_seed, noise_seed = derive_seeds(model_kind, epsilon, delta, seed)
        tc = nn.TrainConfig(
            epochs=config.epochs,
            minibatch_size=config.minibatch_size,
            shuffle_seed=shuffle_seed,
            weight_init_seed=init_seed,
            lr=config.lr,
        )
        spec = None
        if model_kind in DP_MODELS:
            if epsilon is None or delta is None:
                raise ConfigError(f"{model_kind} needs epsilon and delta")
            spec = privacy_spec(epsilon, delta, len(splits.train), config)
            record.noise_multiplier = spec.noise_multiplier
            record.achieved_epsilon = spec.achieved_epsilon
        params = nn.train(splits.train, tc, privacy=spec, noise_seed=noise_seed)
        p_test = nn.predict_proba(params, splits.test)
        if model_kind in FAIR_MODELS:
            p_val = nn.predict_proba(params, splits.validation)
            policy = fit_roc(p_val, splits.validation.labels, splits.validation.protected, config.rd_bound)
            record.roc_tau, record.roc_margin = policy.tau, policy.margin
            labels = apply_roc(p_test, splits.test.protected, policy)
        else:
            labels = (p_test >= 0.5).astype(np.int8)
        record.test_accuracy = accuracy(labels, splits.test.labels)
        record.test_risk_difference = risk_difference(labels, splits.test.protected)
    except Exception as exc:  # recorded, never dropped
        log.warning("cell %s failed: %s", record.cell, exc)
        record.error = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        log.debug(traceback.format_exc())
    record.wall_time = time.perf_counter() - start
    return record


_worker_splits: Splits | None = None


def _init_worker(data_dir: str, split_seed: int) -> None:
    global _worker_splits
    _worker_splits = Splits.of(load_adult(data_dir, SplitSpec(shuffle_seed=split_seed)))


def _run_in_worker(cell, config: ExperimentConfig) -> RunRecord:
    return run_pipeline(_worker_splits, *cell, config=config)


def sweep(config: ExperimentConfig, dataset: ProcessedDataset | None = None) -> list[RunRecord]:
    """Run every configured cell; records come back in canonical order."""
    cells = config.cells()
    if config.workers == 1 or len(cells) == 1:
        if dataset is None:
            dataset = load_adult(config.data_dir, SplitSpec(shuffle_seed=config.split_seed))
        splits = Splits.of(dataset)
        records = [run_pipeline(splits, *cell, config=config) for cell in cells]
    else:
        # workers rebuild the dataset from config.data_dir
        with ProcessPoolExecutor(
            max_workers=config.workers,
            initializer=_init_worker,
            initargs=(config.data_dir, config.split_seed),
        ) as pool:
            records = list(pool.map(_run_in_worker, cells, [config] * len(cells)))
    records.sort(key=RunRecord.sort_key)
    failed = [r for r in records if not r.ok]
    if failed:
        log.warning("%d of %d cells failed", len(failed), len(records))
    return records


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1))


def record_to_row(record: RunRecord) -> dict:
    row = asdict(record)
    return {k: ("" if v is None else v) for k, v in row.items()}


def record_from_row(row: dict) -> RunRecord:
    def opt_float(v):
        return None if v in ("", None) else float(v)

    return RunRecord(
        model_kind=row["model_kind"],
        epsilon=opt_float(row["epsilon"]),
        delta=opt_float(row["delta"]),
        seed=int(row["seed"]),
        test_accuracy=float(row["test_accuracy"]),
        test_risk_difference=float(row["test_risk_difference"]),
        achieved_epsilon=opt_float(row["achieved_epsilon"]),
        noise_multiplier=opt_float(row["noise_multiplier"]),
        roc_tau=opt_float(row["roc_tau"]),
        roc_margin=opt_float(row["roc_margin"]),
        wall_time=float(row["wall_time"]),
        error=row.get("error", "") or "",
    )


def roc_policy_of(record: RunRecord) -> ROCPolicy | None:
    if record.roc_tau is None:
        return None
    return ROCPolicy(record.roc_tau, record.roc_margin)
