"""Group-fairness metrics and Reject Option Classification (ROC).

ROC post-processes predicted probabilities: inside the critical region
``|p - tau| <= margin`` the unprivileged group (protected = 0) gets the
favorable label 1 and the privileged group gets 0; elsewhere the label is
``p >= tau``. The policy ``(tau, margin)`` is chosen on validation data.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

TAU_GRID = np.round(np.arange(1, 100) / 100.0, 2)
N_MARGINS = 50


class UndefinedMetricError(ValueError):
    pass


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class FairnessThresholds:
    strict: float = 0.05
    lenient: float = 0.1

    def __post_init__(self):
        if not 0 < self.strict < self.lenient < 1:
            raise ValueError("need 0 < strict < lenient < 1")

    def verdict(self, rd: float) -> str:
        if rd < self.strict:
            return "fair (strict)"
        if rd < self.lenient:
            return "fair (lenient)"
        return "unfair"


@dataclass(frozen=True)
class ROCPolicy:
    tau: float
    margin: float
    objective_value: float = float("nan")
    achieved_rd: float = float("nan")

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("tau must be in (0, 1)")
        if not 0 <= self.margin < min(self.tau, 1 - self.tau):
            raise ValueError("margin must satisfy 0 <= margin < min(tau, 1 - tau)")

    def to_text(self) -> str:
        return "".join(
            f"{k}={getattr(self, k)!r}\n" for k in ("tau", "margin", "objective_value", "achieved_rd")
        )

    @classmethod
    def from_text(cls, text: str) -> "ROCPolicy":
        kv = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        return cls(**{k: float(v) for k, v in kv.items()})

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_text())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "ROCPolicy":
        return cls.from_text(Path(path).read_text())


def _group_masks(protected) -> tuple[np.ndarray, np.ndarray]:
    protected = np.asarray(protected)
    priv = protected == 1
    unpriv = protected == 0
    if not priv.any() or not unpriv.any():
        raise UndefinedMetricError("risk difference needs both protected groups")
    return priv, unpriv


def risk_difference(predicted, protected) -> float:
    """Absolute gap in positive-prediction rate between privileged and unprivileged rows."""
    predicted = np.asarray(predicted)
    if predicted.shape != np.shape(protected):
        raise ValueError("predicted and protected differ in length")
    priv, unpriv = _group_masks(protected)
    return float(abs(predicted[priv].mean() - predicted[unpriv].mean()))


def accuracy(predicted, truth) -> float:
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError("predicted and true labels differ in length")
    if predicted.size == 0:
        raise UndefinedMetricError("accuracy of an empty prediction")
    return float((predicted == truth).mean())


def apply_roc(probabilities, protected, policy: ROCPolicy) -> np.ndarray:
    p = np.asarray(probabilities, dtype=np.float64)
    protected = np.asarray(protected)
    labels = (p >= policy.tau).astype(np.int8)
    region = np.abs(p - policy.tau) <= policy.margin
    labels[region] = (protected[region] == 0).astype(np.int8)
    return labels


def margin_grid(tau: float, n: int = N_MARGINS) -> np.ndarray:
    return np.linspace(0.0, min(tau, 1.0 - tau), n, endpoint=False)


def evaluate_grid(probabilities, labels, protected, taus=TAU_GRID, n_margins: int = N_MARGINS):
    """Accuracy and risk difference of every (tau, margin) grid point.

    Returns arrays ``taus``, ``margins``, ``acc``, ``rd`` of equal length.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels)
    priv, unpriv = _group_masks(protected)
    n_priv, n_unpriv = priv.sum(), unpriv.sum()
    out_tau, out_m, out_acc, out_rd = [], [], [], []
    for tau in taus:
        margins = margin_grid(tau, n_margins)
        region = np.abs(p - tau)[None, :] <= margins[:, None]
        pred = np.where(region, unpriv[None, :], (p >= tau)[None, :])
        out_acc.append((pred == y[None, :]).mean(axis=1))
        rate_priv = pred[:, priv].sum(axis=1) / n_priv
        rate_unpriv = pred[:, unpriv].sum(axis=1) / n_unpriv
        out_rd.append(np.abs(rate_priv - rate_unpriv))
        out_tau.append(np.full(margins.shape, tau))
        out_m.append(margins)
    return tuple(np.concatenate(a) for a in (out_tau, out_m, out_acc, out_rd))


def _selection_order(taus, margins, acc, rd, rd_bound):
    """Indices sorted best-first under the lexicographic fit criterion."""
    feasible = rd <= rd_bound
    centre = np.abs(taus - 0.5)
    if feasible.any():
        # lexsort: last key is primary
        keys = (taus, centre, margins, -acc, ~feasible)
    else:
        keys = (taus, centre, margins, -acc, rd)
    return np.lexsort(keys)


def fit_roc(
    probabilities,
    labels,
    protected,
    rd_bound: float = 0.05,
    taus=TAU_GRID,
    n_margins: int = N_MARGINS,
) -> ROCPolicy:
    """Grid-search the policy with best validation accuracy subject to ``rd <= rd_bound``.

    If no grid point meets the bound, the one with the smallest risk
    difference wins. Ties go to higher accuracy, then smaller margin, then the
    threshold nearest 0.5.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise FitError("empty validation set")
    if np.unique(labels).size < 2:
        raise FitError("validation labels contain a single class")
    try:
        t, m, acc, rd = evaluate_grid(probabilities, labels, protected, taus, n_margins)
    except UndefinedMetricError as exc:
        raise FitError(str(exc)) from None
    best = _selection_order(t, m, acc, rd, rd_bound)[0]
    return ROCPolicy(float(t[best]), float(m[best]), float(acc[best]), float(rd[best]))
