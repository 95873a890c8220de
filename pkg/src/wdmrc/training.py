"""Ridge-regression readout and the three task metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import RegularizationRequired, UndefinedMetric

PAM4 = np.array([-3.0, -1.0, 1.0, 3.0])


@dataclass
class ReadoutWeights:
    weights: np.ndarray
    regularization: float
    task_id: str = ""

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("readout weights must be finite")

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.weights

    def to_csv(self, path: str | Path) -> None:
        """One weight per line, full float precision."""
        Path(path).write_text("".join(f"{w!r}\n" for w in map(float, self.weights)))

    @classmethod
    def from_csv(cls, path: str | Path, regularization: float = float("nan"),
                 task_id: str = "") -> "ReadoutWeights":
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
        return cls(np.array([float(ln) for ln in lines]), regularization, task_id)


def ridge_fit(X: np.ndarray, y: np.ndarray, regularization: float,
              task_id: str = "") -> ReadoutWeights:
    """Minimize ||Xw - y||^2 + regularization * ||w||^2.

    Solved through the normal equations with a Cholesky factorization,
    followed by one round of iterative refinement.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if regularization < 0:
        raise ValueError("regularization must be non-negative")
    rows, cols = X.shape
    if rows < cols:
        warnings.warn(f"underdetermined readout: {rows} rows for {cols} columns", stacklevel=2)

    A = X.T @ X
    A[np.diag_indices_from(A)] += regularization
    b = X.T @ y
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        if regularization == 0:
            raise RegularizationRequired("normal matrix is singular; use regularization > 0") from exc
        return ReadoutWeights(_ridge_lstsq(X, y, regularization), float(regularization), task_id)
    if regularization == 0:
        diag = np.diag(factor[0])
        if np.min(diag) <= np.max(diag) * 1e-8:
            raise RegularizationRequired("normal matrix is numerically singular; "
                                         "use regularization > 0")
    w = scipy.linalg.cho_solve(factor, b)
    w = w + scipy.linalg.cho_solve(factor, b - A @ w)
    return ReadoutWeights(w, float(regularization), task_id)


def _ridge_lstsq(X, y, regularization):
    # Cholesky lost definiteness in floating point; the stacked system
    # [X; sqrt(reg) I] w = [y; 0] has the same solution without squaring cond(X).
    cols = X.shape[1]
    Xa = np.vstack([X, np.sqrt(regularization) * np.eye(cols)])
    ya = np.concatenate([y, np.zeros(cols)])
    return scipy.linalg.lstsq(Xa, ya, lapack_driver="gelsd")[0]


def nmse(pred, target) -> float:
    """Mean squared error divided by the target variance."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError("prediction and target must have equal lengths")
    var = np.var(target)
    if not var > 0:
        raise UndefinedMetric("NMSE is undefined for a constant target")
    return float(np.mean((pred - target) ** 2) / var)


def threshold_labels(pred) -> np.ndarray:
    """Binary decision at 0.5; exactly 0.5 maps to 1."""
    return (np.asarray(pred, dtype=float) >= 0.5).astype(float)


def classification_accuracy(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError("prediction and target must have equal lengths")
    return float(np.mean(threshold_labels(pred) == target))


def round_to_pam4(pred) -> np.ndarray:
    """Nearest symbol of {-3, -1, +1, +3}.

    Ties go to the smaller magnitude (+-2 -> +-1); 0 maps to +1.
    """
    x = np.asarray(pred, dtype=float)
    return np.where(x < -2.0, -3.0, np.where(x < 0.0, -1.0, np.where(x <= 2.0, 1.0, 3.0)))


def ser(pred, target) -> float:
    """Fraction of rounded predictions that differ from the (aligned) symbols."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError("prediction and target must have equal lengths")
    return float(np.mean(round_to_pam4(pred) != target))


METRICS = {"nmse": nmse, "accuracy": classification_accuracy, "ser": ser}
LOWER_IS_BETTER = {"nmse": True, "accuracy": False, "ser": True}


@dataclass
class MetricReport:
    """Mean and (population) standard deviation of a metric over test subsets."""

    kind: str
    mean: float
    std: float
    values: list[float] = field(default_factory=list)

    @classmethod
    def from_values(cls, kind: str, values: Sequence[float]) -> "MetricReport":
        if kind not in METRICS:
            raise ValueError(f"unknown metric kind {kind!r}")
        vals = [float(v) for v in values]
        arr = np.asarray(vals)
        return cls(kind, float(np.mean(arr)), float(np.std(arr)), vals)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.mean))


def evaluate_task(X_train, y_train, X_test_subsets, y_test_subsets,
                  regularization: float, metric_kind: str,
                  task_id: str = "") -> tuple[MetricReport, ReadoutWeights]:
    """Fit once on the training split and score every test subset."""
    if len(X_test_subsets) != len(y_test_subsets):
        raise ValueError("one target per test subset expected")
    metric = METRICS[metric_kind]
    weights = ridge_fit(X_train, y_train, regularization, task_id)
    values = [metric(weights.predict(X), y) for X, y in zip(X_test_subsets, y_test_subsets)]
    return MetricReport.from_values(metric_kind, values), weights
