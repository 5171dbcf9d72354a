"""Loss functions with analytic first/second derivatives and optimal constants.

The squared loss carries a 1/2 factor so its gradient is the plain
residual F - y and its Hessian is 1; gradient boosting then fits trees to
raw residuals. Binary targets follow the {0, 1} convention throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .errors import DataError

# Newton-mode Hessians are clamped away from zero so the weighted kernel
# system stays invertible.
HESSIAN_FLOOR = 1e-10
PROB_CLIP = 1e-15

LOSS_KINDS = ("squared", "logistic", "softmax")


@dataclass(frozen=True)
class LossFunction:
    """A loss kind plus the number of model outputs it scores.

    ``n_outputs`` is 1 for squared and logistic, and the class count d for
    softmax cross-entropy.
    """

    kind: str
    n_outputs: int = 1

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise DataError(f"unknown loss {self.kind!r}")
        if self.kind == "softmax" and self.n_outputs < 2:
            raise DataError("softmax needs at least two classes")
        if self.kind != "softmax" and self.n_outputs != 1:
            raise DataError(f"{self.kind} loss is univariate")


@dataclass(frozen=True)
class GradHess:
    """Per-sample gradients and Hessians, one column per model output."""

    g: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        if self.g.shape != self.h.shape or self.g.ndim != 2:
            raise DataError("gradient/Hessian shape mismatch")
        if not (np.all(np.isfinite(self.g)) and np.all(np.isfinite(self.h))):
            raise DataError("non-finite gradient or Hessian")


def for_task(task: str, n_classes: int = 0) -> LossFunction:
    """Map a task kind to its loss: squared, logistic, or softmax."""
    if task == "regression":
        return LossFunction("squared")
    if task == "binary":
        return LossFunction("logistic")
    if task == "multiclass":
        return LossFunction("softmax", n_classes)
    raise DataError(f"unknown task {task!r}")


def _scores_2d(loss: LossFunction, scores: np.ndarray) -> np.ndarray:
    f = np.atleast_1d(np.asarray(scores, dtype=np.float64))
    if loss.n_outputs == 1:
        if f.ndim == 1:
            f = f[:, None]
    elif f.ndim == 1:
        f = f[None, :]
    if f.shape[1] != loss.n_outputs:
        raise DataError(f"expected {loss.n_outputs} score columns, got {f.shape[1]}")
    return f


def loss_values(loss: LossFunction, targets, scores) -> np.ndarray:
    """Per-sample loss values; log-sum-exp terms are computed stably."""
    f = _scores_2d(loss, scores)
    y = np.atleast_1d(np.asarray(targets))
    if loss.kind == "squared":
        return 0.5 * (y - f[:, 0]) ** 2
    if loss.kind == "logistic":
        # log(1 + e^F) - y F
        return np.logaddexp(0.0, f[:, 0]) - y * f[:, 0]
    idx = y.astype(np.int64)
    return logsumexp(f, axis=1) - f[np.arange(f.shape[0]), idx]


def gradient_hessian(loss: LossFunction, targets, scores, newton: bool = True) -> GradHess:
    """Analytic derivatives of the per-sample loss at the current scores.

    With ``newton=False`` the Hessian column is identically one (gradient
    boosting); otherwise Hessians are clamped to at least HESSIAN_FLOOR.
    """
    f = _scores_2d(loss, scores)
    y = np.atleast_1d(np.asarray(targets))
    if loss.kind == "squared":
        g = f - y[:, None]
        h = np.ones_like(g)
    elif loss.kind == "logistic":
        p = expit(f[:, 0])
        g = (p - y)[:, None]
        h = (p * (1.0 - p))[:, None]
    else:
        p = softmax(f, axis=1)
        g = p.copy()
        g[np.arange(f.shape[0]), y.astype(np.int64)] -= 1.0
        h = p * (1.0 - p)
    if newton:
        h = np.maximum(h, HESSIAN_FLOOR)
    else:
        h = np.ones_like(g)
    return GradHess(g, h)


def optimal_constant(loss: LossFunction, targets) -> np.ndarray:
    """Constant score(s) minimizing the empirical risk.

    Squared: the target mean. Logistic: the log-odds of the class-1
    frequency. Softmax: log class frequencies, mean-centered to remove the
    shift indeterminacy. Frequencies are clipped so pure-class data stays
    finite.
    """
    y = np.atleast_1d(np.asarray(targets))
    if y.size == 0:
        raise DataError("empty dataset")
    if loss.kind == "squared":
        return np.array([np.mean(y)])
    if loss.kind == "logistic":
        p = np.clip(np.mean(y), PROB_CLIP, 1.0 - PROB_CLIP)
        return np.array([np.log(p / (1.0 - p))])
    counts = np.bincount(y.astype(np.int64), minlength=loss.n_outputs)
    freq = np.clip(counts / y.size, PROB_CLIP, 1.0 - PROB_CLIP)
    scores = np.log(freq)
    return scores - scores.mean()
