"""Boosting engine that races a tree against a kernel learner each round.

Starting from the risk-optimal constant F0, every iteration fits one
regression tree and one penalized kernel expansion to the current
gradient/Hessian column(s), then admits the candidate whose damped update
F + nu*f has the lower training risk (sum of per-sample losses). Ties go
to the tree. The undamped selection variant compares R(F + f) instead but
still updates with shrinkage nu. Restricting the learner type recovers
plain tree boosting or plain kernel boosting from the identical code path.

Validation data, when supplied, is scored after every iteration; the
report marks the risk-argmin iteration, which is how the iteration count
is tuned downstream.

Models persist as canonical JSON (sorted keys, repr-precision floats), so
identical models serialize to identical bytes.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, softmax

from .data import TASKS, Dataset, Standardizer, fit_standardizer, identity_standardizer
from .errors import DataError, ModelFormatError, NumericalError
from .kernels import (
    RHO_MODES,
    KernelConfig,
    KernelLearner,
    build_gradient_cache,
    build_nystrom,
    fit_kernel_gradient,
    fit_kernel_newton,
    kernel_matrix,
    nystrom_indices,
    select_rho,
)
from .losses import LossFunction, for_task, gradient_hessian, loss_values, optimal_constant
from .trees import Tree, TreeNode, fit_tree, predict_tree_batch

FORMAT_VERSION = 1

LEARNER_CHOICES = ("ktboost", "tree", "kernel")
SELECTION_MODES = ("damped", "undamped")


@dataclass(frozen=True)
class BoostConfig:
    """Everything fit() needs besides the data.

    Exactly one of ``rho`` (explicit bandwidth) or ``rho_mode``
    (neighbor-distance heuristic, see kernels.select_rho) must be set when
    kernel learners are enabled. ``early_stopping_rounds`` stops training
    once the validation risk has not improved for that many iterations.
    """

    iterations: int = 100
    nu: float = 0.1
    newton: bool = True
    learner: str = "ktboost"
    max_depth: int = 5
    min_samples_leaf: int = 1
    rho: float | None = None
    rho_mode: str | None = None
    rho_knn: int = 5
    lam: float = 1.0
    nystrom: int | None = None
    seed: int = 0
    selection: str = "damped"
    standardize: bool = True
    early_stopping_rounds: int | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise DataError("iterations must be at least 1")
        if not 0 < self.nu <= 1:
            raise DataError("shrinkage nu must lie in (0, 1]")
        if self.learner not in LEARNER_CHOICES:
            raise DataError(f"unknown learner {self.learner!r}")
        if self.max_depth < 0 or self.min_samples_leaf < 1:
            raise DataError("invalid tree constraints")
        if self.selection not in SELECTION_MODES:
            raise DataError(f"unknown selection mode {self.selection!r}")
        if self.rho is not None and self.rho_mode is not None:
            raise DataError("set either rho or rho_mode, not both")
        if self.rho_mode is not None and self.rho_mode not in RHO_MODES:
            raise DataError(f"unknown rho mode {self.rho_mode!r}")
        if self.rho is not None and not self.rho > 0:
            raise DataError("rho must be positive")
        if self.rho_knn < 1:
            raise DataError("rho_knn must be at least 1")
        if self.lam < 0:
            raise DataError("lambda must be nonnegative")
        if self.nystrom is not None and self.nystrom < 1:
            raise DataError("nystrom sample count must be at least 1")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise DataError("early_stopping_rounds must be at least 1")
        if self.learner != "tree" and self.rho is None and self.rho_mode is None:
            raise DataError("kernel learners need rho or rho_mode")


@dataclass
class IterationLearners:
    """The admitted candidate of one iteration: one learner per output."""

    tag: str
    learners: list

    def __post_init__(self):
        if self.tag not in ("tree", "kernel"):
            raise DataError(f"unknown learner tag {self.tag!r}")


@dataclass
class Ensemble:
    """Constant start plus nu-damped admitted learners, in order."""

    task: str
    loss_kind: str
    nu: float
    f0: np.ndarray
    standardizer: Standardizer
    iterations: list[IterationLearners] = field(default_factory=list)
    label_names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        if self.f0.ndim != 1 or not np.all(np.isfinite(self.f0)):
            raise DataError("f0 must be a finite vector")

    @property
    def n_features(self) -> int:
        return self.standardizer.n_features

    @property
    def n_outputs(self) -> int:
        return self.f0.shape[0]

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)


@dataclass
class FitReport:
    """Per-iteration traces of one fit.

    ``train_risk`` is the risk after each admission; ``tree_risk`` and
    ``kernel_risk`` are the selection-criterion risks of the two candidates
    (NaN when a learner type was disabled). ``best_iteration`` is the
    first argmin of the validation trace, or the completed count without
    validation data. ``seconds`` times each iteration.
    """

    train_risk: list[float]
    chosen: list[str]
    tree_risk: list[float]
    kernel_risk: list[float]
    validation_risk: list[float] | None
    best_iteration: int
    initial_risk: float
    seconds: list[float]


def empirical_risk(loss: LossFunction, targets, scores) -> float:
    """Sum (not mean) of per-sample losses."""
    return float(np.sum(loss_values(loss, targets, scores)))


def _resolve_kernel_config(x: np.ndarray, config: BoostConfig) -> KernelConfig:
    """Fix the bandwidth, on the sampled rows when Nystrom is active."""
    n = x.shape[0]
    if config.nystrom is not None and config.nystrom > n:
        raise DataError(f"nystrom sample count {config.nystrom} exceeds {n} rows")
    if config.rho is not None:
        rho = config.rho
    else:
        if config.nystrom is not None:
            rows = x[nystrom_indices(n, config.nystrom, config.seed)]
        else:
            rows = x
        rho = select_rho(rows, config.rho_knn, config.rho_mode)
    return KernelConfig(rho, config.lam, config.nystrom, config.seed)


def fit(
    train: Dataset,
    config: BoostConfig,
    validation: Dataset | None = None,
) -> tuple[Ensemble, FitReport]:
    """Run the boosting loop and return the model plus its traces."""
    n, p = train.features.shape
    if n < 2:
        raise DataError("fitting needs at least two rows")
    loss = for_task(train.task, train.n_classes)
    d = loss.n_outputs
    standardizer = fit_standardizer(train) if config.standardize else identity_standardizer(p)
    x = standardizer.transform(train.features)
    y = train.targets

    f0 = optimal_constant(loss, y)
    scores = np.tile(f0, (n, 1))

    xv = yv = vscores = None
    if validation is not None:
        if validation.task != train.task or validation.n_features != p:
            raise DataError("validation data does not match the training data")
        xv = standardizer.transform(validation.features)
        yv = validation.targets
        vscores = np.tile(f0, (validation.n_samples, 1))

    use_tree = config.learner in ("ktboost", "tree")
    use_kernel = config.learner in ("ktboost", "kernel")

    kconfig = gram = nystrom = cache = None
    train_apply = val_apply = None  # matrices mapping alpha to fitted values
    if use_kernel:
        kconfig = _resolve_kernel_config(x, config)
        if kconfig.nystrom_samples is not None:
            nystrom = build_nystrom(x, kconfig)
            train_apply = nystrom.cross
            anchors = nystrom.samples
        else:
            gram = kernel_matrix(x, x, kconfig.rho)
            train_apply = gram
            anchors = x
        if xv is not None:
            val_apply = kernel_matrix(xv, anchors, kconfig.rho)
        if not config.newton:
            cache = build_gradient_cache(x, kconfig, gram=gram, nystrom=nystrom)

    step = config.nu if config.selection == "damped" else 1.0
    iterations: list[IterationLearners] = []
    train_trace: list[float] = []
    chosen: list[str] = []
    tree_trace: list[float] = []
    kernel_trace: list[float] = []
    val_trace: list[float] = [] if validation is not None else None
    seconds: list[float] = []
    initial_risk = empirical_risk(loss, y, scores)
    best_val = np.inf
    best_iter = 0

    for m in range(1, config.iterations + 1):
        started = time.perf_counter()
        gh = gradient_hessian(loss, y, scores, newton=config.newton)

        tree_learners = tree_pred = None
        tree_risk = np.nan
        if use_tree:
            tree_learners = [
                fit_tree(x, gh.g[:, k], gh.h[:, k], config.max_depth, config.min_samples_leaf)
                for k in range(d)
            ]
            tree_pred = np.column_stack([predict_tree_batch(t, x) for t in tree_learners])
            tree_risk = empirical_risk(loss, y, scores + step * tree_pred)

        kernel_learners = kernel_pred = None
        kernel_risk = np.nan
        if use_kernel:
            if config.newton:
                kernel_learners = [
                    fit_kernel_newton(x, gh.g[:, k], gh.h[:, k], kconfig, gram=gram, nystrom=nystrom)
                    for k in range(d)
                ]
            else:
                kernel_learners = [
                    fit_kernel_gradient(x, gh.g[:, k], kconfig, cache=cache) for k in range(d)
                ]
            kernel_pred = np.column_stack([train_apply @ kl.alpha for kl in kernel_learners])
            kernel_risk = empirical_risk(loss, y, scores + step * kernel_pred)

        # NaN risks lose to anything; ties admit the tree.
        tree_key = np.inf if np.isnan(tree_risk) else tree_risk
        kernel_key = np.inf if np.isnan(kernel_risk) else kernel_risk
        admit_tree = use_tree and (not use_kernel or tree_key <= kernel_key)
        if admit_tree:
            tag, learners, pred, selection_risk = "tree", tree_learners, tree_pred, tree_risk
        else:
            tag, learners, pred, selection_risk = "kernel", kernel_learners, kernel_pred, kernel_risk

        scores += config.nu * pred
        if config.selection == "damped":
            new_risk = selection_risk
        else:
            new_risk = empirical_risk(loss, y, scores)
        if not np.isfinite(new_risk):
            raise NumericalError(f"training risk diverged at iteration {m}")

        iterations.append(IterationLearners(tag, learners))
        train_trace.append(new_risk)
        chosen.append(tag)
        tree_trace.append(tree_risk)
        kernel_trace.append(kernel_risk)

        if validation is not None:
            if tag == "tree":
                vpred = np.column_stack([predict_tree_batch(t, xv) for t in learners])
            else:
                vpred = np.column_stack([val_apply @ kl.alpha for kl in learners])
            vscores += config.nu * vpred
            vrisk = empirical_risk(loss, yv, vscores)
            val_trace.append(vrisk)
            if vrisk < best_val:
                best_val = vrisk
                best_iter = m
            rounds = config.early_stopping_rounds
            seconds.append(time.perf_counter() - started)
            if rounds is not None and m - best_iter >= rounds:
                break
        else:
            seconds.append(time.perf_counter() - started)

    completed = len(iterations)
    best_iteration = best_iter if validation is not None else completed
    ensemble = Ensemble(
        train.task,
        loss.kind,
        config.nu,
        f0,
        standardizer,
        iterations,
        train.label_names,
    )
    report = FitReport(
        train_trace,
        chosen,
        tree_trace,
        kernel_trace,
        val_trace,
        best_iteration,
        initial_risk,
        seconds,
    )
    return ensemble, report


def truncate(ensemble: Ensemble, n_iterations: int) -> Ensemble:
    """A view of the ensemble keeping only the first n_iterations rounds."""
    if not 0 <= n_iterations <= ensemble.n_iterations:
        raise DataError(f"cannot truncate to {n_iterations} iterations")
    return Ensemble(
        ensemble.task,
        ensemble.loss_kind,
        ensemble.nu,
        ensemble.f0,
        ensemble.standardizer,
        list(ensemble.iterations[:n_iterations]),
        ensemble.label_names,
    )


def predict(ensemble: Ensemble, features: np.ndarray, truncate_at: int | None = None) -> np.ndarray:
    """Score matrix f0 + nu * sum of admitted learners, one column per output.

    Kernel learners sharing one anchor set are collapsed into a single
    summed coefficient vector before the kernel matrix is applied, so
    prediction cost does not grow with the iteration count for the kernel
    part beyond the coefficient sums.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    xs = ensemble.standardizer.transform(x)
    n = xs.shape[0]
    d = ensemble.n_outputs
    scores = np.tile(ensemble.f0, (n, 1))
    if truncate_at is None:
        rounds = ensemble.iterations
    else:
        if not 0 <= truncate_at <= ensemble.n_iterations:
            raise DataError(f"truncate_at {truncate_at} outside 0..{ensemble.n_iterations}")
        rounds = ensemble.iterations[:truncate_at]

    kernel_groups: dict[tuple, list] = {}
    for it in rounds:
        if it.tag == "tree":
            for k, tree in enumerate(it.learners):
                scores[:, k] += ensemble.nu * predict_tree_batch(tree, xs)
        else:
            for k, kl in enumerate(it.learners):
                key = (id(kl.anchors), kl.config.rho)
                entry = kernel_groups.setdefault(
                    key, [kl.anchors, kl.config.rho, np.zeros((kl.anchors.shape[0], d))]
                )
                entry[2][:, k] += kl.alpha
    for anchors, rho, alphas in kernel_groups.values():
        scores += ensemble.nu * (kernel_matrix(xs, anchors, rho) @ alphas)
    return scores


def predict_proba(ensemble: Ensemble, features: np.ndarray, truncate_at: int | None = None) -> np.ndarray:
    """Class probabilities, one column per class (two for binary)."""
    if ensemble.task == "regression":
        raise DataError("probabilities are undefined for regression")
    scores = predict(ensemble, features, truncate_at)
    if ensemble.task == "binary":
        p = expit(scores[:, 0])
        return np.column_stack([1.0 - p, p])
    return softmax(scores, axis=1)


def predict_labels(ensemble: Ensemble, features: np.ndarray, truncate_at: int | None = None) -> np.ndarray:
    """Hard class indices via argmax; ties resolve to the lowest class."""
    return np.argmax(predict_proba(ensemble, features, truncate_at), axis=1)


def _tree_to_dict(node: TreeNode) -> dict:
    out = {"weight": float(node.weight), "n": int(node.n_samples)}
    if not node.is_leaf:
        out["feature"] = int(node.feature)
        out["threshold"] = float(node.threshold)
        out["left"] = _tree_to_dict(node.left)
        out["right"] = _tree_to_dict(node.right)
    return out


def _tree_from_dict(doc: dict, n_features: int) -> TreeNode:
    weight = float(doc["weight"])
    count = int(doc["n"])
    if not np.isfinite(weight):
        raise ModelFormatError("non-finite leaf weight")
    if "feature" not in doc:
        return TreeNode(weight, count)
    feature = int(doc["feature"])
    threshold = float(doc["threshold"])
    if not 0 <= feature < n_features:
        raise ModelFormatError(f"split feature {feature} out of range")
    if not np.isfinite(threshold):
        raise ModelFormatError("non-finite split threshold")
    return TreeNode(
        weight,
        count,
        feature,
        threshold,
        _tree_from_dict(doc["left"], n_features),
        _tree_from_dict(doc["right"], n_features),
    )


def _learner_to_dict(tag: str, learner) -> dict:
    if tag == "tree":
        return _tree_to_dict(learner.root)
    return {
        "anchors": learner.anchors.tolist(),
        "alpha": learner.alpha.tolist(),
        "rho": float(learner.config.rho),
        "lambda": float(learner.config.lam),
        "mode": learner.mode,
    }


def dumps(ensemble: Ensemble) -> str:
    """Canonical JSON: sorted keys, compact separators, repr floats."""
    doc = {
        "format_version": FORMAT_VERSION,
        "task": ensemble.task,
        "loss": ensemble.loss_kind,
        "nu": float(ensemble.nu),
        "f0": ensemble.f0.tolist(),
        "standardizer": {
            "means": ensemble.standardizer.means.tolist(),
            "scales": ensemble.standardizer.scales.tolist(),
        },
        "label_map": list(ensemble.label_names) if ensemble.label_names else None,
        "iterations": [
            {"tag": it.tag, "per_class": [_learner_to_dict(it.tag, l) for l in it.learners]}
            for it in ensemble.iterations
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save(ensemble: Ensemble, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(ensemble))
        fh.write("\n")


def loads(text: str) -> Ensemble:
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ModelFormatError(f"not a valid model file: {exc}") from exc
    return _ensemble_from_doc(doc)


def load(path) -> Ensemble:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def _ensemble_from_doc(doc) -> Ensemble:
    try:
        if doc.get("format_version") != FORMAT_VERSION:
            raise ModelFormatError(
                f"unsupported format version {doc.get('format_version')!r}"
            )
        task = doc["task"]
        f0 = np.asarray(doc["f0"], dtype=np.float64)
        std = Standardizer(
            np.asarray(doc["standardizer"]["means"], dtype=np.float64),
            np.asarray(doc["standardizer"]["scales"], dtype=np.float64),
        )
        n_features = std.n_features
        label_map = doc["label_map"]
        label_names = tuple(str(s) for s in label_map) if label_map else None
        if task == "multiclass":
            if f0.shape[0] < 2:
                raise ModelFormatError("multiclass models need at least two outputs")
        elif f0.shape[0] != 1:
            raise ModelFormatError(f"{task} models carry exactly one output")
        n_classes = {"regression": 0, "binary": 2}.get(task, f0.shape[0])
        if label_names is not None and len(label_names) != n_classes:
            raise ModelFormatError("label_map length disagrees with the class count")
        expected = for_task(task, n_classes).kind if task != "regression" else "squared"
        if doc["loss"] != expected:
            raise ModelFormatError(f"loss {doc['loss']!r} does not fit task {task!r}")

        anchor_pool: dict = {}
        iterations = []
        for it in doc["iterations"]:
            tag = it["tag"]
            per_class = it["per_class"]
            if len(per_class) != f0.shape[0]:
                raise ModelFormatError("per_class length disagrees with f0")
            learners = []
            for entry in per_class:
                if tag == "tree":
                    root = _tree_from_dict(entry, n_features)
                    tree = Tree(root, 0, n_features)
                    tree.max_depth = tree.depth()
                    learners.append(tree)
                else:
                    anchors = np.asarray(entry["anchors"], dtype=np.float64)
                    if anchors.ndim != 2 or anchors.shape[1] != n_features:
                        raise ModelFormatError("anchor matrix shape mismatch")
                    key = (anchors.shape, anchors.tobytes())
                    anchors = anchor_pool.setdefault(key, anchors)
                    cfg = KernelConfig(
                        float(entry["rho"]),
                        float(entry["lambda"]),
                        anchors.shape[0] if entry["mode"] == "nystrom" else None,
                        0,
                    )
                    learners.append(
                        KernelLearner(anchors, np.asarray(entry["alpha"]), cfg, entry["mode"])
                    )
            iterations.append(IterationLearners(tag, learners))
        return Ensemble(task, doc["loss"], float(doc["nu"]), f0, std, iterations, label_names)
    except ModelFormatError:
        raise
    except (KeyError, TypeError, IndexError, AttributeError) as exc:
        raise ModelFormatError(f"malformed model document: {exc!r}") from exc
    except ValueError as exc:
        raise ModelFormatError(f"invalid model contents: {exc}") from exc
