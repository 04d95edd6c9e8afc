"""Stratified k-fold cross-validation and macro-averaged classification metrics."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._rng import derive_rng
from .errors import LengthMismatch, TooFewSamples
from .graph import BrainGraph
from .model import GraphBatch, TrainConfig, predict, train

logger = logging.getLogger(__name__)

METRICS = ("accuracy", "precision", "f1")


@dataclass(frozen=True, eq=False)
class FoldPlan:
    folds: tuple[np.ndarray, ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """``(train_indices, test_indices)`` for one fold."""
        test = self.folds[fold]
        train_idx = np.concatenate([f for i, f in enumerate(self.folds) if i != fold])
        return np.sort(train_idx), test


def fold_quotas(class_counts: Sequence[int], k: int) -> np.ndarray:
    """Integer ``classes x k`` table of how many members of each class go to each fold.

    Fold ``f`` holds ``n // k`` samples, plus one for the first ``n % k``
    folds. Each entry is the floor or ceiling of its proportional share
    ``n_c * size_f / n`` and all row and column sums are exact. Such a
    rounding always exists (the fractional table is a feasible flow); the
    leftover units are placed by augmenting paths over fractional cells.
    """
    counts = np.asarray(class_counts, dtype=np.int64)
    n = int(counts.sum())
    sizes = np.array([n // k + (f < n % k) for f in range(k)], dtype=np.int64)
    exact = counts[:, None] * sizes[None, :]
    quota = exact // n
    open_cell = exact % n != 0
    need_class = counts - quota.sum(axis=1)
    need_fold = sizes - quota.sum(axis=0)
    n_cls = len(counts)
    for c in range(n_cls):
        while need_class[c] > 0:
            # BFS from class c over fractional cells; folds are reached on
            # unused cells and left again along cells already bumped up
            parent_fold = {}
            parent_class = {c: None}
            frontier = [c]
            target = None
            while frontier and target is None:
                nxt = []
                for ci in frontier:
                    for f in range(k):
                        if f in parent_fold or not open_cell[ci, f] or quota[ci, f] * n >= exact[ci, f]:
                            continue
                        parent_fold[f] = ci
                        if need_fold[f] > 0:
                            target = f
                            break
                        for cj in range(n_cls):
                            if cj not in parent_class and open_cell[cj, f] and quota[cj, f] * n > exact[cj, f]:
                                parent_class[cj] = f
                                nxt.append(cj)
                    if target is not None:
                        break
                frontier = nxt
            if target is None:
                raise AssertionError("no controlled rounding found for the fold table")
            f = target
            need_fold[f] -= 1
            while True:
                ci = parent_fold[f]
                quota[ci, f] += 1
                back = parent_class[ci]
                if back is None:
                    break
                quota[ci, back] -= 1
                f = back
            need_class[c] -= 1
    return quota


def stratified_kfold(labels: Sequence[int], k: int, seed: int) -> FoldPlan:
    """Deal each class's shuffled members round-robin over ``k`` folds.

    The dealing position carries over from one class to the next and skips
    folds whose quota for the class (see :func:`fold_quotas`) is used up, so
    fold sizes differ by at most one and each fold's count of each class is
    within one of its proportional share.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if labels.size < k:
        raise TooFewSamples(f"cannot split {labels.size} samples into {k} folds")
    rng = derive_rng(seed, "cv.folds")
    classes = np.unique(labels)
    members = [rng.permutation(np.flatnonzero(labels == c)) for c in classes]
    quota = fold_quotas([len(m) for m in members], k)
    assignment = np.empty(labels.size, dtype=np.int64)
    pos = 0
    for c, idx in enumerate(members):
        left = quota[c].copy()
        for i in idx:
            while left[pos % k] == 0:
                pos += 1
            assignment[i] = pos % k
            left[pos % k] -= 1
            pos += 1
    return FoldPlan(tuple(np.flatnonzero(assignment == f) for f in range(k)), seed)


@dataclass(frozen=True)
class SplitMetrics:
    accuracy: float
    precision: float
    f1: float


def metrics(preds: Sequence[int], labels: Sequence[int]) -> SplitMetrics:
    """Accuracy plus macro precision and F1 over classes seen in either input.

    A class never predicted has precision 0; F1 is 0 when precision and
    recall are both 0. All ratios are formed exactly and rounded once.
    """
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise LengthMismatch(f"{preds.size} predictions for {labels.size} labels")
    if preds.size == 0:
        raise LengthMismatch("metrics need at least one prediction")
    classes = np.union1d(preds, labels)
    precisions, f1s = [], []
    for c in classes:
        tp = int(np.sum((preds == c) & (labels == c)))
        predicted = int(np.sum(preds == c))
        actual = int(np.sum(labels == c))
        precisions.append(Fraction(tp, predicted) if predicted else Fraction(0))
        # 2PR/(P+R) simplifies to 2TP/(predicted + actual).
        f1s.append(Fraction(2 * tp, predicted + actual))
    return SplitMetrics(
        accuracy=float(Fraction(int(np.sum(preds == labels)), preds.size)),
        precision=float(sum(precisions) / len(classes)),
        f1=float(sum(f1s) / len(classes)),
    )


@dataclass
class MetricsReport:
    model: str
    k: int
    seed: int
    per_fold: dict[str, list[float]]
    test_indices: list[list[int]] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def summary(self) -> dict[str, dict[str, float]]:
        return {
            name: {"mean": float(np.mean(values)), "std": float(np.std(values))}
            for name, values in self.per_fold.items()
        }

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "k": self.k,
            "seed": self.seed,
            "config": self.config,
            "per_fold": self.per_fold,
            "summary": self.summary,
            "test_indices": self.test_indices,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(
            model=data["model"],
            k=int(data["k"]),
            seed=int(data["seed"]),
            per_fold={m: [float(v) for v in data["per_fold"][m]] for m in METRICS},
            test_indices=[list(map(int, f)) for f in data.get("test_indices", [])],
            config=dict(data.get("config", {})),
        )

    def format_table(self) -> str:
        width = 11
        head = f"{'fold':>6} " + " ".join(f"{m:>{width}}" for m in METRICS)
        lines = [f"model: {self.model}  ({self.k}-fold, seed {self.seed})", head, "-" * len(head)]
        for i in range(self.k):
            lines.append(f"{i + 1:>6} " + " ".join(f"{self.per_fold[m][i]:>{width}.4f}" for m in METRICS))
        lines.append("-" * len(head))
        summ = self.summary
        lines.append(
            f"{'mean':>6} "
            + " ".join(f"{summ[m]['mean']:>7.4f} ± {summ[m]['std']:.4f}".rjust(width) for m in METRICS)
        )
        return "\n".join(lines)


def cross_validate(
    dataset: Sequence[BrainGraph] | GraphBatch,
    cfg: TrainConfig,
    k: int = 10,
    seed: int = 0,
) -> MetricsReport:
    """Train on k-1 folds and score the held-out fold, for every fold.

    Each fold trains from its own fresh initialization, seeded from
    ``cfg.seed`` and the fold index.
    """
    batch = dataset if isinstance(dataset, GraphBatch) else GraphBatch.from_graphs(list(dataset))
    labels = batch.labels
    n_classes = int(labels.max()) + 1
    plan = stratified_kfold(labels, k, seed)
    per_fold = {m: [] for m in METRICS}
    tests = []
    for fold in range(plan.k):
        train_idx, test_idx = plan.split(fold)
        if np.intersect1d(train_idx, test_idx).size:
            raise AssertionError(f"fold {fold}: training and test sets overlap")
        fold_seed = int(derive_rng(cfg.seed, "cv.train", fold).integers(2**31))
        params, _ = train(batch.subset(train_idx), replace(cfg, seed=fold_seed), n_classes=n_classes)
        scores = metrics(predict(params, batch.subset(test_idx)), labels[test_idx])
        for m in METRICS:
            per_fold[m].append(getattr(scores, m))
        tests.append(test_idx.tolist())
        logger.info("%s fold %d/%d: accuracy %.4f", cfg.model, fold + 1, plan.k, scores.accuracy)
    config = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    return MetricsReport(cfg.model, plan.k, seed, per_fold, tests, config)
