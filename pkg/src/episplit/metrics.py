"""Intersection-over-union scoring and the episodic evaluation protocol.

mIoU here is the class-accumulated flavour: intersections and unions
are summed per class over all of a run's tasks first, divided second,
and averaged over classes last. A task whose class never appears
simply does not contribute — absent classes are not counted as zero.

A test task is one (support image, query image) pair sharing a class:
the support's binarised ground truth acts as the annotation, the
query's as the target. Pixels labelled 255 in the query's ground-truth
grid are excluded from both intersection and union. Sampling is
uniform over the fold's classes and, within a class, uniform over
ordered pairs of distinct images, drawn with replacement across tasks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .dataio import (
    DatasetManifest,
    FoldSpec,
    binarize_class_mask,
    load_prediction_set,
    read_class_mask,
    read_image,
    read_mask,
    read_prediction,
    write_episode,
    write_pack_manifest,
)
from .episodes import Episode
from .errors import (
    DimensionMismatchError,
    InsufficientImagesError,
    MissingPredictionError,
    MissingSaliencyError,
)

GT_IGNORE_VALUE = 255


def intersection_union(pred, gt, exclude=None) -> tuple[int, int]:
    """Pixel counts feeding IoU; excluded pixels vanish from both terms."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise DimensionMismatchError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    if exclude is not None:
        exclude = np.asarray(exclude, dtype=bool)
        if exclude.shape != gt.shape:
            raise DimensionMismatchError(f"exclude mask {exclude.shape} vs ground truth {gt.shape}")
        valid = ~exclude
        pred = pred & valid
        gt = gt & valid
    inter = int(np.count_nonzero(pred & gt))
    union = int(np.count_nonzero(pred | gt))
    return inter, union


def iou(pred, gt, exclude=None) -> float:
    """IoU of two binary masks; empty-vs-empty counts as a perfect 1.0."""
    inter, union = intersection_union(pred, gt, exclude)
    if union == 0:
        return 1.0
    return inter / union


class ClassAccumulator:
    """Sums intersections and unions per class across tasks."""

    def __init__(self):
        self._inter: dict[int, int] = {}
        self._union: dict[int, int] = {}

    def add(self, class_id: int, pred, gt, exclude=None) -> None:
        inter, union = intersection_union(pred, gt, exclude)
        self._inter[class_id] = self._inter.get(class_id, 0) + inter
        self._union[class_id] = self._union.get(class_id, 0) + union

    def classes(self) -> list[int]:
        return sorted(self._inter)

    def per_class_iou(self) -> dict[int, float]:
        out = {}
        for c in self.classes():
            union = self._union[c]
            out[c] = 1.0 if union == 0 else self._inter[c] / union
        return out

    def miou(self) -> float:
        per_class = self.per_class_iou()
        if not per_class:
            return float("nan")
        return sum(per_class.values()) / len(per_class)


@dataclass
class TestTask:
    task_id: str
    class_id: int
    support_image_id: str
    query_image_id: str
    support_mask: np.ndarray
    query_mask: np.ndarray
    query_exclude: np.ndarray | None = None


def sample_test_tasks(manifest: DatasetManifest, classes, count: int,
                      rng: np.random.Generator) -> list[TestTask]:
    """Draw evaluation tasks for one fold.

    Raises:
        InsufficientImagesError: some class has fewer than two images
            carrying ground truth, so no (support, query) pair exists.
    """
    classes = list(classes)
    eligible: dict[int, list] = {}
    for c in classes:
        entries = [e for e in manifest.entries
                   if e.gt_mask_path is not None
                   and e.class_ids is not None and c in e.class_ids]
        if len(entries) < 2:
            raise InsufficientImagesError(
                f"class {c}: only {len(entries)} usable images, need at least 2")
        eligible[c] = entries

    grids: dict[str, np.ndarray] = {}

    def grid_for(entry):
        if entry.image_id not in grids:
            grids[entry.image_id] = read_class_mask(manifest.resolve(entry.gt_mask_path))
        return grids[entry.image_id]

    tasks: list[TestTask] = []
    for idx in range(count):
        c = classes[int(rng.integers(len(classes)))]
        pool = eligible[c]
        i = int(rng.integers(len(pool)))
        j = int(rng.integers(len(pool) - 1))
        if j >= i:
            j += 1
        support, query = pool[i], pool[j]
        query_grid = grid_for(query)
        tasks.append(TestTask(
            task_id=f"t{idx:05d}_c{c}",
            class_id=c,
            support_image_id=support.image_id,
            query_image_id=query.image_id,
            support_mask=binarize_class_mask(grid_for(support), c),
            query_mask=binarize_class_mask(query_grid, c),
            query_exclude=query_grid == GT_IGNORE_VALUE,
        ))
    return tasks


def score_tasks(tasks, predict) -> ClassAccumulator:
    """Score a prediction function over tasks; predict(task) -> bool mask."""
    acc = ClassAccumulator()
    for task in tasks:
        acc.add(task.class_id, predict(task), task.query_mask, task.query_exclude)
    return acc


def prediction_set_predictor(pred_dir):
    """predict(task) that reads masks from an exported prediction set."""
    paths = load_prediction_set(pred_dir)

    def predict(task: TestTask) -> np.ndarray:
        path = paths.get(task.task_id)
        if path is None or not Path(path).is_file():
            raise MissingPredictionError(
                f"no prediction for task {task.task_id} in {pred_dir}")
        return read_prediction(path)

    return predict


def saliency_predictor(manifest: DatasetManifest):
    """predict(task) that answers with the query image's saliency mask.

    The no-training baseline: class-agnostic saliency stands in for the
    segmentation. Useful both as a floor and as a pipeline check.
    """
    by_id = manifest.by_id()
    cache: dict[str, np.ndarray] = {}

    def predict(task: TestTask) -> np.ndarray:
        entry = by_id.get(task.query_image_id)
        if entry is None or entry.saliency_path is None:
            raise MissingSaliencyError(
                f"task {task.task_id}: no saliency mask for image {task.query_image_id}")
        if entry.image_id not in cache:
            cache[entry.image_id] = read_mask(manifest.resolve(entry.saliency_path))
        pred = cache[entry.image_id]
        if pred.shape != task.query_mask.shape:
            raise DimensionMismatchError(
                f"task {task.task_id}: saliency {pred.shape} vs ground truth "
                f"{task.query_mask.shape}")
        return pred

    return predict


# --------------------------------------------------------------------
# multi-run protocol and reports


@dataclass
class RunScore:
    run_index: int
    seed: int
    task_count: int
    per_class_iou: dict[int, float]
    miou: float


@dataclass
class FoldScore:
    fold: int
    classes: tuple[int, ...]
    runs: list[RunScore]
    mean_miou: float
    std_miou: float


@dataclass
class EvalReport:
    dataset: str
    scheme: str
    method: str
    runs_per_fold: int
    tasks_per_run: int
    base_seed: int
    folds: list[FoldScore] = field(default_factory=list)
    mean_over_folds: float = float("nan")

    def to_json_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "scheme": self.scheme,
            "method": self.method,
            "runs_per_fold": self.runs_per_fold,
            "tasks_per_run": self.tasks_per_run,
            "base_seed": self.base_seed,
            "folds": [
                {
                    "fold": f.fold,
                    "classes": list(f.classes),
                    "mean_miou": f.mean_miou,
                    "std_miou": f.std_miou,
                    "runs": [
                        {
                            "run_index": r.run_index,
                            "seed": r.seed,
                            "task_count": r.task_count,
                            "miou": r.miou,
                            "per_class_iou": {str(k): v for k, v in r.per_class_iou.items()},
                        }
                        for r in f.runs
                    ],
                }
                for f in self.folds
            ],
            "mean_over_folds": self.mean_over_folds,
        }

    def format_table(self) -> str:
        header = (f"dataset: {self.dataset}  scheme: {self.scheme}  method: {self.method}  "
                  f"runs: {self.runs_per_fold} x {self.tasks_per_run} tasks  "
                  f"seed: {self.base_seed}")
        names = [f"fold{f.fold}" for f in self.folds] + ["avg"]
        means = [f"{f.mean_miou:.4f}" for f in self.folds] + [f"{self.mean_over_folds:.4f}"]
        stds = [f"{f.std_miou:.4f}" for f in self.folds] + ["-"]
        width = max(len(s) for s in names + means + stds) + 2
        lines = [
            header,
            "".join(f"{'':>6}") + "".join(f"{n:>{width}}" for n in names),
            f"{'mIoU':>6}" + "".join(f"{m:>{width}}" for m in means),
            f"{'std':>6}" + "".join(f"{s:>{width}}" for s in stds),
        ]
        return "\n".join(lines)


def evaluate_fold(manifest: DatasetManifest, spec: FoldSpec, fold: int,
                  runs: int, tasks_per_run: int, base_seed: int,
                  make_predictor) -> FoldScore:
    """Run the repeated-sampling protocol on one fold.

    Each run r draws its own tasks with seed base_seed + r and scores
    them with the predictor; the fold score is the mean and population
    standard deviation of the per-run mIoUs.
    """
    classes = spec.folds[fold]
    predict = make_predictor()
    run_scores: list[RunScore] = []
    for r in range(runs):
        seed = base_seed + r
        rng = np.random.default_rng(seed)
        tasks = sample_test_tasks(manifest, classes, tasks_per_run, rng)
        acc = score_tasks(tasks, predict)
        run_scores.append(RunScore(
            run_index=r,
            seed=seed,
            task_count=len(tasks),
            per_class_iou=acc.per_class_iou(),
            miou=acc.miou(),
        ))
    mious = [r.miou for r in run_scores]
    mean = sum(mious) / len(mious)
    std = math.sqrt(sum((m - mean) ** 2 for m in mious) / len(mious))
    return FoldScore(fold=fold, classes=tuple(classes), runs=run_scores,
                     mean_miou=mean, std_miou=std)


def evaluate(manifest: DatasetManifest, spec: FoldSpec, folds, runs: int,
             tasks_per_run: int, base_seed: int, make_predictor,
             method: str) -> EvalReport:
    report = EvalReport(
        dataset=spec.dataset,
        scheme=spec.scheme,
        method=method,
        runs_per_fold=runs,
        tasks_per_run=tasks_per_run,
        base_seed=base_seed,
    )
    for fold in folds:
        report.folds.append(evaluate_fold(
            manifest, spec, fold, runs, tasks_per_run, base_seed, make_predictor))
    report.mean_over_folds = sum(f.mean_miou for f in report.folds) / len(report.folds)
    return report


# --------------------------------------------------------------------
# exporting tasks for external predictors


def export_tasks(manifest: DatasetManifest, spec: FoldSpec, fold: int,
                 task_count: int, seed: int, run_index: int, out_dir,
                 out_size: int) -> int:
    """Materialise one run's test tasks as an episode-pack directory.

    This is how an external model gets at the evaluation tasks without
    touching this package's internals: the same seed arithmetic used by
    ``evaluate`` (task seed = seed + run_index) reproduces the exact
    task sample, and each task is written like a training episode —
    support image + mask, query image + label — resized to out_size.
    The metadata records each query's native size so predictions can be
    scaled back before scoring. Returns the number of tasks written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed + run_index)
    tasks = sample_test_tasks(manifest, spec.folds[fold], task_count, rng)

    by_id = manifest.by_id()
    size = (out_size, out_size)
    entries = []
    for task in tasks:
        support_img = read_image(manifest.resolve(by_id[task.support_image_id].image_path))
        query_img = read_image(manifest.resolve(by_id[task.query_image_id].image_path))
        native_h, native_w = task.query_mask.shape
        label = np.zeros(task.query_mask.shape, dtype=np.uint8)
        label[task.query_mask] = 1
        if task.query_exclude is not None:
            label[task.query_exclude & ~task.query_mask] = GT_IGNORE_VALUE
        episode = Episode(
            episode_id=task.task_id,
            support_image=cv2.resize(support_img, size, interpolation=cv2.INTER_LINEAR),
            support_mask=cv2.resize(task.support_mask.astype(np.uint8), size,
                                    interpolation=cv2.INTER_NEAREST) > 0,
            query_image=cv2.resize(query_img, size, interpolation=cv2.INTER_LINEAR),
            query_label=cv2.resize(label, size, interpolation=cv2.INTER_NEAREST),
            meta={
                "task_id": task.task_id,
                "class_id": task.class_id,
                "support_image_id": task.support_image_id,
                "query_image_id": task.query_image_id,
                "query_native_size": [native_h, native_w],
            },
        )
        entries.append(write_episode(out_dir, episode))
    config_echo = {
        "kind": "eval-tasks",
        "dataset": spec.dataset,
        "scheme": spec.scheme,
        "fold": fold,
        "run_index": run_index,
        "seed": seed,
        "split": None,
        "aug": None,
    }
    write_pack_manifest(out_dir, out_size, seed, config_echo, entries)
    return len(entries)
