"""Per-class IoU scoring of pseudo-label sets against ground truth.

Two scoring modes are supported:

* ``accumulated`` -- one confusion matrix over the whole corpus, IoU per
  class from the pooled counts.  This is the conventional segmentation
  benchmark number.
* ``per-image-mean`` -- IoU per class computed on each image separately,
  then averaged over the images where that class's IoU is defined (i.e.
  the class occurs in the ground truth or the prediction).  Images where
  a class is absent from both sides are excluded from that class's mean
  rather than counted as a perfect match.

Both modes skip pixels whose ground truth is IGNORE.  Predicted IGNORE
pixels on labelled ground truth count against the ground-truth class
(they are neither a hit for it nor for any other class).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, UsageError
from .maskio import IGNORE, DatasetManifest, LabelMask, load_mask
from .util import atomic_write_text, map_ordered

MODE_ACCUMULATED = "accumulated"
MODE_PER_IMAGE_MEAN = "per-image-mean"
MODES = (MODE_ACCUMULATED, MODE_PER_IMAGE_MEAN)


class ConfusionMatrix:
    """Pixel counts per (ground truth class, predicted class) pair.

    The grid is C x (C+1) int64: column C collects predictions that were
    IGNORE while the ground truth was a real class, so those pixels still
    enlarge the ground-truth class's union.  Merging matrices is an
    element-wise sum, so accumulation order never changes the result.
    """

    def __init__(self, class_count: int, counts: np.ndarray | None = None):
        if class_count < 1:
            raise UsageError(f"class count must be >= 1, got {class_count}")
        self.class_count = class_count
        if counts is None:
            counts = np.zeros((class_count, class_count + 1), dtype=np.int64)
        else:
            counts = np.asarray(counts, dtype=np.int64)
            if counts.shape != (class_count, class_count + 1):
                raise UsageError(
                    f"counts must have shape {(class_count, class_count + 1)}, "
                    f"got {counts.shape}"
                )
        self.counts = counts

    def accumulate(self, ground_truth: LabelMask, prediction: LabelMask) -> None:
        if ground_truth.data.shape != prediction.data.shape:
            raise DataError(
                f"shape mismatch: ground truth {ground_truth.data.shape} "
                f"vs prediction {prediction.data.shape}"
            )
        C = self.class_count
        gt = ground_truth.data.ravel().astype(np.int64)
        pred = prediction.data.ravel().astype(np.int64)
        keep = gt != IGNORE
        gt = gt[keep]
        pred = pred[keep]
        pred = np.where(pred == IGNORE, C, pred)
        flat = np.bincount(gt * (C + 1) + pred, minlength=C * (C + 1))
        self.counts += flat.reshape(C, C + 1)

    def merge(self, other: ConfusionMatrix) -> ConfusionMatrix:
        if other.class_count != self.class_count:
            raise UsageError("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.class_count, self.counts + other.counts)

    def per_class_iou(self) -> np.ndarray:
        """IoU per class as float64; NaN where the class never occurs."""
        diag = np.diagonal(self.counts[:, : self.class_count]).astype(np.float64)
        gt_total = self.counts.sum(axis=1).astype(np.float64)
        pred_total = self.counts[:, : self.class_count].sum(axis=0).astype(np.float64)
        union = gt_total + pred_total - diag
        iou = np.full(self.class_count, np.nan)
        defined = union > 0
        iou[defined] = diag[defined] / union[defined]
        return iou


@dataclass(frozen=True)
class ClassScores:
    """Per-class IoU vector for one scored prediction source.

    ``iou[c]`` is NaN when class c was undefined under the scoring mode
    (absent from ground truth and predictions everywhere).
    """

    iou: np.ndarray

    @property
    def class_count(self) -> int:
        return len(self.iou)

    def defined(self, class_id: int) -> bool:
        return not math.isnan(self.iou[class_id])

    def mean(self, include_background: bool = True) -> float:
        values = self.iou if include_background else self.iou[1:]
        values = values[~np.isnan(values)]
        if len(values) == 0:
            raise DataError("mean IoU undefined: no class has a defined score")
        return float(values.mean())


def _image_matrices(
    manifest: DatasetManifest,
    components: list[str],
    threads: int,
) -> list[dict[str, ConfusionMatrix]]:
    """One confusion matrix per (image, component), in manifest order."""

    def work(index: int) -> dict[str, ConfusionMatrix]:
        rec = manifest.images[index]
        if rec.ground_truth is None:
            raise DataError(f"image '{rec.image_id}': scoring requires ground truth")
        gt = load_mask(rec.ground_truth, manifest.class_count)
        out: dict[str, ConfusionMatrix] = {}
        for comp in components:
            pred = load_mask(rec.component_masks[comp], manifest.class_count)
            cm = ConfusionMatrix(manifest.class_count)
            try:
                cm.accumulate(gt, pred)
            except DataError as exc:
                raise DataError(f"image '{rec.image_id}': {exc}") from None
            out[comp] = cm
        return out

    return map_ordered(work, range(len(manifest.images)), threads)


def score_components(
    manifest: DatasetManifest,
    mode: str = MODE_ACCUMULATED,
    threads: int = 1,
    components: list[str] | None = None,
) -> dict[str, ClassScores]:
    """Score components against ground truth; returns name -> ClassScores.

    All images are read once regardless of how many components are being
    scored.  With ``threads > 1`` images are processed concurrently but
    results are reduced in manifest order, so output is identical for any
    thread count.
    """
    if mode not in MODES:
        raise UsageError(f"unknown scoring mode '{mode}'")
    if components is None:
        components = list(manifest.components)
    else:
        unknown = [c for c in components if c not in manifest.components]
        if unknown:
            raise UsageError(f"unknown component(s): {', '.join(unknown)}")
    if not manifest.images:
        raise DataError("cannot score an empty corpus")

    per_image = _image_matrices(manifest, components, threads)

    scores: dict[str, ClassScores] = {}
    C = manifest.class_count
    if mode == MODE_ACCUMULATED:
        for comp in components:
            total = ConfusionMatrix(C)
            for mats in per_image:
                total = total.merge(mats[comp])
            scores[comp] = ClassScores(total.per_class_iou())
    else:
        for comp in components:
            sums = np.zeros(C)
            counts = np.zeros(C, dtype=np.int64)
            for mats in per_image:
                iou = mats[comp].per_class_iou()
                defined = ~np.isnan(iou)
                sums[defined] += iou[defined]
                counts[defined] += 1
            iou = np.full(C, np.nan)
            nonzero = counts > 0
            iou[nonzero] = sums[nonzero] / counts[nonzero]
            scores[comp] = ClassScores(iou)
    return scores


def evaluate_component(
    manifest: DatasetManifest,
    component: str,
    mode: str = MODE_ACCUMULATED,
    threads: int = 1,
) -> ClassScores:
    return score_components(manifest, mode, threads, [component])[component]


_FIXED_COLUMNS = ("component", "mode")


@dataclass
class ClassScoreTable:
    """Tabular per-class scores for several scored sources, CSV round-trippable.

    CSV layout: ``component,mode,bkg,<foreground class names...>,mIoU``
    with scores as 4-decimal fractions and undefined scores as empty
    fields.  The background column is always labelled ``bkg``; the mIoU
    column is the mean over defined classes including background.
    """

    class_names: list[str]
    rows: list[tuple[str, str, ClassScores]]

    def append(self, name: str, mode: str, scores: ClassScores) -> None:
        if scores.class_count != len(self.class_names):
            raise UsageError(
                f"row '{name}' has {scores.class_count} classes, "
                f"table has {len(self.class_names)}"
            )
        self.rows.append((name, mode, scores))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            list(_FIXED_COLUMNS) + ["bkg"] + self.class_names[1:] + ["mIoU"]
        )
        for name, mode, scores in self.rows:
            cells = [
                "" if math.isnan(v) else f"{v:.4f}" for v in scores.iou
            ]
            writer.writerow([name, mode] + cells + [f"{scores.mean():.4f}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> ClassScoreTable:
        reader = csv.reader(io.StringIO(text))
        rows = [r for r in reader if r]
        if not rows:
            raise UsageError("score table is empty")
        header = rows[0]
        if (
            len(header) < len(_FIXED_COLUMNS) + 2
            or tuple(header[:2]) != _FIXED_COLUMNS
            or header[2] != "bkg"
            or header[-1] != "mIoU"
        ):
            raise UsageError(
                "score table header must be component,mode,bkg,<class names...>,mIoU"
            )
        class_names = header[2:-1]
        table = cls(class_names, [])
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != len(header):
                raise UsageError(
                    f"score table row {lineno}: expected {len(header)} fields, "
                    f"got {len(row)}"
                )
            name, mode = row[0], row[1]
            try:
                iou = np.array(
                    [math.nan if cell == "" else float(cell) for cell in row[2:-1]]
                )
            except ValueError as exc:
                raise UsageError(f"score table row {lineno}: {exc}") from None
            table.rows.append((name, mode, ClassScores(iou)))
        return table

    def save(self, path: Path | str) -> None:
        atomic_write_text(Path(path), self.to_csv())

    @classmethod
    def load(cls, path: Path | str) -> ClassScoreTable:
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


def build_score_table(
    manifest: DatasetManifest,
    mode: str = MODE_ACCUMULATED,
    threads: int = 1,
) -> ClassScoreTable:
    """Score every component in the manifest and lay the results out as a table."""
    scores = score_components(manifest, mode, threads)
    table = ClassScoreTable(list(manifest.class_names), [])
    for comp in manifest.components:
        table.append(comp, mode, scores[comp])
    return table
