"""Best-per-class selection and class-wise merging of pseudo-label sets.

The pipeline: score every component per class, pick the best component
for each foreground class (``select_best``), then rebuild each image by
taking class c's pixels from the component that won class c
(``merge_classwise``).  Background is never selected -- it is whatever
no foreground slice claims.  ``merge_naive`` is the blunt baseline that
copies one whole mask per image instead of merging slices.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, UsageError
from .maskio import (
    BACKGROUND,
    IGNORE,
    DatasetManifest,
    LabelMask,
    load_mask,
)
from .metrics import (
    MODE_ACCUMULATED,
    ClassScores,
    ClassScoreTable,
    ConfusionMatrix,
)
from .util import atomic_write_text, map_ordered

_SELECTION_HEADER = ["class_id", "class_name", "component", "score"]


@dataclass(frozen=True)
class SelectionMap:
    """Winning component and its score for every foreground class.

    Background (class 0) never appears; the same component may win any
    number of classes.
    """

    choices: dict[int, str]
    scores: dict[int, float]
    class_names: dict[int, str]

    def __post_init__(self) -> None:
        if BACKGROUND in self.choices:
            raise UsageError("selection must not cover the background class")
        if set(self.choices) != set(self.scores) or set(self.choices) != set(
            self.class_names
        ):
            raise UsageError("selection fields must cover the same classes")

    @property
    def classes(self) -> list[int]:
        return sorted(self.choices)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_SELECTION_HEADER)
        for cid in self.classes:
            writer.writerow(
                [cid, self.class_names[cid], self.choices[cid], f"{self.scores[cid]:.4f}"]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> SelectionMap:
        reader = csv.reader(io.StringIO(text))
        rows = [r for r in reader if r]
        if not rows:
            raise UsageError("selection table is empty")
        if rows[0] != _SELECTION_HEADER:
            raise UsageError(
                f"selection header must be {','.join(_SELECTION_HEADER)}"
            )
        choices: dict[int, str] = {}
        scores: dict[int, float] = {}
        names: dict[int, str] = {}
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 4:
                raise UsageError(f"selection row {lineno}: expected 4 fields")
            try:
                cid = int(row[0])
                score = float(row[3])
            except ValueError as exc:
                raise UsageError(f"selection row {lineno}: {exc}") from None
            if cid in choices:
                raise UsageError(f"selection row {lineno}: duplicate class {cid}")
            choices[cid] = row[2]
            scores[cid] = score
            names[cid] = row[1]
        return cls(choices, scores, names)

    def save(self, path: Path | str) -> None:
        atomic_write_text(Path(path), self.to_csv())

    @classmethod
    def load(cls, path: Path | str) -> SelectionMap:
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


def select_best(table: ClassScoreTable) -> SelectionMap:
    """Pick, per foreground class, the component with the highest IoU.

    Ties go to the component listed first in the table.  Background is
    excluded.  A class with no defined score in any row is an error.
    """
    if not table.rows:
        raise UsageError("cannot select from an empty score table")
    class_count = len(table.class_names)
    choices: dict[int, str] = {}
    best_scores: dict[int, float] = {}
    names: dict[int, str] = {}
    for cid in range(1, class_count):
        best_name: str | None = None
        best = -math.inf
        for name, _mode, scores in table.rows:
            value = scores.iou[cid]
            if not math.isnan(value) and value > best:
                best = value
                best_name = name
        if best_name is None:
            raise DataError(
                f"class {cid} ('{table.class_names[cid]}') has no defined score "
                "in any component"
            )
        choices[cid] = best_name
        best_scores[cid] = float(best)
        names[cid] = table.class_names[cid]
    return SelectionMap(choices, best_scores, names)


@dataclass(frozen=True)
class ClassRanking:
    """Foreground classes ordered by how many images carry each label."""

    order: list[int]
    counts: dict[int, int]


def rank_classes_by_instances(manifest: DatasetManifest) -> ClassRanking:
    """Rank foreground classes by descending image-label count, ties by id."""
    counts = {cid: 0 for cid in manifest.foreground_classes}
    for rec in manifest.images:
        for cid in rec.labels:
            counts[cid] += 1
    order = sorted(counts, key=lambda cid: (-counts[cid], cid))
    return ClassRanking(order, counts)


def _check_dimensions(masks: dict[str, LabelMask]) -> tuple[int, int]:
    shapes = {name: m.data.shape for name, m in masks.items()}
    unique = set(shapes.values())
    if len(unique) != 1:
        detail = ", ".join(f"{n}={s[1]}x{s[0]}" for n, s in sorted(shapes.items()))
        raise DataError(f"component masks disagree on dimensions: {detail}")
    return next(iter(unique))


def merge_classwise(
    per_component_masks: dict[str, LabelMask],
    selection: SelectionMap,
    class_scores: dict[int, float] | None = None,
    image_labels: frozenset[int] | set[int] | None = None,
) -> LabelMask:
    """Merge per-class slices from each class's winning component.

    A pixel becomes class c when the component selected for c predicted
    c there.  Unclaimed pixels become background.  When several classes
    claim one pixel, the class whose winner scored the higher IoU takes
    it (ties: lower class id).  An IGNORE pixel in a slice wins only if
    that slice holds the highest claim priority at the pixel.  With
    ``image_labels`` given, only those classes contribute slices.
    """
    if class_scores is None:
        class_scores = selection.scores
    active = selection.classes
    if image_labels is not None:
        active = [cid for cid in active if cid in image_labels]
    for cid in active:
        if selection.choices[cid] not in per_component_masks:
            raise DataError(
                f"selection for class {cid} names unknown component "
                f"'{selection.choices[cid]}'"
            )
    if not per_component_masks:
        raise DataError("no component masks to merge")
    shape = _check_dimensions(per_component_masks)

    canvas = np.full(shape, BACKGROUND, dtype=np.uint8)
    # Paint in ascending priority so the highest-priority claim lands last.
    # Priority: higher winning score first, then lower class id.
    for cid in sorted(active, key=lambda c: (class_scores[c], -c)):
        data = per_component_masks[selection.choices[cid]].data
        claimed = data == cid
        canvas[claimed] = cid
        canvas[data == IGNORE] = IGNORE
    return LabelMask(canvas)


def merge_naive(
    per_component_masks: dict[str, LabelMask],
    selection: SelectionMap,
    ranking: ClassRanking,
    image_labels: frozenset[int] | set[int],
) -> LabelMask:
    """Copy the whole mask of the winner of the top-ranked present class."""
    if not image_labels:
        raise DataError("naive merge needs at least one image-level label")
    _check_dimensions(per_component_masks)
    top = next(cid for cid in ranking.order if cid in image_labels)
    winner = selection.choices.get(top)
    if winner is None:
        raise DataError(f"selection does not cover class {top}")
    if winner not in per_component_masks:
        raise DataError(f"selection for class {top} names unknown component '{winner}'")
    return per_component_masks[winner]


VARIANT_CLASSWISE = "classwise"
VARIANT_NAIVE = "naive"


def run_ensemble(
    manifest: DatasetManifest,
    selection: SelectionMap,
    variant: str = VARIANT_CLASSWISE,
    out_dir: Path | str = ".",
    mask_format: str = "pgm",
    threads: int = 1,
) -> ClassScores | None:
    """Write one ensemble mask per image; score the result if GT allows.

    Masks land in ``out_dir`` as ``<image_id>.pgm`` (or ``.png``).  When
    every image has ground truth, the ensemble is scored (accumulated
    mode) and written to ``out_dir/summary.csv``; the scores are also
    returned.  Output is byte-identical for any thread count.
    """
    from .maskio import save_mask  # local import to keep module tops light

    if variant not in (VARIANT_CLASSWISE, VARIANT_NAIVE):
        raise UsageError(f"unknown ensemble variant '{variant}'")
    if mask_format not in ("pgm", "png"):
        raise UsageError(f"unknown mask format '{mask_format}'")
    unknown = {
        comp for comp in selection.choices.values() if comp not in manifest.components
    }
    if unknown:
        raise DataError(
            f"selection references unknown component(s): {', '.join(sorted(unknown))}"
        )
    missing = [
        cid for cid in manifest.foreground_classes if cid not in selection.choices
    ]
    if missing and variant == VARIANT_CLASSWISE:
        raise DataError(f"selection does not cover foreground class(es) {missing}")
    if not manifest.images:
        raise DataError("cannot run the ensemble on an empty corpus")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ranking = rank_classes_by_instances(manifest) if variant == VARIANT_NAIVE else None

    def work(rec_index: int) -> tuple[LabelMask | None, ConfusionMatrix | None]:
        rec = manifest.images[rec_index]
        masks = {
            comp: load_mask(path, manifest.class_count)
            for comp, path in rec.component_masks.items()
        }
        labels = rec.labels if rec.labels else None
        try:
            if variant == VARIANT_CLASSWISE:
                merged = merge_classwise(masks, selection, image_labels=labels)
            else:
                if not rec.labels:
                    raise DataError("naive merge needs image-level labels")
                merged = merge_naive(masks, selection, ranking, rec.labels)
        except DataError as exc:
            raise DataError(f"image '{rec.image_id}': {exc}") from None
        save_mask(merged, out_dir / f"{rec.image_id}.{mask_format}")
        if rec.ground_truth is None:
            return merged, None
        gt = load_mask(rec.ground_truth, manifest.class_count)
        cm = ConfusionMatrix(manifest.class_count)
        cm.accumulate(gt, merged)
        return merged, cm

    results = map_ordered(work, range(len(manifest.images)), threads)

    matrices = [cm for _mask, cm in results]
    if any(cm is None for cm in matrices):
        return None
    total = ConfusionMatrix(manifest.class_count)
    for cm in matrices:
        total = total.merge(cm)
    scores = ClassScores(total.per_class_iou())
    table = ClassScoreTable(list(manifest.class_names), [])
    table.append("ensemble", MODE_ACCUMULATED, scores)
    table.save(out_dir / "summary.csv")
    return scores
