"""Human-readable tables and the pipeline cost model.

Costs are abstract operation counts: the caller supplies unit costs for
each training/inference primitive and the model multiplies them through
the four pipeline steps.  Rendering is pure -- identical inputs give
identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import UsageError
from .ensemble import SelectionMap
from .metrics import ClassScoreTable

ENSEMBLE_ROW = "ensemble"


@dataclass(frozen=True)
class CostParams:
    """Abstract unit costs for the cost model; all non-negative integers.

    ``components`` (N) counts pseudo-label generators trained in step 1,
    ``refinements`` (M) counts mask refiners applied per component in
    step 2, ``images`` (I) and ``classes`` (C) size the scoring/merge
    step 3, and the ``seg_*`` fields describe the final segmentation
    network of step 4.
    """

    images: int
    components: int
    classes: int
    refinements: int = 0
    comp_train: int = 1
    comp_infer: int = 1
    comp_epochs: int = 1
    ref_train: int = 1
    ref_infer: int = 1
    ref_epochs: int = 1
    seg_train: int = 1
    seg_infer: int = 1
    seg_epochs: int = 1

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if value < 0:
                raise UsageError(f"cost parameter '{name}' must be >= 0, got {value}")


@dataclass(frozen=True)
class CostReport:
    step1: int
    step2: int
    step3: int
    step4: int
    deployment: int

    def to_text(self) -> str:
        rows = [
            ("step 1 (component training + inference)", self.step1),
            ("step 2 (refinement training + inference)", self.step2),
            ("step 3 (scoring + merge)", self.step3),
            ("step 4 (segmentation training)", self.step4),
            ("deployment (segmentation inference)", self.deployment),
        ]
        width = max(len(label) for label, _ in rows)
        lines = ["abstract operation counts"]
        lines += [f"  {label.ljust(width)}  {value}" for label, value in rows]
        return "\n".join(lines) + "\n"


def cost_estimate(params: CostParams) -> CostReport:
    """Operation counts per pipeline step.

    With zero components there is nothing to train, refine, score or
    merge, so steps 1-3 are all zero; step 4 and deployment depend only
    on the segmentation network and the image count.
    """
    p = params
    if p.components == 0:
        step1 = step2 = step3 = 0
    else:
        step1 = p.components * p.comp_train * p.comp_infer * p.comp_epochs * 2 * p.images
        step2 = (
            p.refinements
            * p.ref_train
            * p.ref_infer
            * p.ref_epochs
            * 2
            * p.images
            * p.components
        )
        step3 = p.images * p.components * p.classes + p.images * p.classes
    step4 = p.seg_train * p.seg_epochs * p.images
    deployment = p.seg_infer * p.images
    return CostReport(step1, step2, step3, step4, deployment)


def _format_grid(grid: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in grid) for i in range(len(grid[0]))]
    lines = []
    for row in grid:
        cells = [row[0].ljust(widths[0])]
        cells += [row[i].rjust(widths[i]) for i in range(1, len(row))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def render_score_table(table: ClassScoreTable, selection: SelectionMap) -> str:
    """Aligned text table: per-class winners marked `*`, ensemble maxima `**`.

    For each class column the component chosen by ``selection`` gets a
    ``*`` (background and mIoU columns fall back to the best component
    value).  A row named ``ensemble`` gets ``**`` on every column where
    it meets or beats all component rows.
    """
    if not table.rows:
        raise UsageError("cannot render an empty score table")
    class_count = len(table.class_names)
    names = [
        name if name else str(cid) for cid, name in enumerate(table.class_names)
    ]
    columns = ["bkg"] + names[1:] + ["mIoU"]

    def value(row: tuple, col: int) -> float:
        _name, _mode, scores = row
        return scores.mean() if col == class_count else float(scores.iou[col])

    component_rows = [r for r in table.rows if r[0] != ENSEMBLE_ROW]
    ensemble_rows = [r for r in table.rows if r[0] == ENSEMBLE_ROW]
    if not component_rows:
        raise UsageError("score table holds no component rows")

    def best_component(col: int) -> str | None:
        best_name, best = None, -math.inf
        for name, _mode, scores in component_rows:
            v = value((name, _mode, scores), col)
            if not math.isnan(v) and v > best:
                best_name, best = name, v
        return best_name

    winners: dict[int, str | None] = {}
    for col in range(class_count + 1):
        if 1 <= col < class_count and col in selection.choices:
            chosen = selection.choices[col]
            if all(name != chosen for name, _m, _s in component_rows):
                raise UsageError(
                    f"selection for class {col} names component '{chosen}' "
                    "which has no score row"
                )
            winners[col] = chosen
        else:
            winners[col] = best_component(col)

    grid = [["component", "mode"] + columns]
    for name, mode, scores in table.rows:
        cells = [name, mode]
        for col in range(class_count + 1):
            v = value((name, mode, scores), col)
            if math.isnan(v):
                cells.append("-")
                continue
            text = f"{v:.4f}"
            if name != ENSEMBLE_ROW and name == winners[col]:
                text += "*"
            elif name == ENSEMBLE_ROW:
                comp_values = [
                    value(r, col)
                    for r in component_rows
                    if not math.isnan(value(r, col))
                ]
                if not comp_values or v >= max(comp_values):
                    text += "**"
            cells.append(text)
        grid.append(cells)
    return _format_grid(grid)


def render_checkmark_table(selection: SelectionMap, components: list[str]) -> str:
    """One row per class, one `X` per row under the winning component."""
    if not components:
        raise UsageError("cannot render a checkmark table with no components")
    unknown = sorted(set(selection.choices.values()) - set(components))
    if unknown:
        raise UsageError(f"selection references unknown component(s): {', '.join(unknown)}")
    grid = [["class"] + list(components)]
    for cid in selection.classes:
        label = selection.class_names[cid] or str(cid)
        row = [label]
        row += ["X" if selection.choices[cid] == comp else "-" for comp in components]
        grid.append(row)
    return _format_grid(grid)
