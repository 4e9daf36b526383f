"""Shared fixture builders and oracles for the test suite."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from segensemble import IGNORE, LabelMask, load_manifest, save_mask


def make_mask(rows) -> LabelMask:
    return LabelMask(np.array(rows, dtype=np.uint8))


def build_corpus(
    root: Path,
    class_names: list[str],
    components: list[str],
    images: list[dict],
) -> Path:
    """Write masks and a manifest under root; returns the manifest path.

    Each image dict: ``{"id": str, "gt": rows | None, "labels": set[int],
    "comps": {component: rows}}``.  Mask files land in per-source
    subdirectories as ``<id>.pgm``.
    """
    root.mkdir(parents=True, exist_ok=True)
    lines = [f"classes {len(class_names)}"]
    lines += [f"class {i} {name}" for i, name in enumerate(class_names)]
    lines += [f"component {comp}" for comp in components]
    for image in images:
        image_id = image["id"]
        if image.get("gt") is not None:
            (root / "gt").mkdir(exist_ok=True)
            save_mask(make_mask(image["gt"]), root / "gt" / f"{image_id}.pgm")
            gt_field = f"gt/{image_id}.pgm"
        else:
            gt_field = "-"
        labels = sorted(image.get("labels", ()))
        label_field = ",".join(str(c) for c in labels) if labels else "-"
        paths = []
        for comp in components:
            (root / comp).mkdir(exist_ok=True)
            save_mask(make_mask(image["comps"][comp]), root / comp / f"{image_id}.pgm")
            paths.append(f"{comp}/{image_id}.pgm")
        lines.append(
            f"image {image_id} gt={gt_field} labels={label_field} {' '.join(paths)}"
        )
    manifest_path = root / "manifest.txt"
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest_path


def load_corpus(root: Path, class_names, components, images):
    return load_manifest(build_corpus(root, class_names, components, images))


FIXTURES = Path(__file__).parent / "fixtures"


def iou_oracle(gt: np.ndarray, pred: np.ndarray, class_count: int) -> list[float]:
    """Brute-force per-pixel set counting; NaN where a class never occurs.

    Counts pixel coordinates one at a time, no vectorization, so it
    shares no code path with the library implementation.
    """
    out = []
    for cid in range(class_count):
        inter = 0
        union = 0
        for y in range(gt.shape[0]):
            for x in range(gt.shape[1]):
                g, p = int(gt[y, x]), int(pred[y, x])
                if g == IGNORE:
                    continue
                in_gt = g == cid
                in_pred = p == cid
                if in_gt and in_pred:
                    inter += 1
                if in_gt or in_pred:
                    union += 1
        out.append(inter / union if union else math.nan)
    return out
