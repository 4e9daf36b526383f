"""Synthetic corpus generation with controlled per-class degradation.

Ground truth is axis-aligned non-overlapping rectangles on background;
each component is the ground truth pushed through per-class degradation
operations (erode/dilate/drop/swap).  Everything is a pure function of
the config, including its 64-bit seed.

Randomness is counter-based so corpora are reproducible and images are
independent: all draws for image ``i`` come from a numpy Philox
generator keyed by ``SeedSequence(seed, spawn_key=(stream, i))``, where
stream 0 is ground-truth placement and stream ``1 + j`` is component
``j``'s degradation (j = position in the component list).  This keying
is part of the on-disk contract: changing it changes every generated
corpus, so it must stay fixed.

Config files use the same line-oriented style as manifests::

    images 50
    size 64 64
    classes 6
    shapes 3 5
    seed 20240811
    component alpha
    degrade alpha * drop 0.6      # class selector: '*' or comma-list of ids
    degrade alpha 1,2 none        # later lines override earlier ones
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DataError, UsageError
from .maskio import BACKGROUND, IGNORE, DatasetManifest, LabelMask, load_manifest
from .util import atomic_write_text, map_ordered

OP_NONE = "none"
OP_ERODE = "erode"
OP_DILATE = "dilate"
OP_DROP = "drop"
OP_SWAP = "swap"
_MORPH_OPS = (OP_ERODE, OP_DILATE)
_PROB_OPS = (OP_DROP, OP_SWAP)


@dataclass(frozen=True)
class Operation:
    """One degradation: none, erode/dilate by radius k, or drop/swap with p."""

    kind: str
    k: int = 0
    p: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == OP_NONE:
            pass
        elif self.kind in _MORPH_OPS:
            if self.k < 1:
                raise UsageError(f"{self.kind} needs a radius >= 1, got {self.k}")
        elif self.kind in _PROB_OPS:
            if not 0.0 <= self.p <= 1.0:
                raise UsageError(f"{self.kind} needs p in [0, 1], got {self.p}")
        else:
            raise UsageError(f"unknown degradation '{self.kind}'")


NO_OP = Operation(OP_NONE)


@dataclass(frozen=True)
class DegradationProfile:
    """Per-class operations for one component; unlisted classes get none."""

    operations: dict[int, Operation] = field(default_factory=dict)

    def for_class(self, class_id: int) -> Operation:
        return self.operations.get(class_id, NO_OP)


@dataclass(frozen=True)
class SynthConfig:
    image_count: int
    width: int
    height: int
    class_count: int
    shapes_min: int
    shapes_max: int
    seed: int
    components: dict[str, DegradationProfile]

    def __post_init__(self) -> None:
        if self.image_count < 1:
            raise UsageError(f"image count must be >= 1, got {self.image_count}")
        if self.width < 8 or self.height < 8:
            raise UsageError(
                f"dimensions must be at least 8x8, got {self.width}x{self.height}"
            )
        if self.class_count < 2:
            raise UsageError(f"class count must be >= 2, got {self.class_count}")
        if not 0 <= self.shapes_min <= self.shapes_max:
            raise UsageError(
                f"invalid shapes range {self.shapes_min}..{self.shapes_max}"
            )
        if not self.components:
            raise UsageError("config needs at least one component")


def _rng(seed: int, stream: int, image_index: int) -> np.random.Generator:
    key = np.random.SeedSequence(seed, spawn_key=(stream, image_index))
    return np.random.Generator(np.random.Philox(key))


@dataclass(frozen=True)
class SynthImage:
    image_id: str
    mask: LabelMask
    labels: frozenset[int]


_PLACEMENT_ATTEMPTS = 100


def generate_ground_truth_image(config: SynthConfig, index: int) -> SynthImage:
    """Ground truth for one image: non-overlapping class rectangles."""
    rng = _rng(config.seed, 0, index)
    grid = np.zeros((config.height, config.width), dtype=np.uint8)
    max_side = max(3, min(config.width, config.height) // 3)
    count = int(rng.integers(config.shapes_min, config.shapes_max + 1))
    labels: set[int] = set()
    for _ in range(count):
        cid = int(rng.integers(1, config.class_count))
        for attempt in range(_PLACEMENT_ATTEMPTS):
            w = int(rng.integers(3, max_side + 1))
            h = int(rng.integers(3, max_side + 1))
            x = int(rng.integers(0, config.width - w + 1))
            y = int(rng.integers(0, config.height - h + 1))
            region = grid[y : y + h, x : x + w]
            if not region.any():
                region[:] = cid
                labels.add(cid)
                break
        else:
            raise DataError(
                f"image {index}: could not place a {max_side}x{max_side}-bounded "
                f"rectangle after {_PLACEMENT_ATTEMPTS} attempts; "
                "reduce shape count or enlarge the image"
            )
    return SynthImage(f"img_{index:04d}", LabelMask(grid), frozenset(labels))


def generate_ground_truth(config: SynthConfig) -> list[SynthImage]:
    return [generate_ground_truth_image(config, i) for i in range(config.image_count)]


def degrade(
    mask: LabelMask, profile: DegradationProfile, rng: np.random.Generator
) -> LabelMask:
    """Apply a component's per-class degradations to a ground-truth mask.

    Classes are processed in ascending id order: on the rare overlap
    created by dilation, the higher class id wins.  IGNORE pixels pass
    through untouched.  The rng draw pattern is fixed (one p-draw per
    swap class, one uniform per pixel for drop), so results depend only
    on the generator's seed.
    """
    data = mask.data
    out = np.zeros_like(data)
    present = sorted(int(c) for c in np.unique(data) if c not in (BACKGROUND, IGNORE))
    for cid in present:
        region = data == cid
        op = profile.for_class(cid)
        if op.kind == OP_NONE:
            keep = region
        elif op.kind == OP_ERODE:
            size = 2 * op.k + 1
            keep = ndimage.binary_erosion(
                region, structure=np.ones((size, size), dtype=bool), border_value=1
            )
        elif op.kind == OP_DILATE:
            size = 2 * op.k + 1
            keep = ndimage.binary_dilation(
                region, structure=np.ones((size, size), dtype=bool), border_value=0
            )
        elif op.kind == OP_DROP:
            u = rng.random(int(region.sum()))
            keep = np.zeros_like(region)
            keep[region] = u >= op.p
        else:  # OP_SWAP: one draw decides the whole class
            keep = np.zeros_like(region) if rng.random() < op.p else region
        out[keep] = cid
    out[data == IGNORE] = IGNORE
    return LabelMask(out)


def generate_corpus(
    config: SynthConfig, out_dir: Path | str, threads: int = 1
) -> DatasetManifest:
    """Write ground truth, degraded components and a manifest under out_dir.

    Layout: ``gt/<id>.pgm``, ``<component>/<id>.pgm``, ``manifest.txt``.
    The returned manifest is re-read from disk, so it is guaranteed to
    parse and to bind exactly the files written.
    """
    from .maskio import save_mask

    out_dir = Path(out_dir)
    (out_dir / "gt").mkdir(parents=True, exist_ok=True)
    for comp in config.components:
        (out_dir / comp).mkdir(parents=True, exist_ok=True)

    def work(index: int) -> tuple[str, frozenset[int]]:
        image = generate_ground_truth_image(config, index)
        save_mask(image.mask, out_dir / "gt" / f"{image.image_id}.pgm")
        for j, (comp, profile) in enumerate(config.components.items()):
            degraded = degrade(image.mask, profile, _rng(config.seed, 1 + j, index))
            save_mask(degraded, out_dir / comp / f"{image.image_id}.pgm")
        return image.image_id, image.labels

    rows = map_ordered(work, range(config.image_count), threads)

    lines = [f"classes {config.class_count}", "class 0 background"]
    lines += [f"class {c} class_{c}" for c in range(1, config.class_count)]
    lines += [f"component {comp}" for comp in config.components]
    for image_id, labels in rows:
        label_field = ",".join(str(c) for c in sorted(labels)) if labels else "-"
        comp_paths = " ".join(f"{comp}/{image_id}.pgm" for comp in config.components)
        lines.append(
            f"image {image_id} gt=gt/{image_id}.pgm labels={label_field} {comp_paths}"
        )
    atomic_write_text(out_dir / "manifest.txt", "\n".join(lines) + "\n")
    return load_manifest(out_dir / "manifest.txt")


def _parse_operation(fields: list[str], where: str) -> Operation:
    kind = fields[0]
    if kind == OP_NONE:
        if len(fields) != 1:
            raise UsageError(f"{where}: 'none' takes no argument")
        return NO_OP
    if len(fields) != 2:
        raise UsageError(f"{where}: '{kind}' needs exactly one argument")
    if kind in _MORPH_OPS:
        try:
            return Operation(kind, k=int(fields[1]))
        except ValueError:
            raise UsageError(f"{where}: invalid radius '{fields[1]}'") from None
    if kind in _PROB_OPS:
        try:
            return Operation(kind, p=float(fields[1]))
        except ValueError:
            raise UsageError(f"{where}: invalid probability '{fields[1]}'") from None
    raise UsageError(f"{where}: unknown degradation '{kind}'")


def load_synth_config(path: Path | str) -> SynthConfig:
    """Parse a synth config file (grammar in the module docstring)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    settings: dict[str, int] = {}
    size: tuple[int, int] | None = None
    shapes: tuple[int, int] | None = None
    components: dict[str, dict[int, Operation]] = {}
    pending: list[tuple[int, str, str, Operation]] = []

    def fail(lineno: int, msg: str) -> None:
        raise UsageError(f"{path}:{lineno}: {msg}")

    def ints(lineno: int, fields: list[str], n: int, what: str) -> list[int]:
        if len(fields) != n:
            fail(lineno, f"expected: {what}")
        try:
            return [int(f) for f in fields]
        except ValueError:
            fail(lineno, f"non-integer value in '{' '.join(fields)}'")
        raise AssertionError  # unreachable

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind = fields[0]
        if kind in ("images", "classes", "seed"):
            if kind in settings:
                fail(lineno, f"duplicate '{kind}' directive")
            settings[kind] = ints(lineno, fields[1:], 1, f"{kind} <value>")[0]
        elif kind == "size":
            if size is not None:
                fail(lineno, "duplicate 'size' directive")
            w, h = ints(lineno, fields[1:], 2, "size <width> <height>")
            size = (w, h)
        elif kind == "shapes":
            if shapes is not None:
                fail(lineno, "duplicate 'shapes' directive")
            lo, hi = ints(lineno, fields[1:], 2, "shapes <min> <max>")
            shapes = (lo, hi)
        elif kind == "component":
            if len(fields) != 2:
                fail(lineno, "expected: component <name>")
            if fields[1] in components:
                fail(lineno, f"duplicate component '{fields[1]}'")
            components[fields[1]] = {}
        elif kind == "degrade":
            if len(fields) < 4:
                fail(lineno, "expected: degrade <component> <class|*> <op> [value]")
            op = _parse_operation(fields[3:], f"{path}:{lineno}")
            pending.append((lineno, fields[1], fields[2], op))
        else:
            fail(lineno, f"unknown directive '{kind}'")

    for key in ("images", "classes", "seed"):
        if key not in settings:
            raise UsageError(f"{path}: missing '{key}' directive")
    if size is None:
        raise UsageError(f"{path}: missing 'size' directive")
    if shapes is None:
        raise UsageError(f"{path}: missing 'shapes' directive")
    if not components:
        raise UsageError(f"{path}: missing 'component' directive")

    class_count = settings["classes"]
    for lineno, comp, selector, op in pending:
        if comp not in components:
            fail(lineno, f"degrade names unknown component '{comp}'")
        if selector == "*":
            targets = list(range(1, class_count))
        else:
            targets = []
            for token in selector.split(","):
                try:
                    cid = int(token)
                except ValueError:
                    fail(lineno, f"invalid class id '{token}'")
                if not 0 < cid < class_count:
                    fail(lineno, f"class id {cid} out of range [1, {class_count})")
                targets.append(cid)
        for cid in targets:
            components[comp][cid] = op

    return SynthConfig(
        image_count=settings["images"],
        width=size[0],
        height=size[1],
        class_count=class_count,
        shapes_min=shapes[0],
        shapes_max=shapes[1],
        seed=settings["seed"],
        components={
            name: DegradationProfile(ops) for name, ops in components.items()
        },
    )
