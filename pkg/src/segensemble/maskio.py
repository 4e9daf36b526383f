"""Reading, writing and validation of class-indexed label masks.

A mask is a 2-D uint8 grid where each pixel holds a class index in
``[0, class_count)`` or the reserved void value :data:`IGNORE` (255).
Void pixels are excluded from every metric.  Two on-disk encodings are
supported:

* binary PGM (``P5``, maxval <= 255) -- the canonical format, trivially
  hand-writable for fixtures;
* 8-bit single-channel PNG, either grayscale or palette-indexed (palette
  indices are the class indices).

A corpus is described by a line-oriented UTF-8 manifest (``#`` starts a
comment)::

    classes <C>
    class <id> <name>            # one line per class, class 0 = background
    component <name>             # one line per pseudo-label set
    image <id> gt=<path|-> labels=<id,id,...|-> <comp1_path> ... <compM_path>

Paths are interpreted relative to the manifest's directory.  Image and
component order in the file is preserved everywhere downstream.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ManifestError, MaskFormatError, UsageError
from .util import atomic_write_bytes

IGNORE = 255
BACKGROUND = 0

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True, eq=False, repr=False)
class LabelMask:
    """Immutable 2-D grid of uint8 class indices (255 = IGNORE)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise MaskFormatError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise MaskFormatError(f"mask dimensions must be >= 1, got {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise MaskFormatError("mask values must fit in uint8")
            arr = arr.astype(np.uint8)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelMask):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"LabelMask({self.width}x{self.height})"


def check_mask(mask: LabelMask, class_count: int) -> None:
    """Raise MaskFormatError if any pixel is >= class_count and not IGNORE.

    The error names the first offending pixel in row-major order as (x,y).
    """
    if not 1 <= class_count <= 255:
        raise UsageError(f"class count must be in [1, 255], got {class_count}")
    bad = (mask.data >= class_count) & (mask.data != IGNORE)
    if bad.any():
        flat = int(np.argmax(bad))
        y, x = divmod(flat, mask.width)
        value = int(mask.data[y, x])
        raise MaskFormatError(f"class index {value} out of range at ({x},{y})")


def _decode_pgm(blob: bytes, path: Path) -> np.ndarray:
    # Header: "P5", then width/height/maxval tokens separated by whitespace
    # and optional "#" comments, then exactly one whitespace byte, then the
    # raw raster.  Anything after the raster is rejected.
    pos = 2
    n = len(blob)
    tokens: list[bytes] = []
    while len(tokens) < 3:
        while pos < n and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < n and blob[pos] == ord("#"):
            while pos < n and blob[pos] != ord("\n"):
                pos += 1
            continue
        start = pos
        while pos < n and not blob[pos : pos + 1].isspace() and blob[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise MaskFormatError(f"{path}: truncated PGM header")
        tokens.append(blob[start:pos])
    if pos >= n or not blob[pos : pos + 1].isspace():
        raise MaskFormatError(f"{path}: malformed PGM header")
    pos += 1
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise MaskFormatError(f"{path}: non-numeric PGM header field") from exc
    if width < 1 or height < 1:
        raise MaskFormatError(f"{path}: invalid PGM dimensions {width}x{height}")
    if not 1 <= maxval <= 255:
        raise MaskFormatError(f"{path}: unsupported PGM maxval {maxval} (only 8-bit)")
    expected = width * height
    raster = blob[pos:]
    if len(raster) < expected:
        raise MaskFormatError(f"{path}: truncated PGM raster")
    if len(raster) > expected:
        raise MaskFormatError(f"{path}: trailing data after PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def _decode_png(blob: bytes, path: Path) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(blob))
        img.load()
    except Exception as exc:  # Pillow raises a mix of error types here
        raise MaskFormatError(f"{path}: unreadable PNG ({exc})") from exc
    if img.mode not in ("L", "P"):
        raise MaskFormatError(
            f"{path}: unsupported PNG mode '{img.mode}' (need 8-bit grayscale or palette)"
        )
    arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim != 2:
        raise MaskFormatError(f"{path}: PNG did not decode to a single channel")
    return arr


def load_mask(path: Path | str, class_count: int) -> LabelMask:
    """Load a mask file (PGM or PNG, detected by magic bytes) and validate it."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:2] == b"P5":
        arr = _decode_pgm(blob, path)
    elif blob[:8] == _PNG_MAGIC:
        arr = _decode_png(blob, path)
    else:
        raise MaskFormatError(
            f"{path}: unsupported mask format (expected P5 PGM or 8-bit PNG)"
        )
    mask = LabelMask(arr)
    try:
        check_mask(mask, class_count)
    except MaskFormatError as exc:
        raise MaskFormatError(f"{path}: {exc}") from None
    return mask


def save_mask(mask: LabelMask, path: Path | str) -> None:
    """Write a mask, choosing the encoding from the file extension.

    Writes are atomic (temp file + rename) and byte-deterministic, so a
    round trip through :func:`load_mask` reproduces the mask exactly.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        blob = b"P5\n%d %d\n255\n" % (mask.width, mask.height) + mask.data.tobytes()
    elif suffix == ".png":
        buf = io.BytesIO()
        Image.fromarray(mask.data, mode="L").save(buf, format="PNG")
        blob = buf.getvalue()
    else:
        raise UsageError(f"unsupported mask extension '{path.suffix}' (use .pgm or .png)")
    atomic_write_bytes(path, blob)


@dataclass(frozen=True)
class ImageRecord:
    """One manifest row: an image id with its ground truth, labels and masks."""

    image_id: str
    ground_truth: Path | None
    labels: frozenset[int]
    component_masks: dict[str, Path]  # insertion order = manifest component order


@dataclass(frozen=True)
class DatasetManifest:
    class_count: int
    class_names: list[str]
    components: list[str]
    images: list[ImageRecord]
    root: Path

    @property
    def foreground_classes(self) -> range:
        return range(1, self.class_count)


def _fail(path: Path, lineno: int, msg: str) -> None:
    raise ManifestError(f"{path}:{lineno}: {msg}")


def load_manifest(path: Path | str) -> DatasetManifest:
    """Parse and validate a dataset manifest file."""
    path = Path(path)
    root = path.parent
    text = path.read_text(encoding="utf-8")

    class_count: int | None = None
    names: dict[int, str] = {}
    components: list[str] = []
    images: list[ImageRecord] = []
    seen_ids: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        kind = fields[0]
        if kind == "classes":
            if class_count is not None:
                _fail(path, lineno, "duplicate 'classes' directive")
            if len(fields) != 2:
                _fail(path, lineno, "expected: classes <C>")
            try:
                class_count = int(fields[1])
            except ValueError:
                _fail(path, lineno, f"invalid class count '{fields[1]}'")
            if not 1 <= class_count <= 255:
                _fail(path, lineno, f"class count must be in [1, 255], got {class_count}")
        elif kind == "class":
            if class_count is None:
                _fail(path, lineno, "'classes' directive must come before 'class'")
            if len(fields) < 3:
                _fail(path, lineno, "expected: class <id> <name>")
            try:
                cid = int(fields[1])
            except ValueError:
                _fail(path, lineno, f"invalid class id '{fields[1]}'")
            if not 0 <= cid < class_count:
                _fail(path, lineno, f"class id {cid} out of range [0, {class_count})")
            if cid in names:
                _fail(path, lineno, f"duplicate name for class {cid}")
            names[cid] = " ".join(fields[2:])
        elif kind == "component":
            if len(fields) != 2:
                _fail(path, lineno, "expected: component <name>")
            if fields[1] in components:
                _fail(path, lineno, f"duplicate component '{fields[1]}'")
            components.append(fields[1])
        elif kind == "image":
            if class_count is None:
                _fail(path, lineno, "'classes' directive must come before 'image'")
            if len(fields) < 4:
                _fail(path, lineno, "expected: image <id> gt=<path|-> labels=<ids|-> <paths...>")
            image_id = fields[1]
            if image_id in seen_ids:
                _fail(path, lineno, f"duplicate image id '{image_id}'")
            seen_ids.add(image_id)
            if not fields[2].startswith("gt="):
                _fail(path, lineno, "third field must be gt=<path|->")
            gt_value = fields[2][3:]
            gt_path = None if gt_value in ("-", "") else root / gt_value
            if not fields[3].startswith("labels="):
                _fail(path, lineno, "fourth field must be labels=<id,id,...|->")
            labels_value = fields[3][7:]
            labels: set[int] = set()
            if labels_value not in ("", "-"):
                for token in labels_value.split(","):
                    try:
                        label = int(token)
                    except ValueError:
                        _fail(path, lineno, f"invalid label '{token}'")
                    if label == BACKGROUND:
                        _fail(path, lineno, "background (0) cannot appear in image labels")
                    if not 0 < label < class_count:
                        _fail(path, lineno, f"label {label} out of range [1, {class_count})")
                    labels.add(label)
            mask_paths = fields[4:]
            if len(mask_paths) != len(components):
                _fail(
                    path,
                    lineno,
                    f"image '{image_id}': expected {len(components)} component "
                    f"path(s), got {len(mask_paths)}",
                )
            comp_masks = {
                name: root / p for name, p in zip(components, mask_paths)
            }
            images.append(ImageRecord(image_id, gt_path, frozenset(labels), comp_masks))
        else:
            _fail(path, lineno, f"unknown directive '{kind}'")

    if class_count is None:
        raise ManifestError(f"{path}: missing 'classes' directive")
    missing = [c for c in range(class_count) if c not in names]
    if missing:
        raise ManifestError(f"{path}: missing 'class' line for id(s) {missing}")
    if names[0] != "background":
        raise ManifestError(f"{path}: class 0 must be named 'background', got '{names[0]}'")

    class_names = [names[c] for c in range(class_count)]
    return DatasetManifest(class_count, class_names, components, images, root)


@dataclass(frozen=True)
class Finding:
    image_id: str
    kind: str
    detail: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.findings


def validate_corpus(
    manifest: DatasetManifest, require_ground_truth: bool = False
) -> ValidationReport:
    """Check every file the manifest references; problems become findings.

    Nothing raises here: missing files, unreadable masks, out-of-range
    indices and dimension mismatches are all reported, and the report
    passes only when there are zero findings.
    """
    findings: list[Finding] = []

    def note(image_id: str, kind: str, detail: str) -> None:
        findings.append(Finding(image_id, kind, detail))

    def try_load(image_id: str, label: str, mask_path: Path) -> LabelMask | None:
        try:
            return load_mask(mask_path, manifest.class_count)
        except FileNotFoundError:
            note(image_id, "missing file", f"{label}: {mask_path}")
        except OSError as exc:
            note(image_id, "unreadable file", f"{label}: {exc}")
        except MaskFormatError as exc:
            note(image_id, "invalid mask", f"{label}: {exc}")
        return None

    for rec in manifest.images:
        ref_dims: tuple[int, int] | None = None
        ref_src = ""
        if rec.ground_truth is None:
            if require_ground_truth:
                note(rec.image_id, "missing ground truth", "no ground truth declared")
        else:
            gt = try_load(rec.image_id, "ground truth", rec.ground_truth)
            if gt is not None:
                ref_dims = (gt.width, gt.height)
                ref_src = "ground truth"
        for comp, mask_path in rec.component_masks.items():
            mask = try_load(rec.image_id, f"component '{comp}'", mask_path)
            if mask is None:
                continue
            dims = (mask.width, mask.height)
            if ref_dims is None:
                ref_dims = dims
                ref_src = f"component '{comp}'"
            elif dims != ref_dims:
                note(
                    rec.image_id,
                    "dimension mismatch",
                    f"component '{comp}' is {dims[0]}x{dims[1]}, "
                    f"{ref_src} is {ref_dims[0]}x{ref_dims[1]}",
                )
    return ValidationReport(findings)
