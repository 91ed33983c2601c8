"""Scene manifest loading, validation and curation filtering.

Ground truth arrives as a line-delimited UTF-8 manifest: one JSON object
per line with keys exactly ``scene_id``, ``image_path``, ``width``,
``height``, ``has_pedestrian``, ``gt_boxes``, ``tags``. Unknown keys are
rejected. Relative image paths are resolved against the manifest's
directory.

Curation tags are free-form strings; the vocabulary used by the bundled
fixtures and the low-light analysis is:

    dusk, sunset, shade, solar_glare, night,
    single_pedestrian, crosswalk_center
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FovlinkError

MANIFEST_KEYS = (
    "scene_id",
    "image_path",
    "width",
    "height",
    "has_pedestrian",
    "gt_boxes",
    "tags",
)


class ManifestError(FovlinkError):
    """Base class for manifest loading failures."""


class MissingFile(ManifestError):
    """Manifest file does not exist."""


class SchemaViolation(ManifestError):
    """A manifest line does not conform to the schema."""

    def __init__(self, line: int, fld: str, reason: str, violations: list[str] | None = None) -> None:
        super().__init__(f"line {line}, field {fld!r}: {reason}")
        self.line = line
        self.field = fld
        self.all_violations: list[str] = violations if violations is not None else [str(self)]


class InvariantViolation(ManifestError):
    """A structurally valid record breaks a domain invariant."""

    def __init__(self, scene_id: str, reason: str, violations: list[str] | None = None) -> None:
        super().__init__(f"scene {scene_id!r}: {reason}")
        self.scene_id = scene_id
        self.reason = reason
        self.all_violations: list[str] = violations if violations is not None else [str(self)]


@dataclass(frozen=True, slots=True)
class PixelBBox:
    """Axis-aligned pixel box with strictly positive area."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def validate(self, width: float, height: float) -> str | None:
        """Return a violation description, or None when the box is valid."""
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            return f"box {self.as_list()} has non-positive area"
        if self.x_min < 0 or self.y_min < 0 or self.x_max > width or self.y_max > height:
            return f"box {self.as_list()} outside image bounds {width}x{height}"
        return None

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True, slots=True)
class SceneRecord:
    """One camera frame with its ground-truth annotations and lighting tags."""

    scene_id: str
    image_path: Path
    width: int
    height: int
    has_pedestrian: bool
    gt_boxes: tuple[PixelBBox, ...]
    tags: frozenset[str]

    def invariant_violation(self) -> str | None:
        if self.width <= 0 or self.height <= 0:
            return f"non-positive image dimensions {self.width}x{self.height}"
        if self.has_pedestrian != bool(self.gt_boxes):
            return (
                "has_pedestrian must match presence of gt_boxes "
                f"(has_pedestrian={self.has_pedestrian}, {len(self.gt_boxes)} boxes)"
            )
        for box in self.gt_boxes:
            reason = box.validate(self.width, self.height)
            if reason is not None:
                return reason
        return None


@dataclass(frozen=True)
class SceneSet:
    """Positives and negatives (control group), immutable after loading."""

    positives: tuple[SceneRecord, ...]
    negatives: tuple[SceneRecord, ...]
    by_id: dict[str, SceneRecord] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        index: dict[str, SceneRecord] = {}
        for record in (*self.positives, *self.negatives):
            if record.scene_id in index:
                raise InvariantViolation(record.scene_id, "duplicate scene_id")
            index[record.scene_id] = record
        object.__setattr__(self, "by_id", index)

    def __len__(self) -> int:
        return len(self.positives) + len(self.negatives)

    def __iter__(self):
        yield from self.positives
        yield from self.negatives

    def labels(self) -> list[tuple[str, bool]]:
        """(scene_id, has_pedestrian) pairs in manifest order."""
        return [(r.scene_id, r.has_pedestrian) for r in self]


@dataclass
class _Violations:
    """Collects every problem found in one pass over the manifest."""

    schema: list[tuple[int, str, str]] = field(default_factory=list)
    invariant: list[tuple[str, str]] = field(default_factory=list)

    def add_schema(self, line: int, fld: str, reason: str) -> None:
        self.schema.append((line, fld, reason))

    def add_invariant(self, scene_id: str, reason: str) -> None:
        self.invariant.append((scene_id, reason))

    def report(self) -> list[str]:
        return [f"line {line}, field {fld!r}: {reason}" for line, fld, reason in self.schema] + [
            f"scene {scene_id!r}: {reason}" for scene_id, reason in self.invariant
        ]

    def raise_if_any(self) -> None:
        if self.schema:
            line, fld, reason = self.schema[0]
            raise SchemaViolation(line, fld, reason, self.report())
        if self.invariant:
            scene_id, reason = self.invariant[0]
            raise InvariantViolation(scene_id, reason, self.report())


def _parse_record(line_no: int, raw: dict, base_dir: Path, out: _Violations) -> SceneRecord | None:
    unknown = set(raw) - set(MANIFEST_KEYS)
    missing = set(MANIFEST_KEYS) - set(raw)
    for key in sorted(unknown):
        out.add_schema(line_no, key, "unknown key")
    for key in sorted(missing):
        out.add_schema(line_no, key, "missing key")
    if unknown or missing:
        return None

    ok = True

    def bad(fld: str, reason: str) -> None:
        nonlocal ok
        ok = False
        out.add_schema(line_no, fld, reason)

    if not isinstance(raw["scene_id"], str) or not raw["scene_id"]:
        bad("scene_id", "must be a non-empty string")
    if not isinstance(raw["image_path"], str) or not raw["image_path"]:
        bad("image_path", "must be a non-empty string")
    for fld in ("width", "height"):
        if not isinstance(raw[fld], int) or isinstance(raw[fld], bool):
            bad(fld, "must be an integer")
    if not isinstance(raw["has_pedestrian"], bool):
        bad("has_pedestrian", "must be true or false")
    boxes: list[PixelBBox] = []
    if not isinstance(raw["gt_boxes"], list):
        bad("gt_boxes", "must be a list of 4-element numeric lists")
    else:
        for i, entry in enumerate(raw["gt_boxes"]):
            if (
                not isinstance(entry, list)
                or len(entry) != 4
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in entry)
            ):
                bad("gt_boxes", f"entry {i} is not a 4-element numeric list")
            else:
                boxes.append(PixelBBox(*(float(v) for v in entry)))
    if not isinstance(raw["tags"], list) or not all(isinstance(t, str) for t in raw["tags"]):
        bad("tags", "must be a list of strings")

    if not ok:
        return None
    image_path = Path(raw["image_path"])
    if not image_path.is_absolute():
        image_path = base_dir / image_path
    return SceneRecord(
        scene_id=raw["scene_id"],
        image_path=image_path,
        width=raw["width"],
        height=raw["height"],
        has_pedestrian=raw["has_pedestrian"],
        gt_boxes=tuple(boxes),
        tags=frozenset(raw["tags"]),
    )


def load_manifest(path: str | Path) -> SceneSet:
    """Load and validate a scene manifest.

    Scans the whole file and reports every schema and invariant violation
    found before aborting; the raised exception carries the full report in
    ``all_violations``. Record order within positives/negatives follows
    the file.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")

    found = _Violations()
    positives: list[SceneRecord] = []
    negatives: list[SceneRecord] = []
    seen: set[str] = set()

    text = path.read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as e:
            found.add_schema(line_no, "", f"invalid JSON ({e.msg})")
            continue
        if not isinstance(raw, dict):
            found.add_schema(line_no, "", "record must be an object")
            continue
        record = _parse_record(line_no, raw, path.parent, found)
        if record is None:
            continue
        reason = record.invariant_violation()
        if reason is None and record.scene_id in seen:
            reason = "duplicate scene_id"
        if reason is not None:
            found.add_invariant(record.scene_id, reason)
            continue
        seen.add(record.scene_id)
        (positives if record.has_pedestrian else negatives).append(record)

    found.raise_if_any()
    return SceneSet(positives=tuple(positives), negatives=tuple(negatives))


def apply_curation_filter(
    scene_set: SceneSet,
    required_tags: frozenset[str] | set[str] = frozenset(),
    max_boxes: int | None = None,
) -> SceneSet:
    """Keep only positives carrying all ``required_tags`` with at most ``max_boxes`` boxes.

    Mechanizes the dataset curation rule (single pedestrian on a central
    crosswalk). Negatives pass through untouched; relative order is
    preserved and the filter is idempotent.
    """
    required = frozenset(required_tags)
    kept = tuple(
        r
        for r in scene_set.positives
        if required <= r.tags and (max_boxes is None or len(r.gt_boxes) <= max_boxes)
    )
    return SceneSet(positives=kept, negatives=scene_set.negatives)
