"""Shared fixture builders: manifests with image files and mock reply scripts."""

from __future__ import annotations

import json
from pathlib import Path

import pytest


def scene_line(
    scene_id: str,
    *,
    positive: bool,
    width: int = 1000,
    height: int = 1000,
    boxes: list[list[float]] | None = None,
    tags: list[str] | None = None,
    image_path: str | None = None,
) -> dict:
    if boxes is None:
        boxes = [[400.0, 400.0, 600.0, 800.0]] if positive else []
    return {
        "scene_id": scene_id,
        "image_path": image_path or f"images/{scene_id}.jpg",
        "width": width,
        "height": height,
        "has_pedestrian": positive,
        "gt_boxes": boxes,
        "tags": tags or [],
    }


def write_manifest(
    directory: Path, records: list[dict], *, create_images: bool = True, name: str = "manifest.jsonl"
) -> Path:
    path = directory / name
    path.write_text(
        "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records),
        encoding="utf-8",
    )
    if create_images:
        for record in records:
            image = directory / record["image_path"]
            image.parent.mkdir(parents=True, exist_ok=True)
            # deterministic dummy bytes, file content is never decoded
            image.write_bytes(record["scene_id"].encode("utf-8") * 16)
    return path


def write_fixture(directory: Path, script: dict[str, dict], name: str = "fixture.json") -> Path:
    path = directory / name
    path.write_text(json.dumps(script, indent=1), encoding="utf-8")
    return path


def script_key(scene_id: str, prompt_id: str, run_idx: int) -> str:
    return f"{scene_id}|{prompt_id}|{run_idx}"


@pytest.fixture
def small_manifest(tmp_path: Path) -> Path:
    """Three positives (one low-light) and two negatives, with image files."""
    records = [
        scene_line("pos_a", positive=True, tags=["single_pedestrian", "crosswalk_center"]),
        scene_line("pos_b", positive=True, tags=["dusk", "single_pedestrian"]),
        scene_line("pos_c", positive=True, boxes=[[100.0, 100.0, 300.0, 500.0]]),
        scene_line("neg_a", positive=False),
        scene_line("neg_b", positive=False, tags=["night"]),
    ]
    return write_manifest(tmp_path, records)
