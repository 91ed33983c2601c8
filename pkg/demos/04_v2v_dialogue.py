"""The looking-around-the-corner dialogue: an ego vehicle queries two
remote vehicles' onboard vision models instead of streaming their camera
frames, and the transcript accounts every byte."""

import json
import tempfile
from pathlib import Path

from fovlink.dataset import load_manifest
from fovlink.gateway import Gateway, MockBackend, QueryParams
from fovlink.v2v import (
    LinkModel,
    Role,
    VehicleAgent,
    decode_message,
    encode_message,
    run_dialogue,
    transmission_time,
)

workdir = Path(tempfile.mkdtemp(prefix="fovlink_v2v_"))

records = [
    {"scene_id": "corner_left", "image_path": "left.jpg", "width": 1920, "height": 1280,
     "has_pedestrian": True, "gt_boxes": [[760, 420, 1150, 1020]], "tags": []},
    {"scene_id": "corner_right", "image_path": "right.jpg", "width": 1920, "height": 1280,
     "has_pedestrian": False, "gt_boxes": [], "tags": []},
]
manifest = workdir / "manifest.jsonl"
manifest.write_text("".join(json.dumps(r) + "\n" for r in records))
# stand-ins for real camera frames; a front-camera JPEG is ~220 KB
(workdir / "left.jpg").write_bytes(b"\xff" * 223_846)
(workdir / "right.jpg").write_bytes(b"\xff" * 201_000)

scenes = load_manifest(manifest)
ego = VehicleAgent("ego", Role.EGO)
remotes = [
    VehicleAgent("vehicle_a", Role.REMOTE, current_frame="corner_left"),
    VehicleAgent("vehicle_b", Role.REMOTE, current_frame="corner_right"),
]

# Each remote's onboard model is scripted here; live mode would answer
# through an OpenAI-compatible endpoint instead.
script = {
    "corner_left|P1|0": {"text": "(0.396,0.328), (0.599,0.797)"},
    "corner_right|P1|0": {"text": "I cannot identify any pedestrian in this image."},
}

# a 1 Mbps VANET link with 10% protocol overhead
link = LinkModel(rate=1_000_000, overhead=0.10)
transcript = run_dialogue(
    ego, remotes, scenes, "P1", Gateway(MockBackend(script)), link, QueryParams(backoff_base=0.0)
)

print("transcript:")
for message, size in zip(transcript.messages, transcript.sizes):
    wire = encode_message(message)
    assert decode_message(wire) == message  # canonical round-trip
    print(f"  [{message.timestamp:6d} ms] {message.sender_id} -> {message.recipient_id} "
          f"{message.msg_type.value:8s} {size:4d} B")

c = transcript.comparison()
print(f"\ndialogue: {c.dialogue_bytes} bytes, {c.dialogue_time:.4f} s on this link")
print(f"streaming both frames instead: {c.stream_bytes} bytes, {c.stream_time:.4f} s")
print(f"dialogue/stream ratio: {c.ratio:.6f}")
print(f"\none 218.6 KB frame alone needs {transmission_time(218.6 * 1024, link):.2f} s")
