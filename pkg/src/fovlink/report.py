"""Report emission: CSV tables, line-delimited records and SVG charts.

Rendering is deterministic: fixed row ordering, fixed float formatting
(percentages at two decimals, seconds at six), canonical JSON records.
Re-emitting the same inputs yields byte-identical files, which golden
tests rely on. SVG charts are generated directly so the artifact needs
no plotting dependency.

Each CSV header row starts with a versioned schema tag naming the label
column; the column set behind a tag is closed, any added column bumps
the version. Exact field names are documented in docs/schemas.md.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from statistics import quantiles

from .errors import FovlinkError
from .experiments import (
    BinaryExperimentResult,
    ConsistencyRecord,
    InsufficientRuns,
    LocalizationExperimentResult,
    LocalizationSample,
    PromptComparison,
    RunResult,
    analyze_run_consistency,
)
from .geometry import NormalizedBBox
from .parsing import DetectionKind, FailureKind, ParsedDetection
from .stats import (
    STAT_NAMES,
    ConfusionMatrix,
    DetectionStats,
    LocalizationSummary,
    build_confusion_matrix,
    derive_detection_stats,
    summarize_localization,
)
from .v2v import DialogueTranscript, LinkModel, decode_message, encode_message

log = logging.getLogger(__name__)

RENDER_TARGETS = ("csv", "records", "svg")

RESULT_RECORD_FIELDS = (
    "scene_id",
    "prompt_id",
    "run_idx",
    "outcome",
    "verdict",
    "label",
    "scene_lowlight",
    "box",
    "box_clamped",
    "box_degenerate",
    "failure_kind",
    "coerced",
    "fault",
    "latency",
    "raw_text",
    "overlap",
    "recall",
    "iou",
)


class ReportError(FovlinkError):
    """Report inputs are missing or malformed."""


@dataclass(frozen=True)
class ReportBundle:
    """Everything emit_report knows how to render; unset parts are skipped.

    ``labels`` and ``lowlight`` map scene_id to its ground-truth label and
    low-light tagging so emitted records stay self-contained for
    re-rendering without the manifest.
    """

    binary: BinaryExperimentResult | None = None
    localization: LocalizationExperimentResult | None = None
    comparison: PromptComparison | None = None
    consistency: list[ConsistencyRecord] | None = None
    transcript: DialogueTranscript | None = None
    labels: dict[str, bool] | None = None
    lowlight: dict[str, bool] | None = None
    lowlight_share: float | None = None


def _pct(value: float | None) -> str:
    return "" if value is None else f"{value * 100:.2f}"


def _sec(value: float) -> str:
    return f"{value:.6f}"


def normalize_targets(targets) -> set[str]:
    aliases = {"structured-records": "records"}
    resolved = {aliases.get(t, t) for t in targets}
    unknown = resolved - set(RENDER_TARGETS)
    if unknown:
        raise ReportError(f"unknown render targets: {sorted(unknown)}")
    return resolved


def result_to_record(
    result: RunResult,
    sample: LocalizationSample | None = None,
    label: bool | None = None,
    scene_lowlight: bool | None = None,
) -> dict:
    """Flat mapping mirroring one RunResult plus its computed metrics."""
    detection = result.detection
    outcome = "fault" if detection is None else detection.kind.value
    box = detection.box if detection is not None else None
    return {
        "scene_id": result.scene_id,
        "prompt_id": result.prompt_id,
        "run_idx": result.run_idx,
        "outcome": outcome,
        "verdict": None if detection is None else detection.verdict,
        "label": label,
        "scene_lowlight": scene_lowlight,
        "box": None if box is None else box.as_list(),
        "box_clamped": None if box is None else box.clamped,
        "box_degenerate": None if box is None else box.degenerate,
        "failure_kind": (
            None
            if detection is None or detection.failure_kind is None
            else detection.failure_kind.value
        ),
        "coerced": False if detection is None else detection.coerced,
        "fault": result.fault,
        "latency": result.latency,
        "raw_text": result.raw_text,
        "overlap": None if sample is None else sample.overlap,
        "recall": None if sample is None else sample.recall,
        "iou": None if sample is None else sample.iou,
    }


def record_to_result(record: dict) -> tuple[RunResult, LocalizationSample | None]:
    """Inverse of result_to_record, used by the report re-rendering path."""
    missing = [f for f in RESULT_RECORD_FIELDS if f not in record]
    if missing:
        raise ReportError(f"result record missing fields: {missing}")
    outcome = record["outcome"]
    detection: ParsedDetection | None
    if outcome == "fault":
        detection = None
    elif outcome == DetectionKind.VERDICT.value:
        detection = ParsedDetection(
            kind=DetectionKind.VERDICT,
            verdict=record["verdict"],
            raw_excerpt=record["raw_text"][:200],
            coerced=record["coerced"],
        )
    elif outcome == DetectionKind.LOCATED.value:
        x, y, x2, y2 = record["box"]
        detection = ParsedDetection(
            kind=DetectionKind.LOCATED,
            box=NormalizedBBox(x, y, x2, y2, clamped=record["box_clamped"]),
            raw_excerpt=record["raw_text"][:200],
        )
    elif outcome == DetectionKind.FAILURE.value:
        detection = ParsedDetection(
            kind=DetectionKind.FAILURE,
            failure_kind=FailureKind(record["failure_kind"]),
            raw_excerpt=record["raw_text"][:200],
        )
    else:
        raise ReportError(f"unknown outcome {outcome!r}")
    result = RunResult(
        scene_id=record["scene_id"],
        prompt_id=record["prompt_id"],
        run_idx=record["run_idx"],
        detection=detection,
        latency=record["latency"],
        raw_text=record["raw_text"],
        fault=record["fault"],
    )
    sample = None
    if record["overlap"] is not None:
        sample = LocalizationSample(
            scene_id=record["scene_id"],
            run_idx=record["run_idx"],
            overlap=record["overlap"],
            recall=record["recall"],
            iou=record["iou"],
            failure_kind=None if record["failure_kind"] is None else FailureKind(record["failure_kind"]),
        )
    return result, sample


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8", newline="")
    return path


def _write_records(path: Path, records: list[dict]) -> Path:
    lines = [json.dumps(r, separators=(",", ":"), ensure_ascii=False) for r in records]
    return _write(path, "".join(line + "\n" for line in lines))


def _stats_csv(matrices: list[ConfusionMatrix], stats: list[DetectionStats]) -> str:
    header = "detection_stats_v1,tp,fn,fp,tn," + ",".join(f"{n}_pct" for n in STAT_NAMES)
    rows = [header]
    for run_idx, (m, s) in enumerate(zip(matrices, stats)):
        cells = [f"run_{run_idx}", str(m.tp), str(m.fn_), str(m.fp), str(m.tn)]
        cells += [_pct(getattr(s, n)) for n in STAT_NAMES]
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


_SUMMARY_COLUMNS = (
    "n_tests",
    "n_overlapping",
    "union_rate_pct",
    "recall_mean_overlapping_pct",
    "recall_std_overlapping_pct",
    "recall_mean_all_pct",
    "recall_std_all_pct",
    "iou_mean_overlapping_pct",
)


def _summary_csv(rows: list[tuple[str, LocalizationSummary]]) -> str:
    lines = ["localization_summary_v1," + ",".join(_SUMMARY_COLUMNS)]
    for label, s in rows:
        cells = [
            label,
            str(s.n_tests),
            str(s.n_overlapping),
            _pct(s.union_rate),
            _pct(s.recall_mean_overlapping),
            _pct(s.recall_std_overlapping),
            _pct(s.recall_mean_all),
            _pct(s.recall_std_all),
            _pct(s.iou_mean_overlapping),
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _failures_csv(samples: list[LocalizationSample], lowlight_share: float | None) -> str:
    counts = {kind: 0 for kind in FailureKind}
    for sample in samples:
        if sample.failure_kind is not None:
            counts[sample.failure_kind] += 1
    lines = ["failure_taxonomy_v1,value"]
    for kind in FailureKind:
        lines.append(f"{kind.value},{counts[kind]}")
    lines.append(f"lowlight_failure_share_pct,{_pct(lowlight_share)}")
    return "\n".join(lines) + "\n"


def _consistency_csv(records: list[ConsistencyRecord]) -> str:
    lines = ["consistency_v1,prompt_id,n_runs,kinds,min_pairwise_iou,flagged"]
    for r in records:
        min_iou = "" if r.min_pairwise_iou is None else f"{r.min_pairwise_iou:.4f}"
        lines.append(
            f"{r.scene_id},{r.prompt_id},{r.n_runs},{'|'.join(r.kinds)},{min_iou},{str(r.flagged).lower()}"
        )
    return "\n".join(lines) + "\n"


def _transport_csv(transcript: DialogueTranscript) -> str:
    comparison = transcript.comparison()
    ratio = "" if comparison.ratio is None else f"{comparison.ratio:.6f}"
    lines = [
        "v2v_comparison_v1,value",
        f"n_messages,{len(transcript.messages)}",
        f"dialogue_bytes,{comparison.dialogue_bytes}",
        f"dialogue_time_s,{_sec(comparison.dialogue_time)}",
        f"stream_bytes,{comparison.stream_bytes}",
        f"stream_time_s,{_sec(comparison.stream_time)}",
        f"ratio,{ratio}",
    ]
    return "\n".join(lines) + "\n"


def _five_numbers(values: list[float]) -> tuple[float, float, float, float, float]:
    ordered = sorted(values)
    if len(ordered) == 1:
        v = ordered[0]
        return v, v, v, v, v
    q1, median, q3 = quantiles(ordered, n=4, method="inclusive")
    return ordered[0], q1, median, q3, ordered[-1]


def _recall_boxplot_svg(groups: list[tuple[str, list[float]]]) -> str:
    """Box plot of per-sample recall, one box per prompt."""
    width, height = 480, 320
    left, right, top, bottom = 60, 20, 20, 40
    plot_w, plot_h = width - left - right, height - top - bottom

    def y_of(v: float) -> float:
        return top + (1.0 - v) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y_of(tick)
        parts.append(
            f'<line x1="{left}" y1="{y:.2f}" x2="{width - right}" y2="{y:.2f}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{tick * 100:.0f}%</text>'
        )
    slot = plot_w / max(1, len(groups))
    for i, (label, values) in enumerate(groups):
        cx = left + slot * (i + 0.5)
        if values:
            lo, q1, med, q3, hi = _five_numbers(values)
            half = min(30.0, slot * 0.25)
            parts.append(
                f'<line x1="{cx:.2f}" y1="{y_of(lo):.2f}" x2="{cx:.2f}" y2="{y_of(hi):.2f}" '
                'stroke="#333333" stroke-width="1"/>'
            )
            parts.append(
                f'<rect x="{cx - half:.2f}" y="{y_of(q3):.2f}" width="{2 * half:.2f}" '
                f'height="{max(0.0, y_of(q1) - y_of(q3)):.2f}" fill="#7aa6d2" stroke="#333333"/>'
            )
            parts.append(
                f'<line x1="{cx - half:.2f}" y1="{y_of(med):.2f}" x2="{cx + half:.2f}" '
                f'y2="{y_of(med):.2f}" stroke="#00254d" stroke-width="2"/>'
            )
        parts.append(
            f'<text x="{cx:.2f}" y="{height - bottom + 18}" text-anchor="middle" '
            f'font-size="12" font-family="sans-serif">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _iou_share_svg(ious: list[float]) -> str:
    """Share of overlapping samples per IoU decile bucket."""
    buckets = [0] * 10
    for v in ious:
        buckets[min(9, int(v * 10))] += 1
    total = len(ious)
    width, height = 480, 320
    left, right, top, bottom = 60, 20, 20, 50
    plot_w, plot_h = width - left - right, height - top - bottom
    max_share = max((c / total for c in buckets), default=0.0) or 1.0

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    slot = plot_w / 10
    for i, count in enumerate(buckets):
        share = count / total if total else 0.0
        bar_h = (share / max_share) * plot_h
        x = left + i * slot
        parts.append(
            f'<rect x="{x + 2:.2f}" y="{top + plot_h - bar_h:.2f}" width="{slot - 4:.2f}" '
            f'height="{bar_h:.2f}" fill="#d2937a" stroke="#333333"/>'
        )
        parts.append(
            f'<text x="{x + slot / 2:.2f}" y="{top + plot_h - bar_h - 4:.2f}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">{share * 100:.2f}%</text>'
        )
        parts.append(
            f'<text x="{x + slot / 2:.2f}" y="{height - bottom + 16}" text-anchor="middle" '
            f'font-size="9" font-family="sans-serif">{i / 10:.1f}-{(i + 1) / 10:.1f}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.2f}" y="{height - 8}" text-anchor="middle" '
        'font-size="11" font-family="sans-serif">IoU bucket (overlapping tests)</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _scene_field(mapping: dict[str, bool] | None, scene_id: str) -> bool | None:
    return None if mapping is None else mapping.get(scene_id)


def _localization_records(result: LocalizationExperimentResult, bundle: ReportBundle) -> list[dict]:
    sample_by_key = {(s.scene_id, s.run_idx): s for s in result.samples}
    return [
        result_to_record(
            r,
            sample_by_key.get((r.scene_id, r.run_idx)),
            _scene_field(bundle.labels, r.scene_id),
            _scene_field(bundle.lowlight, r.scene_id),
        )
        for r in result.results
    ]


def emit_report(bundle: ReportBundle, targets, out_dir: str | Path) -> list[Path]:
    """Render every present bundle component to the requested targets.

    Returns the written paths (sorted). Empty components produce
    header-only CSVs and no chart.
    """
    resolved = normalize_targets(targets)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if bundle.binary is not None:
        b = bundle.binary
        if "csv" in resolved:
            written.append(
                _write(
                    out / "detection_stats.csv",
                    _stats_csv(list(b.per_run_matrices), list(b.per_run_stats)),
                )
            )
        if "records" in resolved:
            records = [
                result_to_record(
                    r,
                    None,
                    _scene_field(bundle.labels, r.scene_id),
                    _scene_field(bundle.lowlight, r.scene_id),
                )
                for r in b.results
            ]
            written.append(_write_records(out / "binary_results.jsonl", records))

    if bundle.localization is not None:
        loc = bundle.localization
        prompt_id = loc.results[0].prompt_id if loc.results else "P?"
        if "csv" in resolved:
            written.append(
                _write(out / "localization_summary.csv", _summary_csv([(prompt_id, loc.summary)]))
            )
            written.append(
                _write(
                    out / "failures.csv",
                    _failures_csv(list(loc.samples), bundle.lowlight_share),
                )
            )
        if "records" in resolved:
            written.append(
                _write_records(
                    out / "localization_results.jsonl",
                    _localization_records(loc, bundle),
                )
            )
        if "svg" in resolved and loc.samples:
            recalls = [s.recall for s in loc.samples]
            written.append(
                _write(out / "recall_distribution.svg", _recall_boxplot_svg([(prompt_id, recalls)]))
            )
            overlapping = [s.iou for s in loc.samples if s.overlap]
            if overlapping:
                written.append(_write(out / "iou_shares.svg", _iou_share_svg(overlapping)))

    if bundle.comparison is not None:
        comp = bundle.comparison
        if "csv" in resolved:
            written.append(
                _write(
                    out / "prompt_comparison.csv",
                    _summary_csv([(pid, comp.runs[pid].summary) for pid in comp.prompt_ids]),
                )
            )
        if "records" in resolved:
            records = []
            for pid in comp.prompt_ids:
                records.extend(_localization_records(comp.runs[pid], bundle))
            written.append(_write_records(out / "comparison_results.jsonl", records))
        if "svg" in resolved:
            groups = [
                (pid, [s.recall for s in comp.runs[pid].samples]) for pid in comp.prompt_ids
            ]
            if any(values for _, values in groups):
                written.append(
                    _write(out / "recall_distribution.svg", _recall_boxplot_svg(groups))
                )
            overlapping = [
                s.iou for pid in comp.prompt_ids for s in comp.runs[pid].samples if s.overlap
            ]
            if overlapping:
                written.append(_write(out / "iou_shares.svg", _iou_share_svg(overlapping)))

    if bundle.consistency is not None and "csv" in resolved:
        written.append(_write(out / "consistency.csv", _consistency_csv(bundle.consistency)))

    if bundle.transcript is not None:
        if "records" in resolved:
            lines = [encode_message(m).decode("utf-8") for m in bundle.transcript.messages]
            written.append(
                _write(out / "v2v_transcript.jsonl", "".join(line + "\n" for line in lines))
            )
            link_record = {
                "rate_bps": bundle.transcript.link.rate,
                "overhead": bundle.transcript.link.overhead,
                "stream_bytes": bundle.transcript.stream_bytes,
            }
            written.append(
                _write(
                    out / "v2v_link.json",
                    json.dumps(link_record, separators=(",", ":")) + "\n",
                )
            )
        if "csv" in resolved:
            written.append(_write(out / "v2v_comparison.csv", _transport_csv(bundle.transcript)))

    if not written:
        log.warning("emit_report: empty bundle, nothing rendered")
    return sorted(written)


def _load_records(path: Path) -> list[dict]:
    records = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise ReportError(f"{path.name} line {line_no}: invalid JSON ({e.msg})") from e
    return records


def rebuild_binary(records: list[dict]) -> tuple[BinaryExperimentResult, dict[str, bool]]:
    """Reconstruct a binary experiment from its emitted records."""
    results = []
    labels: dict[str, bool] = {}
    for record in records:
        result, _ = record_to_result(record)
        results.append(result)
        if record["label"] is not None:
            labels[record["scene_id"]] = record["label"]
    results.sort(key=lambda r: (r.scene_id, r.prompt_id, r.run_idx))
    n_runs = max((r.run_idx for r in results), default=-1) + 1
    label_pairs = sorted(labels.items())
    matrices = []
    for run_idx in range(n_runs):
        predictions = [
            (r.scene_id, r.detection.verdict)
            for r in results
            if r.run_idx == run_idx
            and r.detection is not None
            and r.detection.verdict is not None
        ]
        matrices.append(build_confusion_matrix(predictions, label_pairs))
    per_run_stats = tuple(derive_detection_stats(m) for m in matrices)
    return (
        BinaryExperimentResult(
            results=tuple(results),
            matrix=matrices[0],
            stats=per_run_stats[0],
            per_run_matrices=tuple(matrices),
            per_run_stats=per_run_stats,
        ),
        labels,
    )


def rebuild_localization(records: list[dict]) -> LocalizationExperimentResult:
    """Reconstruct a localization experiment from its emitted records."""
    results = []
    samples = []
    for record in records:
        result, sample = record_to_result(record)
        results.append(result)
        if sample is not None:
            samples.append(sample)
    results.sort(key=lambda r: (r.scene_id, r.prompt_id, r.run_idx))
    samples.sort(key=lambda s: (s.scene_id, s.run_idx))
    summary = summarize_localization(
        [(s.scene_id, s.run_idx, s.overlap, s.recall, s.iou) for s in samples]
    )
    return LocalizationExperimentResult(
        results=tuple(results), samples=tuple(samples), summary=summary
    )


def rebuild_comparison(records: list[dict]) -> PromptComparison:
    """Reconstruct a prompt comparison from its merged records."""
    by_prompt: dict[str, list[dict]] = {}
    for record in records:
        by_prompt.setdefault(record["prompt_id"], []).append(record)
    prompt_ids = tuple(sorted(by_prompt))
    return PromptComparison(
        prompt_ids=prompt_ids,
        runs={pid: rebuild_localization(by_prompt[pid]) for pid in prompt_ids},
    )


def rebuild_transcript(transcript_path: Path, link_path: Path) -> DialogueTranscript:
    """Reconstruct a dialogue transcript from its emitted files."""
    messages = []
    sizes = []
    for line in transcript_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        data = line.encode("utf-8")
        messages.append(decode_message(data))
        sizes.append(len(data))
    try:
        meta = json.loads(link_path.read_text(encoding="utf-8"))
        # keep the parsed numeric types so re-encoding stays byte-identical
        link = LinkModel(rate=meta["rate_bps"], overhead=meta["overhead"])
        stream_bytes = int(meta["stream_bytes"])
    except (OSError, TypeError, ValueError, KeyError, json.JSONDecodeError) as e:
        raise ReportError(f"cannot read link metadata {link_path.name}: {e}") from e
    return DialogueTranscript(
        messages=tuple(messages), sizes=tuple(sizes), link=link, stream_bytes=stream_bytes
    )


def lowlight_share_from_records(records: list[dict]) -> float | None:
    """Low-light failure share recomputed from self-contained records."""
    failure_scenes: dict[str, bool] = {}
    for record in records:
        if record["outcome"] == "failure":
            failure_scenes.setdefault(record["scene_id"], bool(record["scene_lowlight"]))
    if not failure_scenes:
        return None
    return sum(failure_scenes.values()) / len(failure_scenes)


def rerender(in_dir: str | Path, targets) -> list[Path]:
    """Re-render reports from the record files found in ``in_dir``.

    Recognizes binary_results.jsonl, localization_results.jsonl,
    comparison_results.jsonl and v2v_transcript.jsonl (+ v2v_link.json).
    """
    in_path = Path(in_dir)
    if not in_path.is_dir():
        raise ReportError(f"input directory not found: {in_path}")
    bundle_kwargs: dict = {}
    all_results: list[RunResult] = []

    def absorb_scene_maps(records: list[dict]) -> None:
        labels = bundle_kwargs.setdefault("labels", {})
        lowlight = bundle_kwargs.setdefault("lowlight", {})
        for r in records:
            if r["label"] is not None:
                labels[r["scene_id"]] = r["label"]
            if r["scene_lowlight"] is not None:
                lowlight[r["scene_id"]] = r["scene_lowlight"]

    binary_path = in_path / "binary_results.jsonl"
    if binary_path.is_file():
        records = _load_records(binary_path)
        outcome, _ = rebuild_binary(records)
        bundle_kwargs["binary"] = outcome
        absorb_scene_maps(records)
        all_results.extend(outcome.results)

    loc_path = in_path / "localization_results.jsonl"
    if loc_path.is_file():
        records = _load_records(loc_path)
        outcome = rebuild_localization(records)
        bundle_kwargs["localization"] = outcome
        bundle_kwargs["lowlight_share"] = lowlight_share_from_records(records)
        absorb_scene_maps(records)
        all_results.extend(outcome.results)

    comp_path = in_path / "comparison_results.jsonl"
    if comp_path.is_file():
        records = _load_records(comp_path)
        comparison = rebuild_comparison(records)
        bundle_kwargs["comparison"] = comparison
        absorb_scene_maps(records)
        for pid in comparison.prompt_ids:
            all_results.extend(comparison.runs[pid].results)

    transcript_path = in_path / "v2v_transcript.jsonl"
    if transcript_path.is_file():
        bundle_kwargs["transcript"] = rebuild_transcript(
            transcript_path, in_path / "v2v_link.json"
        )

    if not bundle_kwargs:
        raise ReportError(f"no recognized result files in {in_path}")
    if all_results:
        try:
            bundle_kwargs["consistency"] = analyze_run_consistency(all_results)
        except InsufficientRuns:
            pass
    return emit_report(ReportBundle(**bundle_kwargs), targets, in_path)
