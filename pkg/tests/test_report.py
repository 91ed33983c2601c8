from __future__ import annotations

import json

import pytest

from fovlink.dataset import load_manifest
from fovlink.experiments import (
    BinaryExperimentResult,
    ExperimentConfig,
    RunResult,
    analyze_run_consistency,
    run_binary_experiment,
    run_localization_experiment,
    run_prompt_comparison,
)
from fovlink.geometry import NormalizedBBox
from fovlink.parsing import DetectionKind, ParsedDetection
from fovlink.gateway import Gateway, MockBackend, QueryParams
from fovlink.report import (
    RESULT_RECORD_FIELDS,
    ReportBundle,
    ReportError,
    emit_report,
    normalize_targets,
    record_to_result,
    rerender,
    result_to_record,
)
from fovlink.stats import ConfusionMatrix, derive_detection_stats
from fovlink.v2v import LinkModel, Role, VehicleAgent, run_dialogue

from conftest import script_key
from test_experiments import GT_TEMPLATE, binary_script, localization_script

CONFIG = ExperimentConfig(runs_per_prompt=2, params=QueryParams(backoff_base=0.0))


def make_binary_bundle(manifest):
    scenes = load_manifest(manifest)
    gateway = Gateway(MockBackend(binary_script(scenes, runs=2)))
    outcome = run_binary_experiment(scenes, "BIN", gateway, CONFIG)
    return ReportBundle(
        binary=outcome,
        consistency=analyze_run_consistency(outcome.results),
        labels={r.scene_id: r.has_pedestrian for r in scenes},
        lowlight={r.scene_id: bool(r.tags & {"dusk", "sunset", "shade", "solar_glare"}) for r in scenes},
    )


def make_localization_bundle(manifest):
    scenes = load_manifest(manifest)
    gateway = Gateway(MockBackend(localization_script(scenes, GT_TEMPLATE, runs=2)))
    outcome = run_localization_experiment(scenes, "P1", gateway, CONFIG)
    return ReportBundle(
        localization=outcome,
        labels={r.scene_id: r.has_pedestrian for r in scenes},
        lowlight={r.scene_id: False for r in scenes},
    )


class TestTargets:
    def test_aliases_and_validation(self):
        assert normalize_targets(["csv", "structured-records", "svg"]) == {"csv", "records", "svg"}
        with pytest.raises(ReportError):
            normalize_targets(["pdf"])


class TestDetectionStatsCsv:
    def test_benchmark_matrix_renders_9524(self, tmp_path):
        matrix = ConfusionMatrix(120, 6, 5, 129)
        stats = derive_detection_stats(matrix)
        bundle = ReportBundle(
            binary=BinaryExperimentResult(
                results=(),
                matrix=matrix,
                stats=stats,
                per_run_matrices=(matrix,),
                per_run_stats=(stats,),
            )
        )
        files = emit_report(bundle, ["csv"], tmp_path)
        content = (tmp_path / "detection_stats.csv").read_text()
        assert files == [tmp_path / "detection_stats.csv"]
        lines = content.splitlines()
        assert lines[0].startswith("detection_stats_v1,tp,fn,fp,tn,recall_pct")
        assert lines[1] == "run_0,120,6,5,129,95.24,96.27,96.00,95.56,3.73,4.00,4.76,95.77,95.62,91.53"


class TestRecordRoundTrip:
    def test_record_schema_golden(self):
        # field set and order are the documented result-file schema;
        # changing either is a schema version bump
        result = RunResult(
            scene_id="pos_a",
            prompt_id="P1",
            run_idx=0,
            detection=ParsedDetection(
                kind=DetectionKind.LOCATED,
                box=NormalizedBBox(0.4, 0.4, 0.6, 0.8),
                raw_excerpt="(0.4,0.4), (0.6,0.8)",
            ),
            latency=0.0,
            raw_text="(0.4,0.4), (0.6,0.8)",
        )
        record = result_to_record(result, None, True, False)
        assert tuple(record) == RESULT_RECORD_FIELDS
        line = json.dumps(record, separators=(",", ":"), ensure_ascii=False)
        assert line == (
            '{"scene_id":"pos_a","prompt_id":"P1","run_idx":0,"outcome":"located",'
            '"verdict":null,"label":true,"scene_lowlight":false,'
            '"box":[0.4,0.4,0.6,0.8],"box_clamped":false,"box_degenerate":false,'
            '"failure_kind":null,"coerced":false,"fault":null,"latency":0.0,'
            '"raw_text":"(0.4,0.4), (0.6,0.8)","overlap":null,"recall":null,"iou":null}'
        )

    def test_rendered_summary_matches_in_memory_values(self, small_manifest, tmp_path):
        bundle = make_localization_bundle(small_manifest)
        emit_report(bundle, ["csv"], tmp_path)
        row = (tmp_path / "localization_summary.csv").read_text().splitlines()[1].split(",")
        summary = bundle.localization.summary
        assert row[1] == str(summary.n_tests)
        assert row[2] == str(summary.n_overlapping)
        assert row[3] == f"{summary.union_rate * 100:.2f}"
        assert row[6] == f"{summary.recall_mean_all * 100:.2f}"

    def test_records_invert(self, small_manifest):
        bundle = make_localization_bundle(small_manifest)
        loc = bundle.localization
        samples = {(s.scene_id, s.run_idx): s for s in loc.samples}
        for result in loc.results:
            record = result_to_record(result, samples.get((result.scene_id, result.run_idx)), True, False)
            rebuilt, sample = record_to_result(record)
            assert rebuilt == result
            assert sample == samples.get((result.scene_id, result.run_idx))

    def test_missing_fields_rejected(self):
        with pytest.raises(ReportError):
            record_to_result({"scene_id": "s"})


class TestEmission:
    def test_emission_is_reproducible(self, small_manifest, tmp_path):
        bundle = make_binary_bundle(small_manifest)
        first = emit_report(bundle, ["csv", "records", "svg"], tmp_path / "a")
        second = emit_report(bundle, ["csv", "records", "svg"], tmp_path / "b")
        assert [p.name for p in first] == [p.name for p in second]
        for left, right in zip(first, second):
            assert left.read_bytes() == right.read_bytes()

    def test_empty_consistency_emits_header_only(self, tmp_path):
        files = emit_report(ReportBundle(consistency=[]), ["csv", "svg"], tmp_path)
        assert [p.name for p in files] == ["consistency.csv"]
        assert (
            (tmp_path / "consistency.csv").read_text()
            == "consistency_v1,prompt_id,n_runs,kinds,min_pairwise_iou,flagged\n"
        )
        assert not list(tmp_path.glob("*.svg"))

    def test_localization_emits_summary_failures_and_charts(self, small_manifest, tmp_path):
        bundle = make_localization_bundle(small_manifest)
        files = emit_report(bundle, ["csv", "records", "svg"], tmp_path)
        names = {p.name for p in files}
        assert names == {
            "localization_summary.csv",
            "failures.csv",
            "localization_results.jsonl",
            "recall_distribution.svg",
            "iou_shares.svg",
        }
        # hand computation: 6 samples, pos_c's gt box is disjoint from the
        # scripted reply, so 4 overlap; std_all of [1,1,1,1,0,0] = sqrt(2)/3
        summary = (tmp_path / "localization_summary.csv").read_text().splitlines()
        assert summary[1] == "P1,6,4,66.67,100.00,0.00,66.67,47.14,100.00"

    def test_empty_bundle_warns_and_writes_nothing(self, tmp_path, caplog):
        with caplog.at_level("WARNING"):
            files = emit_report(ReportBundle(), ["csv", "records", "svg"], tmp_path)
        assert files == []
        assert "empty bundle" in caplog.text


class TestRerender:
    def test_binary_rerender_is_byte_identical(self, small_manifest, tmp_path):
        bundle = make_binary_bundle(small_manifest)
        out = tmp_path / "out"
        emit_report(bundle, ["csv", "records", "svg"], out)
        before = {p.name: p.read_bytes() for p in out.iterdir()}
        rerender(out, ["csv", "records", "svg"])
        after = {p.name: p.read_bytes() for p in out.iterdir()}
        assert before == after

    def test_comparison_rerender_is_byte_identical(self, small_manifest, tmp_path):
        scenes = load_manifest(small_manifest)
        script = {}
        for prompt_id in ("P1", "P2", "P3"):
            script.update(localization_script(scenes, GT_TEMPLATE, prompt_id, runs=2))
        comparison = run_prompt_comparison(
            scenes, ("P1", "P2", "P3"), Gateway(MockBackend(script)), CONFIG
        )
        all_results = [r for pid in comparison.prompt_ids for r in comparison.runs[pid].results]
        bundle = ReportBundle(
            comparison=comparison,
            consistency=analyze_run_consistency(all_results),
            labels={r.scene_id: r.has_pedestrian for r in scenes},
            lowlight={r.scene_id: False for r in scenes},
        )
        out = tmp_path / "out"
        emit_report(bundle, ["csv", "records", "svg"], out)
        before = {p.name: p.read_bytes() for p in out.iterdir()}
        rerender(out, ["csv", "records", "svg"])
        after = {p.name: p.read_bytes() for p in out.iterdir()}
        assert before == after

    def test_v2v_rerender_is_byte_identical(self, small_manifest, tmp_path):
        scenes = load_manifest(small_manifest)
        ego = VehicleAgent("ego", Role.EGO)
        remotes = [VehicleAgent("vehicle_a", Role.REMOTE, current_frame="pos_a")]
        script = {script_key("pos_a", "P1", 0): {"text": GT_TEMPLATE}}
        transcript = run_dialogue(
            ego, remotes, scenes, "P1", Gateway(MockBackend(script)),
            LinkModel(rate=1_000_000, overhead=0.1), QueryParams(backoff_base=0.0),
        )
        out = tmp_path / "out"
        emit_report(ReportBundle(transcript=transcript), ["csv", "records"], out)
        before = {p.name: p.read_bytes() for p in out.iterdir()}
        rerender(out, ["csv", "records"])
        after = {p.name: p.read_bytes() for p in out.iterdir()}
        assert before == after

    def test_rerender_requires_known_files(self, tmp_path):
        (tmp_path / "notes.txt").write_text("hello")
        with pytest.raises(ReportError):
            rerender(tmp_path, ["csv"])

    def test_rerender_missing_dir(self, tmp_path):
        with pytest.raises(ReportError):
            rerender(tmp_path / "ghost", ["csv"])
