import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from datareel.cli import main
from datareel.errors import PreconditionError, StageError
from datareel.pipeline import (
    STAGES,
    ManifestNotFound,
    ProjectManifest,
    UnknownStage,
    inspect_stage,
    run_pipeline,
    validate_project,
)
from datareel.runtime import RepairExhausted
from conftest import STOCK_COMPANIES, TRANSCRIPTS


@pytest.fixture(scope="module")
def completed_project(tmp_path_factory):
    from datareel.pipeline import ProjectConfig

    out = tmp_path_factory.mktemp("project")
    config = ProjectConfig(
        input_csv=str(Path(__file__).parent / "data" / "stocks.csv"),
        output_dir=str(out),
        title="Weekly Stock Prices of Four IT Companies",
        mock_mode=True,
        transcripts=dict(TRANSCRIPTS),
        export="both",
    )
    manifest = run_pipeline(config)
    return out, manifest


class TestRunPipeline:
    def test_all_stages_ok_in_order(self, completed_project):
        _, manifest = completed_project
        assert [s["name"] for s in manifest.stages] == list(STAGES)
        assert all(s["status"] == "ok" for s in manifest.stages)

    def test_all_artifacts_hashed_and_present(self, completed_project):
        out, manifest = completed_project
        assert manifest.verify(out) == []

    def test_missing_input_fails_before_any_stage(self, mock_project_config, tmp_path):
        config = mock_project_config(input_csv=str(tmp_path / "nope.csv"))
        with pytest.raises(PreconditionError):
            run_pipeline(config)
        assert not (Path(config.output_dir) / "manifest.json").exists()

    def test_designer_exhaustion_leaves_partial_manifest(self, mock_project_config, tmp_path):
        # a designer transcript whose replies never validate
        bad = tmp_path / "bad_designer.json"
        bad.write_text(json.dumps([
            {"reply": "{\"nope\": 1}"}, {"reply": "{\"nope\": 2}"},
            {"reply": "{\"nope\": 3}"},
        ]))
        config = mock_project_config(
            transcripts={**TRANSCRIPTS, "designer": str(bad)},
            output_dir=str(tmp_path / "failing"),
        )
        with pytest.raises(StageError) as err:
            run_pipeline(config)
        assert err.value.stage == "designer"
        assert isinstance(err.value.cause, RepairExhausted)
        manifest = ProjectManifest.load(Path(config.output_dir) / "manifest.json")
        names = [s["name"] for s in manifest.stages]
        assert names == ["ingest", "description", "analyst", "base_render", "designer"]
        statuses = {s["name"]: s["status"] for s in manifest.stages}
        assert statuses["base_render"] == "ok"
        assert statuses["designer"] == "failed"
        assert "RepairExhausted" in manifest.stage("designer")["error"]

    def test_case_study_shape(self, completed_project):
        out, _ = completed_project
        analyst = json.loads((out / "analyst.json").read_text())
        assert analyst["Visualization_Type"] == "line"
        assert any("Trend" in item["type"] for item in analyst["Insights"])
        bindings = json.loads((out / "bindings.json").read_text())
        series = {
            entry["series_key"]
            for entry in bindings["mark_index"].values()
            if "mark" in entry["roles"]
        }
        assert series == set(STOCK_COMPANIES)

    def test_rerun_is_byte_identical(self, completed_project, tmp_path, mock_project_config):
        out, _ = completed_project
        config = mock_project_config(output_dir=str(tmp_path / "again"), export="both")
        run_pipeline(config)
        for path in sorted(Path(out).iterdir()):
            if path.name == "manifest.json":
                continue
            other = Path(config.output_dir) / path.name
            assert other.read_bytes() == path.read_bytes(), path.name


class TestInspect:
    def test_designer_report(self, completed_project):
        out, _ = completed_project
        text = inspect_stage(out, "designer")
        assert "Highlight-one-and-fade-others (emphasis)" in text
        assert "Axes-fade-in (entrance)" in text

    def test_timeline_report(self, completed_project):
        out, _ = completed_project
        text = inspect_stage(out, "timeline")
        assert "duration: 14.7 s" in text
        assert "initially hidden" in text

    def test_unknown_stage(self, completed_project):
        out, _ = completed_project
        with pytest.raises(UnknownStage):
            inspect_stage(out, "nosuch")

    def test_manifest_not_found(self, tmp_path):
        with pytest.raises(ManifestNotFound):
            inspect_stage(tmp_path, "designer")


class TestValidateProject:
    def test_clean_project_passes(self, completed_project):
        out, _ = completed_project
        report = validate_project(out)
        assert report.passing

    def test_tampered_artifact_detected(self, completed_project, tmp_path):
        import shutil

        out, _ = completed_project
        copy = tmp_path / "copy"
        shutil.copytree(out, copy)
        target = copy / "analyst.json"
        payload = json.loads(target.read_text())
        payload["Narration"] = "Rewritten narration."
        target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        report = validate_project(copy)
        assert not report.passing
        codes = {v.code for v in report.violations}
        assert "artifact-hash" in codes


class TestCli:
    def _config_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({
            "output_dir": str(tmp_path / "proj"),
            "mock_mode": True,
            "transcripts": TRANSCRIPTS,
            "input_csv": "placeholder",
        }))
        return path

    def test_run_inspect_validate(self, tmp_path, stock_csv_path):
        runner = CliRunner()
        config = self._config_file(tmp_path)
        result = runner.invoke(main, [
            "run", "--input", str(stock_csv_path),
            "--title", "Weekly Stock Prices of Four IT Companies",
            "--config", str(config), "--export", "both",
        ])
        assert result.exit_code == 0, result.output
        assert "video: ok" in result.output

        result = runner.invoke(main, [
            "inspect", "--project", str(tmp_path / "proj"), "--stage", "analyst",
        ])
        assert result.exit_code == 0
        assert "visualization type: line" in result.output

        result = runner.invoke(main, ["validate", "--project", str(tmp_path / "proj")])
        assert result.exit_code == 0
        assert "all validators passed" in result.output

    def test_missing_input_exit_code_2(self, tmp_path):
        runner = CliRunner()
        config = self._config_file(tmp_path)
        result = runner.invoke(main, [
            "run", "--input", str(tmp_path / "absent.csv"), "--config", str(config),
        ])
        assert result.exit_code == 2

    def test_contract_failure_exit_code_3(self, tmp_path, stock_csv_path):
        bad = tmp_path / "bad_analyst.json"
        bad.write_text(json.dumps(
            [{"reply": "no json"}, {"reply": "still none"}, {"reply": "nope"}]
        ))
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({
            "output_dir": str(tmp_path / "proj"),
            "mock_mode": True,
            "transcripts": {**TRANSCRIPTS, "analyst": str(bad)},
            "input_csv": "placeholder",
        }))
        runner = CliRunner()
        result = runner.invoke(main, [
            "run", "--input", str(stock_csv_path), "--config", str(config_path),
        ])
        assert result.exit_code == 3

    def test_unknown_stage_exit_code_2(self, tmp_path, stock_csv_path):
        runner = CliRunner()
        config = self._config_file(tmp_path)
        runner.invoke(main, [
            "run", "--input", str(stock_csv_path), "--config", str(config),
        ])
        result = runner.invoke(main, [
            "inspect", "--project", str(tmp_path / "proj"), "--stage", "bogus",
        ])
        assert result.exit_code == 2
