"""Command-line interface: subcommand pipelines, config files, exit codes."""
import json

import pytest

from hasprofiler.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One simulated trace plus an extracted dataset shared by CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--scenario", "s1", "--reps", "1",
                 "--out", str(root), "--seed", "3",
                 "--video-duration", "200"]) == 0
    trace = root / "s1-r0.packets.csv"
    dataset = root / "buffer.csv"
    assert main(["extract", str(trace), "--task", "buffer",
                 "--out", str(dataset)]) == 0
    return root, trace, dataset


class TestSimulate:
    def test_writes_manifest(self, tmp_path, capsys):
        code, out, _ = run(capsys, "simulate", "--scenario", "web",
                           "--reps", "2", "--out", str(tmp_path),
                           "--video-duration", "60")
        assert code == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert len(manifest) == 2
        assert manifest[0]["seed"] != manifest[1]["seed"]

    def test_unknown_scenario_usage_error(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["simulate", "--scenario", "nope", "--out", "/tmp/x"])
        assert err.value.code == 2


class TestExtract:
    def test_flow_task(self, workspace, tmp_path, capsys):
        _, trace, _ = workspace
        out = tmp_path / "flow.csv"
        code, stdout, _ = run(capsys, "extract", str(trace),
                              "--task", "flow", "--out", str(out))
        assert code == 0 and out.exists()
        assert "samples" in stdout

    def test_missing_labels_is_data_error(self, tmp_path, capsys):
        bogus = tmp_path / "x.packets.csv"
        bogus.write_text("# client_ip=10.0.0.1\n")
        code, _, err = run(capsys, "extract", str(bogus),
                           "--out", str(tmp_path / "d.csv"))
        assert code == 1 and "label" in err

    def test_config_file_overrides_windows(self, workspace, tmp_path, capsys):
        _, trace, _ = workspace
        cfg = tmp_path / "cfg"
        cfg.write_text("tw = 1,5\nh_s = 200\n")
        out = tmp_path / "d.csv"
        code, _, _ = run(capsys, "extract", str(trace), "--task", "buffer",
                         "--out", str(out), "--config", str(cfg))
        assert code == 0
        header = [l for l in out.read_text().splitlines()
                  if not l.startswith("#")][0]
        assert "DLrate_5s" in header and "DLrate_20s" not in header


class TestTrainPredictEvaluate:
    def test_train_and_predict(self, workspace, tmp_path, capsys):
        root, trace, dataset = workspace
        model = tmp_path / "model.json"
        code, _, _ = run(capsys, "train", "--dataset", str(dataset),
                         "--model", "forest", "--n-trees", "5",
                         "--out", str(model))
        assert code == 0
        code, out, _ = run(capsys, "predict", "--model-file", str(model),
                           "--trace", str(trace))
        assert code == 0
        lines = [l for l in out.splitlines() if l]
        assert lines, "expected per-second predictions"
        t_w, fid, cls = lines[0].split(",")
        assert float(t_w) >= 1.0
        assert cls in ("Filling", "Steady", "Depleting", "Unclear")

    def test_evaluate_report(self, workspace, tmp_path, capsys):
        _, _, dataset = workspace
        report = tmp_path / "report.json"
        code, out, _ = run(capsys, "evaluate", "--dataset", str(dataset),
                           "--model", "knn", "--k", "5",
                           "--benchmark-reps", "1",
                           "--report", str(report))
        assert code == 0
        assert "overall accuracy" in out
        doc = json.loads(report.read_text())
        assert doc["k"] == 5

    def test_importance_lists_all_features(self, workspace, capsys):
        _, _, dataset = workspace
        code, out, _ = run(capsys, "importance", "--dataset", str(dataset),
                           "--n-trees", "5")
        assert code == 0
        assert len([l for l in out.splitlines() if l]) == 20

    def test_missing_file_is_data_error(self, capsys):
        code, _, err = run(capsys, "train", "--dataset", "/nonexistent.csv",
                           "--model", "knn", "--out", "/tmp/m.json")
        assert code == 1 and "error" in err

    def test_usage_error_exit_2(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["train"])        # missing required flags
        assert err.value.code == 2
