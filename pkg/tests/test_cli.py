import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from bnassess import io as bio
from bnassess.cli import main

FAST = ["--chains", "2", "--burn-in", "30", "--iters", "60"]


def run(argv):
    return main([str(a) for a in argv])


def outputs_of(out: Path) -> dict:
    manifest = json.loads((out / "manifest.json").read_text())
    return {name: (out / name).read_bytes() for name in manifest["outputs"]}


def replay(out: Path) -> dict:
    before = outputs_of(out)
    manifest = json.loads((out / "manifest.json").read_text())
    assert main(manifest["argv"]) == 0
    after = outputs_of(out)
    assert manifest["outputs"] == json.loads((out / "manifest.json").read_text())["outputs"]
    return before, after


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    gen = root / "gen"
    assert run(["generate", "--sample-truth", "--n", 325, "--seed", 7, "--out", gen]) == 0
    cal = root / "cal"
    assert (
        run(["calibrate", "--responses", gen / "responses.csv", "--examinee-subset", 225,
             "--task-subset", 12, "--seed", 1, "--out", cal, *FAST])
        == 0
    )
    return root, gen, cal


class TestGenerate:
    def test_outputs(self, pipeline):
        _, gen, _ = pipeline
        rm = bio.load_responses(gen / "responses.csv")
        assert rm.shape == (325, 15)
        truth = bio.load_truth(gen / "truth.json")
        assert truth.seed == 7 and len(truth.theta_true) == 325
        manifest = json.loads((gen / "manifest.json").read_text())
        assert manifest["command"] == "generate"
        assert set(manifest["outputs"]) == {"responses.csv", "truth.json", "model.json"}

    def test_same_invocation_twice(self, tmp_path):
        for d in ("a", "b"):
            assert run(["generate", "--sample-truth", "--n", 20, "--seed", 3, "--out", tmp_path / d]) == 0
        for name in ("responses.csv", "truth.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_with_truth_file(self, pipeline, tmp_path):
        _, gen, _ = pipeline
        assert run(["generate", "--truth", gen / "truth.json", "--n", 325, "--seed", 7, "--out", tmp_path]) == 0
        assert (tmp_path / "responses.csv").read_bytes() == (gen / "responses.csv").read_bytes()
        assert bio.load_truth(tmp_path / "truth.json").pi_true == bio.load_truth(gen / "truth.json").pi_true

    def test_bad_model_path(self, tmp_path, capsys):
        assert run(["generate", "--model", tmp_path / "nope.json", "--sample-truth", "--out", tmp_path]) == 1
        assert "nope.json" in capsys.readouterr().err

    def test_needs_truth(self, tmp_path):
        assert run(["generate", "--out", tmp_path]) == 1


class TestCalibrate:
    def test_split_and_report(self, pipeline):
        _, _, cal = pipeline
        run_ = bio.load_run(cal / "run.json")
        assert run_.n_examinees == 225
        assert len(run_.task_ids) == 12
        assert bio.load_responses(cal / "heldout.csv").shape == (100, 15)
        report = (cal / "report.txt").read_text().splitlines()
        assert report[0].split() == ["Parameter", "State", "Mean", "SD", "alpha", "beta", "n", "Rhat"]
        assert len(report) == 1 + len(run_.parameter_names)
        assert all(n in run_.rhat for n in run_.parameter_names)

    def test_full_rows(self, pipeline, tmp_path, capsys):
        _, gen, _ = pipeline
        assert run(["calibrate", "--responses", gen / "responses.csv", "--out", tmp_path, "--format", "json", *FAST]) == 0
        doc = json.loads(capsys.readouterr().out)
        names = doc["parameter_names"]
        assert "lambda1" in names and "lambda2|0" in names and "lambda5|2" in names
        assert "lambdaWN|3[2]" in names
        assert sum(n.startswith("pi[") for n in names) == 30

    def test_task_id_list_and_draws(self, pipeline, tmp_path):
        _, gen, _ = pipeline
        argv = ["calibrate", "--responses", gen / "responses.csv", "--task-subset", "item1,item7,item15",
                "--save-draws", "--out", tmp_path, *FAST]
        assert run(argv) == 0
        back = bio.load_run(tmp_path / "run.json")
        assert back.task_ids == ("item1", "item7", "item15")
        assert back.draws.shape == (2, 60, len(back.parameter_names))

    def test_priors_override(self, pipeline, tmp_path):
        _, gen, _ = pipeline
        pri = tmp_path / "priors.json"
        pri.write_text(json.dumps({"format": "bnassess-priors", "version": 1, "lambda": {"lambda1": {"beta": [2, 2]}}}))
        assert run(["calibrate", "--responses", gen / "responses.csv", "--priors", pri, "--out", tmp_path / "o", *FAST]) == 0
        back = bio.load_run(tmp_path / "o" / "run.json")
        assert back.summaries["lambda1"].prior == (2.0, 2.0)

    def test_unknown_task(self, pipeline, tmp_path):
        _, gen, _ = pipeline
        assert run(["calibrate", "--responses", gen / "responses.csv", "--task-subset", "item99", "--out", tmp_path]) == 1

    def test_malformed_responses(self, tmp_path, capsys):
        p = tmp_path / "r.csv"
        p.write_text("examinee,item1\ne1,7\n")
        assert run(["calibrate", "--responses", p, "--out", tmp_path / "o"]) == 1
        assert ":2:" in capsys.readouterr().err

    def test_rhat_warning(self, pipeline, tmp_path, capsys):
        _, gen, _ = pipeline
        assert run(["calibrate", "--responses", gen / "responses.csv", "--out", tmp_path,
                    "--chains", 2, "--burn-in", 0, "--iters", 10]) == 0
        err = capsys.readouterr().err
        run_ = bio.load_run(tmp_path / "run.json")
        assert ("R-hat" in err) == (run_.max_rhat > 1.1)


class TestScore:
    def test_table_layout(self, pipeline, capsys):
        _, gen, cal = pipeline
        capsys.readouterr()
        assert run(["score", "--run", cal / "run.json", "--model", cal / "model.json",
                    "--responses", gen / "responses.csv", "--examinee", "e001"]) == 0
        captured = capsys.readouterr()
        lines = captured.out.splitlines()
        assert lines[0].split() == ["SKILL", "PRIOR", "PROB.", "POSTERIOR", "PROB."]
        assert len(lines) == 6
        # the response file has 15 tasks, the startup model 12
        assert "ignoring responses" in captured.err

    def test_empty_responses(self, pipeline, capsys):
        _, _, cal = pipeline
        capsys.readouterr()
        assert run(["score", "--params", cal / "params.json", "--model", cal / "model.json", "--format", "json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        for row in doc["skills"]:
            assert row["prior"] == row["posterior"]

    def test_all_correct(self, pipeline, capsys):
        _, _, cal = pipeline
        model = bio.load_model(cal / "model.json")
        capsys.readouterr()
        x = ",".join(["1"] * len(model.task_ids))
        assert run(["score", "--params", cal / "params.json", "--model", cal / "model.json", "--x", x, "--format", "json"]) == 0
        for row in json.loads(capsys.readouterr().out)["skills"]:
            assert row["posterior"] >= row["prior"]

    def test_wrong_length(self, pipeline):
        _, _, cal = pipeline
        assert run(["score", "--params", cal / "params.json", "--model", cal / "model.json", "--x", "1,0"]) == 1

    def test_uncalibrated_task(self, pipeline):
        _, gen, cal = pipeline
        # the startup run covers 12 tasks; the full 15-task model has 3 without pi
        assert run(["score", "--params", cal / "params.json", "--responses", gen / "responses.csv"]) == 1

    def test_needs_parameters(self):
        assert run(["score"]) == 1


class TestCalibrateNew:
    @pytest.fixture(scope="class")
    @classmethod
    def online(cls, pipeline):
        root, gen, cal = pipeline
        out = root / "new"
        code = run(["calibrate-new", "--old-run", cal / "run.json", "--responses", cal / "heldout.csv",
                    "--seed", 2, "--out", out, *FAST])
        return code, out, cal

    def test_outputs(self, online):
        code, out, cal = online
        assert code == 0
        full = bio.load_run(out / "run_full.json")
        eb = bio.load_run(out / "run_eb.json")
        old = bio.load_run(cal / "run.json")
        new = sorted(set(full.task_ids) - set(old.task_ids))
        assert len(new) == 3
        assert sorted(eb.task_ids) == new
        # eb report lists new tasks only
        eb_rows = (out / "report_eb.txt").read_text().splitlines()[1:]
        assert len(eb_rows) == 6
        assert all(any(t + "]" in r for t in new) for r in eb_rows)
        comp = (out / "comparison.txt").read_text()
        assert "full mean" in comp and "eb mean" in comp

    def test_missing_old_run(self, pipeline, tmp_path):
        _, _, cal = pipeline
        assert run(["calibrate-new", "--old-run", tmp_path / "gone.json", "--responses", cal / "heldout.csv",
                    "--out", tmp_path]) == 1


class TestCatSim:
    def test_selectors(self, tmp_path, capsys):
        assert run(["cat-sim", "--sessions", 30, "--selector", "both", "--max-items", 200, "--out", tmp_path, "--seed", 4]) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        sel = summary["selectors"]
        assert sel["adaptive"]["mean_items"] < sel["random"]["mean_items"]
        assert (tmp_path / "traces_adaptive.csv").exists() and (tmp_path / "traces_random.csv").exists()

    def test_max_items_respected(self, tmp_path):
        assert run(["cat-sim", "--sessions", 10, "--stop-sd", 0.3, "--max-items", 30, "--out", tmp_path]) == 0
        for trace in bio.load_traces(tmp_path / "traces_adaptive.csv"):
            assert len(trace) <= 30

    def test_single_session_reproducible(self, tmp_path):
        for d in ("a", "b"):
            assert run(["cat-sim", "--sessions", 1, "--true-theta", 1.0, "--seed", 9, "--out", tmp_path / d]) == 0
        a = (tmp_path / "a" / "traces_adaptive.csv").read_bytes()
        assert a == (tmp_path / "b" / "traces_adaptive.csv").read_bytes()
        assert len(bio.load_traces(tmp_path / "a" / "traces_adaptive.csv")) == 1

    def test_pool_file(self, tmp_path):
        pool = tmp_path / "pool.csv"
        pool.write_text("id,beta\na,-1\nb,0\nc,1\n")
        assert run(["cat-sim", "--pool", pool, "--sessions", 2, "--max-items", 3, "--out", tmp_path / "o"]) == 0
        # exhausting the pool before a stop condition is an error
        assert run(["cat-sim", "--pool", pool, "--sessions", 2, "--out", tmp_path / "o"]) == 1
        pool.write_text("id,beta\na,\n")
        assert run(["cat-sim", "--pool", pool, "--sessions", 2, "--out", tmp_path / "o"]) == 1

    def test_bad_theta(self, tmp_path):
        assert run(["cat-sim", "--true-theta", "high", "--out", tmp_path]) == 1


class TestReport:
    def test_text_and_json(self, pipeline, capsys):
        _, _, cal = pipeline
        capsys.readouterr()
        assert run(["report", "--run", cal / "run.json", "--run", cal / "run.json", "--format", "json"]) == 0
        docs = json.loads(capsys.readouterr().out)
        assert len(docs) == 2 and docs[0]["format"] == "bnassess-run"
        assert run(["report", "--run", cal / "run.json"]) == 0
        assert capsys.readouterr().out.startswith("Parameter")


class TestContract:
    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as e:
            main(["calibrate", "--bogus"])
        assert e.value.code == 1

    def test_help_lists_flags(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["calibrate", "--help"])
        assert e.value.code == 0
        text = capsys.readouterr().out
        for flag in ("--seed", "--out", "--format", "--chains", "--burn-in", "--iters", "--examinee-subset", "--task-subset"):
            assert flag in text

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "bnassess", "report", "--run", str(tmp_path / "missing.json")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 1
        assert "missing.json" in proc.stderr


class TestManifestReplay:
    def test_generate(self, pipeline):
        _, gen, _ = pipeline
        before, after = replay(gen)
        assert before == after

    def test_calibrate(self, pipeline):
        _, _, cal = pipeline
        before, after = replay(cal)
        assert before == after

    def test_cat_sim(self, tmp_path):
        assert run(["cat-sim", "--sessions", 5, "--selector", "both", "--out", tmp_path]) == 0
        before, after = replay(tmp_path)
        assert before == after
