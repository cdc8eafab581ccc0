import csv
import hashlib
import json
from pathlib import Path

import pytest

from mpqplan.cli import main
from mpqplan.pareto import FRONTIER_HEADER, non_dominated, read_frontier_csv
from mpqplan.proxy_nas import read_history, synthetic_space

FAST = ["--train-epochs", "6", "--probes", "16", "--profile-batch", "128"]


def run(*argv):
    return main([str(a) for a in argv])


def digests(folder: Path, names):
    return {n: hashlib.sha256((folder / n).read_bytes()).hexdigest() for n in names}


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run("make-toy", "--out-dir", out, "--samples", 240) == 0
    assert run("profile", "--out-dir", out, "--descriptor", out / "model.json", "--data", out / "data.mpqd", *FAST) == 0
    return out


def _model(out):
    return ["--descriptor", out / "model.json"]


def test_profile_rerun_is_byte_identical(run_dir, tmp_path):
    for name in ("model.json", "data.mpqd"):
        (tmp_path / name).write_bytes((run_dir / name).read_bytes())
    assert run("profile", "--out-dir", tmp_path, "--descriptor", tmp_path / "model.json",
               "--data", tmp_path / "data.mpqd", *FAST) == 0
    names = ["profile.json", "params.f8"]
    assert digests(tmp_path, names) == digests(run_dir, names)


def test_missing_descriptor_exit_code(tmp_path, capsys):
    code = run("profile", "--out-dir", tmp_path, "--descriptor", tmp_path / "nope.json", "--data", tmp_path / "x")
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "E_DESCRIPTOR_NOT_FOUND"


def test_generous_budget_gives_uniform_max(run_dir, tmp_path):
    assert run("plan", "--out-dir", tmp_path, "--profile", run_dir / "profile.json", *_model(run_dir),
               "--size-mb", 1e6) == 0
    plan = json.loads((tmp_path / "plan.json").read_text())
    assert {a["bits"] for a in plan["assignment"]} == {8}


def test_brute_force_agrees(run_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    common = ["--profile", run_dir / "profile.json", *_model(run_dir), "--level", "low"]
    assert run("plan", "--out-dir", a, *common) == 0
    assert run("plan", "--out-dir", b, *common, "--brute-force") == 0
    assert (a / "plan.json").read_bytes() == (b / "plan.json").read_bytes()


def test_infeasible_budget_exit_code(run_dir, tmp_path, capsys):
    code = run("plan", "--out-dir", tmp_path, "--profile", run_dir / "profile.json", *_model(run_dir),
               "--size-mb", 1e-9)
    assert code == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "E_INFEASIBLE" and "size" in json.dumps(err)


def test_pareto_outputs(run_dir):
    assert run("pareto", "--out-dir", run_dir, "--profile", run_dir / "profile.json", *_model(run_dir),
               "--objectives", "size,bops") == 0
    with open(run_dir / "frontier.csv") as fh:
        assert next(csv.reader(fh)) == FRONTIER_HEADER
    points = read_frontier_csv(run_dir / "frontier.csv")
    vecs = [(p.perturbation, p.cost.size_mb, p.cost.bops) for p in points]
    assert len(non_dominated(vecs, [()] * len(vecs))) == len(vecs)
    report = json.loads((run_dir / "pareto_report.json").read_text())
    assert report["layers"] == 4
    assert report["space_count"] == {"bit_space": 3**4, "schedule_space": 75}
    assert (run_dir / "frontier.png").stat().st_size > 0


def test_synthetic_search_and_resume(tmp_path):
    args = ["search", "--synthetic", "--M", 64, "--N", 8, "--K", 2, "--rounds", 2]
    assert run(*args, "--out-dir", tmp_path / "a") == 0
    hist = (tmp_path / "a" / "history.jsonl").read_text().splitlines()
    assert len(hist) == 8 + 2 * 2
    (tmp_path / "partial.jsonl").write_text("\n".join(hist[:9]) + "\n" + hist[9][:15])
    assert run(*args, "--out-dir", tmp_path / "b", "--resume", tmp_path / "partial.jsonl") == 0
    meta = json.loads((tmp_path / "b" / "search.meta.json").read_text())
    assert meta["evaluator_calls"] == {"full": 3, "short": 0}
    for name in ("history.jsonl", "best_config.json", "search.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len(read_history(tmp_path / "b" / "history.jsonl", synthetic_space())) == 12


def test_quantize_eval(run_dir, tmp_path):
    assert run("plan", "--out-dir", tmp_path, "--profile", run_dir / "profile.json", *_model(run_dir)) == 0
    assert run("quantize-eval", "--out-dir", tmp_path, *_model(run_dir), "--data", run_dir / "data.mpqd",
               "--params", run_dir / "params.f8", "--plan", tmp_path / "plan.json") == 0
    res = json.loads((tmp_path / "quantize_eval.json").read_text())
    assert 0 <= res["plan_accuracy"] <= 1


def test_report_marks_absent_stages(run_dir, tmp_path):
    assert run("report", "--out-dir", tmp_path / "r1", "--run-dir", tmp_path) == 0
    rep = json.loads((tmp_path / "r1" / "report.json").read_text())
    assert all(sec["status"] == "absent" for sec in rep["sections"].values())
    assert run("report", "--out-dir", run_dir) == 0
    rep = json.loads((run_dir / "report.json").read_text())
    assert rep["sections"]["profile"]["status"] == "present"
    for fig in ("sensitivity.png", "frontier.png"):
        assert (run_dir / fig).stat().st_size > 0
    assert "frontier" in (run_dir / "report.md").read_text()
