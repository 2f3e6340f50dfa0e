import json
import subprocess
import sys

import pytest

from hierforest.cli import main


def run(argv, capsys=None):
    code = main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return code, out


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def records(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["pipeline", "synth", "--n", "5000", "--seed", "3", "--out", str(d)]) == 0
    return d / "records.csv"


def test_simulate_table(tmp_path, capsys):
    code, out = run(["simulate", "--scenario", "linear", "--n", 200, "--b", 5, "--seed", 1,
                     "--out", tmp_path], capsys)
    assert code == 0
    rows = (tmp_path / "linear_table.csv").read_text().splitlines()
    assert [r.split(",")[1] for r in rows[1:]] == ["without_proxy", "with_proxy"]
    assert {"linear_with_proxy.svg", "linear_without_proxy.svg", "linear_protected.svg"} <= set(files(tmp_path))
    assert "linear" in out.out


def test_simulate_rerun_is_byte_identical(tmp_path):
    argv = ["simulate", "--scenario", "classification", "--n", 100, "--b", 2, "--seed", 4, "--n-trees", 50]
    assert run(argv + ["--out", tmp_path / "a"])[0] == 0
    assert run(argv + ["--out", tmp_path / "b", "--threads", 3])[0] == 0
    assert files(tmp_path / "a") == files(tmp_path / "b")


def test_missing_seed_is_usage_error(tmp_path, capsys):
    code, out = run(["simulate", "--scenario", "linear", "--out", tmp_path], capsys)
    assert code == 2
    assert "usage" in out.err and "--seed" in out.err


def test_bad_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--scenario", "cubic", "--seed", "1"])
    assert e.value.code == 2


def test_cluster_forced_k(tmp_path, records, capsys):
    code, out = run(["cluster", "--input", records, "--column", "incident_reason", "--k", 6,
                     "--out", tmp_path], capsys)
    assert code == 0
    lines = (tmp_path / "assignments.csv").read_text().splitlines()[1:]
    assert {l.rsplit(",", 2)[1] for l in lines} == {str(i) for i in range(1, 7)}
    assert (tmp_path / "dendrogram.svg").exists()


def test_cluster_k_zero(tmp_path, records):
    assert run(["cluster", "--input", records, "--k", 0, "--out", tmp_path])[0] == 2


def test_cluster_elbow_reported(tmp_path, records, capsys):
    code, out = run(["cluster", "--input", records, "--column", "clothing", "--out", tmp_path], capsys)
    assert code == 0
    k = int(out.out.split("k=")[1].split()[0])
    curve = (tmp_path / "elbow_curve.csv").read_text().splitlines()
    assert curve[0] == "k,within_cost" and len(curve) == 11
    assert 2 <= k <= 9


def test_cluster_missing_file(tmp_path):
    assert run(["cluster", "--input", tmp_path / "nope.csv", "--out", tmp_path])[0] == 1


def test_pipeline_reason(tmp_path, records, capsys):
    code, out = run(["pipeline", "reason", "--input", records, "--seed", 1, "--n-trees", 40,
                     "--out", tmp_path], capsys)
    assert code == 0
    rows = (tmp_path / "reason_accuracy.csv").read_text().splitlines()
    assert rows[0] == "arm,accuracy,n_test"
    assert [r.split(",")[0] for r in rows[1:]] == ["hier", "naive"]
    assert rows[1].split(",")[2] == rows[2].split(",")[2]


def test_pipeline_occurrence(tmp_path, records):
    argv = ["pipeline", "occurrence", "--input", records, "--seed", 2, "--n-trees", 40]
    assert run(argv + ["--out", tmp_path / "a"])[0] == 0
    assert run(argv + ["--out", tmp_path / "b"])[0] == 0
    a = files(tmp_path / "a")
    assert a == files(tmp_path / "b")
    assert set(a) == {"occurrence_metrics.csv", "forecast.csv", "forecast.svg"}
    metrics = a["occurrence_metrics.csv"].decode().splitlines()
    assert metrics[1].split(",")[-1] == metrics[2].split(",")[-1]
    assert a["forecast.csv"].decode().startswith("date,truth,pred_hier,lower_hier,upper_hier,")


def test_occurrence_with_one_day(tmp_path, capsys):
    p = tmp_path / "one.csv"
    p.write_text("sex,street,district,city,date,priors,race,skin_complexion,clothing,incident_reason\n"
                 "M,S,B2,Roxbury,2014-03-01,0,Black,Dark,hoodie,Theft\n"
                 "F,S,B2,Roxbury,2014-03-01,1,White,Light,vest,Drug\n")
    code, out = run(["pipeline", "occurrence", "--input", p, "--seed", 1, "--out", tmp_path / "o"], capsys)
    assert code == 1
    assert "error" in out.err


def test_malformed_records(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("sex,street\nM,S\n")
    assert run(["pipeline", "reason", "--input", p, "--seed", 1, "--out", tmp_path])[0] == 1


def test_config_file_and_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 300, "seed": 8, "link": 0.5}))
    assert run(["pipeline", "synth", "--config", cfg, "--out", tmp_path / "a"])[0] == 0
    assert len((tmp_path / "a" / "records.csv").read_text().splitlines()) == 301
    assert run(["pipeline", "synth", "--config", cfg, "--n", 50, "--out", tmp_path / "b"])[0] == 0
    assert len((tmp_path / "b" / "records.csv").read_text().splitlines()) == 51
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["pipeline", "synth", "--config", cfg, "--seed", 1])[0] == 2


def test_env_output_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("HIERFOREST_OUT", str(tmp_path / "envout"))
    assert run(["pipeline", "synth", "--n", 20, "--seed", 1])[0] == 0
    assert (tmp_path / "envout" / "records.csv").exists()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "hierforest", "pipeline", "synth", "--n", "10",
                        "--seed", "1", "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "records.csv").exists()
