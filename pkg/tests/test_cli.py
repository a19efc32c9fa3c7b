import csv
import json

import numpy as np
import pytest

from qrgmm.cli import main
from qrgmm.core import SeededRng, read_dataset_csv
from qrgmm.persistence import load_model
from qrgmm.testbeds import BIVARIATE, TP1, sample_dataset


def _column(path, j=0):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return np.array([float(r[j]) for r in rows[1:]])


def test_pipeline(tmp_path, capsys):
    data, model, samples, report = (tmp_path / n for n in ("d.csv", "m.json", "s.csv", "r.json"))
    assert main(["simulate-testbed", "--problem", "tp1", "--n", "3000", "--seed", "4", "--out", str(data)]) == 0
    ds = read_dataset_csv(data, add_intercept=True)
    ref = sample_dataset(TP1, 3000, SeededRng(4))
    assert np.array_equal(ds.design, ref.design) and np.array_equal(ds.response, ref.response)

    assert main(["fit", "--data", str(data), "--add-intercept", "--out", str(model)]) == 0
    assert load_model(model).m == 54

    args = ["generate", "--model", str(model), "--x", "6,1,2", "--add-intercept", "--K", "20000", "--seed", "3"]
    assert main(args + ["--out", str(samples)]) == 0
    y = _column(samples)
    assert y.size == 20000 and abs(np.median(y) - 14) < 0.3

    assert main(["evaluate", "--samples", str(samples), "--problem", "tp1", "--x", "6,1,2",
                 "--out", str(report)]) == 0
    rep = json.loads(report.read_text())
    assert rep["y1"]["ks"] < 0.05

    # same seed, same samples
    other = tmp_path / "s2.csv"
    assert main(args + ["--out", str(other)]) == 0
    assert samples.read_bytes() == other.read_bytes()


def test_two_sample_evaluate(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path, shift in ((a, 0.0), (b, 1.0)):
        path.write_text("y1\n" + "\n".join(str(v + shift) for v in range(10)) + "\n")
    assert main(["evaluate", "--samples", str(a), "--reference", str(b)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["y1"]["wasserstein"] == 1.0 and rep["y1"]["ks"] == 0.1


def test_multi_output_fit_and_generate(tmp_path, capsys):
    data, model = tmp_path / "d.csv", tmp_path / "m.json"
    sample_dataset(BIVARIATE, 2000, SeededRng(1), csv_path=data)
    assert main(["fit", "--data", str(data), "--add-intercept", "--m", "20", "--out", str(model)]) == 0
    assert main(["generate", "--model", str(model), "--x", "1,3,1", "--K", "50"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "y1,y2" and len(lines) == 51


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "m.json")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,y1\n1,nan\n")
    assert main(["fit", "--data", str(bad), "--out", str(tmp_path / "m.json")]) == 2
    assert main(["generate", "--model", str(bad)]) == 2
    assert main(["simulate-testbed"]) == 2
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"kind": "convergence", "n_grid": [-5]}))
    assert main(["experiment", "convergence", "--config", str(cfgfile)]) == 2
    assert "error" in capsys.readouterr().err


def test_wrong_format_version_exit_code(tmp_path, capsys):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"format_version": 99, "kind": "qrgmm"}))
    assert main(["generate", "--model", str(path), "--x", "1"]) == 2


def test_numerical_failure_exit_code(tmp_path, capsys):
    # duplicated covariate column: rank-deficient design
    data = tmp_path / "d.csv"
    rows = ["x1,x2,y1"] + [f"{i},{i},{i % 3}" for i in range(20)]
    data.write_text("\n".join(rows) + "\n")
    assert main(["fit", "--data", str(data), "--add-intercept", "--m", "4", "--out", str(tmp_path / "m.json")]) == 3
    assert "numerical" in capsys.readouterr().err


def test_experiment_with_config(tmp_path, capsys):
    cfgfile, out = tmp_path / "c.json", tmp_path / "res" / "conv.csv"
    cfgfile.write_text(json.dumps({"kind": "convergence", "n_grid": [400], "replications": 1, "K": 2000}))
    assert main(["experiment", "convergence", "--config", str(cfgfile), "--seed", "7", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("n,m,mean_ks") and len(lines) == 2
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["config"]["seed"] == 7 and side["config"]["K"] == 2000


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as info:
        main(["experiment", "figure9"])
    assert info.value.code == 2
