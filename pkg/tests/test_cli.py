import csv
import json

import numpy as np
import pytest

from glober.cli import detect_grid, main, read_table


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture
def data_1d(tmp_path):
    rng = np.random.default_rng(0)
    x = np.linspace(0, 1, 50)
    y = np.abs(x - 0.4) + 0.01 * rng.normal(size=50)
    return _write_csv(tmp_path / "train.csv", ["x", "y"], zip(x, y))


def test_fit_and_predict_1d(data_1d, tmp_path, capsys):
    model = tmp_path / "m.json"
    assert main(["fit", str(data_1d), "--out", str(model), "--grid-size", "20"]) == 0
    assert "mode=1d" in capsys.readouterr().out
    info = json.loads(model.read_text())
    assert info["dims"] == 1 and info["provenance"]["config"]["path"]["grid_size"] == 20

    pts = _write_csv(tmp_path / "pts.csv", ["x", "tag"], [[0.0, "a"], [0.5, "b"]])
    out = tmp_path / "pred.csv"
    assert main(["predict", str(model), str(pts), "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["x", "tag", "prediction"]
    assert rows[2][:2] == ["0.5", "b"] and len(rows) == 3


def test_missing_value_names_row(tmp_path, capsys):
    path = _write_csv(tmp_path / "bad.csv", ["x", "y"], [[0, 1], [0.5, ""], [1, 2]])
    assert main(["fit", str(path), "--out", str(tmp_path / "m.json")]) == 1
    err = capsys.readouterr().err
    assert "row 2" in err and "'y'" in err
    assert not (tmp_path / "m.json").exists()


@pytest.mark.parametrize("field, message", [("abc", "non-numeric"), ("inf", "non-finite")])
def test_bad_values_rejected(tmp_path, field, message):
    path = _write_csv(tmp_path / "bad.csv", ["x", "y"], [[0, 1], [field, 2]])
    with pytest.raises(ValueError, match=message):
        read_table(path)


def test_comment_lines_are_skipped(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("# produced by hand\nx,y\n0,1\n# middle\n1,2\n")
    header, values, _ = read_table(path)
    assert header == ["x", "y"] and values.tolist() == [[0, 1], [1, 2]]


def test_detect_grid():
    ax = np.array([0.0, 0.5, 1.0])
    g = np.array([[a, b] for a in ax for b in ax[:2]])
    assert [a.tolist() for a in detect_grid(g)] == [ax.tolist(), [0.0, 0.5]]
    assert detect_grid(g[:-1]) is None
    assert detect_grid(np.column_stack([g, g[:, :1]])) is None


def test_auto_mode_logs_grid_choice(tmp_path, capsys, caplog):
    caplog.set_level("INFO", logger="glober")
    ax = np.linspace(0, 1, 8)
    rows = [[a, b, a * b + a**2] for a in ax for b in ax]
    path = _write_csv(tmp_path / "g.csv", ["x1", "x2", "y"], rows)
    model = tmp_path / "m.json"
    assert main(["-v", "fit", str(path), "--out", str(model), "--grid-size", "10"]) == 0
    captured = capsys.readouterr()
    assert "grid detected" in caplog.text and "mode=grid" in captured.out


def test_grid_mode_requires_grid(tmp_path, capsys):
    rng = np.random.default_rng(2)
    rows = np.column_stack([rng.random((40, 2)), rng.random(40)])
    path = _write_csv(tmp_path / "s.csv", ["x1", "x2", "y"], rows)
    assert main(["fit", str(path), "--mode", "grid", "--out", str(tmp_path / "m.json")]) == 1
    assert "cartesian grid" in capsys.readouterr().err


@pytest.fixture
def fitted(data_1d, tmp_path):
    model = tmp_path / "m.json"
    main(["fit", str(data_1d), "--out", str(model), "--grid-size", "10"])
    return model


def test_predict_empty_input(fitted, tmp_path, capsys):
    pts = tmp_path / "empty.csv"
    pts.write_text("x\n")
    assert main(["predict", str(fitted), str(pts)]) == 0
    assert capsys.readouterr().out == "x,prediction\n"


def test_predict_out_of_domain_lists_rows(fitted, tmp_path, capsys):
    pts = _write_csv(tmp_path / "p.csv", ["x"], [[0.2], [1.5], [0.3], [-1]])
    out = tmp_path / "pred.csv"
    assert main(["predict", str(fitted), str(pts), "--out", str(out)]) == 1
    assert "rows 2, 4" in capsys.readouterr().err
    assert not out.exists()


def test_bench_is_byte_identical(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        argv = ["bench", "--experiment", "f1-noise", "--reps", "1", "--seed", "7",
                "--schedule", "20", "40", "--out", str(out)]
        assert main(argv) == 0
        outs.append({p.name: p.read_bytes() for p in out.iterdir()})
    assert outs[0] == outs[1]
    assert set(outs[0]) == {"results.csv", "summary.csv", "errors.csv"}


def test_bench_unknown_experiment(tmp_path, capsys):
    assert main(["bench", "--experiment", "f7", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "unknown experiment" in err and "f1-noise" in err
