import argparse
from pathlib import Path

import numpy as np
import pytest

from app.api.common import parse_grid, parse_lambda
from app.core.config import settings
from app.main import main
from app.utils.io import read_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_parse_lambda():
    assert parse_lambda("0.8pi") == pytest.approx((0.8 * np.pi) ** 2)
    assert parse_lambda("pi") == pytest.approx(np.pi ** 2)
    assert parse_lambda("6.25") == 6.25
    with pytest.raises(argparse.ArgumentTypeError):
        parse_lambda("lots")


def test_parse_grid():
    assert parse_grid("0.1, 1,10") == [0.1, 1.0, 10.0]
    assert parse_grid("log:1e-3:1e-1:3") == pytest.approx([1e-3, 1e-2, 1e-1])
    with pytest.raises(argparse.ArgumentTypeError):
        parse_grid("log:0:1:3")
    with pytest.raises(argparse.ArgumentTypeError):
        parse_grid("a,b")


def test_modes(capsys):
    code, out = run(capsys, "modes", "--lambda", "0.8pi", "--dtn-terms", "5")
    assert code == 0
    assert "# J=1" in out.splitlines()
    rows = read_csv(out)
    assert len(rows) == 5
    assert [int(r["propagating"]) for r in rows] == [1, 0, 0, 0, 0]


def test_threshold_lambda_exits_with_config_code(capsys):
    code, out = run(capsys, "modes", "--lambda", "1pi")
    assert code == 1
    assert out == ""


def test_missing_config_exits_with_config_code(capsys, tmp_path):
    code, _ = run(capsys, "smatrix", "--lambda", "0.8pi", "--config", str(tmp_path / "nowhere.toml"))
    assert code == 1


def test_oracle_slab_matches_closed_form(capsys):
    code, out = run(capsys, "oracle", "slab", "--lambda", "0.8pi", "--eta", "5", "--samples", "5")
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 5
    assert float(rows[0]["re_R"]) == pytest.approx(0.52097660982470329, abs=1e-12)
    assert float(rows[0]["im_R"]) == pytest.approx(-0.010113971147836104, abs=1e-12)


def test_smatrix_on_straight_guide(capsys, tmp_path):
    report = tmp_path / "straight.json"
    code, out = run(capsys, "smatrix", "--lambda", "0.8pi", "--h", "0.1", "--json", str(report))
    assert code == 0
    row = read_csv(out)[0]
    assert complex(float(row["re_s_00"]), float(row["im_s_00"])) == pytest.approx(1.0, abs=1e-4)
    assert '"provenance"' in report.read_text()


def test_sweep_output_is_sorted_and_repeatable(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (first, second):
        code = main(["sweep", "--lambda", "0.8pi", "--config", str(CONFIGS / "slab.toml"), "--h", "0.1",
                     "--etas", "5,0,0.5", "--output", str(path)])
        assert code == 0
    etas = [float(r["eta"]) for r in read_csv(first.read_text())]
    assert etas == [0.0, 0.5, 5.0]
    assert read_csv(first.read_text()) == read_csv(second.read_text())


def test_sweep_needs_etas(capsys):
    code, _ = run(capsys, "sweep", "--lambda", "0.8pi", "--h", "0.1", "--etas", "")
    assert code == 1


def test_breached_postcondition_exits_with_validation_code(capsys, monkeypatch):
    monkeypatch.setattr(settings, "SYMMETRY_TOL", -1.0)
    code, out = run(capsys, "smatrix", "--lambda", "0.8pi", "--h", "0.1")
    assert code == 4
    # the row is still written before the run is rejected
    assert len(read_csv(out)) == 1
