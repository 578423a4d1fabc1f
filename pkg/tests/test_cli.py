import csv
import io
import json

import pytest

from metastable import bounds as bounds_mod
from metastable.bounds import BoundRecord, BoundsReport
from metastable.chain import save_chain
from metastable.cli import main
from metastable.generators import two_well


def _summary(text):
    head = text.split("\n\n")[0]
    return {r["key"]: r["value"] for r in csv.DictReader(io.StringIO(head))}


def _rows(text):
    return list(csv.DictReader(io.StringIO(text.split("\n\n")[1])))


@pytest.fixture
def pair_file(tmp_path, pair):
    path = tmp_path / "pair.json"
    save_chain(str(path), pair, ["a"])
    return str(path)


@pytest.fixture
def well_file(tmp_path, well8):
    chain, R = well8
    path = tmp_path / "well.json"
    save_chain(str(path), chain, R)
    return str(path)


def test_qsd_two_state(pair_file, capsys):
    assert main(["qsd", "--input", pair_file]) == 0
    out = capsys.readouterr().out
    assert float(_summary(out)["phi_star"]) == pytest.approx(0.2, abs=1e-15)
    rows = _rows(out)
    assert rows[0]["state"] == "a" and float(rows[0]["mu_star"]) == 1.0


def test_capacity_two_state(pair_file, capsys):
    assert main(["capacity", "--input", pair_file, "--kappa", "inf", "--lambda", "inf"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert float(rows[0]["capacity"]) == pytest.approx(0.12, rel=1e-14)


def test_floats_have_seventeen_digits(pair_file, capsys):
    main(["qsd", "--input", pair_file])
    value = _summary(capsys.readouterr().out)["phi_R"]
    assert value == format(float(value), ".17g")


def test_json_format_and_files(pair_file, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["qsd", "--input", pair_file, "--format", "json", "--out", str(out)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["command"] == "qsd"
    assert json.loads((out / "qsd.json").read_text()) == doc


def test_bounds_report_clean_exit(well_file, tmp_path, capsys):
    out = tmp_path / "b"
    assert main(["bounds-report", "--input", well_file, "--kappa", "0.1", "--lambda", "0.1", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert _summary(text)["violations"] == "0"
    assert all(r["holds"] in ("true", "") for r in _rows(text))
    assert (out / "bounds-report.csv").exists() and (out / "bounds-report_summary.csv").exists()


def test_bounds_report_violation_exit(well_file, monkeypatch, capsys):
    bad = BoundRecord("made-up", "1 <= 0", True, False, exact=1.0, upper=0.0)
    monkeypatch.setattr(bounds_mod, "bounds_report", lambda *a, **k: BoundsReport([bad], {}))
    assert main(["bounds-report", "--input", well_file]) == 4


def test_usage_and_data_errors(pair_file, tmp_path, capsys):
    assert main(["qsd"]) == 2
    assert main(["no-such-command"]) == 2
    assert main(["simulate-exit", "--input", pair_file, "--samples", "10"]) == 2
    assert main(["capacity", "--input", pair_file, "--kappa", "-1"]) == 2
    assert main(["qsd", "--input", str(tmp_path / "missing.json")]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["qsd", "--input", str(bad)]) == 3
    assert main(["qsd", "--input", pair_file, "--R", "zz"]) == 3
    capsys.readouterr()


def test_simulation_is_reproducible(well_file, tmp_path, capsys):
    outs = []
    for k, workers in enumerate(("1", "1", "2")):
        d = tmp_path / f"s{k}"
        assert main(["simulate-exit", "--input", well_file, "--samples", "200", "--seed", "3",
                     "--workers", workers, "--out", str(d)]) == 0
        outs.append((d / "simulate-exit.csv").read_bytes())
    capsys.readouterr()
    assert outs[0] == outs[1] == outs[2]


def test_simulate_transition(well_file, capsys):
    assert main(["simulate-transition", "--input", well_file, "--samples", "100", "--seed", "1",
                 "--lambda", "0.5"]) == 0
    assert float(_summary(capsys.readouterr().out)["mean"]) > 0


def test_thermalize_reports_envelope(tmp_path, capsys):
    chain, R = two_well(6, 2.0, 0.5)
    path = tmp_path / "six.json"
    save_chain(str(path), chain, R)
    assert main(["thermalize", "--input", str(path), "--samples", "500", "--seed", "1", "--kappa", "0.02",
                 "--lambda", "0.02", "--delta", "0.2"]) == 0
    text = capsys.readouterr().out
    assert float(_summary(text)["xi"]) < 1
    assert _summary(text)["tail_ok"] == "true"
    assert len(_rows(text)) == 4


def test_soft_sweep_endpoints(well_file, capsys):
    assert main(["soft-sweep", "--input", well_file]) == 0
    rows = _rows(capsys.readouterr().out)
    assert float(rows[0]["lambda"]) == 0.0 and float(rows[0]["tv_to_mu_R"]) == 0.0
    assert rows[-1]["lambda"] == "inf" and float(rows[-1]["tv_to_qsd"]) == 0.0


def test_model_cw_round_trip_is_bit_exact(tmp_path, capsys):
    d = tmp_path / "cw"
    assert main(["model-cw", "--N", "40", "--beta", "1.5", "--h", "0.05", "--mag", "--out", str(d)]) == 0
    summary = _summary(capsys.readouterr().out)
    assert main(["qsd", "--input", str(d / "chain.json")]) == 0
    again = _summary(capsys.readouterr().out)
    assert again["phi_star"] == summary["phi_star"]
    main(["qsd", "--input", str(d / "chain.json")])
    assert _summary(capsys.readouterr().out) == again


def test_model_wasp_and_validate(tmp_path, capsys):
    d = tmp_path / "w"
    assert main(["model-wasp", "--n", "2", "--out", str(d)]) == 0
    s = _summary(capsys.readouterr().out)
    assert s["states"] == str(2 * 27 - 1)
    assert main(["validate", "--input", str(d / "chain.json")]) == 0
    v = _summary(capsys.readouterr().out)
    assert float(v["spectral_gap"]) == pytest.approx(float(s["spectral_gap"]), rel=1e-12)
