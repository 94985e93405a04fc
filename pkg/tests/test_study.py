import csv
import json
from importlib import resources

import numpy as np
import pytest

from evopf.cli import main
from evopf.study import StudyResult, StudySpec, emit_csv, emit_plots, read_csv_solutions, run_study, voltage_series


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def single(network, scenario, tmp_path_factory):
    out = tmp_path_factory.mktemp("single")
    spec = StudySpec(model="fixed_power", penetration_levels=(0.5,), tou_scenarios=(2,), out=str(out))
    return run_study(spec, network, scenario), out


def test_spec_validation():
    with pytest.raises(ValueError):
        StudySpec(model="constant_impedance")
    with pytest.raises(ValueError):
        StudySpec(penetration_levels=(-0.1,))
    with pytest.raises(ValueError):
        StudySpec(tou_scenarios=(5,))
    assert len(StudySpec(model="both", tou_scenarios=(1, 2)).cells()) == 12
    assert StudySpec(tou_scenarios=()).cells()[0][2] == "file"


def test_row_counts(single):
    result, out = single
    assert len(rows(out / "voltages.csv")) == 1 * 1 * 24 * 33
    assert len(rows(out / "summary.csv")) == 33
    kinds = {r["entity_kind"] for r in rows(out / "dispatch.csv")}
    assert {"price", "grid_p", "grid_q", "solar_p", "ev_p", "ev_energy", "flow_p", "flow_q"} <= kinds


def test_summary_recomputed(single):
    result, out = single
    volts = rows(out / "voltages.csv")
    for r in rows(out / "summary.csv"):
        v = np.array([float(x["v_pu"]) for x in volts if x["bus"] == r["bus"]])
        assert float(r["v_min"]) == pytest.approx(v.min(), rel=1e-5)
        assert int(r["hours_below_095"]) == int(np.sum(v < 0.95))
        assert r["status"] == "optimal"


def test_cost_recomputed(single):
    result, out = single
    disp = rows(out / "dispatch.csv")
    price = {int(r["hour"]): float(r["value"]) for r in disp if r["entity_kind"] == "price"}
    grid = {int(r["hour"]): float(r["value"]) for r in disp if r["entity_kind"] == "grid_p"}
    cost = sum(price[h] * grid[h] for h in price)
    summary = rows(out / "summary.csv")
    assert float(summary[0]["cost_usd"]) == pytest.approx(cost, rel=1e-4)
    assert result.cells[0].solution.cost == pytest.approx(cost, rel=1e-4)


def test_emit_twice_identical(single, tmp_path):
    result, out = single
    emit_csv(result, tmp_path)
    for name in ("voltages.csv", "dispatch.csv", "summary.csv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_csv_roundtrip(single, network):
    result, out = single
    sols = read_csv_solutions(out, network)
    sol = sols[("fixed_power", 0.5, "2")]
    orig = result.cells[0].solution
    np.testing.assert_allclose(sol.v, orig.v, rtol=1e-5)
    np.testing.assert_allclose(sol.ev_power, orig.ev_power, rtol=1e-5, atol=1e-9)
    assert sorted(sol.lines) == sorted(orig.lines)
    for k, line in enumerate(sol.lines):
        np.testing.assert_allclose(sol.p_flow[:, k], orig.flow(*line)[0], rtol=1e-5, atol=1e-9)


def test_plot_series(sweep_fp, tmp_path):
    sub = StudyResult(sweep_fp.spec, [c for c in sweep_fp.cells if c.tou == "2"],
                      sweep_fp.network, sweep_fp.scenario)
    bus = voltage_series(sub, bus=17)
    assert len(bus) == 3 and all(len(y) == 24 for _, _, y in bus)
    hour = voltage_series(sub, hour=1)
    assert len(hour) == 3 and all(len(y) == 33 for _, _, y in hour)
    for _, x, y in hour:
        # voltage decays along the main feeder towards the far ends
        assert y[16] < y[5] < y[0] and y[32] < y[0]
    paths = emit_plots(sub, tmp_path, buses=(17, 33), hours=(1,))
    assert [p.name for p in paths] == ["voltage_bus17.png", "voltage_bus33.png", "voltage_hour1.png"]
    assert all(p.stat().st_size > 0 for p in paths)


def test_failed_cell_recorded(network, scenario):
    tight = network.with_bounds(v_min=1.04)
    result = run_study(StudySpec(penetration_levels=(0.5,)), tight, scenario)
    assert len(result.failed) == 1
    assert result.cells[0].status == "infeasible"
    assert result.summary()[0][-1] == "infeasible"


def test_cli_solve_and_verify(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--penetration", "0.25", "--out", str(out), "--verify"]) == 0
    report = json.loads((out / "verification.json").read_text())
    assert report[0]["report"]["passed"] is True
    assert main(["verify", "--out", str(out)]) == 0


def test_cli_failed_cell_exit_code(tmp_path):
    net = json.loads(resources.files("evopf").joinpath("data/ieee33.json").read_text())
    for b in net["buses"]:
        b["v_min"] = 1.04
    path = tmp_path / "tight.json"
    path.write_text(json.dumps(net))
    assert main(["solve", "--network", str(path), "--out", str(tmp_path / "o")]) == 1


def test_cli_input_errors(tmp_path, capsys):
    assert main(["solve", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"price": [1, 2, 3], "horizon": 24}')
    assert main(["solve", "--scenario", str(bad), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as err:
        main(["sweep", "--tou-scenario", "7", "--out", str(tmp_path)])
    assert err.value.code == 2
    assert "input error" in capsys.readouterr().err


def test_cli_dump(tmp_path):
    path = tmp_path / "prog.txt"
    assert main(["dump-program", "--penetration", "0", "--out", str(path)]) == 0
    assert path.read_text().startswith("# conic program:")
