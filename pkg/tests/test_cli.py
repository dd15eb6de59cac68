import csv
import json
import re

import pytest
from hypothesis import given, settings, strategies as st

from cryospike.cli import TRACE_HEADER, RunConfig, main
from cryospike.neuron import NeuronConfig

SHORT = {"drive": {"t_end_us": 2.0}}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


def test_simulate_outputs(tmp_path):
    cfg = write(tmp_path / "c.json", SHORT)
    code = run("simulate", "--config", cfg, "--out", tmp_path / "t.csv",
               "--summary", tmp_path / "s.json", "--events", tmp_path / "e.jsonl")
    assert code == 0
    s = json.loads((tmp_path / "s.json").read_text())
    for k in ("frequency_Hz", "amplitude_V", "avg_power_W", "energy_per_spike_J"):
        assert s[k] > 0
    assert s["no_spurious_programming"] is True
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t_s,v_out_V,v_ctrl_V,i_L_main_A,i_L_ctrl_A,mode_snw1,mode_snw2,state_sm1,state_sm2"
    assert tuple(lines[0].split(",")) == TRACE_HEADER
    ev = [json.loads(l) for l in (tmp_path / "e.jsonl").read_text().splitlines()]
    assert ev and set(ev[0]) == {"t", "device", "from", "to"}


def test_simulate_regime_error(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {"drive": {"i_bias_uA": 61}})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "t.csv") == 3
    assert "2*I_c" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {"drive": {"i_bias": 59}})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "t.csv") == 2
    assert "i_bias" in capsys.readouterr().err
    cfg = write(tmp_path / "d.json", {"wiring": {}})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "t.csv") == 2


def test_unknown_subcommand_and_flag(tmp_path):
    assert run("dance") == 2
    assert run("simulate", "--out", tmp_path / "t.csv", "--turbo") == 2


def test_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert run("simulate", "--config", p, "--out", tmp_path / "t.csv") == 2


def test_config_units_map_to_si():
    nc = RunConfig.from_obj({"snw_main": {"l_nw_nH": 12.5}, "sm2": {"r_lrs_mohm": 15.0},
                             "drive": {"i_bias_uA": 58.0}}).neuron()
    assert nc.snw_main.l_nw == pytest.approx(12.5e-9)
    assert nc.sm_main.r_lrs == pytest.approx(15e-3)
    assert nc.i_bias == pytest.approx(58e-6)
    assert RunConfig.from_obj({}).neuron() == NeuronConfig()


numbers = st.floats(1.0, 100.0, allow_nan=False)


@settings(max_examples=40)
@given(ib=numbers, lnw=numbers, state=st.sampled_from(["LRS", "HRS"]),
       vals=st.lists(numbers, min_size=1, max_size=4, unique=True))
def test_config_round_trip(ib, lnw, state, vals):
    obj = {"drive": {"i_bias_uA": min(ib, 59.0)}, "snw_ctrl": {"l_nw_nH": lnw},
           "sm1": {"state": state},
           "experiment": {"sweep": {"param": "L_NW", "values_nH": sorted(vals)},
                          "montecarlo": {"samples": 3}}}
    first = RunConfig.from_obj(obj).dumps()
    again = RunConfig.from_obj(json.loads(first)).dumps()
    assert first == again


def test_sweep_table(tmp_path):
    cfg = write(tmp_path / "c.json", {"drive": {"t_end_us": 3.0}, "experiment": {"sweep": {
        "param": "i_bias", "values_uA": [59.0, 61.0]}}})
    assert run("sweep", "--config", cfg, "--out", tmp_path / "sw.csv") == 0
    rows = list(csv.DictReader((tmp_path / "sw.csv").open()))
    assert len(rows) == 2
    assert rows[0]["error"] == "" and float(rows[0]["frequency_Hz"]) > 0
    assert "regime" in rows[1]["error"]


def test_sweep_needs_matching_units(tmp_path):
    cfg = write(tmp_path / "c.json", {"experiment": {"sweep": {
        "param": "L_NW", "values_uA": [1.0, 2.0]}}})
    assert run("sweep", "--config", cfg, "--out", tmp_path / "sw.csv") == 2


def test_program_command(tmp_path):
    assert run("program", "--target", "(HRS,LRS)", "--out", tmp_path / "p.json") == 0
    p = json.loads((tmp_path / "p.json").read_text())
    assert p["success"] and p["final"] == "(HRS,LRS)" and len(p["pulses"]) == 2


MC_SMALL = {"experiment": {"montecarlo": {"i_bias_uA": [59.6], "t_end_us": 3.0}}}


def artifacts(tmp_path, tag):
    d = tmp_path / tag
    d.mkdir()
    cfg = write(d / "c.json", dict(SHORT, **MC_SMALL))
    assert run("simulate", "--config", cfg, "--out", d / "t.csv", "--summary", d / "s.json",
               "--events", d / "e.jsonl") == 0
    assert run("montecarlo", "--config", cfg, "--samples", 3, "--seed", 42, "--out",
               d / "mc.json", "--samples-csv", d / "mc.csv") == 0
    assert run("program", "--config", cfg, "--target", "(LRS,HRS)", "--out", d / "p.json") == 0
    assert run("plot", "trace", "--input", d / "t.csv", "--out", d / "t.svg",
               "--y", "v_out_V", "--y", "v_ctrl_V") == 0
    assert run("plot", "scatter", "--input", d / "mc.csv", "--out", d / "sc.svg") == 0
    assert run("plot", "histogram", "--input", d / "mc.csv", "--out", d / "h.svg") == 0
    return {p.name: p.read_bytes() for p in d.iterdir() if p.name != "c.json"}


def test_artifacts_byte_identical(tmp_path):
    a = artifacts(tmp_path, "a")
    b = artifacts(tmp_path, "b")
    assert set(a) == set(b) and len(a) == 9
    for name in a:
        assert a[name] == b[name], name


def test_svg_structure(tmp_path):
    a = artifacts(tmp_path, "a")
    assert len(re.findall(r"<polyline", a["t.svg"].decode())) == 2
    scatter = a["sc.svg"].decode()
    assert len(re.findall(r'<g class="markers"', scatter)) == 4
    assert "frequency_Hz" in scatter and "amplitude_V" in scatter
    assert "<rect" in a["h.svg"].decode()


def test_svg_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text(",".join(TRACE_HEADER) + "\n")
    assert run("plot", "trace", "--input", empty, "--out", tmp_path / "x.svg") == 2
    other = tmp_path / "o.csv"
    other.write_text("a,b\n1,2\n")
    assert run("plot", "scatter", "--input", other, "--out", tmp_path / "x.svg") == 2
    assert not (tmp_path / "x.svg").exists()


def test_mc_json_schema(tmp_path):
    cfg = write(tmp_path / "c.json", MC_SMALL)
    assert run("montecarlo", "--config", cfg, "--samples", 2, "--out", tmp_path / "mc.json") == 0
    rep = json.loads((tmp_path / "mc.json").read_text())
    assert set(rep) >= {"spec", "seed", "points", "overlap"}
    pt = rep["points"][0]
    assert set(pt) >= {"combo", "i_bias_A", "freq_Hz", "amp_V", "stats", "failures"}
    assert len(pt["freq_Hz"]) == 2
