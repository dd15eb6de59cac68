"""``cryospike`` command line: simulate, sweep, montecarlo, program, plot.

Config files are JSON with unit-suffixed keys (``i_bias_uA``, ``l_c_nH``,
``r_hrs_mohm``, ``t_end_us``, ``gamma0_deg`` ...). Values are kept in those
units until a run is built, so parse -> serialize -> parse is exact. Output
files carry SI values with the unit in the column or key name.

Exit codes: 0 success, 2 config or input error, 3 regime error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from decimal import Decimal
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import experiments as ex
from .analysis import AnalysisError, trace_metrics, detect_spikes
from .devices import DeviceError, HtronParams, SmParams, SmState, SnwParams
from .neuron import (COMBOS, ConfigError, NeuronConfig, ProgrammingError, RegimeError,
                     combo_name, program_states, run_spiking, verify_no_spurious_programming)
from .solver import ToleranceSpec, Trace

EXIT_OK, EXIT_CONFIG, EXIT_REGIME = 0, 2, 3

TRACE_HEADER = ("t_s", "v_out_V", "v_ctrl_V", "i_L_main_A", "i_L_ctrl_A",
                "mode_snw1", "mode_snw2", "state_sm1", "state_sm2")
SAMPLE_HEADER = ("combo", "i_bias_A", "trial", "frequency_Hz", "amplitude_V")

# decimal exponent turning a suffixed value into SI
UNITS = {"uA": -6, "nH": -9, "mohm": -3, "ohm": 0, "us": -6, "ns": -9, "fs": -15,
         "uV": -6, "deg": 0}

DEFAULTS: Dict[str, dict] = {
    "snw_main": {"i_c_uA": 30.0, "i_r_uA": 20.0, "r_hs_ohm": 5000.0, "l_nw_nH": 10.0},
    "snw_ctrl": {"i_c_uA": 30.0, "i_r_uA": 20.0, "r_hs_ohm": 5000.0, "l_nw_nH": 10.0},
    "sm1": {"r_lrs_mohm": 14.4, "r_hrs_mohm": 98.0, "gamma0_deg": 60.0, "v_set_uV": 50.0,
            "state": "HRS"},
    "sm2": {"r_lrs_mohm": 14.4, "r_hrs_mohm": 98.0, "gamma0_deg": 60.0, "v_set_uV": 50.0,
            "state": "HRS"},
    "htron": {"i_g_th_uA": 10.0, "r_ht_ohm": 5000.0, "r_p_ohm": None},
    "circuit": {"l_c_nH": 20.0},
    "drive": {"i_bias_uA": 59.0, "i_in_uA": 6.0, "i_gate_us_uA": [[0.0, 0.0]],
              "t_end_us": 10.0},
    "tolerance": {"event_time_fs": 1.0, "sample_interval_ns": 0.1, "min_dwell_fs": 0.1,
                  "event_cap": 10_000_000, "chatter_limit": 64},
    "experiment": {},
}

SWEEP_UNITS = {"i_bias": "uA", "i_in": "uA", "I_c": "uA", "I_r": "uA", "L_NW": "nH",
               "gamma0": "deg", "L_c": "nH"}
SWEEP_DEFAULTS = {"param": "i_bias", "combos": ["(HRS,HRS)"]}
MC_DEFAULTS = {
    "samples": 500, "seed": 42, "i_bias_uA": [58.6, 59.1, 59.6],
    "combos": [combo_name(c) for c in COMBOS],
    "distributions": {"i_c_uA": [30.0, 0.3], "i_r_uA": [20.0, 0.2], "l_nw_nH": [10.0, 0.1],
                      "r_hrs_mohm": [98.0, 1.0], "r_lrs_mohm": [14.4, 0.15]},
    "values_are_3sigma": False, "per_device": False, "t_end_us": 15.0,
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _si(key: str, value):
    unit = key.rsplit("_", 1)[-1]
    if unit not in UNITS:
        raise CliError(f"key {key!r} has no recognised unit suffix")
    if value is None:
        return None
    # shift the decimal exponent so e.g. 0.1 fs parses to the float nearest 1e-16
    return float(Decimal(repr(float(value))).scaleb(UNITS[unit]))


def _merge(section: str, given, defaults: dict) -> dict:
    if not isinstance(given, dict):
        raise CliError(f"section {section!r} must be an object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise CliError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


def _parse_combo(s: str):
    for c in COMBOS:
        if combo_name(c) == s.replace(" ", ""):
            return c
    raise CliError(f"unknown SM combination {s!r}; expected one of "
                   f"{[combo_name(c) for c in COMBOS]}")


@dataclass
class RunConfig:
    """Normalised config in file units; every section and key present."""
    data: dict

    @classmethod
    def from_obj(cls, obj) -> "RunConfig":
        if not isinstance(obj, dict):
            raise CliError("config must be a JSON object")
        unknown = sorted(set(obj) - set(DEFAULTS))
        if unknown:
            raise CliError(f"unknown config section(s): {', '.join(unknown)}")
        data = {k: _merge(k, obj.get(k, {}), v) for k, v in DEFAULTS.items() if k != "experiment"}
        exp = obj.get("experiment", {})
        if not isinstance(exp, dict):
            raise CliError("section 'experiment' must be an object")
        unknown = sorted(set(exp) - {"sweep", "montecarlo"})
        if unknown:
            raise CliError(f"unknown key(s) in 'experiment': {', '.join(unknown)}")
        exp = data["experiment"] = copy.deepcopy(exp)
        if "sweep" in exp:
            exp["sweep"] = _merge("experiment.sweep", exp["sweep"], {
                **SWEEP_DEFAULTS, **{f"values_{u}": None for u in set(SWEEP_UNITS.values())}})
        if "montecarlo" in exp:
            exp["montecarlo"] = _merge("experiment.montecarlo", exp["montecarlo"], MC_DEFAULTS)
        cfg = cls(data)
        cfg.neuron()  # validate eagerly
        return cfg

    @classmethod
    def load(cls, path: Optional[str]) -> "RunConfig":
        if path is None:
            return cls.from_obj({})
        try:
            with open(path, encoding="utf-8") as f:
                obj = json.load(f)
        except OSError as e:
            raise CliError(f"cannot read config: {e}")
        except json.JSONDecodeError as e:
            raise CliError(f"config is not valid JSON: {e}")
        return cls.from_obj(obj)

    def dumps(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    def neuron(self) -> NeuronConfig:
        d = self.data
        try:
            def snw(s):
                return SnwParams(i_c=_si("i_c_uA", s["i_c_uA"]), i_r=_si("i_r_uA", s["i_r_uA"]),
                                 r_hs=_si("r_hs_ohm", s["r_hs_ohm"]),
                                 l_nw=_si("l_nw_nH", s["l_nw_nH"]))

            def sm(s):
                return SmParams(r_lrs=_si("r_lrs_mohm", s["r_lrs_mohm"]),
                                r_hrs=_si("r_hrs_mohm", s["r_hrs_mohm"]),
                                gamma0=float(s["gamma0_deg"]),
                                v_set=_si("v_set_uV", s["v_set_uV"]))

            h = d["htron"]
            tol = d["tolerance"]
            drive = d["drive"]
            gate = tuple((_si("t_us", t), _si("i_uA", a)) for t, a in drive["i_gate_us_uA"])
            return NeuronConfig(
                snw_main=snw(d["snw_main"]), snw_ctrl=snw(d["snw_ctrl"]),
                sm_ctrl=sm(d["sm1"]), sm_main=sm(d["sm2"]),
                state_ctrl=SmState(d["sm1"]["state"]), state_main=SmState(d["sm2"]["state"]),
                htron=HtronParams(i_g_th=_si("i_g_th_uA", h["i_g_th_uA"]),
                                  r_ht=_si("r_ht_ohm", h["r_ht_ohm"]),
                                  r_p=_si("r_p_ohm", h["r_p_ohm"])),
                l_c=_si("l_c_nH", d["circuit"]["l_c_nH"]),
                i_bias=_si("i_bias_uA", drive["i_bias_uA"]),
                i_in=_si("i_in_uA", drive["i_in_uA"]),
                i_gate=gate,
                t_end=_si("t_end_us", drive["t_end_us"]),
                tol=ToleranceSpec(event_time=_si("event_time_fs", tol["event_time_fs"]),
                                  sample_interval=_si("sample_interval_ns",
                                                      tol["sample_interval_ns"]),
                                  min_dwell=_si("min_dwell_fs", tol["min_dwell_fs"]),
                                  event_cap=int(tol["event_cap"]),
                                  chatter_limit=int(tol["chatter_limit"])),
            )
        except CliError:
            raise
        except (DeviceError, ConfigError, ValueError, TypeError, KeyError) as e:
            raise CliError(f"invalid config: {e}")

    def sweep_spec(self) -> ex.SweepSpec:
        s = self.data["experiment"].get("sweep")
        if s is None:
            raise CliError("config has no experiment.sweep section")
        param = s["param"]
        if param not in SWEEP_UNITS:
            raise CliError(f"unknown sweep parameter {param!r}")
        unit = SWEEP_UNITS[param]
        given = [k for k in s if k.startswith("values_") and s[k] is not None]
        if given != [f"values_{unit}"]:
            raise CliError(f"sweep over {param!r} needs exactly one value list 'values_{unit}'")
        vals = [_si(f"v_{unit}", v) for v in s[f"values_{unit}"]]
        try:
            return ex.SweepSpec(self.neuron(), param, tuple(vals),
                                tuple(_parse_combo(c) for c in s["combos"]))
        except ex.SweepError as e:
            raise CliError(str(e))

    def mc_spec(self, samples: Optional[int] = None, seed: Optional[int] = None) -> ex.McSpec:
        m = self.data["experiment"].get("montecarlo", copy.deepcopy(MC_DEFAULTS))
        dist = {}
        for k, (mu, sd) in m["distributions"].items():
            name = k.rsplit("_", 1)[0]
            dist[name] = ex.Gaussian(_si(k, mu), _si(k, sd))
        try:
            return ex.McSpec(
                count=int(samples if samples is not None else m["samples"]),
                seed=int(seed if seed is not None else m["seed"]),
                distributions=dist,
                combos=tuple(_parse_combo(c) for c in m["combos"]),
                i_bias=tuple(_si("i_bias_uA", v) for v in m["i_bias_uA"]),
                base=self.neuron().replace(t_end=_si("t_end_us", m["t_end_us"])),
                values_are_3sigma=bool(m["values_are_3sigma"]),
                per_device=bool(m["per_device"]),
            )
        except ValueError as e:
            raise CliError(f"invalid montecarlo spec: {e}")


# ------------------------------------------------------------------ writers


def _f(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return repr(v) if math.isfinite(v) else "nan"


def trace_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    cols = [trace.node("M"), trace.node("C"), trace.current("L_nw2"), trace.current("L_nw1")]
    states = [trace.device_states(d) for d in ("snw1", "snw2", "sm1", "sm2")]
    for k, t in enumerate(trace.t):
        w.writerow([_f(t)] + [_f(c[k]) for c in cols] + [s[k].value for s in states])
    return buf.getvalue()


def events_jsonl(trace: Trace) -> str:
    return "".join(e.to_json() + "\n" for e in trace.events)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


# --------------------------------------------------------------------- SVG

W, H, PAD = 640, 400, 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _read_csv(path: str):
    try:
        with open(path, encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise CliError(f"cannot read {path}: {e}")
    if not rows:
        raise CliError(f"{path} is empty")
    header, body = rows[0], [r for r in rows[1:] if r]
    if not body:
        raise CliError(f"{path} has no data rows")
    return header, body


def _need(header, cols):
    missing = [c for c in cols if c not in header]
    if missing:
        raise CliError(f"missing column(s) {', '.join(missing)}; available: {', '.join(header)}")


def _num_col(header, body, col) -> np.ndarray:
    k = header.index(col)
    try:
        return np.array([float(r[k]) if r[k] != "" else math.nan for r in body])
    except ValueError:
        raise CliError(f"column {col!r} is not numeric")


class _Frame:
    def __init__(self, xs, ys):
        xs = np.concatenate([np.asarray(x, float) for x in xs]) if xs else np.zeros(1)
        ys = np.concatenate([np.asarray(y, float) for y in ys]) if ys else np.zeros(1)
        xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
        self.x0, self.x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
        self.y0, self.y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0

    def px(self, x):
        return PAD + (np.asarray(x, float) - self.x0) / (self.x1 - self.x0) * (W - 2 * PAD)

    def py(self, y):
        return H - PAD - (np.asarray(y, float) - self.y0) / (self.y1 - self.y0) * (H - 2 * PAD)


def _svg(frame: _Frame, xlabel: str, ylabel: str, body: List[str]) -> str:
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
           f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
           f'<text x="{W / 2:.1f}" y="{H - 15}" text-anchor="middle" font-size="12">'
           f'{_esc(xlabel)} [{frame.x0:.4g}, {frame.x1:.4g}]</text>',
           f'<text x="15" y="{H / 2:.1f}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 15 {H / 2:.1f})">'
           f'{_esc(ylabel)} [{frame.y0:.4g}, {frame.y1:.4g}]</text>']
    out += body
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _points(frame, x, y) -> str:
    ok = np.isfinite(x) & np.isfinite(y)
    return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(frame.px(x[ok]), frame.py(y[ok])))


def _groups(header, body, col) -> Dict[str, List[int]]:
    if col not in header:
        return {"": list(range(len(body)))}
    k = header.index(col)
    g: Dict[str, List[int]] = {}
    for i, r in enumerate(body):
        g.setdefault(r[k], []).append(i)
    return g


def emit_svg(path: str, kind: str, x: Optional[str] = None, y: Optional[Sequence[str]] = None,
             bins: int = 50) -> str:
    """SVG document for a CSV file; raises CliError on missing columns or rows."""
    header, body = _read_csv(path)
    if kind == "trace":
        xc = x or header[0]
        _need(header, [xc])
        if y:
            ycols = list(y)
            _need(header, ycols)
        else:
            ycols = [c for c in header if c != xc and _is_numeric(header, body, c)]
        if not ycols:
            raise CliError("no numeric series to plot")
        xv = _num_col(header, body, xc)
        yv = [_num_col(header, body, c) for c in ycols]
        fr = _Frame([xv], yv)
        lines = [f'<polyline fill="none" stroke="{PALETTE[i % len(PALETTE)]}" '
                 f'data-series="{_esc(c)}" points="{_points(fr, xv, v)}"/>'
                 for i, (c, v) in enumerate(zip(ycols, yv))]
        return _svg(fr, xc, ", ".join(ycols), lines)
    if kind == "sweep":
        xc = x or "value"
        yc = (y[0] if y else "frequency_Hz")
        _need(header, [xc, yc])
        xv, yv = _num_col(header, body, xc), _num_col(header, body, yc)
        groups = _groups(header, body, "combo")
        fr = _Frame([xv], [yv])
        lines = [f'<polyline fill="none" stroke="{PALETTE[i % len(PALETTE)]}" '
                 f'data-series="{_esc(g)}" points="{_points(fr, xv[idx], yv[idx])}"/>'
                 for i, (g, idx) in enumerate(groups.items())]
        return _svg(fr, xc, yc, lines)
    if kind == "scatter":
        xc = x or "frequency_Hz"
        yc = (y[0] if y else "amplitude_V")
        _need(header, [xc, yc, "combo"])
        xv, yv = _num_col(header, body, xc), _num_col(header, body, yc)
        fr = _Frame([xv], [yv])
        out = []
        for i, (g, idx) in enumerate(_groups(header, body, "combo").items()):
            ok = [j for j in idx if math.isfinite(xv[j]) and math.isfinite(yv[j])]
            dots = "".join(f'<circle cx="{fr.px(xv[j]):.2f}" cy="{fr.py(yv[j]):.2f}" r="2"/>'
                           for j in ok)
            out.append(f'<g class="markers" data-series="{_esc(g)}" '
                       f'fill="{PALETTE[i % len(PALETTE)]}">{dots}</g>')
        return _svg(fr, xc, yc, out)
    if kind == "histogram":
        xc = x or "frequency_Hz"
        _need(header, [xc])
        xv = _num_col(header, body, xc)
        finite = xv[np.isfinite(xv)]
        if finite.size == 0:
            raise CliError(f"column {xc!r} has no finite values")
        lo, hi = float(finite.min()), float(finite.max())
        if hi == lo:
            hi = lo + 1.0
        groups = _groups(header, body, "combo")
        hists = []
        for g, idx in groups.items():
            v = xv[idx]
            h, edges = np.histogram(v[np.isfinite(v)], bins=bins, range=(lo, hi))
            hists.append((g, h / max(1, np.isfinite(v).sum()), edges))
        fr = _Frame([[lo, hi]], [[0.0, max(float(h.max()) for _, h, _ in hists)]])
        rects = []
        for i, (g, h, edges) in enumerate(hists):
            for k, frac in enumerate(h):
                if frac <= 0:
                    continue
                x0, x1 = fr.px(edges[k]), fr.px(edges[k + 1])
                y0 = fr.py(frac)
                rects.append(f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" '
                             f'height="{H - PAD - y0:.2f}" fill="{PALETTE[i % len(PALETTE)]}" '
                             f'fill-opacity="0.5" data-series="{_esc(g)}"/>')
        return _svg(fr, xc, "fraction", rects)
    raise CliError(f"unknown plot kind {kind!r}")


def _is_numeric(header, body, col) -> bool:
    k = header.index(col)
    try:
        for r in body:
            float(r[k])
    except ValueError:
        return False
    return True


# ------------------------------------------------------------------- commands


def cmd_simulate(args, cfg: RunConfig) -> int:
    nc = cfg.neuron()
    trace = run_spiking(nc)
    _write(args.out, trace_csv(trace))
    if args.events:
        _write(args.events, events_jsonl(trace))
    if args.summary:
        summary = {"combo": combo_name(nc.combo), "n_events": len(trace.events),
                   "no_spurious_programming": verify_no_spurious_programming(trace, nc)}
        try:
            summary.update(trace_metrics(trace).as_dict())
            summary["error"] = None
        except AnalysisError as e:
            summary.update({"frequency_Hz": None, "cycle_rate_Hz": None, "amplitude_V": None,
                            "avg_power_W": None, "energy_per_spike_J": None,
                            "n_spikes": len(detect_spikes(trace)) if len(trace) else 0,
                            "error": str(e)})
        _write(args.summary, _dump(summary))
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    rows = ex.run_sweep(cfg.sweep_spec())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ("value", "combo", "frequency_Hz", "cycle_rate_Hz", "amplitude_V", "avg_power_W",
            "energy_per_spike_J", "n_spikes", "error")
    w.writerow(cols)
    for r in rows:
        d = r.as_dict()
        w.writerow([d[c] if c in ("combo", "error") else
                    (str(int(d[c])) if c == "n_spikes" and not math.isnan(d[c]) else _f(d[c]))
                    for c in cols])
    _write(args.out, buf.getvalue())
    return EXIT_OK


def cmd_montecarlo(args, cfg: RunConfig) -> int:
    spec = cfg.mc_spec(args.samples, args.seed)
    report = ex.run_monte_carlo(spec, workers=args.workers)
    _write(args.out, _dump(report.to_json_obj()))
    if args.samples_csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SAMPLE_HEADER)
        for p in report.points:
            for i, (f, a) in enumerate(zip(p.frequency, p.amplitude)):
                w.writerow([combo_name(p.combo), _f(p.i_bias), i, _f(f), _f(a)])
        _write(args.samples_csv, buf.getvalue())
    return EXIT_OK


def cmd_program(args, cfg: RunConfig) -> int:
    nc = cfg.neuron()
    target = _parse_combo(args.target)
    try:
        res = program_states(nc, target)
        out = {"initial": combo_name(nc.combo), "target": combo_name(target),
               "final": combo_name(res.final), "success": True,
               "pulses": [p.as_dict() for p in res.pulses]}
        code = EXIT_OK
    except ProgrammingError as e:
        out = {"initial": combo_name(nc.combo), "target": combo_name(target),
               "final": combo_name(e.achieved), "success": False, "error": str(e), "pulses": []}
        code = 1
    _write(args.out, _dump(out))
    return code


def cmd_plot(args, cfg: Optional[RunConfig]) -> int:
    _write(args.out, emit_svg(args.input, args.kind, args.x, args.y, args.bins))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cryospike", description="Superconducting memristive spiking neuron simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="spiking run -> trace CSV + summary JSON")
    s.add_argument("--config")
    s.add_argument("--out", required=True, help="trace CSV")
    s.add_argument("--summary", help="metrics JSON")
    s.add_argument("--events", help="event log, JSON lines")

    s = sub.add_parser("sweep", help="parameter sweep -> table CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("montecarlo", help="seeded variation analysis -> report JSON")
    s.add_argument("--config")
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int, help="process count (default: CRYOSPIKE_THREADS or CPUs)")
    s.add_argument("--out", required=True)
    s.add_argument("--samples-csv", dest="samples_csv", help="per-trial sample CSV")

    s = sub.add_parser("program", help="program (SM1,SM2) -> pulse schedule + final states JSON")
    s.add_argument("--config")
    s.add_argument("--target", required=True, help='e.g. "(LRS,HRS)"')
    s.add_argument("--out", required=True)

    s = sub.add_parser("plot", help="CSV -> SVG")
    s.add_argument("kind", choices=("trace", "sweep", "scatter", "histogram"))
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--x")
    s.add_argument("--y", action="append")
    s.add_argument("--bins", type=int, default=50)

    s = sub.add_parser("config", help="print the normalised config")
    s.add_argument("--config")
    return p


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "montecarlo": cmd_montecarlo,
            "program": cmd_program, "plot": cmd_plot}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "plot":
            return cmd_plot(args, None)
        cfg = RunConfig.load(args.config)
        if args.command == "config":
            sys.stdout.write(cfg.dumps())
            return EXIT_OK
        return COMMANDS[args.command](args, cfg)
    except CliError as e:
        print(str(e), file=sys.stderr)
        return e.code
    except RegimeError as e:
        print(f"regime error: {e}", file=sys.stderr)
        return EXIT_REGIME
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
