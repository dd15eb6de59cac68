"""Parameter sweeps, variation studies and seeded Monte Carlo.

Every experiment here is a pure function of its spec: trial ``i`` at
evaluation point ``p`` draws from its own generator seeded by
``derive_seed(seed, p, i)``, so results do not depend on the number of worker
processes or the order in which trials finish.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .analysis import (AnalysisError, Metrics, detect_spikes, reconfigurability_ratio,
                       spike_amplitude, spike_frequency, trace_metrics)
from .devices import SmParams, SmState
from .neuron import (COMBOS, NeuronConfig, RegimeError, combo_name, run_spiking,
                     verify_no_spurious_programming)

MASK64 = (1 << 64) - 1

SWEEP_PARAMS = ("i_bias", "i_in", "I_c", "I_r", "L_NW", "gamma0", "L_c")
METRIC_NAMES = ("frequency", "amplitude", "avg_power", "energy_per_spike")


class SweepError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


def apply_param(cfg: NeuronConfig, name: str, value: float) -> NeuronConfig:
    """Copy of ``cfg`` with one sweep parameter set on every device it names."""
    if name == "i_bias":
        return cfg.replace(i_bias=value)
    if name == "i_in":
        return cfg.replace(i_in=value)
    if name == "L_c":
        return cfg.replace(l_c=value)
    if name in ("I_c", "I_r", "L_NW"):
        key = {"I_c": "i_c", "I_r": "i_r", "L_NW": "l_nw"}[name]
        return cfg.replace(snw_main=_replace(cfg.snw_main, **{key: value}),
                           snw_ctrl=_replace(cfg.snw_ctrl, **{key: value}))
    if name == "gamma0":
        return cfg.replace(sm_main=SmParams.from_gamma0(value, v_set=cfg.sm_main.v_set),
                           sm_ctrl=SmParams.from_gamma0(value, v_set=cfg.sm_ctrl.v_set))
    raise SweepError(f"unknown sweep parameter {name!r}; expected one of {SWEEP_PARAMS}")


def _replace(obj, **kw):
    import dataclasses
    return dataclasses.replace(obj, **kw)


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepSpec:
    base: NeuronConfig
    param: str
    values: Tuple[float, ...]
    combos: Tuple[Tuple[SmState, SmState], ...] = (COMBOS[0],)

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise SweepError(f"unknown sweep parameter {self.param!r}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise SweepError("sweep value list is empty")
        d = np.diff(vals)
        if len(vals) > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise SweepError("sweep values must be strictly monotone")
        if not self.combos:
            raise SweepError("at least one SM combination is required")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "combos", tuple((SmState(a), SmState(b)) for a, b in self.combos))


@dataclass(frozen=True)
class SweepRow:
    value: float
    combo: Tuple[SmState, SmState]
    metrics: Optional[Metrics]
    error: Optional[str] = None

    def as_dict(self) -> dict:
        d = {"value": self.value, "combo": combo_name(self.combo), "error": self.error or ""}
        m = self.metrics.as_dict() if self.metrics else {}
        for k in ("frequency_Hz", "cycle_rate_Hz", "amplitude_V", "avg_power_W",
                  "energy_per_spike_J", "n_spikes"):
            d[k] = m.get(k, math.nan)
        return d


def run_point(cfg: NeuronConfig) -> SweepRow:
    """One spiking run reduced to metrics, failures captured on the row."""
    try:
        trace = run_spiking(cfg, sample=True)
        if not verify_no_spurious_programming(trace, cfg):
            return SweepRow(math.nan, cfg.combo, None,
                            "spurious programming: an SM reached v_set while spiking")
        m = trace_metrics(trace)
    except RegimeError as e:
        return SweepRow(math.nan, cfg.combo, None, f"regime error: {e}")
    except AnalysisError as e:
        return SweepRow(math.nan, cfg.combo, None, f"analysis error: {e}")
    return SweepRow(math.nan, cfg.combo, m, None)


def run_sweep(spec: SweepSpec) -> List[SweepRow]:
    rows = []
    for v in spec.values:
        for combo in spec.combos:
            cfg = apply_param(spec.base, spec.param, v).with_combo(combo)
            r = run_point(cfg)
            rows.append(SweepRow(v, combo, r.metrics, r.error))
    return rows


# ------------------------------------------------------------ statistics


def summarize(samples) -> Tuple[float, float, float, float]:
    """(mean, population std, min, max)."""
    x = np.asarray(list(samples), dtype=float)
    if x.size == 0:
        raise ValueError("cannot summarize an empty sample")
    return float(x.mean()), float(x.std()), float(x.min()), float(x.max())


def histogram_overlap(a, b, bins: int = 50, range: Optional[Tuple[float, float]] = None) -> float:
    """Histogram intersection of two samples over a shared binning.

    Bins are ``bins`` equal-width intervals over the pooled min-max range
    unless ``range`` is given. Returns ``sum(min(p_a, p_b))`` in [0, 1].
    """
    a = np.asarray(list(a), dtype=float)
    b = np.asarray(list(b), dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if range is None:
        lo = float(min(a.min(), b.min()))
        hi = float(max(a.max(), b.max()))
        if lo == hi:
            # every value is equal, so the two samples are identical
            return 1.0
        range = (lo, hi)
    ha, _ = np.histogram(a, bins=bins, range=range)
    hb, _ = np.histogram(b, bins=bins, range=range)
    ov = float(np.minimum(ha / a.size, hb / b.size).sum())
    return min(1.0, max(0.0, ov))


# ---------------------------------------------------------- Monte Carlo


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, point: int, trial: int) -> int:
    """Per-trial 64-bit seed: ``sm(sm(sm(seed) ^ point) ^ trial)``."""
    return splitmix64(splitmix64(splitmix64(seed & MASK64) ^ point) ^ trial)


@dataclass(frozen=True)
class Gaussian:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std >= 0:
            raise ValueError(f"std must be >= 0, got {self.std!r}")


# Table II variation set, SI units
TABLE_II: Dict[str, Gaussian] = {
    "i_c": Gaussian(30e-6, 0.3e-6),
    "i_r": Gaussian(20e-6, 0.2e-6),
    "l_nw": Gaussian(10e-9, 0.1e-9),
    "r_hrs": Gaussian(98e-3, 1e-3),
    "r_lrs": Gaussian(14.4e-3, 0.15e-3),
}
SNW_KEYS = ("i_c", "i_r", "l_nw")
SM_KEYS = ("r_hrs", "r_lrs")
MAX_REJECTIONS = 1000


def _truncated(rng: np.random.Generator, g: Gaussian, scale: float) -> float:
    sd = g.std * scale
    if sd == 0:
        return g.mean
    for _ in range(MAX_REJECTIONS):
        v = float(rng.normal(g.mean, sd))
        if abs(v - g.mean) <= 3.0 * sd:
            return v
    raise SamplingError(f"{MAX_REJECTIONS} consecutive draws outside mean +/- 3 sigma")


def sample_parameters(rng: np.random.Generator, distributions: Mapping[str, Gaussian],
                      per_device: bool = False, values_are_3sigma: bool = False
                      ) -> Dict[str, float]:
    """One truncated-Gaussian parameter assignment.

    Keys are the distribution names, or ``<name>_main``/``<name>_ctrl`` when
    ``per_device``. Assignments violating ``i_c > i_r`` or ``r_hrs > r_lrs``
    are redrawn as a whole.
    """
    scale = 1.0 / 3.0 if values_are_3sigma else 1.0
    names = sorted(distributions)
    keys = [f"{n}_{d}" for n in names for d in ("ctrl", "main")] if per_device else names
    for _ in range(MAX_REJECTIONS):
        out = {k: _truncated(rng, distributions[k.rsplit("_", 1)[0] if per_device else k], scale)
               for k in keys}
        if _consistent(out, per_device):
            return out
    raise SamplingError(f"{MAX_REJECTIONS} consecutive assignments violated I_c > I_r or R_HRS > R_LRS")


def _consistent(a: Mapping[str, float], per_device: bool) -> bool:
    sfx = ("_ctrl", "_main") if per_device else ("",)
    for s in sfx:
        if f"i_c{s}" in a and f"i_r{s}" in a and not a[f"i_c{s}"] > a[f"i_r{s}"]:
            return False
        if f"r_hrs{s}" in a and f"r_lrs{s}" in a and not a[f"r_hrs{s}"] > a[f"r_lrs{s}"]:
            return False
    return True


def apply_assignment(cfg: NeuronConfig, a: Mapping[str, float]) -> NeuronConfig:
    def dev(obj, keys, sfx):
        kw = {k: a[k + sfx] for k in keys if k + sfx in a}
        return _replace(obj, **kw) if kw else obj

    if any(k.endswith(("_main", "_ctrl")) for k in a):
        return cfg.replace(snw_main=dev(cfg.snw_main, SNW_KEYS, "_main"),
                           snw_ctrl=dev(cfg.snw_ctrl, SNW_KEYS, "_ctrl"),
                           sm_main=dev(cfg.sm_main, SM_KEYS, "_main"),
                           sm_ctrl=dev(cfg.sm_ctrl, SM_KEYS, "_ctrl"))
    return cfg.replace(snw_main=dev(cfg.snw_main, SNW_KEYS, ""),
                       snw_ctrl=dev(cfg.snw_ctrl, SNW_KEYS, ""),
                       sm_main=dev(cfg.sm_main, SM_KEYS, ""),
                       sm_ctrl=dev(cfg.sm_ctrl, SM_KEYS, ""))


MC_BIAS_POINTS = (58.6e-6, 59.1e-6, 59.6e-6)


@dataclass(frozen=True)
class McSpec:
    count: int = 500
    seed: int = 42
    distributions: Mapping[str, Gaussian] = field(default_factory=lambda: dict(TABLE_II))
    combos: Tuple[Tuple[SmState, SmState], ...] = COMBOS
    i_bias: Tuple[float, ...] = MC_BIAS_POINTS
    base: NeuronConfig = NeuronConfig(t_end=15e-6)
    values_are_3sigma: bool = False
    per_device: bool = False

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "distributions",
                           {k: v if isinstance(v, Gaussian) else Gaussian(*v)
                            for k, v in sorted(self.distributions.items())})
        unknown = set(self.distributions) - set(SNW_KEYS + SM_KEYS)
        if unknown:
            raise ValueError(f"unknown varied parameters {sorted(unknown)}")
        object.__setattr__(self, "combos", tuple((SmState(a), SmState(b)) for a, b in self.combos))
        object.__setattr__(self, "i_bias", tuple(float(v) for v in self.i_bias))

    def points(self) -> List[Tuple[Tuple[SmState, SmState], float]]:
        """Evaluation points, bias-major."""
        return [(c, ib) for ib in self.i_bias for c in self.combos]

    def echo(self) -> dict:
        return {
            "count": self.count,
            "seed": self.seed,
            "distributions": {k: [g.mean, g.std] for k, g in self.distributions.items()},
            "combos": [combo_name(c) for c in self.combos],
            "i_bias_A": list(self.i_bias),
            "i_in_A": self.base.i_in,
            "t_end_s": self.base.t_end,
            "values_are_3sigma": self.values_are_3sigma,
            "per_device": self.per_device,
            "seed_derivation": "splitmix64(splitmix64(splitmix64(seed) ^ point) ^ trial) -> PCG64",
        }


@dataclass
class PointResult:
    combo: Tuple[SmState, SmState]
    i_bias: float
    frequency: np.ndarray
    amplitude: np.ndarray
    failures: List[Tuple[int, str]]

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.frequency) & np.isfinite(self.amplitude)


@dataclass
class McReport:
    spec: McSpec
    points: List[PointResult]

    def at(self, combo, i_bias: float) -> PointResult:
        combo = (SmState(combo[0]), SmState(combo[1]))
        for p in self.points:
            if p.combo == combo and p.i_bias == i_bias:
                return p
        raise KeyError((combo, i_bias))

    def frequency_overlap(self, a, b, i_bias: float) -> float:
        pa, pb = self.at(a, i_bias), self.at(b, i_bias)
        return histogram_overlap(pa.frequency[pa.ok], pb.frequency[pb.ok])

    def amplitude_cluster_overlap(self, i_bias: float) -> float:
        """Overlap of pooled amplitudes grouped by the output SM state."""
        groups = {SmState.HRS: [], SmState.LRS: []}
        for p in self.points:
            if p.i_bias == i_bias:
                groups[p.combo[1]].extend(p.amplitude[p.ok])
        return histogram_overlap(groups[SmState.HRS], groups[SmState.LRS])

    def to_json_obj(self) -> dict:
        """Report in the CLI schema; failed trials appear as nulls in the sample vectors."""
        pts = []
        for p in self.points:
            ok = p.ok
            pts.append({
                "combo": combo_name(p.combo),
                "i_bias_A": p.i_bias,
                "freq_Hz": [_num(v) for v in p.frequency],
                "amp_V": [_num(v) for v in p.amplitude],
                "stats": {"frequency_Hz": _stats(p.frequency[ok]),
                          "amplitude_V": _stats(p.amplitude[ok]),
                          "n_ok": int(ok.sum()), "n_failed": len(p.failures)},
                "failures": [{"trial": i, "reason": r} for i, r in p.failures],
            })
        overlap = {}
        for ib in self.spec.i_bias:
            pts_ib = [p for p in self.points if p.i_bias == ib]
            pairs = {}
            for k, a in enumerate(pts_ib):
                for b in pts_ib[k + 1:]:
                    key = f"{combo_name(a.combo)}|{combo_name(b.combo)}"
                    pairs[key] = histogram_overlap(a.frequency[a.ok], b.frequency[b.ok]) \
                        if a.ok.any() and b.ok.any() else None
            amp = None
            try:
                amp = self.amplitude_cluster_overlap(ib)
            except ValueError:
                pass
            overlap[repr(ib)] = {"frequency": pairs, "amplitude_by_sm2": amp}
        return {"spec": self.spec.echo(), "seed": self.spec.seed, "points": pts,
                "overlap": overlap}


def _num(v: float):
    return float(v) if math.isfinite(v) else None


def _stats(x: np.ndarray) -> dict:
    if x.size == 0:
        return {"mean": None, "std": None, "min": None, "max": None}
    m, s, lo, hi = summarize(x)
    return {"mean": m, "std": s, "min": lo, "max": hi}


def run_trial(spec: McSpec, point: int, trial: int) -> Tuple[float, float, Optional[str]]:
    combo, ib = spec.points()[point]
    rng = np.random.default_rng(derive_seed(spec.seed, point, trial))
    a = sample_parameters(rng, spec.distributions, spec.per_device, spec.values_are_3sigma)
    cfg = apply_assignment(spec.base, a).replace(i_bias=ib).with_combo(combo)
    try:
        trace = run_spiking(cfg, sample=True)
        if not verify_no_spurious_programming(trace, cfg):
            return math.nan, math.nan, "spurious programming: an SM reached v_set while spiking"
        train = detect_spikes(trace)
        return spike_frequency(train), spike_amplitude(train), None
    except RegimeError as e:
        return math.nan, math.nan, f"regime error: {e}"
    except AnalysisError as e:
        return math.nan, math.nan, f"analysis error: {e}"


def _trial_batch(args):
    spec, jobs = args
    return [(p, i) + run_trial(spec, p, i) for p, i in jobs]


def worker_count() -> int:
    env = os.environ.get("CRYOSPIKE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_monte_carlo(spec: McSpec, workers: Optional[int] = None) -> McReport:
    pts = spec.points()
    freq = np.full((len(pts), spec.count), math.nan)
    amp = np.full((len(pts), spec.count), math.nan)
    err: Dict[Tuple[int, int], str] = {}
    jobs = [(p, i) for p in range(len(pts)) for i in range(spec.count)]
    n = workers if workers is not None else worker_count()
    if n <= 1:
        results = [_trial_batch((spec, jobs))]
    else:
        chunks = [jobs[k::n] for k in range(n)]
        with ProcessPoolExecutor(max_workers=n) as ex:
            results = list(ex.map(_trial_batch, [(spec, c) for c in chunks]))
    for batch in results:
        for p, i, f, a, e in batch:
            freq[p, i], amp[p, i] = f, a
            if e is not None:
                err[(p, i)] = e
    out = []
    for p, (combo, ib) in enumerate(pts):
        fails = sorted((i, e) for (q, i), e in err.items() if q == p)
        out.append(PointResult(combo, ib, freq[p], amp[p], fails))
    return McReport(spec, out)


# ------------------------------------------------------ variation studies

GAMMA0_SET = (15.0, 30.0, 45.0, 60.0)


@dataclass(frozen=True)
class Gamma0Row:
    gamma0: float
    r_lrs: float
    r_hrs: float
    frequency: Dict[str, float]
    power: Dict[str, float]

    @property
    def f_max(self) -> float:
        return max(self.frequency.values())

    @property
    def f_min(self) -> float:
        return min(self.frequency.values())

    @property
    def power_range(self) -> Tuple[float, float]:
        return min(self.power.values()), max(self.power.values())


def gamma0_study(base: NeuronConfig, gammas: Sequence[float] = GAMMA0_SET) -> List[Gamma0Row]:
    """Frequency and power of all four SM combinations for each gamma0."""
    rows = []
    for g in gammas:
        cfg = apply_param(base, "gamma0", g)
        f, p = {}, {}
        for combo in COMBOS:
            m = trace_metrics(run_spiking(cfg.with_combo(combo)))
            f[combo_name(combo)] = m.frequency
            p[combo_name(combo)] = m.avg_power
        rows.append(Gamma0Row(g, cfg.sm_main.r_lrs, cfg.sm_main.r_hrs, f, p))
    return rows


@dataclass(frozen=True)
class Reconfigurability:
    sm_ratio: float
    baseline_ratio: float
    i_bias: Tuple[float, ...]
    sm_frequencies: Tuple[float, ...]
    baseline_frequencies: Tuple[float, ...]

    @property
    def improvement(self) -> float:
        return self.sm_ratio / self.baseline_ratio - 1.0


def reconfigurability_study(base: NeuronConfig, i_bias: Sequence[float]) -> Reconfigurability:
    """Spike-rate range of the SM neuron against a fixed-resistor neuron.

    The SM grid spans all four combinations over ``i_bias``; the baseline has
    ``R = R_HRS`` in both oscillators, i.e. the (HRS, HRS) column. Bias
    points where a design does not spike are left out of its grid.
    """
    sm, fixed = [], []
    for ib in i_bias:
        for combo in COMBOS:
            r = run_point(base.replace(i_bias=ib).with_combo(combo))
            if r.metrics is None:
                continue
            sm.append(r.metrics.frequency)
            if combo == (SmState.HRS, SmState.HRS):
                fixed.append(r.metrics.frequency)
    return Reconfigurability(reconfigurability_ratio(sm), reconfigurability_ratio(fixed),
                             tuple(i_bias), tuple(sm), tuple(fixed))
