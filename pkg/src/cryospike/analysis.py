"""Spike detection and the neuron metrics derived from traces.

Spike trains come from a Schmitt trigger on the output voltage. Frequency is
the reciprocal mean inter-spike interval after dropping the first spike,
amplitude is the mean peak height above the superconducting rest level
(0 V), power is the time-averaged power delivered by all sources.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Tuple

import numpy as np

from .devices import SnwParams
from .solver import Trace


class AnalysisError(ValueError):
    pass


class InsufficientSpikesError(AnalysisError):
    pass


FLAT_FLOOR = 1e-9  # volts


@dataclass
class SpikeTrain:
    times: np.ndarray
    peaks: np.ndarray
    baseline: float
    theta_hi: float
    theta_lo: float

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class Metrics:
    frequency: float
    amplitude: float
    avg_power: float
    energy_per_spike: float
    n_spikes: int = 0
    cycle_rate: float = 0.0

    def as_dict(self) -> dict:
        return {
            "frequency_Hz": self.frequency,
            "cycle_rate_Hz": self.cycle_rate,
            "amplitude_V": self.amplitude,
            "avg_power_W": self.avg_power,
            "energy_per_spike_J": self.energy_per_spike,
            "n_spikes": self.n_spikes,
        }


def _window(t: np.ndarray, window) -> np.ndarray:
    if window is None:
        return np.ones(len(t), bool)
    lo, hi = window
    return (t >= lo) & (t <= hi)


def detect_spikes_array(t: np.ndarray, v: np.ndarray, window=None) -> SpikeTrain:
    """Schmitt-trigger spike detection on a sampled waveform.

    Baseline is the median over the window. A spike is armed when ``v`` rises
    above ``baseline + 0.5 * (max - baseline)`` and ends when it drops below
    ``baseline + 0.25 * (max - baseline)``; its time and peak are the local
    maximum inside that interval.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    sel = _window(t, window)
    t, v = t[sel], v[sel]
    if len(t) == 0:
        raise AnalysisError("empty analysis window")
    baseline = float(np.median(v))
    span = float(v.max()) - baseline
    if span < FLAT_FLOOR:
        return SpikeTrain(np.zeros(0), np.zeros(0), baseline, math.nan, math.nan)
    hi = baseline + 0.5 * span
    lo = baseline + 0.25 * span
    above = v > hi
    below = v < lo
    times, peaks = [], []
    k, n = 0, len(v)
    while k < n:
        if not above[k]:
            k += 1
            continue
        start = k
        # armed until the waveform falls below the low threshold
        nxt = np.argmax(below[k:])
        end = n if not below[k:][nxt] else k + nxt
        j = start + int(np.argmax(v[start:end]))
        times.append(t[j])
        peaks.append(v[j])
        k = end
    return SpikeTrain(np.array(times), np.array(peaks), baseline, hi, lo)


def detect_spikes(trace: Trace, window=None, node: str = "M") -> SpikeTrain:
    if len(trace) == 0:
        raise AnalysisError("empty trace")
    return detect_spikes_array(trace.t, trace.node(node), window)


def spike_frequency(train: SpikeTrain) -> float:
    """1 / mean inter-spike interval, first spike discarded as transient."""
    if len(train) < 3:
        raise InsufficientSpikesError(f"need at least 3 spikes, got {len(train)}")
    isi = np.diff(train.times[1:])
    return 1.0 / float(np.mean(isi))


def spike_amplitude(train: SpikeTrain, reference: float = 0.0) -> float:
    """Mean peak height above ``reference`` (the 0 V rest level by default).

    The first spike is dropped like in :func:`spike_frequency` when at least
    three spikes exist.
    """
    if len(train) == 0:
        raise AnalysisError("no spikes")
    peaks = train.peaks[1:] if len(train) >= 3 else train.peaks
    return float(np.mean(peaks - reference))


def average_source_power(trace: Trace, window=None) -> float:
    """Time-averaged sum over sources of ``V(injection) - V(return)`` times current.

    Trapezoidal over the trace samples; segment boundaries (events, source
    steps) are samples themselves, so no interval straddles a discontinuity
    in the state.
    """
    sel = _window(trace.t, window)
    t = trace.t[sel]
    if len(t) < 2 or t[-1] <= t[0]:
        raise AnalysisError("power window must span at least two samples")
    p = np.zeros(len(t))
    for sid, (n_to, n_from) in trace.source_nodes.items():
        if n_to == n_from:
            continue
        v_to = trace.node(n_to)[sel]
        v_from = trace.node(n_from)[sel]
        p += (v_to - v_from) * trace.source(sid)[sel]
    return float(np.trapezoid(p, t) / (t[-1] - t[0]))


def energy_per_spike(p: float, f: float) -> float:
    if not f > 0:
        raise AnalysisError(f"frequency must be positive, got {f!r}")
    return p / f


def reconfigurability_ratio(frequencies: Iterable[float]) -> float:
    f = np.asarray(list(frequencies), dtype=float)
    if f.size == 0 or np.any(~(f > 0)):
        raise AnalysisError("frequencies must be a nonempty set of positive values")
    return float(f.max() / f.min())


def oscillator_period_analytic(p: SnwParams, r_s: float, i_b: float) -> float:
    """Period of a single shunted-nanowire relaxation oscillator.

    Resistive discharge from I_c to I_r with time constant L/(r_s + R_hs)
    toward ``i_b r_s / (r_s + R_hs)``, then superconducting recharge from I_r
    to I_c with time constant L/r_s toward ``i_b``.
    """
    if not i_b > p.i_c:
        raise AnalysisError(f"no oscillation: bias {i_b!r} A does not exceed I_c = {p.i_c!r} A")
    tau1 = p.l_nw / (r_s + p.r_hs)
    tau2 = p.l_nw / r_s
    i_inf = i_b * r_s / (r_s + p.r_hs)
    return (tau1 * math.log((p.i_c - i_inf) / (p.i_r - i_inf))
            + tau2 * math.log((i_b - p.i_r) / (i_b - p.i_c)))


def spike_window(train: SpikeTrain) -> Tuple[float, float]:
    """Power window: first to last detected spike."""
    if len(train) < 2:
        raise InsufficientSpikesError("need two spikes for a power window")
    return float(train.times[0]), float(train.times[-1])


def trace_metrics(trace: Trace, window=None, node: str = "M") -> Metrics:
    """Frequency, amplitude, power and energy of one spiking run."""
    train = detect_spikes(trace, window, node)
    f = spike_frequency(train)
    amp = spike_amplitude(train)
    p = average_source_power(trace, spike_window(train))
    return Metrics(frequency=f, amplitude=amp, avg_power=p,
                   energy_per_spike=energy_per_spike(p, f), n_spikes=len(train),
                   cycle_rate=f)


def count_spikes(cfg, i_bias: float) -> int:
    """Output spikes of a run at ``i_bias``; 0 when the bias is out of regime."""
    from .neuron import RegimeError, run_spiking

    try:
        trace = run_spiking(cfg.replace(i_bias=i_bias))
    except RegimeError:
        return 0
    return len(detect_spikes(trace))


def bias_window(cfg, i_in: float, resolution: float = 0.01e-6, margin: float = 0.001e-6,
                min_spikes: int = 4, run_time: float = 10e-6,
                spikes_at: Optional[Callable[[float], int]] = None
                ) -> Tuple[Optional[float], float]:
    """Range of bias current that sustains spiking for input ``i_in``.

    The upper edge is the latch limit ``I_c1 + I_c2`` less ``margin``. The
    lower edge is found by bisection on "at least ``min_spikes`` output spikes
    within ``run_time``" to ``resolution``. Returns ``(None, upper)`` when
    even the upper edge does not spike. ``spikes_at`` overrides the spike
    counter (used by tests).
    """
    if not i_in > 0:
        raise AnalysisError("input current must be positive")
    base = cfg.replace(i_in=i_in, t_end=run_time)
    if spikes_at is None:
        spikes_at = lambda ib: count_spikes(base, ib)  # noqa: E731
    upper = base.snw_ctrl.i_c + base.snw_main.i_c - margin
    if spikes_at(upper) < min_spikes:
        return None, upper
    lo, hi = 0.0, upper
    if spikes_at(lo) >= min_spikes:
        return lo, upper
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if spikes_at(mid) >= min_spikes:
            hi = mid
        else:
            lo = mid
    return hi, upper
