"""Event-driven integration of the switched RL circuit.

Within one mode the dynamics are linear with constant inputs, so the state is
advanced in closed form through the modal decomposition of ``A`` (an exact
matrix exponential; no time-stepping error). Guard functions are sums of
exponentials; they are scanned on a geometric time grid and crossings are
isolated by bisection. Device transitions then switch the mode.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from . import devices as dev
from .circuit import LinearSystem, Netlist, build_mode_system, source_jump


class NumericError(ArithmeticError):
    pass


class BracketError(ValueError):
    pass


class ZenoError(RuntimeError):
    pass


@dataclass(frozen=True)
class ToleranceSpec:
    event_time: float = 1e-15
    sample_interval: float = 0.1e-9
    min_dwell: float = 0.1e-15
    event_cap: int = 10_000_000
    # consecutive sub-dwell events tolerated before declaring chattering
    chatter_limit: int = 64


@dataclass(frozen=True)
class Guard:
    """Fires when ``direction * (g - threshold) >= 0`` with ``g = cx.x + cu.u``.

    With ``absolute`` set, ``|g|`` replaces ``g`` (bidirectional devices).
    """
    observable: str
    cx: np.ndarray = field(repr=False)
    cu: np.ndarray = field(repr=False)
    threshold: float
    direction: int
    device_id: str
    target: dev.DeviceState
    absolute: bool = False

    def value(self, x, u) -> float:
        g = float(self.cx @ x + self.cu @ u)
        g = abs(g) if self.absolute else g
        return self.direction * (g - self.threshold)


@dataclass(frozen=True)
class Event:
    t: float
    device: str
    old: str
    new: str

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "device": self.device, "from": self.old, "to": self.new})


@dataclass(frozen=True)
class Timeout:
    t: float


@dataclass
class Segment:
    """Samples of one mode; ``x_end`` is the state where the segment stops."""
    t: np.ndarray
    x: np.ndarray
    x_end: np.ndarray


@dataclass
class Trace:
    """Sampled run of a switched circuit.

    Rows of ``i_l``, ``v`` and ``u`` line up with ``t``; ``mode_index`` points
    into ``modes``. Samples at an event time carry the post-event mode.
    """
    t: np.ndarray
    i_l: np.ndarray
    v: np.ndarray
    u: np.ndarray
    mode_index: np.ndarray
    modes: List[Dict[str, dev.DeviceState]]
    events: List[Event]
    inductor_ids: Tuple[str, ...]
    nodes: Tuple[str, ...]
    source_ids: Tuple[str, ...]
    final_i: np.ndarray
    final_mode: Dict[str, dev.DeviceState]
    # source injection / return node per source id
    source_nodes: Dict[str, Tuple[str, str]] = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def node(self, name: str) -> np.ndarray:
        return self.v[:, self.nodes.index(name)]

    def current(self, inductor_id: str) -> np.ndarray:
        return self.i_l[:, self.inductor_ids.index(inductor_id)]

    def source(self, source_id: str) -> np.ndarray:
        return self.u[:, self.source_ids.index(source_id)]

    def device_states(self, device_id: str) -> List[dev.DeviceState]:
        per_mode = [m[device_id] for m in self.modes]
        return [per_mode[k] for k in self.mode_index]


# ---------------------------------------------------------------------------
# closed-form propagation


class ModalPropagator:
    """Closed-form ``x(t)`` for ``dx/dt = A x + B u`` from ``x0``.

    In modal coordinates ``xi = W^-1 x`` every component evolves as
    ``xi_k(t) = xi_k(0) e^(lam_k t) + beta_k (e^(lam_k t) - 1) / lam_k``
    (``beta_k t`` for ``lam_k = 0``).
    """

    def __init__(self, sys: LinearSystem, x0, u):
        self.sys = sys
        self.x0 = np.asarray(x0, dtype=float)
        self.u = np.asarray(u, dtype=float)
        self.lam = sys.lam
        self.xi0 = sys.Winv @ self.x0
        self.beta = sys.Winv @ (sys.B @ self.u)
        if not (np.all(np.isfinite(self.xi0)) and np.all(np.isfinite(self.beta))):
            raise NumericError("non-finite state at segment start")
        nz = self.lam != 0.0
        self._nz = nz
        # xi(t) = c0 + a * e^(lam t) + r * t
        self.a = np.where(nz, self.xi0 + np.divide(self.beta, self.lam, where=nz, out=np.zeros_like(self.beta)), 0.0)
        self.c0 = np.where(nz, -np.divide(self.beta, self.lam, where=nz, out=np.zeros_like(self.beta)), self.xi0)
        self.r = np.where(nz, 0.0, self.beta)

    def modal(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        tt = t[..., None]
        lam = self.lam
        e = np.exp(lam * tt)
        phi = np.where(self._nz, np.expm1(lam * tt) / np.where(self._nz, lam, 1.0), tt)
        return self.xi0 * e + self.beta * phi

    def x(self, t) -> np.ndarray:
        return self.modal(t) @ self.sys.W.T

    def scalar_coeffs(self, cx, cu) -> Tuple[float, List[Tuple[float, float]], float]:
        """``g(t) = const + sum a_k e^(lam_k t) + slope * t`` for ``g = cx.x + cu.u``."""
        cw = np.asarray(cx, float) @ self.sys.W
        const = float(cw @ self.c0 + np.asarray(cu, float) @ self.u)
        slope = float(cw @ self.r)
        terms = [(float(cw[k] * self.a[k]), float(self.lam[k]))
                 for k in range(len(self.lam)) if self._nz[k] and cw[k] * self.a[k] != 0.0]
        return const, terms, slope


def _guard_fn(prop: ModalPropagator, g: Guard):
    const, terms, slope = prop.scalar_coeffs(g.cx, g.cu)
    thr, d, ab = g.threshold, g.direction, g.absolute
    exp = math.exp

    def h(t: float) -> float:
        val = const + slope * t
        for a, lam in terms:
            val += a * exp(lam * t)
        if ab:
            val = abs(val)
        return d * (val - thr)

    return h


def locate_crossing(g, t_lo: float, t_hi: float, tol: float, threshold: float = 0.0,
                    max_iter: int = 200, value_tol: float = 0.0) -> float:
    """Bisect for the first time ``g`` reaches ``threshold`` inside ``[t_lo, t_hi]``.

    ``g(t_lo)`` and ``g(t_hi)`` must lie on opposite sides (or ``g(t_hi)`` on
    the threshold). The returned time is on the crossed side, within ``tol``
    of the crossing. When ``value_tol`` is positive, bisection continues past
    ``tol`` until ``|g - threshold| <= value_tol`` or the window stops
    shrinking.
    """
    f_lo = g(t_lo) - threshold
    f_hi = g(t_hi) - threshold
    if f_lo == 0.0:
        return t_lo
    if f_hi != 0.0 and (f_lo > 0) == (f_hi > 0):
        raise BracketError(f"no sign change of g - threshold on [{t_lo!r}, {t_hi!r}]")
    lo_sign = f_lo > 0
    for _ in range(max_iter):
        if t_hi - t_lo <= tol and (value_tol <= 0.0 or abs(f_hi) <= value_tol):
            break
        mid = 0.5 * (t_lo + t_hi)
        if mid <= t_lo or mid >= t_hi:
            break
        f_mid = g(mid) - threshold
        if f_mid != 0.0 and (f_mid > 0) == lo_sign:
            t_lo = mid
        else:
            t_hi, f_hi = mid, f_mid
    return t_hi


def _scan_grid(lam: np.ndarray, t_max: float, first: float) -> np.ndarray:
    """Bracketing grid: the step doubles from ``first`` but stays below half the
    fastest time constant that is still alive (under 40 time constants old)."""
    taus = np.sort(1.0 / np.abs(lam[lam != 0.0])).tolist()
    ts = [0.0]
    t, step, i = 0.0, first, 0
    while t < t_max:
        while i < len(taus) and not taus[i] * 40.0 > t:
            i += 1
        h = min(step, 0.5 * taus[i]) if i < len(taus) else step
        t = min(t + max(h, first), t_max)
        ts.append(t)
        step *= 2.0
    return np.asarray(ts)


def integrate_mode(sys: LinearSystem, x0, u, guards: Sequence[Guard], t_max: float,
                   tol: ToleranceSpec = ToleranceSpec(), t0: float = 0.0, sample: bool = True):
    """Advance one mode from ``x0`` until the first guard fires or ``t_max`` elapses.

    Returns ``(segment, outcome)`` where ``outcome`` is ``(time, guard)`` for an
    event or :class:`Timeout`. Segment times are absolute (offset ``t0``); the
    segment holds samples on the global ``sample_interval`` grid in
    ``[t0, t0 + t_event)`` starting with ``t0``.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise NumericError(f"non-finite state at t={t0!r}")
    prop = ModalPropagator(sys, x0, u)
    u = prop.u

    t_hit, g_hit = t_max, None
    if guards:
        fns = [_guard_fn(prop, g) for g in guards]
        h0 = [f(0.0) for f in fns]
        already = [k for k, v in enumerate(h0) if v >= 0.0]
        if already:
            t_hit, g_hit = 0.0, guards[already[0]]
        else:
            grid = _scan_grid(prop.lam, t_max, tol.event_time)
            C = np.array([g.cx for g in guards]) @ sys.W
            D = np.array([g.cu for g in guards]) @ u
            thr = np.array([g.threshold for g in guards])
            dirs = np.array([g.direction for g in guards], float)
            absm = np.array([g.absolute for g in guards])
            vals = prop.modal(grid) @ C.T + D
            vals = np.where(absm, np.abs(vals), vals)
            H = dirs * (vals - thr)
            if not np.all(np.isfinite(H)):
                bad = int(np.argmax(~np.all(np.isfinite(H), axis=1)))
                raise NumericError(f"non-finite state at t={t0 + grid[bad]!r}")
            fired = np.any(H >= 0.0, axis=1)
            if fired.any():
                j = int(np.argmax(fired))
                lo, hi = grid[j - 1], grid[j]
                best = None
                for k in np.nonzero(H[j] >= 0.0)[0]:
                    scale = max(abs(guards[k].threshold), 1e-30)
                    tk = locate_crossing(fns[k], lo, hi, tol.event_time, value_tol=scale * 1e-9)
                    if best is None or tk < best[0]:
                        best = (tk, guards[k])
                t_hit, g_hit = best

    x_end = prop.x(t_hit)
    if not np.all(np.isfinite(x_end)):
        raise NumericError(f"non-finite state at t={t0 + t_hit!r}")

    if sample:
        dt = tol.sample_interval
        k0 = math.floor(t0 / dt) + 1
        k1 = math.ceil((t0 + t_hit) / dt)
        grid_abs = np.arange(k0, k1) * dt
        grid_abs = grid_abs[(grid_abs > t0) & (grid_abs < t0 + t_hit)]
        ts = np.concatenate(([0.0], grid_abs - t0))
        xs = prop.x(ts)
        xs[0] = x0
        seg = Segment(t=ts + t0, x=xs, x_end=x_end)
    else:
        seg = Segment(t=np.array([t0]), x=x0[None, :], x_end=x_end)

    if g_hit is None:
        return seg, Timeout(t0 + t_hit)
    return seg, (t0 + t_hit, g_hit)


# ---------------------------------------------------------------------------
# guards and transitions


def _observable(sys: LinearSystem, netlist: Netlist, device_id: str, kind: str):
    if kind == "i":
        k = sys.switch_ids.index(device_id)
        return sys.Ix[k], sys.Iu[k]
    sw = netlist.switch(device_id)
    ia, ib = sys.nodes.index(sw.a), sys.nodes.index(sw.b)
    return sys.Vx[ia] - sys.Vx[ib], sys.Vu[ia] - sys.Vu[ib]


def device_guards(netlist: Netlist, sys: LinearSystem, mode: Mapping[str, dev.DeviceState]) -> List[Guard]:
    """Guards for every state-driven device (SNW currents, SM voltages), sorted by device id."""
    out: List[Guard] = []
    for did in sorted(netlist.devices):
        p = netlist.devices[did]
        if did not in sys.switch_ids:
            continue
        st = mode[did]
        if isinstance(p, dev.SnwParams):
            cx, cu = _observable(sys, netlist, did, "i")
            if st is dev.SnwState.SUPERCONDUCTING:
                out.append(Guard(f"i:{did}", cx, cu, p.i_c, +1, did, dev.SnwState.RESISTIVE, True))
            else:
                out.append(Guard(f"i:{did}", cx, cu, p.i_r, -1, did, dev.SnwState.SUPERCONDUCTING, True))
        elif isinstance(p, dev.SmParams):
            cx, cu = _observable(sys, netlist, did, "v")
            if st is dev.SmState.LRS:
                out.append(Guard(f"v:{did}", cx, cu, p.v_set, +1, did, dev.SmState.HRS))
            else:
                out.append(Guard(f"v:{did}", cx, cu, -p.v_set, -1, did, dev.SmState.LRS))
    return out


def _next_transition(netlist: Netlist, sys: LinearSystem, mode, x, u):
    """First device (by id) whose transition function changes its state."""
    for did in sorted(netlist.devices):
        p = netlist.devices[did]
        if did not in sys.switch_ids:
            continue
        st = mode[did]
        if isinstance(p, dev.SnwParams):
            cx, cu = _observable(sys, netlist, did, "i")
            new = dev.snw_transition(st, float(cx @ x + cu @ u), p)
        elif isinstance(p, dev.SmParams):
            cx, cu = _observable(sys, netlist, did, "v")
            new = dev.sm_transition(st, float(cx @ x + cu @ u), p)
        else:
            continue
        if new != st:
            return did, new
    return None


# ---------------------------------------------------------------------------
# hybrid run


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant source currents: ``values[k]`` holds on ``[times[k], times[k+1])``.

    Missing source ids read as 0 A.
    """
    times: Tuple[float, ...]
    values: Tuple[Mapping[str, float], ...]

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("schedule needs one value set per breakpoint")
        if self.times[0] != 0.0:
            raise ValueError("schedule must start at t = 0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("schedule breakpoints must be strictly increasing")

    @classmethod
    def constant(cls, values: Mapping[str, float]) -> "Schedule":
        return cls((0.0,), (dict(values),))

    def at(self, t: float) -> Mapping[str, float]:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(k, 0)]


def _mode_key(mode) -> tuple:
    return tuple(sorted((k, v.value) for k, v in mode.items()))


class _SystemCache:
    def __init__(self, netlist: Netlist):
        self.netlist = netlist
        self._cache: Dict[tuple, LinearSystem] = {}

    def get(self, mode) -> LinearSystem:
        key = _mode_key(mode)
        sys = self._cache.get(key)
        if sys is None:
            sys = build_mode_system(self.netlist, mode)
            self._cache[key] = sys
        return sys


def run_hybrid(netlist: Netlist, initial_mode: Mapping[str, dev.DeviceState], initial_i,
               schedule: Schedule, t_end: float, tol: ToleranceSpec = ToleranceSpec(),
               sample: bool = True) -> Trace:
    """Simulate the switched circuit on ``[0, t_end]``.

    ``initial_i`` holds every inductor current (netlist order). Source steps
    at breakpoints redistribute cut-set inductor currents instantaneously;
    device transitions keep inductor currents continuous.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    cache = _SystemCache(netlist)
    src_ids = netlist.source_ids
    htrons = sorted(d for d, p in netlist.devices.items() if isinstance(p, dev.HtronParams))
    mode = {k: v for k, v in initial_mode.items()}
    i_full = np.asarray(initial_i, dtype=float).copy()
    if i_full.shape != (len(netlist.inductors),):
        raise ValueError("initial_i must hold one current per inductor")

    modes: List[Dict[str, dev.DeviceState]] = []
    mode_ids: Dict[tuple, int] = {}
    t_chunks, i_chunks, u_chunks, m_chunks = [], [], [], []
    events: List[Event] = []

    def mode_index(md):
        key = _mode_key(md)
        if key not in mode_ids:
            mode_ids[key] = len(modes)
            modes.append(dict(md))
        return mode_ids[key]

    def log(t, did, old, new):
        events.append(Event(float(t), did, old.value, new.value))
        if len(events) > tol.event_cap:
            raise ZenoError(f"event cap {tol.event_cap} exceeded near t={t!r}; "
                            f"last events: {[e.__dict__ for e in events[-6:]]}")

    def settle(t, mode, i_full, u):
        """Apply transitions at one instant until no device wants to switch."""
        for _ in range(4 * len(netlist.devices) + 8):
            sys = cache.get(mode)
            x = sys.state_from_currents(i_full)
            nxt = _next_transition(netlist, sys, mode, x, u)
            if nxt is None:
                return mode
            did, new = nxt
            log(t, did, mode[did], new)
            mode = dict(mode)
            mode[did] = new
        raise ZenoError(f"transitions at t={t!r} do not settle; last events: "
                        f"{[e.__dict__ for e in events[-6:]]}")

    breaks = [b for b in schedule.times if b < t_end] + [t_end]
    u_prev = None
    chatter = 0
    last_event_t = -math.inf
    for k in range(len(breaks) - 1):
        t, t_stop = breaks[k], breaks[k + 1]
        vals = schedule.values[k]
        u = np.array([vals.get(s, 0.0) for s in src_ids], dtype=float)
        for h in htrons:
            new = dev.htron_state(vals.get(netlist.gates.get(h, ""), 0.0), netlist.devices[h])
            if new != mode[h]:
                log(t, h, mode[h], new)
                mode = dict(mode)
                mode[h] = new
        if u_prev is not None:
            i_full = source_jump(cache.get(mode), i_full, u_prev, u)
        u_prev = u
        mode = settle(t, mode, i_full, u)
        while t < t_stop:
            sys = cache.get(mode)
            x = sys.state_from_currents(i_full)
            guards = device_guards(netlist, sys, mode)
            seg, outcome = integrate_mode(sys, x, u, guards, t_stop - t, tol, t0=t, sample=sample)
            mi = mode_index(mode)
            t_chunks.append(seg.t)
            i_chunks.append(seg.x @ sys.T.T + sys.S @ u)
            u_chunks.append(np.broadcast_to(u, (len(seg.t), len(u))))
            m_chunks.append(np.full(len(seg.t), mi))
            i_full = sys.T @ seg.x_end + sys.S @ u
            if isinstance(outcome, Timeout):
                t = t_stop
                break
            t_ev, g = outcome
            if t_ev - last_event_t < tol.min_dwell:
                chatter += 1
                if chatter > tol.chatter_limit:
                    raise ZenoError(f"chattering: {chatter} events within {tol.min_dwell!r} s near "
                                    f"t={t_ev!r}; last events: {[e.__dict__ for e in events[-6:]]}")
            else:
                chatter = 0
            last_event_t = t_ev
            log(t_ev, g.device_id, mode[g.device_id], g.target)
            mode = dict(mode)
            mode[g.device_id] = g.target
            mode = settle(t_ev, mode, i_full, u)
            t = t_ev

    # closing sample at t_end
    sys = cache.get(mode)
    t_chunks.append(np.array([t_end]))
    i_chunks.append(i_full[None, :])
    u_chunks.append(u_prev[None, :])
    m_chunks.append(np.array([mode_index(mode)]))

    t_all = np.concatenate(t_chunks)
    i_all = np.concatenate(i_chunks)
    u_all = np.concatenate(u_chunks)
    m_all = np.concatenate(m_chunks)
    # drop duplicate timestamps (zero-length segments); keep the later sample
    keep = np.ones(len(t_all), bool)
    keep[:-1] = t_all[1:] > t_all[:-1]
    t_all, i_all, u_all, m_all = t_all[keep], i_all[keep], u_all[keep], m_all[keep]

    v_all = np.empty((len(t_all), len(netlist.nodes)))
    for mi in np.unique(m_all):
        rows = m_all == mi
        s = cache.get(modes[mi])
        xs = i_all[rows][:, [s.inductor_ids.index(z) for z in s.state_ids]]
        v_all[rows] = xs @ s.Vx.T + u_all[rows] @ s.Vu.T

    return Trace(
        t=t_all, i_l=i_all, v=v_all, u=np.ascontiguousarray(u_all), mode_index=m_all,
        modes=modes, events=events, inductor_ids=netlist.inductor_ids, nodes=netlist.nodes,
        source_ids=src_ids, final_i=i_full, final_mode=dict(mode),
        source_nodes={s.source_id: (s.node_to, s.node_from) for s in netlist.sources},
    )
