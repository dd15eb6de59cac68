"""Two-oscillator neuron: netlist, bias initialisation, spiking and programming.

Topology (ground ``0``)::

    i_bias -> B --Lc_ctrl--[h-Tron]-- C --L_nw1--[SNW1]-- 0     C --[SM1]-- 0
              B --Lc_main------------ M --L_nw2--[SNW2]-- 0     M --[SM2]-- 0
    i_in   -> M

The main oscillator sits at ``M`` and its SM (SM2) carries the output
``V_M``. The control oscillator at ``C`` refires the main one through the
superconducting loop B-C-0-M-B. The h-Tron gate drive is a separate heater
loop and only sets the channel state.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import devices as dev
from .circuit import CurrentSource, Inductor, Netlist, SwitchResistor
from .devices import HtronParams, SmParams, SmState, SnwParams, SnwState
from .solver import Schedule, ToleranceSpec, Trace, run_hybrid


class RegimeError(ValueError):
    """Drive outside the regime where the neuron can spike."""


class ProgrammingError(RuntimeError):
    def __init__(self, message: str, achieved: Tuple[SmState, SmState]):
        super().__init__(message)
        self.achieved = achieved


class ConfigError(ValueError):
    pass


SNW1, SNW2, SM1, SM2, HTRON = "snw1", "snw2", "sm1", "sm2", "htron"
I_BIAS, I_IN, I_GATE = "i_bias", "i_in", "i_gate"
LC_CTRL, LC_MAIN, L_NW1, L_NW2 = "Lc_ctrl", "Lc_main", "L_nw1", "L_nw2"
OUT_NODE, CTRL_NODE, BIAS_NODE = "M", "C", "B"

COMBOS: Tuple[Tuple[SmState, SmState], ...] = (
    (SmState.HRS, SmState.HRS),
    (SmState.LRS, SmState.HRS),
    (SmState.HRS, SmState.LRS),
    (SmState.LRS, SmState.LRS),
)


def combo_name(combo) -> str:
    return f"({SmState(combo[0]).value},{SmState(combo[1]).value})"


@dataclass(frozen=True)
class NeuronConfig:
    """Neuron parameters and drive, SI units.

    ``sm_ctrl``/``state_ctrl`` describe SM1 (control oscillator),
    ``sm_main``/``state_main`` SM2 (main oscillator, output).
    ``i_gate`` is a piecewise-constant schedule of ``(t_start, amps)`` pairs.
    """
    snw_main: SnwParams = SnwParams()
    snw_ctrl: SnwParams = SnwParams()
    sm_main: SmParams = SmParams()
    sm_ctrl: SmParams = SmParams()
    state_main: SmState = SmState.HRS
    state_ctrl: SmState = SmState.HRS
    htron: HtronParams = HtronParams()
    l_c: float = 20e-9
    i_bias: float = 59e-6
    i_in: float = 6e-6
    i_gate: Tuple[Tuple[float, float], ...] = ((0.0, 0.0),)
    t_end: float = 10e-6
    tol: ToleranceSpec = ToleranceSpec()

    def __post_init__(self):
        if not self.l_c > 0:
            raise ConfigError(f"coupling inductance must be positive, got {self.l_c!r}")
        if not self.t_end > 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end!r}")
        object.__setattr__(self, "state_main", SmState(self.state_main))
        object.__setattr__(self, "state_ctrl", SmState(self.state_ctrl))
        gate = tuple((float(t), float(a)) for t, a in self.i_gate)
        if not gate or gate[0][0] != 0.0:
            raise ConfigError("i_gate schedule must start at t = 0")
        object.__setattr__(self, "i_gate", gate)

    def replace(self, **kw) -> "NeuronConfig":
        return dataclasses.replace(self, **kw)

    def with_combo(self, combo) -> "NeuronConfig":
        return self.replace(state_ctrl=SmState(combo[0]), state_main=SmState(combo[1]))

    @property
    def combo(self) -> Tuple[SmState, SmState]:
        return (self.state_ctrl, self.state_main)


def build_neuron_netlist(cfg: NeuronConfig) -> Netlist:
    elements = [
        CurrentSource("0", BIAS_NODE, I_BIAS),
        Inductor(BIAS_NODE, "H", cfg.l_c, LC_CTRL),
        SwitchResistor("H", CTRL_NODE, HTRON),
        Inductor(BIAS_NODE, OUT_NODE, cfg.l_c, LC_MAIN),
        Inductor(CTRL_NODE, "X1", cfg.snw_ctrl.l_nw, L_NW1),
        SwitchResistor("X1", "0", SNW1),
        SwitchResistor(CTRL_NODE, "0", SM1),
        Inductor(OUT_NODE, "X2", cfg.snw_main.l_nw, L_NW2),
        SwitchResistor("X2", "0", SNW2),
        SwitchResistor(OUT_NODE, "0", SM2),
        CurrentSource("0", OUT_NODE, I_IN),
        # gate heater loop: isolated from the channel, drives the h-Tron state only
        CurrentSource("0", "0", I_GATE),
    ]
    devices = {
        SNW1: cfg.snw_ctrl, SNW2: cfg.snw_main,
        SM1: cfg.sm_ctrl, SM2: cfg.sm_main,
        HTRON: cfg.htron,
    }
    return Netlist(elements, devices, gates={HTRON: I_GATE})


def single_oscillator_netlist(snw: SnwParams = SnwParams(), sm: SmParams = SmParams()) -> Netlist:
    """Bias source into node ``1``; ``L_nw`` + nanowire and the SM shunt to ground."""
    return Netlist([
        CurrentSource("0", "1", "i_b"),
        Inductor("1", "X", snw.l_nw, "L_nw"),
        SwitchResistor("X", "0", "snw"),
        SwitchResistor("1", "0", "sm"),
    ], {"snw": snw, "sm": sm})


def run_single_oscillator(i_b: float, state: SmState, t_end: float,
                          snw: SnwParams = SnwParams(), sm: SmParams = SmParams(),
                          tol: ToleranceSpec = ToleranceSpec(), sample: bool = True) -> Trace:
    """Free-running shunted nanowire, biased by a step to ``i_b`` at t = 0 from rest."""
    nl = single_oscillator_netlist(snw, sm)
    mode = {"snw": SnwState.SUPERCONDUCTING, "sm": SmState(state)}
    return run_hybrid(nl, mode, np.zeros(1), Schedule.constant({"i_b": i_b}), t_end, tol,
                      sample=sample)


def initial_mode(cfg: NeuronConfig, gate_current: float = 0.0) -> Dict[str, dev.DeviceState]:
    return {
        SNW1: SnwState.SUPERCONDUCTING,
        SNW2: SnwState.SUPERCONDUCTING,
        SM1: cfg.state_ctrl,
        SM2: cfg.state_main,
        HTRON: dev.htron_state(gate_current, cfg.htron),
    }


def init_bias_split(cfg: NeuronConfig, i_bias: Optional[float] = None) -> np.ndarray:
    """Quiescent inductor currents (netlist order) with the bias applied.

    With both nanowires superconducting the loop B-C-0-M-B is purely inductive
    and starts flux-free, so the bias divides inversely to the total series
    inductance of each branch and the SMs carry nothing.
    """
    ib = cfg.i_bias if i_bias is None else i_bias
    l_ctrl = cfg.l_c + cfg.snw_ctrl.l_nw
    l_main = cfg.l_c + cfg.snw_main.l_nw
    i_ctrl = ib * l_main / (l_ctrl + l_main)
    i_main = ib * l_ctrl / (l_ctrl + l_main)
    # order: Lc_ctrl, Lc_main, L_nw1, L_nw2
    return np.array([i_ctrl, i_main, i_ctrl, i_main])


def check_regime(cfg: NeuronConfig) -> None:
    limit = cfg.snw_ctrl.i_c + cfg.snw_main.i_c
    if cfg.i_bias >= limit:
        raise RegimeError(
            f"i_bias = {cfg.i_bias * 1e6:.3f} uA reaches 2*I_c = {limit * 1e6:.3f} uA: "
            f"both nanowires would latch resistive without input")


def run_spiking(cfg: NeuronConfig, sample: bool = True) -> Trace:
    """Spiking run: bias pre-split, input stepped on at t = 0, gate held off."""
    if any(a != 0.0 for _, a in cfg.i_gate):
        raise ConfigError("the h-Tron gate must stay at 0 A during spike generation")
    check_regime(cfg)
    nl = build_neuron_netlist(cfg)
    sched = Schedule.constant({I_BIAS: cfg.i_bias, I_IN: cfg.i_in, I_GATE: 0.0})
    return run_hybrid(nl, initial_mode(cfg), init_bias_split(cfg), sched, cfg.t_end, cfg.tol,
                      sample=sample)


# ---------------------------------------------------------------- programming


@dataclass(frozen=True)
class ProgramPulse:
    """One staircase-ramped bias pulse, optionally with the h-Tron gate on.

    The bias ramps from 0 to ``amplitude`` in ``steps`` equal increments of
    ``step_time``, holds for ``hold``, and ramps back down the same way.
    """
    t_start: float
    amplitude: float
    gate: float
    steps: int
    step_time: float
    hold: float

    @property
    def t_end(self) -> float:
        return self.t_start + 2 * self.steps * self.step_time + self.hold

    def as_dict(self) -> dict:
        return {"t_start_s": self.t_start, "t_end_s": self.t_end, "amplitude_A": self.amplitude,
                "gate_A": self.gate, "steps": self.steps, "step_time_s": self.step_time,
                "hold_s": self.hold}


@dataclass(frozen=True)
class ProgramResult:
    pulses: Tuple[ProgramPulse, ...]
    schedule: Schedule
    trace: Trace
    final: Tuple[SmState, SmState]


def programming_amplitude(cfg: NeuronConfig, margin: float = 2.5) -> float:
    """Bias pulse height that puts ``margin * v_set`` across an LRS memristor.

    The pulse front divides evenly between the two coupling inductors, so each
    SM initially carries half the pulse.
    """
    v = max(cfg.sm_ctrl.v_set, cfg.sm_main.v_set)
    r = min(cfg.sm_ctrl.r_lrs, cfg.sm_main.r_lrs)
    return 2.0 * margin * v / r


def _ramp_steps(cfg: NeuronConfig, amplitude: float) -> int:
    # each increment's inductive front lands half on SM1; keep it under v_set / 2
    r = max(cfg.sm_ctrl.r_hrs, cfg.sm_main.r_hrs)
    v = min(cfg.sm_ctrl.v_set, cfg.sm_main.v_set)
    return max(1, int(np.ceil(abs(amplitude) * r / v)))


def pulse_schedule(pulses: Sequence[ProgramPulse]) -> Schedule:
    times: List[float] = [0.0]
    values: List[Dict[str, float]] = [{I_BIAS: 0.0, I_IN: 0.0, I_GATE: 0.0}]

    def put(t, bias, gate):
        if t == times[-1]:
            values[-1] = {I_BIAS: bias, I_IN: 0.0, I_GATE: gate}
        else:
            times.append(t)
            values.append({I_BIAS: bias, I_IN: 0.0, I_GATE: gate})

    for p in pulses:
        # gate settles one ramp step before the bias moves and releases one after
        lead = p.step_time
        put(p.t_start - lead if p.gate else p.t_start, 0.0, p.gate)
        for k in range(1, p.steps + 1):
            put(p.t_start + (k - 1) * p.step_time + (lead if p.gate else 0.0),
                p.amplitude * k / p.steps, p.gate)
        t_down = p.t_start + p.steps * p.step_time + p.hold
        for k in range(1, p.steps + 1):
            put(t_down + (k - 1) * p.step_time, p.amplitude * (p.steps - k) / p.steps, p.gate)
        if p.gate:
            put(p.t_end + lead, 0.0, 0.0)
    return Schedule(tuple(times), tuple(values))


def program_states(cfg: NeuronConfig, target: Tuple[SmState, SmState],
                   hold: float = 10e-9, settle: float = 10e-9,
                   step_time: float = 50e-12) -> ProgramResult:
    """Program (SM1, SM2) to ``target`` from a quiescent neuron.

    Pulse 1 runs with the gate off and a bias pulse whose polarity selects
    SM1's target, which sets both memristors. When SM2's target differs,
    pulse 2 repeats with the gate on so the h-Tron blocks the control branch
    and only SM2 is rewritten. Final states are read from the trace.
    """
    target = (SmState(target[0]), SmState(target[1]))
    amp = programming_amplitude(cfg)
    steps = _ramp_steps(cfg, amp)
    gate_on = 2.0 * cfg.htron.i_g_th

    def polarity(s: SmState) -> float:
        return amp if s is SmState.HRS else -amp

    t = step_time
    pulses = [ProgramPulse(t, polarity(target[0]), 0.0, steps, step_time, hold)]
    if target[1] is not target[0]:
        t = pulses[-1].t_end + settle
        pulses.append(ProgramPulse(t, polarity(target[1]), gate_on, steps, step_time, hold))
    t_end = pulses[-1].t_end + settle + 2 * step_time

    nl = build_neuron_netlist(cfg)
    sched = pulse_schedule(pulses)
    trace = run_hybrid(nl, initial_mode(cfg), np.zeros(len(nl.inductors)), sched, t_end, cfg.tol)
    final = (SmState(trace.final_mode[SM1]), SmState(trace.final_mode[SM2]))
    latched = [d for d in (SNW1, SNW2) if trace.final_mode[d] is not SnwState.SUPERCONDUCTING]
    if final != target or latched:
        why = f"nanowires {latched} left resistive" if latched else "state mismatch"
        raise ProgrammingError(
            f"programming to {combo_name(target)} ended at {combo_name(final)} ({why})", final)
    return ProgramResult(tuple(pulses), sched, trace, final)


def verify_no_spurious_programming(trace: Trace, v_set) -> bool:
    """True when no SM changed state and both SM voltages stayed below ``v_set``.

    ``v_set`` is a threshold in volts or a :class:`NeuronConfig`, in which
    case each SM is checked against its own threshold.
    """
    if any(e.device in (SM1, SM2) for e in trace.events):
        return False
    if len(trace) == 0:
        return True
    if isinstance(v_set, NeuronConfig):
        limits = ((CTRL_NODE, v_set.sm_ctrl.v_set), (OUT_NODE, v_set.sm_main.v_set))
    else:
        limits = ((CTRL_NODE, float(v_set)), (OUT_NODE, float(v_set)))
    return all(np.max(np.abs(trace.node(n))) < lim for n, lim in limits)
