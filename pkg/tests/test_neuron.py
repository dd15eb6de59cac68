import itertools

import numpy as np
import pytest

import oracles
from cryospike.circuit import Inductor, SwitchResistor, CurrentSource, build_mode_system
from cryospike.devices import HtronState, SmState, SnwParams, SnwState
from cryospike.neuron import (COMBOS, HTRON, I_BIAS, I_GATE, I_IN, LC_MAIN, NeuronConfig,
                              ProgrammingError, RegimeError, ConfigError, SM1, SM2, SNW1, SNW2,
                              build_neuron_netlist, init_bias_split, initial_mode,
                              program_states, programming_amplitude, run_spiking,
                              verify_no_spurious_programming)
from cryospike.solver import Event, Schedule, Trace, run_hybrid

SC = SnwState.SUPERCONDUCTING
LRS, HRS = SmState.LRS, SmState.HRS


def test_netlist_counts():
    nl = build_neuron_netlist(NeuronConfig())
    kinds = [type(e) for e in nl.elements]
    assert kinds.count(Inductor) == 4
    assert kinds.count(CurrentSource) == 3
    sw = {e.device_id for e in nl.elements if isinstance(e, SwitchResistor)}
    assert sw == {SNW1, SNW2, SM1, SM2, HTRON}
    assert {"B", "C", "M", "0"} <= set(nl.nodes)


def test_three_states_in_superconducting_mode():
    cfg = NeuronConfig()
    sys = build_mode_system(build_neuron_netlist(cfg), initial_mode(cfg))
    assert sys.n == 3


def test_zero_coupling_rejected():
    with pytest.raises(ConfigError):
        NeuronConfig(l_c=0.0)


def test_symmetric_split():
    split = init_bias_split(NeuronConfig(i_bias=59e-6))
    assert split == pytest.approx([29.5e-6] * 4, rel=1e-15)
    assert np.all(init_bias_split(NeuronConfig(i_bias=0.0)) == 0.0)


def test_asymmetric_split_matches_ramp_oracle():
    # main branch series inductance 60 nH against 30 nH on the control side
    cfg = NeuronConfig(snw_main=SnwParams(l_nw=40e-9), i_bias=30e-6)
    split = init_bias_split(cfg)
    assert split[3] == pytest.approx(10e-6, rel=1e-12)
    j1, j2 = oracles.ramped_bias_split(cfg.l_c, cfg.l_c, 10e-9, 40e-9, 98e-3, 98e-3, 30e-6)
    assert split[2] == pytest.approx(j1, rel=1e-5)
    assert split[3] == pytest.approx(j2, rel=1e-5)


def test_regime_limit():
    with pytest.raises(RegimeError, match="2\\*I_c"):
        run_spiking(NeuronConfig(i_bias=61e-6))


def test_gate_must_stay_off_while_spiking():
    with pytest.raises(ConfigError):
        run_spiking(NeuronConfig(i_gate=((0.0, 20e-6),)))


@pytest.fixture(scope="module")
def combo_traces():
    return {c: run_spiking(NeuronConfig(t_end=6e-6).with_combo(c)) for c in COMBOS}


def test_steady_alternation(combo_traces):
    for combo, tr in combo_traces.items():
        half = tr.t[-1] / 2
        fires = [e.device for e in tr.events
                 if e.device in (SNW1, SNW2) and e.new == "R" and e.t > half]
        assert len(fires) >= 4, combo
        # strictly alternating; each cycle opens with the main nanowire
        if fires[0] == SNW1:
            fires = fires[1:]
        assert fires[::2] == [SNW2] * len(fires[::2]), combo
        assert fires[1::2] == [SNW1] * len(fires[1::2]), combo


def test_spiking_never_programs(combo_traces):
    cfg = NeuronConfig()
    for tr in combo_traces.values():
        assert verify_no_spurious_programming(tr, cfg)
        assert verify_no_spurious_programming(tr, 50e-6)


def _trace(events, v):
    n = len(v)
    return Trace(t=np.arange(n, dtype=float), i_l=np.zeros((n, 4)), v=np.asarray(v, float),
                 u=np.zeros((n, 3)), mode_index=np.zeros(n, int), modes=[{}], events=events,
                 inductor_ids=(), nodes=("C", "M"), source_ids=(), final_i=np.zeros(4),
                 final_mode={})


def test_verify_synthetic_cases():
    quiet = _trace([], [[1e-6, 3e-6], [0.0, 0.0]])
    assert verify_no_spurious_programming(quiet, 50e-6)
    assert not verify_no_spurious_programming(quiet, 2e-6)
    written = _trace([Event(1.0, SM2, "HRS", "LRS")], [[0.0, 0.0], [0.0, 0.0]])
    assert not verify_no_spurious_programming(written, 50e-6)
    empty = _trace([], np.zeros((0, 2)))
    assert verify_no_spurious_programming(empty, 50e-6)


def test_gate_diverts_bias_to_main():
    cfg = NeuronConfig(i_in=0.0)
    nl = build_neuron_netlist(cfg)
    gate = 2 * cfg.htron.i_g_th
    mode = initial_mode(cfg, gate)
    assert mode[HTRON] is HtronState.RESISTIVE
    sched = Schedule.constant({I_BIAS: cfg.i_bias, I_IN: 0.0, I_GATE: gate})
    tr = run_hybrid(nl, mode, init_bias_split(cfg), sched, 2e-6, sample=True)
    late = tr.t >= 1e-6
    share = np.mean(tr.current(LC_MAIN)[late]) / cfg.i_bias
    assert share > 0.9


def test_programming_amplitude_margin():
    cfg = NeuronConfig()
    amp = programming_amplitude(cfg)
    r_min = min(cfg.sm_ctrl.r_lrs, cfg.sm_main.r_lrs)
    assert amp * r_min / 2 >= 2 * cfg.sm_ctrl.v_set


@pytest.mark.parametrize("target,n_pulses", [
    ((HRS, HRS), 1), ((HRS, LRS), 2), ((LRS, LRS), 1), ((LRS, HRS), 2)])
def test_programming_examples(target, n_pulses):
    res = program_states(NeuronConfig().with_combo((HRS, HRS)), target)
    assert res.final == target
    assert len(res.pulses) == n_pulses
    assert res.pulses[0].gate == 0.0
    assert (res.pulses[0].amplitude > 0) == (target[0] is HRS)
    if n_pulses == 2:
        assert res.pulses[1].gate > 0.0
        assert (res.pulses[1].amplitude > 0) == (target[1] is HRS)


def test_two_step_passes_through_sm1_target():
    res = program_states(NeuronConfig().with_combo((LRS, LRS)), (HRS, LRS))
    t_mid = res.pulses[1].t_start
    k = int(np.searchsorted(res.trace.t, t_mid))
    after_first = res.trace.modes[res.trace.mode_index[k - 1]]
    assert (after_first[SM1], after_first[SM2]) == (HRS, HRS)


@pytest.mark.slow
@pytest.mark.parametrize("start,target", list(itertools.product(COMBOS, COMBOS)))
def test_programming_reachability(start, target):
    res = program_states(NeuronConfig().with_combo(start), target)
    assert res.final == target
    assert len(res.pulses) <= 2
    assert res.trace.final_mode[SNW1] is SC and res.trace.final_mode[SNW2] is SC


def test_programming_failure_reports_states(monkeypatch):
    import cryospike.neuron as neuron
    # a pulse too weak to reach v_set leaves the memristors where they were
    monkeypatch.setattr(neuron, "programming_amplitude", lambda cfg, margin=2.5: 1e-6)
    with pytest.raises(ProgrammingError) as err:
        program_states(NeuronConfig().with_combo((HRS, HRS)), (LRS, LRS))
    assert "HRS" in str(err.value)
