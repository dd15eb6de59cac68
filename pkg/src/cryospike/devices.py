"""Two-state device models for the superconducting neuron.

Three devices are modelled as switch-resistors whose resistance depends on a
discrete state:

* superconducting nanowire (SNW): 0 ohm when superconducting, ``R_hs`` when a
  hotspot is present. Switching is hysteretic between the retrapping and the
  critical current.
* superconducting memristor (SM): non-volatile LRS/HRS resistor programmed by
  a polarity-signed voltage threshold.
* heater cryotron (h-Tron): channel is superconducting unless the gate current
  reaches the gate threshold.

All functions here are pure. Units are SI.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union


class DeviceError(ValueError):
    """Invalid device parameters or out-of-domain arguments."""


class SnwState(str, enum.Enum):
    SUPERCONDUCTING = "SC"
    RESISTIVE = "R"


class SmState(str, enum.Enum):
    LRS = "LRS"
    HRS = "HRS"


class HtronState(str, enum.Enum):
    SUPERCONDUCTING = "SC"
    RESISTIVE = "R"


DeviceState = Union[SnwState, SmState, HtronState]

# Fitted sinusoidal gamma0 map; 60 deg reproduces (14.4, 98) mOhm.
GAMMA_R0 = 56.2e-3
GAMMA_EPS = 0.8589


@dataclass(frozen=True)
class SnwParams:
    i_c: float = 30e-6
    i_r: float = 20e-6
    r_hs: float = 5e3
    l_nw: float = 10e-9

    def __post_init__(self):
        if not (self.i_c > self.i_r > 0):
            raise DeviceError(f"SNW needs I_c > I_r > 0, got I_c={self.i_c!r}, I_r={self.i_r!r}")
        if not self.r_hs > 0:
            raise DeviceError(f"SNW hotspot resistance must be positive, got {self.r_hs!r}")
        if not self.l_nw > 0:
            raise DeviceError(f"SNW inductance must be positive, got {self.l_nw!r}")


@dataclass(frozen=True)
class SmParams:
    r_lrs: float = 14.4e-3
    r_hrs: float = 98e-3
    gamma0: float = 60.0
    v_set: float = 50e-6

    def __post_init__(self):
        if not (0 < self.r_lrs < self.r_hrs):
            raise DeviceError(f"SM needs 0 < R_LRS < R_HRS, got {self.r_lrs!r}, {self.r_hrs!r}")
        if not (0.0 <= self.gamma0 <= 90.0):
            raise DeviceError(f"gamma0 must lie in [0, 90] deg, got {self.gamma0!r}")
        if not self.v_set > 0:
            raise DeviceError(f"v_set must be positive, got {self.v_set!r}")

    def resistance(self, state: SmState) -> float:
        return self.r_hrs if SmState(state) is SmState.HRS else self.r_lrs

    @classmethod
    def from_gamma0(cls, gamma0: float, r0: float = GAMMA_R0, eps: float = GAMMA_EPS,
                    v_set: float = 50e-6) -> "SmParams":
        r_lrs, r_hrs = sm_pair_from_gamma0(gamma0, r0, eps)
        return cls(r_lrs=r_lrs, r_hrs=r_hrs, gamma0=gamma0, v_set=v_set)


@dataclass(frozen=True)
class HtronParams:
    i_g_th: float = 10e-6
    r_ht: float = 5e3
    r_p: Optional[float] = None

    def __post_init__(self):
        if not self.i_g_th > 0:
            raise DeviceError(f"h-Tron gate threshold must be positive, got {self.i_g_th!r}")
        if not self.r_ht > 0:
            raise DeviceError(f"h-Tron channel resistance must be positive, got {self.r_ht!r}")
        if self.r_p is not None and not self.r_p > 0:
            raise DeviceError(f"h-Tron parallel resistance must be positive, got {self.r_p!r}")


DeviceParams = Union[SnwParams, SmParams, HtronParams]


def snw_transition(state: SnwState, i_branch: float, p: SnwParams) -> SnwState:
    """Next nanowire state for branch current ``i_branch``.

    Switches to resistive at ``|i| >= I_c`` and retraps at ``|i| <= I_r``;
    anything in between keeps the current state.
    """
    mag = abs(i_branch)
    if state is SnwState.SUPERCONDUCTING:
        return SnwState.RESISTIVE if mag >= p.i_c else state
    return SnwState.SUPERCONDUCTING if mag <= p.i_r else state


def sm_transition(state: SmState, v_across: float, p: SmParams) -> SmState:
    # positive polarity sets HRS, negative sets LRS
    if v_across >= p.v_set:
        return SmState.HRS
    if v_across <= -p.v_set:
        return SmState.LRS
    return state


def sm_pair_from_gamma0(gamma0: float, r0: float = GAMMA_R0,
                        eps: float = GAMMA_EPS) -> Tuple[float, float]:
    """(R_LRS, R_HRS) for initial phase offset ``gamma0`` in degrees.

    ``r0 * (1 -/+ eps * sin(gamma0))``: the pair spreads apart symmetrically
    as gamma0 grows toward 90 deg.
    """
    if not (0.0 <= gamma0 <= 90.0) or math.isnan(gamma0):
        raise DeviceError(f"gamma0 must lie in [0, 90] deg, got {gamma0!r}")
    if not (0.0 <= eps < 1.0):
        raise DeviceError(f"eps must lie in [0, 1), got {eps!r}")
    if not r0 > 0:
        raise DeviceError(f"r0 must be positive, got {r0!r}")
    s = math.sin(math.radians(gamma0))
    return r0 * (1.0 - eps * s), r0 * (1.0 + eps * s)


def htron_channel_state(i_gate: float, p: HtronParams) -> float:
    """Channel resistance for gate current ``i_gate`` (tie goes to resistive)."""
    return p.r_ht if abs(i_gate) >= p.i_g_th else 0.0


def htron_state(i_gate: float, p: HtronParams) -> HtronState:
    return HtronState.RESISTIVE if abs(i_gate) >= p.i_g_th else HtronState.SUPERCONDUCTING


def resistance(params: DeviceParams, state: DeviceState) -> float:
    """Resistance of a device in a discrete state."""
    if isinstance(params, SnwParams):
        return params.r_hs if SnwState(state) is SnwState.RESISTIVE else 0.0
    if isinstance(params, SmParams):
        return params.resistance(SmState(state))
    if isinstance(params, HtronParams):
        if HtronState(state) is HtronState.SUPERCONDUCTING:
            return 0.0
        if params.r_p is None:
            return params.r_ht
        return params.r_ht * params.r_p / (params.r_ht + params.r_p)
    raise DeviceError(f"unknown device parameters {type(params).__name__}")
