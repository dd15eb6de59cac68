"""Piecewise-linear RL netlists and their per-mode state-space systems.

A netlist holds current sources, resistors, inductors and switch-resistors.
A switch-resistor takes its resistance from the discrete state of a bound
device, so every assignment of device states (a *mode*) yields a plain linear
RL circuit. :func:`build_mode_system` compiles that circuit into

    dx/dt = A x + B u

where ``x`` are independent inductor currents and ``u`` the source currents.

Zero-resistance switches are merged into their neighbours (no epsilon
resistors). Nodes that reach ground only through inductors and current sources
form cut-sets; their KCL becomes a linear constraint on the inductor currents
and the dependent currents are eliminated from the state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import List, Mapping, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from . import devices as dev

GROUND = "0"


class NetlistError(ValueError):
    """Malformed netlist (bad element values, duplicate ids, floating nodes)."""


class AssemblyError(ValueError):
    """A mode cannot be compiled to a unique linear system."""


class EquilibriumError(ValueError):
    """The mode has no unique equilibrium (singular state matrix)."""


@dataclass(frozen=True)
class CurrentSource:
    """Current ``u[source_id]`` drawn from ``node_from`` and injected into ``node_to``."""
    node_from: str
    node_to: str
    source_id: str


@dataclass(frozen=True)
class Resistor:
    a: str
    b: str
    ohms: float
    name: str = ""


@dataclass(frozen=True)
class Inductor:
    """Inductor with current positive from ``a`` to ``b``."""
    a: str
    b: str
    henries: float
    inductor_id: str


@dataclass(frozen=True)
class SwitchResistor:
    """Resistor whose value follows the state of ``device_id``; current positive from ``a`` to ``b``."""
    a: str
    b: str
    device_id: str


Element = Union[CurrentSource, Resistor, Inductor, SwitchResistor]


@dataclass(frozen=True)
class Netlist:
    elements: Tuple[Element, ...]
    devices: Mapping[str, dev.DeviceParams]
    # h-Tron device id -> source id of its (galvanically isolated) gate drive
    gates: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "devices", MappingProxyType(dict(self.devices)))
        object.__setattr__(self, "gates", MappingProxyType(dict(self.gates)))
        self.validate()

    @property
    def nodes(self) -> Tuple[str, ...]:
        seen = {GROUND: None}
        for el in self.elements:
            for n in _terminals(el):
                seen.setdefault(n, None)
        return tuple(seen)

    @property
    def inductors(self) -> Tuple[Inductor, ...]:
        return tuple(e for e in self.elements if isinstance(e, Inductor))

    @property
    def sources(self) -> Tuple[CurrentSource, ...]:
        return tuple(e for e in self.elements if isinstance(e, CurrentSource))

    @property
    def switches(self) -> Tuple[SwitchResistor, ...]:
        return tuple(e for e in self.elements if isinstance(e, SwitchResistor))

    @property
    def source_ids(self) -> Tuple[str, ...]:
        return tuple(s.source_id for s in self.sources)

    @property
    def inductor_ids(self) -> Tuple[str, ...]:
        return tuple(l.inductor_id for l in self.inductors)

    def switch(self, device_id: str) -> SwitchResistor:
        for s in self.switches:
            if s.device_id == device_id:
                return s
        raise KeyError(device_id)

    def validate(self) -> None:
        ind_ids = [l.inductor_id for l in self.inductors]
        if len(set(ind_ids)) != len(ind_ids):
            raise NetlistError("inductor ids must be unique")
        dev_ids = [s.device_id for s in self.switches]
        if len(set(dev_ids)) != len(dev_ids):
            raise NetlistError("switch device ids must be unique")
        src_ids = [s.source_id for s in self.sources]
        if len(set(src_ids)) != len(src_ids):
            raise NetlistError("source ids must be unique")
        for d in dev_ids:
            if d not in self.devices:
                raise NetlistError(f"switch bound to unknown device {d!r}")
        for d, src in self.gates.items():
            if not isinstance(self.devices.get(d), dev.HtronParams):
                raise NetlistError(f"gate drive bound to non-h-Tron device {d!r}")
            if src not in src_ids:
                raise NetlistError(f"gate of {d!r} bound to unknown source {src!r}")
        for el in self.elements:
            if isinstance(el, Resistor) and not el.ohms > 0:
                raise NetlistError(f"resistor {el.name or (el.a, el.b)} must have positive resistance")
            if isinstance(el, Inductor) and not el.henries > 0:
                raise NetlistError(f"inductor {el.inductor_id} must have positive inductance")
        # connectivity: every node must reach ground through some element
        parent = {n: n for n in self.nodes}

        def find(n):
            while parent[n] != n:
                parent[n] = parent[parent[n]]
                n = parent[n]
            return n

        for el in self.elements:
            a, b = _terminals(el)
            parent[find(a)] = find(b)
        for n in self.nodes:
            if find(n) != find(GROUND):
                raise NetlistError(f"node {n!r} is not connected to ground")


def _terminals(el: Element) -> Tuple[str, str]:
    if isinstance(el, CurrentSource):
        return el.node_from, el.node_to
    return el.a, el.b


Mode = Mapping[str, dev.DeviceState]


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Per-mode realisation ``dx/dt = A x + B u`` with affine output maps.

    ``x`` holds the inductor currents listed in ``state_ids``. Every other
    quantity is ``M_x @ x + M_u @ u`` for the matching pair of maps:

    * all inductor currents: ``T``, ``S``
    * node voltages (order ``nodes``): ``Vx``, ``Vu``
    * switch currents (order ``switch_ids``): ``Ix``, ``Iu``
    """
    A: np.ndarray
    B: np.ndarray
    state_ids: Tuple[str, ...]
    inductor_ids: Tuple[str, ...]
    source_ids: Tuple[str, ...]
    nodes: Tuple[str, ...]
    switch_ids: Tuple[str, ...]
    T: np.ndarray
    S: np.ndarray
    Vx: np.ndarray
    Vu: np.ndarray
    Ix: np.ndarray
    Iu: np.ndarray
    # cut-set constraints cut_C @ i_full = cut_D @ u
    cut_C: np.ndarray
    cut_D: np.ndarray
    inductances: np.ndarray
    # modal data: A = W diag(lam) W^-1 with W^-1 = Winv
    lam: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    Winv: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def state_from_currents(self, i_full: np.ndarray) -> np.ndarray:
        idx = [self.inductor_ids.index(s) for s in self.state_ids]
        return np.asarray(i_full, dtype=float)[idx]

    def inductor_currents(self, x, u) -> np.ndarray:
        return self.T @ np.asarray(x, float) + self.S @ np.asarray(u, float)

    def switch_currents(self, x, u) -> np.ndarray:
        return self.Ix @ np.asarray(x, float) + self.Iu @ np.asarray(u, float)

    def node_index(self, node: str) -> int:
        return self.nodes.index(node)


def build_mode_system(netlist: Netlist, mode: Mode) -> LinearSystem:
    """Compile the linear RL circuit selected by ``mode``.

    Raises :class:`AssemblyError` when some node has neither a finite
    resistive path to ground nor an inductor cut-set that pins it.
    """
    missing = [s.device_id for s in netlist.switches if s.device_id not in mode]
    if missing:
        raise AssemblyError(f"mode does not assign devices {missing}")

    nodes = netlist.nodes
    inductors = netlist.inductors
    sources = netlist.sources
    switches = netlist.switches
    nL, m = len(inductors), len(sources)

    # merge nodes joined by zero-resistance switches
    parent = {nd: nd for nd in nodes}

    def find(nd):
        while parent[nd] != nd:
            parent[nd] = parent[parent[nd]]
            nd = parent[nd]
        return nd

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra == rb:
            return
        # ground always represents its class
        if rb == GROUND:
            ra, rb = rb, ra
        parent[rb] = ra

    resistors: List[Tuple[str, str, float]] = []
    shorts: List[Tuple[int, str, str]] = []
    sw_res: List[float] = []
    for k, sw in enumerate(switches):
        r = dev.resistance(netlist.devices[sw.device_id], mode[sw.device_id])
        sw_res.append(r)
        if r == 0.0:
            union(sw.a, sw.b)
            shorts.append((k, sw.a, sw.b))
        else:
            resistors.append((sw.a, sw.b, r))
    for el in netlist.elements:
        if isinstance(el, Resistor):
            resistors.append((el.a, el.b, el.ohms))

    classes = []
    for nd in nodes:
        r = find(nd)
        if r != GROUND and r not in classes:
            classes.append(r)
    cidx = {c: i for i, c in enumerate(classes)}
    nc = len(classes)

    def ci(nd):
        r = find(nd)
        return None if r == GROUND else cidx[r]

    G = np.zeros((nc, nc))
    rgraph = {c: set() for c in range(nc)}
    grounded = set()
    for a, b, r in resistors:
        ia, ib = ci(a), ci(b)
        if ia == ib:
            continue
        g = 1.0 / r
        if ia is not None:
            G[ia, ia] += g
        if ib is not None:
            G[ib, ib] += g
        if ia is not None and ib is not None:
            G[ia, ib] -= g
            G[ib, ia] -= g
            rgraph[ia].add(ib)
            rgraph[ib].add(ia)
        else:
            grounded.add(ia if ia is not None else ib)

    # KCL: G v + AL i = As u  (currents leaving each class)
    AL = np.zeros((nc, nL))
    for k, l in enumerate(inductors):
        ia, ib = ci(l.a), ci(l.b)
        if ia is not None:
            AL[ia, k] += 1.0
        if ib is not None:
            AL[ib, k] -= 1.0
    As = np.zeros((nc, m))
    for k, s in enumerate(sources):
        it, ifr = ci(s.node_to), ci(s.node_from)
        if it is not None:
            As[it, k] += 1.0
        if ifr is not None:
            As[ifr, k] -= 1.0

    # resistive islands without a path to ground
    comp = [-1] * nc
    islands: List[List[int]] = []
    grounded_comp = set()
    for start in range(nc):
        if comp[start] >= 0:
            continue
        stack, members = [start], []
        comp[start] = len(islands)
        while stack:
            c = stack.pop()
            members.append(c)
            for nb in rgraph[c]:
                if comp[nb] < 0:
                    comp[nb] = comp[start]
                    stack.append(nb)
        if any(c in grounded for c in members):
            grounded_comp.add(len(islands))
        islands.append(sorted(members))
    floating = [isl for k, isl in enumerate(islands) if k not in grounded_comp]
    refs = [isl[0] for isl in floating]
    N = np.zeros((nc, len(floating)))
    for k, isl in enumerate(floating):
        N[isl, k] = 1.0

    C = N.T @ AL
    D = N.T @ As
    for k, isl in enumerate(floating):
        if not np.any(C[k]):
            raise AssemblyError(
                f"node {classes[isl[0]]!r} has no finite-resistance path to ground "
                f"and no inductor to pin it in this mode")
    if floating and np.linalg.matrix_rank(C) < len(floating):
        raise AssemblyError(
            f"dependent inductor cut-sets around nodes {[classes[i[0]] for i in floating]}")

    dep = _pivot_columns(C)
    indep = [k for k in range(nL) if k not in dep]
    n = len(indep)
    T = np.zeros((nL, n))
    S = np.zeros((nL, m))
    T[indep, np.arange(n)] = 1.0
    if dep:
        Cd_inv = np.linalg.inv(C[:, dep])
        T[dep, :] = -Cd_inv @ C[:, indep]
        S[dep, :] = Cd_inv @ D

    # relative voltages: reference node of each floating island held at 0
    keep = [c for c in range(nc) if c not in refs]
    E = np.zeros((nc, nc))
    if keep:
        Gr = G[np.ix_(keep, keep)]
        try:
            E[np.ix_(keep, keep)] = np.linalg.inv(Gr)
        except np.linalg.LinAlgError:
            raise AssemblyError("singular resistive network") from None
    Vrel_x = -E @ AL @ T
    Vrel_u = -E @ (AL @ S - As)

    Lvec = np.array([l.henries for l in inductors])
    M = T.T @ (Lvec[:, None] * T)
    K = -(T.T @ AL.T @ Vrel_x)
    Ku = T.T @ AL.T @ Vrel_u
    K = 0.5 * (K + K.T)
    A = -np.linalg.solve(M, K) if n else np.zeros((0, 0))
    B = np.linalg.solve(M, Ku) if n else np.zeros((0, m))

    # island potentials from the inductor equations projected on the cut-sets
    if floating:
        Linv = 1.0 / Lvec
        Wz = C @ (Linv[:, None] * C.T)
        P = -np.linalg.solve(Wz, C @ (Linv[:, None] * AL.T))
        Vc_x = Vrel_x + N @ (P @ Vrel_x)
        Vc_u = Vrel_u + N @ (P @ Vrel_u)
    else:
        Vc_x, Vc_u = Vrel_x, Vrel_u

    # expand class voltages to every node
    sel = np.zeros((len(nodes), nc))
    for r, nd in enumerate(nodes):
        c = ci(nd)
        if c is not None:
            sel[r, c] = 1.0
    Vx = sel @ Vc_x
    Vu = sel @ Vc_u

    Ix, Iu = _switch_current_maps(netlist, nodes, switches, sw_res, shorts, Vx, Vu, T, S)

    if n:
        mu, Wm = scipy.linalg.eigh(K, M)
        lam = -mu
        lam[np.abs(lam) < 1e-9 * max(1.0, np.max(np.abs(lam)))] = 0.0
        Winv = Wm.T @ M
    else:
        lam, Wm, Winv = np.zeros(0), np.zeros((0, 0)), np.zeros((0, 0))

    return LinearSystem(
        A=A, B=B,
        state_ids=tuple(inductors[k].inductor_id for k in indep),
        inductor_ids=tuple(l.inductor_id for l in inductors),
        source_ids=tuple(s.source_id for s in sources),
        nodes=nodes,
        switch_ids=tuple(s.device_id for s in switches),
        T=T, S=S, Vx=Vx, Vu=Vu, Ix=Ix, Iu=Iu,
        cut_C=C, cut_D=D, inductances=Lvec,
        lam=lam, W=Wm, Winv=Winv,
    )


def _pivot_columns(C: np.ndarray) -> List[int]:
    """Columns eliminated as dependent, chosen by partial pivoting in order."""
    C = np.array(C, dtype=float)
    rows, cols = C.shape
    piv: List[int] = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        p = r + int(np.argmax(np.abs(C[r:, c])))
        if abs(C[p, c]) < 1e-12:
            continue
        C[[r, p]] = C[[p, r]]
        C[r] /= C[r, c]
        for q in range(rows):
            if q != r:
                C[q] -= C[q, c] * C[r]
        piv.append(c)
        r += 1
    return piv


def _switch_current_maps(netlist, nodes, switches, sw_res, shorts, Vx, Vu, T, S):
    """Affine maps for the current through every switch-resistor."""
    nsw = len(switches)
    nx, nu = T.shape[1], S.shape[1]
    Ix = np.zeros((nsw, nx))
    Iu = np.zeros((nsw, nu))
    nidx = {nd: k for k, nd in enumerate(nodes)}
    for k, sw in enumerate(switches):
        if sw_res[k] > 0:
            ia, ib = nidx[sw.a], nidx[sw.b]
            Ix[k] = (Vx[ia] - Vx[ib]) / sw_res[k]
            Iu[k] = (Vu[ia] - Vu[ib]) / sw_res[k]
    if not shorts:
        return Ix, Iu

    # Shorted switches carry whatever KCL leaves over at their nodes.
    # Injection at node from all non-short elements: sum of currents entering.
    inj_x = np.zeros((len(nodes), nx))
    inj_u = np.zeros((len(nodes), nu))

    def add(nd, cx, cu, sign):
        if nd == GROUND:
            return
        inj_x[nidx[nd]] += sign * cx
        inj_u[nidx[nd]] += sign * cu

    for k, l in enumerate(netlist.inductors):
        add(l.a, T[k], S[k], -1.0)
        add(l.b, T[k], S[k], +1.0)
    ek = np.eye(nu)
    for k, s in enumerate(netlist.sources):
        add(s.node_to, np.zeros(nx), ek[k], +1.0)
        add(s.node_from, np.zeros(nx), ek[k], -1.0)
    for k, sw in enumerate(switches):
        if sw_res[k] > 0:
            add(sw.a, Ix[k], Iu[k], -1.0)
            add(sw.b, Ix[k], Iu[k], +1.0)
    for el in netlist.elements:
        if isinstance(el, Resistor):
            ia, ib = nidx[el.a], nidx[el.b]
            cx = (Vx[ia] - Vx[ib]) / el.ohms
            cu = (Vu[ia] - Vu[ib]) / el.ohms
            add(el.a, cx, cu, -1.0)
            add(el.b, cx, cu, +1.0)

    # Incidence of shorts: current leaving a, entering b; solve Inc @ i_short = inj.
    rows = [nd for nd in nodes if nd != GROUND]
    ridx = {nd: r for r, nd in enumerate(rows)}
    Inc = np.zeros((len(rows), len(shorts)))
    for j, (_, a, b) in enumerate(shorts):
        if a != GROUND:
            Inc[ridx[a], j] += 1.0
        if b != GROUND:
            Inc[ridx[b], j] -= 1.0
    rsel = [nidx[nd] for nd in rows]
    pinv = np.linalg.pinv(Inc)
    sx = pinv @ inj_x[rsel]
    su = pinv @ inj_u[rsel]
    for j, (k, _, _) in enumerate(shorts):
        Ix[k] = sx[j]
        Iu[k] = su[j]
    return Ix, Iu


def node_voltages(sys: LinearSystem, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1:] != (sys.n,) or u.shape[-1:] != (sys.m,):
        raise ValueError(
            f"dimension mismatch: expected x[{sys.n}], u[{sys.m}], got {x.shape}, {u.shape}")
    return x @ sys.Vx.T + u @ sys.Vu.T


def equilibrium(sys: LinearSystem, u) -> np.ndarray:
    """Constant-input steady state solving ``A x + B u = 0``."""
    u = np.asarray(u, dtype=float)
    if sys.n == 0:
        return np.zeros(0)
    if np.any(sys.lam == 0.0):
        raise EquilibriumError(
            "state matrix is singular (superconducting loop); no unique equilibrium")
    return -np.linalg.solve(sys.A, sys.B @ u)


def kcl_residual(netlist: Netlist, mode: Mode, x, u, sys: Optional[LinearSystem] = None) -> float:
    """Largest KCL mismatch (amps) over all non-ground nodes.

    Resistor currents come from the node-voltage map, inductor and source
    currents from the state, shorted switches from the switch-current map.
    """
    if sys is None:
        sys = build_mode_system(netlist, mode)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = dict(zip(sys.nodes, node_voltages(sys, x, u)))
    v[GROUND] = 0.0
    i_l = sys.inductor_currents(x, u)
    i_sw = sys.switch_currents(x, u)
    bal = {nd: 0.0 for nd in sys.nodes if nd != GROUND}

    def flow(a, b, i):
        if a != GROUND:
            bal[a] -= i
        if b != GROUND:
            bal[b] += i

    src = dict(zip(sys.source_ids, u))
    for el in netlist.elements:
        if isinstance(el, Resistor):
            flow(el.a, el.b, (v[el.a] - v[el.b]) / el.ohms)
        elif isinstance(el, Inductor):
            flow(el.a, el.b, i_l[sys.inductor_ids.index(el.inductor_id)])
        elif isinstance(el, CurrentSource):
            flow(el.node_from, el.node_to, src[el.source_id])
        else:
            k = sys.switch_ids.index(el.device_id)
            r = dev.resistance(netlist.devices[el.device_id], mode[el.device_id])
            i = (v[el.a] - v[el.b]) / r if r > 0 else i_sw[k]
            flow(el.a, el.b, i)
    return max((abs(b) for b in bal.values()), default=0.0)


def source_jump(sys: LinearSystem, i_full, u_old, u_new) -> np.ndarray:
    """Inductor currents right after a step in the source currents.

    A step feeding an inductor cut-set forces an instantaneous redistribution.
    The increment is the minimum-flux one (impulsive node potential on the
    cut-set), shared along the cut-set in proportion to ``1/L``. Inductors
    outside every cut-set keep their current.
    """
    i_full = np.asarray(i_full, dtype=float)
    du = np.asarray(u_new, float) - np.asarray(u_old, float)
    if sys.cut_C.shape[0] == 0 or not np.any(sys.cut_D @ du):
        return i_full.copy()
    Linv = 1.0 / sys.inductances
    Wz = sys.cut_C @ (Linv[:, None] * sys.cut_C.T)
    zeta = np.linalg.solve(Wz, sys.cut_D @ du)
    return i_full + Linv * (sys.cut_C.T @ zeta)
