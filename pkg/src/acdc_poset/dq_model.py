from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Literal, NamedTuple, Union

import networkx as nx
import numpy as np

from .config import CrossCouplingSign
from .errors import DivisionGuard, GuardViolation, InvariantError, VariantMismatch
from .grid import LOCAL_LOOPS


logger = logging.getLogger(__name__)

ModelBase = Literal["Full", "BetaSub", "RhoSub", "Timescale"]
PartitionType = Literal["NotPartitioned", "OneWayAcToDc", "OneWayDcToAc", "Full"]

SIGNALS: tuple[str, ...] = ("v_d", "v_q", "i_d", "i_q", "v_dc", "i_line")
AC_TERMINALS = frozenset({"v_d", "v_q"})
DC_TERMINALS = frozenset({"v_dc", "i_line"})

# dashed edges: the loop measures the first signal and actuates the second
LOOP_EDGES: dict[str, tuple[tuple[str, str], ...]] = {
    "dc_voltage": (("v_dc", "i_d"),),
    "reactive_power": (("v_d", "i_q"), ("v_q", "i_q")),
    "power_transfer_dc_side": (("i_line", "i_d"),),
    "power_transfer_ac_side": (("v_d", "i_d"), ("v_q", "i_d")),
}

DEFAULT_GUARD = 1e-6


@dataclass(frozen=True)
class DqParams:
    L: float
    R: float
    C_dc: float
    omega: float
    v_ac_nominal: float = 1.0
    v_dc_nominal: float = 1.0

    def __post_init__(self) -> None:
        if self.L <= 0 or self.C_dc <= 0 or self.omega <= 0:
            raise InvariantError(f"dq parameters need L, C_dc and omega positive (got {self})")
        if self.R < 0:
            raise InvariantError(f"dq resistance must be nonnegative, got {self.R}")
        if self.v_dc_nominal <= 0:
            raise InvariantError("Nominal DC voltage must be positive")


@dataclass(frozen=True)
class DqState:
    i_d: float
    i_q: float
    v_dc: float


@dataclass(frozen=True)
class DqBoundary:
    v_d: float
    v_q: float
    i_line: float


@dataclass(frozen=True)
class M:
    m_d: float
    m_q: float


@dataclass(frozen=True)
class Beta:
    beta_d: float
    beta_q: float


@dataclass(frozen=True)
class Rho:
    rho_d: float
    rho_q: float


@dataclass(frozen=True)
class CurrentSetpoint:
    i_d: float
    i_q: float


DqControls = Union[M, Beta, Rho, CurrentSetpoint]

CONTROL_FOR_BASE: dict[str, type] = {"Full": M, "BetaSub": Beta, "RhoSub": Rho, "Timescale": CurrentSetpoint}


@dataclass(frozen=True)
class ModelVariant:
    base: ModelBase = "Full"
    const_ac_voltage: bool = False
    const_dc_voltage: bool = False
    cross_coupling: CrossCouplingSign = "symmetric"

    def __post_init__(self) -> None:
        if self.base not in CONTROL_FOR_BASE:
            raise InvariantError(f"Unknown model base '{self.base}'")
        if self.cross_coupling not in ("symmetric", "antisymmetric"):
            raise InvariantError(f"Unknown cross-coupling mode '{self.cross_coupling}'")

    @property
    def q_sign(self) -> float:
        """Sign of the omega*L*i_d term in the q-axis current equation."""
        return 1.0 if self.cross_coupling == "symmetric" else -1.0

    def describe(self) -> str:
        parts = [self.base]
        if self.const_ac_voltage:
            parts.append("const AC voltage")
        if self.const_dc_voltage:
            parts.append("const DC voltage")
        return " + ".join(parts)


class DqDerivatives(NamedTuple):
    di_d: float
    di_q: float
    dv_dc: float


class DqOutputs(NamedTuple):
    zeta: float
    p_dc: float
    p_ac: float
    q_ac: float


def _check_controls(variant: ModelVariant, controls: DqControls) -> None:
    expected = CONTROL_FOR_BASE[variant.base]
    if not isinstance(controls, expected):
        raise VariantMismatch(
            f"{variant.base} model takes {expected.__name__} controls, got {type(controls).__name__}"
        )


def _guard_currents(i_d: float, i_q: float, guard: float, exc: type[Exception]) -> None:
    if abs(i_d) < guard or abs(i_q) < guard:
        raise exc(f"Current components ({i_d:.3g}, {i_q:.3g}) are below the guard {guard:g}")


def nominal_modulation(params: DqParams, setpoint: CurrentSetpoint, variant: ModelVariant) -> M:
    """Modulation holding the setpoint currents at the nominal operating point (v_d = v_ac_nominal, v_q = 0)."""
    wL = params.omega * params.L
    m_d = 2.0 * (params.v_ac_nominal - params.R * setpoint.i_d + wL * setpoint.i_q) / params.v_dc_nominal
    m_q = 2.0 * (-params.R * setpoint.i_q + variant.q_sign * wL * setpoint.i_d) / params.v_dc_nominal
    return M(m_d, m_q)


def converter_current(
    variant: ModelVariant,
    params: DqParams,
    state: DqState,
    controls: DqControls,
    guard: float = DEFAULT_GUARD,
) -> float:
    """DC-side converter current zeta under the variant's control parametrization."""
    _check_controls(variant, controls)
    if isinstance(controls, M):
        return 0.75 * (state.i_d * controls.m_d + state.i_q * controls.m_q)
    if isinstance(controls, Rho):
        return 0.75 * (controls.rho_d + controls.rho_q)
    if isinstance(controls, Beta):
        m = convert_controls(controls, ModelVariant("Full", cross_coupling=variant.cross_coupling), state, params, guard)
        return 0.75 * (state.i_d * m.m_d + state.i_q * m.m_q)
    m = nominal_modulation(params, controls, variant)
    return 0.75 * (controls.i_d * m.m_d + controls.i_q * m.m_q)


def dq_derivatives(
    variant: ModelVariant,
    params: DqParams,
    state: DqState,
    controls: DqControls,
    boundary: DqBoundary,
    guard: float = DEFAULT_GUARD,
) -> DqDerivatives:
    _check_controls(variant, controls)
    v_d, v_q = (params.v_ac_nominal, 0.0) if variant.const_ac_voltage else (boundary.v_d, boundary.v_q)
    wL = params.omega * params.L
    i_d, i_q, v_dc = state.i_d, state.i_q, state.v_dc

    if variant.base == "Timescale":
        di_d = di_q = 0.0
    elif variant.base == "BetaSub":
        di_d = (-params.R * i_d + v_d - controls.beta_d) / params.L
        di_q = (-params.R * i_q + v_q - controls.beta_q) / params.L
    else:
        if variant.base == "RhoSub":
            _guard_currents(i_d, i_q, guard, GuardViolation)
            t_d = v_dc * controls.rho_d / (2.0 * i_d)
            t_q = v_dc * controls.rho_q / (2.0 * i_q)
        else:
            t_d = 0.5 * v_dc * controls.m_d
            t_q = 0.5 * v_dc * controls.m_q
        di_d = (-params.R * i_d + v_d - t_d + wL * i_q) / params.L
        di_q = (-params.R * i_q + v_q - t_q + variant.q_sign * wL * i_d) / params.L

    if variant.const_dc_voltage:
        dv_dc = 0.0
    else:
        dv_dc = (converter_current(variant, params, state, controls, guard) - boundary.i_line) / params.C_dc
    return DqDerivatives(di_d, di_q, dv_dc)


def convert_controls(
    controls: DqControls,
    to_variant: ModelVariant,
    state: DqState,
    params: DqParams,
    guard: float = DEFAULT_GUARD,
) -> DqControls:
    target = CONTROL_FOR_BASE[to_variant.base]
    if isinstance(controls, CurrentSetpoint) or target is CurrentSetpoint:
        if isinstance(controls, target):
            return controls
        raise VariantMismatch("Current setpoints only pair with the Timescale model")

    wL = params.omega * params.L
    sign = to_variant.q_sign
    m = _to_modulation(controls, state, wL, sign, guard)
    if target is M:
        return m
    if target is Beta:
        return Beta(0.5 * state.v_dc * m.m_d - wL * state.i_q, 0.5 * state.v_dc * m.m_q - sign * wL * state.i_d)
    return Rho(state.i_d * m.m_d, state.i_q * m.m_q)


def _to_modulation(controls: DqControls, state: DqState, wL: float, sign: float, guard: float) -> M:
    if isinstance(controls, M):
        return controls
    if isinstance(controls, Beta):
        if abs(state.v_dc) < guard:
            raise DivisionGuard(f"v_dc = {state.v_dc:.3g} is below the guard {guard:g}; cannot invert the beta map")
        return M(
            2.0 * (controls.beta_d + wL * state.i_q) / state.v_dc,
            2.0 * (controls.beta_q + sign * wL * state.i_d) / state.v_dc,
        )
    _guard_currents(state.i_d, state.i_q, guard, DivisionGuard)
    return M(controls.rho_d / state.i_d, controls.rho_q / state.i_q)


def dq_outputs(state: DqState, controls: M, boundary: DqBoundary) -> DqOutputs:
    if not isinstance(controls, M):
        raise VariantMismatch(f"dq_outputs needs modulation controls, got {type(controls).__name__}")
    zeta = 0.75 * (state.i_d * controls.m_d + state.i_q * controls.m_q)
    return DqOutputs(
        zeta=zeta,
        p_dc=state.v_dc * zeta,
        p_ac=0.75 * (boundary.v_d * state.i_d + boundary.v_q * state.i_q),
        q_ac=0.75 * (-boundary.v_d * state.i_q + boundary.v_q * state.i_d),
    )


def steady_state_terminal_mismatch(
    params: DqParams,
    state: DqState,
    controls: M,
    cross_coupling: CrossCouplingSign = "symmetric",
) -> float:
    """Bus power minus internal-terminal power (v.i) at the bus voltage that makes the current derivatives vanish."""
    variant = ModelVariant("Full", cross_coupling=cross_coupling)
    wL = params.omega * params.L
    t_d = 0.5 * state.v_dc * controls.m_d
    t_q = 0.5 * state.v_dc * controls.m_q
    v_d = params.R * state.i_d + t_d - wL * state.i_q
    v_q = params.R * state.i_q + t_q - variant.q_sign * wL * state.i_d
    return (v_d * state.i_d + v_q * state.i_q) - (t_d * state.i_d + t_q * state.i_q)


@dataclass(frozen=True)
class CouplingGraph:
    variant: ModelVariant
    physical: frozenset[tuple[str, str]] = frozenset()
    loops: frozenset[tuple[str, str]] = frozenset()

    @property
    def edges(self) -> frozenset[tuple[str, str]]:
        return self.physical | self.loops

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(SIGNALS)
        graph.add_edges_from(sorted(self.physical), kind="physical")
        graph.add_edges_from(sorted(self.loops - self.physical), kind="loop")
        return graph


SAMPLING_PARAMS = DqParams(L=0.15, R=0.02, C_dc=0.8, omega=1.0)


def _signal_rates(
    variant: ModelVariant,
    params: DqParams,
    control_pair: tuple[float, float],
    v_remote: float,
) -> Callable[[np.ndarray], np.ndarray]:
    """Rate (or algebraic value) of every signal as a function of the six-signal vector."""
    control_type = CONTROL_FOR_BASE[variant.base]

    def rates(x: np.ndarray) -> np.ndarray:
        v_d, v_q, i_d, i_q, v_dc, i_line = x
        state = DqState(i_d, i_q, v_dc)
        controls = CurrentSetpoint(i_d, i_q) if control_type is CurrentSetpoint else control_type(*control_pair)
        boundary = DqBoundary(v_d, v_q, i_line)
        # the bus voltage is read from the signal vector even when it is held constant
        converter_variant = ModelVariant(variant.base, False, variant.const_dc_voltage, variant.cross_coupling)
        di_d, di_q, dv_dc = dq_derivatives(converter_variant, params, state, controls, boundary, guard=0.0)
        if variant.const_dc_voltage:
            line = converter_current(variant, params, state, controls, guard=0.0)
        else:
            line = v_dc - v_remote
        return np.array([-i_d, -i_q, di_d, di_q, dv_dc, line])

    return rates


def _jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    J = np.zeros((x.size, x.size))
    for k in range(x.size):
        h = 1e-6 * max(1.0, abs(x[k]))
        step = np.zeros_like(x)
        step[k] = h
        J[:, k] = (f(x + step) - f(x - step)) / (2.0 * h)
    return J


def coupling_graph(
    variant: ModelVariant,
    loops: Iterable[str] = (),
    params: DqParams | None = None,
    samples: int = 20,
    seed: int = 0,
    threshold: float = 1e-8,
) -> CouplingGraph:
    loops = set(loops)
    unknown = loops - set(LOCAL_LOOPS)
    if unknown:
        raise InvariantError(f"Unknown local loops {sorted(unknown)}")
    params = params or SAMPLING_PARAMS
    rng = np.random.default_rng(seed)

    held = set()
    if variant.const_ac_voltage:
        held |= AC_TERMINALS
    if variant.const_dc_voltage:
        held.add("v_dc")

    physical: set[tuple[str, str]] = set()
    drawn = 0
    while drawn < samples:
        x = rng.uniform(-1.0, 1.0, size=len(SIGNALS))
        x[SIGNALS.index("v_dc")] = rng.uniform(0.5, 1.5)
        control_pair = tuple(rng.uniform(-1.0, 1.0, size=2))
        v_remote = rng.uniform(0.5, 1.5)
        if variant.base == "RhoSub" and min(abs(x[2]), abs(x[3])) < 1e-3:
            logger.debug("Resampling: current components too close to zero for the rho model")
            continue
        drawn += 1
        J = _jacobian(_signal_rates(variant, params, control_pair, v_remote), x)
        for b, target in enumerate(SIGNALS):
            for a, source in enumerate(SIGNALS):
                if a != b and source not in held and abs(J[b, a]) > threshold:
                    physical.add((source, target))

    if variant.base == "Timescale":
        physical = {(a, b) for a, b in physical if b not in ("i_d", "i_q")}

    loop_edges = {edge for loop in sorted(loops) for edge in LOOP_EDGES[loop]}
    logger.debug("Coupling graph for %s: %d physical, %d loop edges", variant.describe(), len(physical), len(loop_edges))
    return CouplingGraph(variant=variant, physical=frozenset(physical), loops=frozenset(loop_edges))


def partition_type(
    variant: ModelVariant,
    loops: Iterable[str] = (),
    params: DqParams | None = None,
    samples: int = 20,
    seed: int = 0,
    threshold: float = 1e-8,
) -> PartitionType:
    graph = coupling_graph(variant, loops, params, samples, seed, threshold).to_networkx()
    ac_to_dc = any(nx.has_path(graph, a, b) for a in AC_TERMINALS for b in DC_TERMINALS)
    dc_to_ac = any(nx.has_path(graph, b, a) for a in AC_TERMINALS for b in DC_TERMINALS)
    if ac_to_dc and dc_to_ac:
        return "NotPartitioned"
    if ac_to_dc:
        return "OneWayAcToDc"
    if dc_to_ac:
        return "OneWayDcToAc"
    return "Full"
