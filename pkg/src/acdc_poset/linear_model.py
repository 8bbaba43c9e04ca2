from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal, Mapping, NamedTuple, Sequence

import networkx as nx
import numpy as np

from .config import DisturbanceModel
from .errors import (
    DimensionMismatch,
    InvariantError,
    MissingParameter,
    SchemaError,
    SingularResolvent,
    UnknownElement,
    UnorientedConverter,
)
from .grid import BusId, GridGraph, SubgridMap, build_quotient_graph, bus_sort_key, connected_components
from .poset import BlockPartition, Poset, in_block_incidence_algebra


logger = logging.getLogger(__name__)

StateKind = Literal["theta", "omega", "v", "i"]


def line_key(a: BusId, b: BusId) -> frozenset:
    return frozenset((a, b))


@dataclass(frozen=True)
class AcBusParams:
    inertia: float
    damping: float = 0.0
    injection: float = 0.0


@dataclass(frozen=True)
class DcLineParams:
    inductance: float
    resistance: float = 0.0


@dataclass(frozen=True)
class LinearGridParams:
    ac_buses: Mapping[BusId, AcBusParams] = field(default_factory=dict)
    ac_lines: Mapping[frozenset, float] = field(default_factory=dict)
    dc_buses: Mapping[BusId, float] = field(default_factory=dict)
    dc_lines: Mapping[frozenset, DcLineParams] = field(default_factory=dict)
    converters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for bus, p in self.ac_buses.items():
            if p.inertia <= 0:
                raise InvariantError(f"AC bus {bus}: inertia must be positive, got {p.inertia}")
            if p.damping < 0:
                raise InvariantError(f"AC bus {bus}: damping must be nonnegative, got {p.damping}")
        for bus, cap in self.dc_buses.items():
            if cap <= 0:
                raise InvariantError(f"DC bus {bus}: capacitance must be positive, got {cap}")
        for key, p in self.dc_lines.items():
            if p.inductance <= 0:
                raise InvariantError(f"DC line {_pair(key)}: inductance must be positive, got {p.inductance}")
            if p.resistance < 0:
                raise InvariantError(f"DC line {_pair(key)}: resistance must be nonnegative, got {p.resistance}")
        for conv, v_nom in self.converters.items():
            if v_nom <= 0:
                raise InvariantError(f"Converter {conv}: nominal DC voltage must be positive, got {v_nom}")


def _pair(key: frozenset) -> str:
    return "-".join(str(b) for b in sorted(key, key=bus_sort_key))


@dataclass(frozen=True)
class CostWeights:
    states: Mapping[str, float] = field(default_factory=dict)
    inputs: Mapping[str, float] = field(default_factory=dict)
    default: float = 1.0


class StateLabel(NamedTuple):
    subgrid: str
    kind: StateKind
    element: str

    @property
    def name(self) -> str:
        return f"{self.kind}[{self.element}]"


@dataclass(frozen=True, eq=False)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    F: np.ndarray
    C: np.ndarray
    D: np.ndarray
    state_labels: tuple[StateLabel, ...]
    input_labels: tuple[str, ...]
    state_partition: BlockPartition
    input_partition: BlockPartition
    drift: np.ndarray | None = None

    def __post_init__(self) -> None:
        n, m = len(self.state_labels), len(self.input_labels)
        for name, shape in (("A", (n, n)), ("B", (n, m)), ("F", (n, None)), ("C", (None, n)), ("D", (None, m))):
            matrix = np.asarray(getattr(self, name), dtype=float)
            if matrix.size == 0:
                matrix = matrix.reshape(tuple(0 if s is None else s for s in shape))
            if matrix.ndim != 2:
                raise DimensionMismatch(f"{name} must be two-dimensional, got shape {matrix.shape}")
            object.__setattr__(self, name, matrix)
            for got, want in zip(matrix.shape, shape):
                if want is not None and got != want:
                    raise DimensionMismatch(f"{name} has shape {matrix.shape}, expected {shape}")
        if self.C.shape[0] != self.D.shape[0]:
            raise DimensionMismatch("C and D must have the same number of rows")
        if self.state_partition.size != n or self.input_partition.size != m:
            raise DimensionMismatch("Partitions do not match the state/input dimensions")
        drift = np.zeros(n) if self.drift is None else np.asarray(self.drift, dtype=float)
        if drift.shape != (n,):
            raise DimensionMismatch(f"drift has shape {drift.shape}, expected {(n,)}")
        object.__setattr__(self, "drift", drift)

        if np.max(np.abs(self.C.T @ self.D), initial=0.0) > 1e-12:
            raise InvariantError("Output matrices must satisfy C^T D = 0")
        if m and np.min(np.linalg.eigvalsh(self.D.T @ self.D)) <= 1e-10:
            raise InvariantError("D^T D must be positive definite")
        if self.F.shape[1] == n and not _block_diagonal(self.F, self.state_partition, self.state_partition):
            raise InvariantError("F must be block diagonal with respect to the state partition")

    @property
    def n(self) -> int:
        return len(self.state_labels)

    @property
    def m(self) -> int:
        return len(self.input_labels)

    @property
    def state_names(self) -> list[str]:
        return [label.name for label in self.state_labels]

    @property
    def Q(self) -> np.ndarray:
        return self.C.T @ self.C

    @property
    def R(self) -> np.ndarray:
        return self.D.T @ self.D

    def state_index(self, name: str) -> int:
        try:
            return self.state_names.index(name)
        except ValueError:
            raise UnknownElement(f"Unknown state '{name}'") from None

    def input_index(self, name: str) -> int:
        try:
            return self.input_labels.index(name)
        except ValueError:
            raise UnknownElement(f"Unknown input '{name}'") from None

    def states_of(self, subgrids: Iterable[str]) -> np.ndarray:
        wanted = set(subgrids)
        return np.array([k for k, label in enumerate(self.state_labels) if label.subgrid in wanted], dtype=int)


def _block_diagonal(M: np.ndarray, rows: BlockPartition, cols: BlockPartition) -> bool:
    for r_label in rows.labels:
        r = rows.indices(r_label)
        for c_label in cols.labels:
            if r_label == c_label:
                continue
            c = cols.indices(c_label)
            if r.size and c.size and np.max(np.abs(M[np.ix_(r, c)])) > 0.0:
                return False
    return True


def subgrid_order(grid: GridGraph, smap: SubgridMap | None = None) -> list[str]:
    """Deterministic topological order of the quotient DAG (ties broken by component index)."""
    smap = smap or connected_components(grid)
    q = build_quotient_graph(grid, smap)
    return list(nx.lexicographical_topological_sort(q.directed(), key=lambda label: (int(label[2:]), label[:2])))


def build_linear_statespace(
    grid: GridGraph,
    params: LinearGridParams,
    cost: CostWeights | None = None,
    disturbance: DisturbanceModel = "identity",
    block_order: Sequence[str] | None = None,
) -> StateSpace:
    if disturbance not in ("identity", "physical"):
        raise SchemaError(f"Unknown disturbance model '{disturbance}' (expected identity or physical)")
    cost = cost or CostWeights()
    unoriented = [c.id for c in grid.converters if not c.is_oriented]
    if unoriented:
        raise UnorientedConverter(f"Converters without orientation: {unoriented}")

    smap = connected_components(grid)
    order = list(block_order) if block_order is not None else subgrid_order(grid, smap)
    if sorted(order) != sorted(s.label for s in smap.subgrids()):
        raise UnknownElement(f"Block order {order} does not list every subgrid exactly once")

    labels = _state_labels(grid, smap, order)
    index = {label.name: k for k, label in enumerate(labels)}
    n, m = len(labels), len(grid.converters)
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    F = np.zeros((n, n)) if disturbance == "physical" else np.eye(n)
    drift = np.zeros(n)

    for label in labels:
        k = index[label.name]
        if label.kind == "theta":
            A[k, index[f"omega[{label.element}]"]] = 1.0
        elif label.kind == "omega":
            bus = _bus_of(grid.ac_buses, label.element)
            p = _require(params.ac_buses, bus, f"AC bus {bus} (inertia, damping)")
            A[k, k] = -p.damping / p.inertia
            drift[k] = p.injection / p.inertia
            for a, b in grid.ac_lines:
                if bus not in (a, b):
                    continue
                other = b if a == bus else a
                susceptance = _require(params.ac_lines, line_key(a, b), f"AC line {a}-{b} (susceptance)")
                A[k, index[f"theta[{bus}]"]] -= susceptance / p.inertia
                A[k, index[f"theta[{other}]"]] += susceptance / p.inertia
            if disturbance == "physical":
                F[k, k] = 1.0 / p.inertia
        elif label.kind == "v":
            bus = _bus_of(grid.dc_buses, label.element)
            cap = _require(params.dc_buses, bus, f"DC bus {bus} (capacitance)")
            for a, b in grid.dc_lines:
                if bus == a:
                    A[k, index[f"i[{a}-{b}]"]] -= 1.0 / cap
                elif bus == b:
                    A[k, index[f"i[{a}-{b}]"]] += 1.0 / cap
            if disturbance == "physical":
                F[k, k] = 1.0 / cap
        else:
            a, b = _line_of(grid.dc_lines, label.element)
            line = _require(params.dc_lines, line_key(a, b), f"DC line {a}-{b} (inductance, resistance)")
            A[k, index[f"v[{a}]"]] += 1.0 / line.inductance
            A[k, index[f"v[{b}]"]] -= 1.0 / line.inductance
            A[k, k] = -line.resistance / line.inductance

    input_blocks: list[str] = []
    for col, conv in enumerate(grid.converters):
        v_nom = _require(params.converters, conv.id, f"converter {conv.id} (nominal_voltage)")
        inertia = _require(params.ac_buses, conv.ac_bus, f"AC bus {conv.ac_bus} (inertia, damping)").inertia
        cap = _require(params.dc_buses, conv.dc_bus, f"DC bus {conv.dc_bus} (capacitance)")
        # lossless transfer in the orientation direction: the source side loses, the target gains
        sign = -1.0 if conv.orientation == "ac_to_dc" else 1.0
        B[index[f"omega[{conv.ac_bus}]"], col] = sign * v_nom / inertia
        B[index[f"v[{conv.dc_bus}]"], col] = -sign / cap
        input_blocks.append(smap.subgrid_of(conv.source_bus).label)

    state_weights = np.array([cost.states.get(label.name, cost.default) for label in labels], dtype=float)
    input_weights = np.array([cost.inputs.get(conv.id, cost.default) for conv in grid.converters], dtype=float)
    if np.any(state_weights < 0) or np.any(input_weights <= 0):
        raise InvariantError("State weights must be nonnegative and input weights positive")
    C = np.vstack([np.diag(np.sqrt(state_weights)), np.zeros((m, n))])
    D = np.vstack([np.zeros((n, m)), np.diag(np.sqrt(input_weights))])

    return StateSpace(
        A=A,
        B=B,
        F=F,
        C=C,
        D=D,
        state_labels=tuple(labels),
        input_labels=tuple(c.id for c in grid.converters),
        state_partition=BlockPartition.from_labels([label.subgrid for label in labels], order),
        input_partition=BlockPartition.from_labels(input_blocks, order),
        drift=drift,
    )


def _state_labels(grid: GridGraph, smap: SubgridMap, order: Sequence[str]) -> list[StateLabel]:
    labels: list[StateLabel] = []
    for subgrid in order:
        buses = smap.buses_of(subgrid)
        if subgrid.startswith("AC"):
            if len(buses) > 1:
                labels.extend(StateLabel(subgrid, "theta", str(b)) for b in buses)
            labels.extend(StateLabel(subgrid, "omega", str(b)) for b in buses)
        else:
            labels.extend(StateLabel(subgrid, "v", str(b)) for b in buses)
            members = set(buses)
            labels.extend(StateLabel(subgrid, "i", f"{a}-{b}") for a, b in grid.dc_lines if a in members)
    return labels


def _bus_of(buses: Iterable[BusId], name: str) -> BusId:
    for bus in buses:
        if str(bus) == name:
            return bus
    raise UnknownElement(f"Unknown bus {name}")


def _line_of(lines: Iterable[tuple[BusId, BusId]], name: str) -> tuple[BusId, BusId]:
    for a, b in lines:
        if f"{a}-{b}" == name:
            return a, b
    raise UnknownElement(f"Unknown line {name}")


def _require(mapping: Mapping, key, what: str):
    if key not in mapping:
        raise MissingParameter(f"Missing parameter for {what}")
    return mapping[key]


def regroup(
    ss: StateSpace,
    groups: Mapping[str, Iterable[str]],
    input_groups: Mapping[str, Iterable[str]] | None = None,
) -> StateSpace:
    """Re-partition states (and inputs) by named blocks of subgrids; the ordering of states is unchanged."""
    block_of: dict[str, str] = {sub: name for name, subs in groups.items() for sub in subs}
    missing = {label.subgrid for label in ss.state_labels} - set(block_of)
    if missing:
        raise UnknownElement(f"Subgrids {sorted(missing)} are not assigned to any group")
    order = list(groups)
    state_partition = BlockPartition.from_labels([block_of[label.subgrid] for label in ss.state_labels], order)

    if input_groups is None:
        input_blocks = [block_of[ss.input_partition.labels[b]] for b in ss.input_partition.block_of_index]
    else:
        input_block_of = {inp: name for name, inputs in input_groups.items() for inp in inputs}
        missing_inputs = set(ss.input_labels) - set(input_block_of)
        if missing_inputs:
            raise UnknownElement(f"Inputs {sorted(missing_inputs)} are not assigned to any group")
        input_blocks = [input_block_of[label] for label in ss.input_labels]
    input_partition = BlockPartition.from_labels(input_blocks, order)
    return replace(ss, state_partition=state_partition, input_partition=input_partition)


@dataclass(frozen=True)
class CausalStructureReport:
    a_block_diagonal: bool
    a_in_algebra: bool
    b_in_algebra: bool
    a_violations: list[tuple[str, str]]
    b_violations: list[tuple[str, str]]

    @property
    def passed(self) -> bool:
        return self.a_block_diagonal and self.a_in_algebra and self.b_in_algebra

    def lines(self) -> list[str]:
        status = "PASS" if self.passed else "FAIL"
        out = [
            f"Poset-causal structure check: {status}",
            f"  A block diagonal: {self.a_block_diagonal}",
            f"  A in incidence algebra: {self.a_in_algebra}",
            f"  B in incidence algebra: {self.b_in_algebra}",
        ]
        out += [f"  A violation: block ({r}, {c})" for r, c in self.a_violations]
        out += [f"  B violation: block ({r}, {c})" for r, c in self.b_violations]
        return out


def verify_lemma1(ss: StateSpace, poset: Poset, tol: float = 1e-12) -> CausalStructureReport:
    a_ok, a_viol = in_block_incidence_algebra(ss.A, ss.state_partition, ss.state_partition, poset, tol)
    b_ok, b_viol = in_block_incidence_algebra(ss.B, ss.state_partition, ss.input_partition, poset, tol)
    return CausalStructureReport(
        a_block_diagonal=_block_diagonal(ss.A, ss.state_partition, ss.state_partition),
        a_in_algebra=a_ok,
        b_in_algebra=b_ok,
        a_violations=a_viol,
        b_violations=b_viol,
    )


DEFAULT_P22_FREQUENCIES = tuple(np.logspace(-2, 2, 5))


def p22_structure_check(
    ss: StateSpace,
    poset: Poset,
    frequencies: Sequence[float] | None = None,
    rel_tol: float = 1e-9,
    clearance: float = 1e-6,
) -> bool:
    frequencies = DEFAULT_P22_FREQUENCIES if frequencies is None else tuple(frequencies)
    eigenvalues = np.linalg.eigvals(ss.A) if ss.n else np.array([])
    identity = np.eye(ss.n)
    checked = 0

    for w in frequencies:
        s = 1j * w
        if eigenvalues.size and np.min(np.abs(eigenvalues - s)) < clearance:
            logger.warning("Skipping P22 sample at %.3g rad/s: too close to an eigenvalue of A", w)
            continue
        try:
            P22 = np.linalg.solve(s * identity - ss.A, ss.B.astype(complex))
        except np.linalg.LinAlgError as exc:
            raise SingularResolvent(f"sI - A is singular at s = {s}") from exc
        checked += 1

        scale = np.linalg.norm(P22)
        for row_label in ss.state_partition.labels:
            r = ss.state_partition.indices(row_label)
            for col_label in ss.input_partition.labels:
                if poset.precedes(col_label, row_label):
                    continue
                c = ss.input_partition.indices(col_label)
                if r.size and c.size and np.linalg.norm(P22[np.ix_(r, c)]) > rel_tol * scale:
                    logger.debug("P22 block (%s, %s) is nonzero at %.3g rad/s", row_label, col_label, w)
                    return False

    if frequencies and not checked:
        raise SingularResolvent("Every sample frequency lies on an eigenvalue of A")
    return True


def lossless_energy(grid: GridGraph, params: LinearGridParams, ss: StateSpace, x: np.ndarray) -> np.ndarray:
    """Stored energy 1/2 (J w^2 + B dtheta^2 + C v^2 + L i^2); x may be one state or a (steps, n) trajectory."""
    x = np.atleast_2d(x)
    energy = np.zeros(x.shape[0])
    position = {label.name: k for k, label in enumerate(ss.state_labels)}

    for label in ss.state_labels:
        k = position[label.name]
        if label.kind == "omega":
            energy += 0.5 * params.ac_buses[_bus_of(grid.ac_buses, label.element)].inertia * x[:, k] ** 2
        elif label.kind == "v":
            energy += 0.5 * params.dc_buses[_bus_of(grid.dc_buses, label.element)] * x[:, k] ** 2
        elif label.kind == "i":
            a, b = _line_of(grid.dc_lines, label.element)
            energy += 0.5 * params.dc_lines[line_key(a, b)].inductance * x[:, k] ** 2
    for a, b in grid.ac_lines:
        dtheta = x[:, position[f"theta[{a}]"]] - x[:, position[f"theta[{b}]"]]
        energy += 0.5 * params.ac_lines[line_key(a, b)] * dtheta**2
    return energy
