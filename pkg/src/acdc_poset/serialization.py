from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import InputError, InvariantError, MissingParameter, ParseError, SchemaError
from .grid import BusId, Converter, GridGraph, LOCAL_LOOPS, build_quotient_graph, bus_sort_key, connected_components
from .linear_model import AcBusParams, CostWeights, DcLineParams, LinearGridParams, StateLabel, StateSpace, line_key
from .poset import BlockPartition, Poset
from .simulation import Trace
from .synthesis import GainMatrix


logger = logging.getLogger(__name__)

GRID_KEYS = {"ac_buses", "dc_buses", "ac_lines", "dc_lines", "converters", "params", "cost", "base", "name", "groups"}
CONVERTER_KEYS = {"id", "ac_bus", "dc_bus", "orientation", "loops"}
PARAM_SECTIONS = {"ac_buses", "ac_lines", "dc_buses", "dc_lines", "converters"}
STATESPACE_KEYS = {"A", "B", "F", "C", "D", "drift", "state_labels", "input_labels", "state_partition", "input_partition"}


@dataclass
class GridDocument:
    grid: GridGraph
    params: LinearGridParams | None = None
    cost: CostWeights | None = None
    groups: dict[str, list[str]] = field(default_factory=dict)
    base: dict[str, float] = field(default_factory=dict)


def _reject_unknown(payload: Mapping, allowed: set[str], path: str) -> None:
    unknown = set(payload) - allowed
    if unknown:
        raise SchemaError(f"Unknown key(s) at {path}: {sorted(unknown)}")


def _expect(value: Any, kind: type | tuple[type, ...], path: str) -> Any:
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise SchemaError(f"{path} must be {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def _bus(value: Any, path: str) -> BusId:
    return _expect(value, (int, str), path)


def _pairs(payload: Any, path: str) -> tuple[tuple[BusId, BusId], ...]:
    lines = []
    for k, pair in enumerate(_expect(payload, list, path)):
        if not isinstance(pair, list) or len(pair) != 2:
            raise SchemaError(f"{path}[{k}] must be a two-element list")
        lines.append((_bus(pair[0], f"{path}[{k}][0]"), _bus(pair[1], f"{path}[{k}][1]")))
    return tuple(lines)


def parse_grid(text: str) -> GridDocument:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"Malformed grid document: {exc}") from exc
    _expect(payload, dict, "$")
    _reject_unknown(payload, GRID_KEYS, "$")

    converters = []
    for k, item in enumerate(_expect(payload.get("converters", []), list, "$.converters")):
        path = f"$.converters[{k}]"
        _expect(item, dict, path)
        _reject_unknown(item, CONVERTER_KEYS, path)
        if "ac_bus" not in item or "dc_bus" not in item:
            raise SchemaError(f"{path} needs both ac_bus and dc_bus")
        loops = _expect(item.get("loops", []), list, f"{path}.loops")
        for i, loop in enumerate(loops):
            _expect(loop, str, f"{path}.loops[{i}]")
        bad_loops = set(loops) - set(LOCAL_LOOPS)
        if bad_loops:
            raise SchemaError(f"{path}.loops has unknown loops {sorted(bad_loops)}")
        orientation = item.get("orientation", "unassigned")
        if orientation not in ("ac_to_dc", "dc_to_ac", "unassigned"):
            raise SchemaError(f"{path}.orientation must be ac_to_dc or dc_to_ac, got {orientation!r}")
        converters.append(
            Converter(
                id=str(item.get("id", f"VSC{k + 1}")),
                ac_bus=_bus(item["ac_bus"], f"{path}.ac_bus"),
                dc_bus=_bus(item["dc_bus"], f"{path}.dc_bus"),
                orientation=orientation,
                local_loops=frozenset(loops),
            )
        )

    ac_buses = [_bus(b, f"$.ac_buses[{k}]") for k, b in enumerate(_expect(payload.get("ac_buses", []), list, "$.ac_buses"))]
    dc_buses = [_bus(b, f"$.dc_buses[{k}]") for k, b in enumerate(_expect(payload.get("dc_buses", []), list, "$.dc_buses"))]
    grid = GridGraph(
        ac_buses=frozenset(ac_buses),
        dc_buses=frozenset(dc_buses),
        ac_lines=_pairs(payload.get("ac_lines", []), "$.ac_lines"),
        dc_lines=_pairs(payload.get("dc_lines", []), "$.dc_lines"),
        converters=tuple(converters),
        name=str(payload.get("name", "")),
    )

    groups = {
        str(name): [str(label) for label in _expect(members, list, f"$.groups.{name}")]
        for name, members in _expect(payload.get("groups", {}), dict, "$.groups").items()
    }
    base = {str(k): float(_expect(v, (int, float), f"$.base.{k}")) for k, v in _expect(payload.get("base", {}), dict, "$.base").items()}
    params = parse_params(payload["params"], grid, "$.params") if "params" in payload else None
    cost = parse_cost(payload["cost"], "$.cost") if "cost" in payload else None
    logger.debug("Parsed grid '%s': %d converters", grid.name, len(grid.converters))
    return GridDocument(grid=grid, params=params, cost=cost, groups=groups, base=base)


def read_grid(path: str | Path) -> GridDocument:
    return parse_grid(Path(path).read_text(encoding="utf-8"))


def _lookup_bus(name: str, buses: frozenset[BusId], path: str) -> BusId:
    for bus in buses:
        if str(bus) == str(name):
            return bus
    raise SchemaError(f"{path} names unknown bus '{name}'")


def _lookup_line(name: str, lines: tuple[tuple[BusId, BusId], ...], path: str) -> frozenset:
    for a, b in lines:
        if name in (f"{a}-{b}", f"{b}-{a}"):
            return line_key(a, b)
    raise SchemaError(f"{path} names unknown line '{name}'")


def _number(section: Mapping, key: str, path: str, default: float | None = None) -> float:
    if key not in section:
        if default is None:
            raise SchemaError(f"{path} is missing '{key}'")
        return default
    return float(_expect(section[key], (int, float), f"{path}.{key}"))


def _required(section: Mapping, key: str, path: str, owner: str) -> float:
    """A physical parameter the model cannot do without; its absence names the grid element."""
    if key not in section:
        raise MissingParameter(f"{owner} is missing '{key}'")
    return _number(section, key, path)


def parse_params(payload: Any, grid: GridGraph, path: str = "$.params") -> LinearGridParams:
    _expect(payload, dict, path)
    _reject_unknown(payload, PARAM_SECTIONS, path)

    ac_buses: dict[BusId, AcBusParams] = {}
    for name, entry in _expect(payload.get("ac_buses", {}), dict, f"{path}.ac_buses").items():
        where = f"{path}.ac_buses.{name}"
        _reject_unknown(_expect(entry, dict, where), {"inertia", "damping", "injection"}, where)
        ac_buses[_lookup_bus(name, grid.ac_buses, where)] = AcBusParams(
            inertia=_required(entry, "inertia", where, f"AC bus {name}"),
            damping=_number(entry, "damping", where, 0.0),
            injection=_number(entry, "injection", where, 0.0),
        )

    ac_lines: dict[frozenset, float] = {}
    for name, entry in _expect(payload.get("ac_lines", {}), dict, f"{path}.ac_lines").items():
        where = f"{path}.ac_lines.{name}"
        _reject_unknown(_expect(entry, dict, where), {"susceptance"}, where)
        ac_lines[_lookup_line(name, grid.ac_lines, where)] = _required(entry, "susceptance", where, f"AC line {name}")

    dc_buses: dict[BusId, float] = {}
    for name, entry in _expect(payload.get("dc_buses", {}), dict, f"{path}.dc_buses").items():
        where = f"{path}.dc_buses.{name}"
        _reject_unknown(_expect(entry, dict, where), {"capacitance"}, where)
        dc_buses[_lookup_bus(name, grid.dc_buses, where)] = _required(entry, "capacitance", where, f"DC bus {name}")

    dc_lines: dict[frozenset, DcLineParams] = {}
    for name, entry in _expect(payload.get("dc_lines", {}), dict, f"{path}.dc_lines").items():
        where = f"{path}.dc_lines.{name}"
        _reject_unknown(_expect(entry, dict, where), {"inductance", "resistance"}, where)
        dc_lines[_lookup_line(name, grid.dc_lines, where)] = DcLineParams(
            inductance=_required(entry, "inductance", where, f"DC line {name}"),
            resistance=_number(entry, "resistance", where, 0.0),
        )

    converters: dict[str, float] = {}
    known = {c.id for c in grid.converters}
    for name, entry in _expect(payload.get("converters", {}), dict, f"{path}.converters").items():
        where = f"{path}.converters.{name}"
        if name not in known:
            raise SchemaError(f"{where} names unknown converter")
        _reject_unknown(_expect(entry, dict, where), {"nominal_voltage"}, where)
        converters[name] = _number(entry, "nominal_voltage", where, 1.0)

    try:
        return LinearGridParams(ac_buses, ac_lines, dc_buses, dc_lines, converters)
    except InvariantError as exc:
        raise InvariantError(f"{path}: {exc}") from exc


def parse_cost(payload: Any, path: str = "$.cost") -> CostWeights:
    _expect(payload, dict, path)
    _reject_unknown(payload, {"states", "inputs", "default"}, path)
    states = {str(k): float(_expect(v, (int, float), f"{path}.states.{k}")) for k, v in _expect(payload.get("states", {}), dict, f"{path}.states").items()}
    inputs = {str(k): float(_expect(v, (int, float), f"{path}.inputs.{k}")) for k, v in _expect(payload.get("inputs", {}), dict, f"{path}.inputs").items()}
    return CostWeights(states=states, inputs=inputs, default=_number(payload, "default", path, 1.0))


def _sorted_buses(buses: frozenset[BusId]) -> list[BusId]:
    return sorted(buses, key=bus_sort_key)


def grid_to_document(doc: GridDocument) -> dict[str, Any]:
    grid = doc.grid
    out: dict[str, Any] = {}
    if grid.name:
        out["name"] = grid.name
    if doc.base:
        out["base"] = dict(doc.base)
    out["ac_buses"] = _sorted_buses(grid.ac_buses)
    out["dc_buses"] = _sorted_buses(grid.dc_buses)
    out["ac_lines"] = [[a, b] for a, b in grid.ac_lines]
    out["dc_lines"] = [[a, b] for a, b in grid.dc_lines]
    converters = []
    for conv in grid.converters:
        item: dict[str, Any] = {"id": conv.id, "ac_bus": conv.ac_bus, "dc_bus": conv.dc_bus}
        if conv.is_oriented:
            item["orientation"] = conv.orientation
        if conv.local_loops:
            item["loops"] = sorted(conv.local_loops)
        converters.append(item)
    out["converters"] = converters
    if doc.groups:
        out["groups"] = {name: list(members) for name, members in doc.groups.items()}
    if doc.params is not None:
        out["params"] = _params_to_document(doc.params, grid)
    if doc.cost is not None:
        out["cost"] = {"states": dict(doc.cost.states), "inputs": dict(doc.cost.inputs), "default": doc.cost.default}
    return out


def _params_to_document(params: LinearGridParams, grid: GridGraph) -> dict[str, Any]:
    def line_name(key: frozenset, lines: tuple[tuple[BusId, BusId], ...]) -> str:
        for a, b in lines:
            if line_key(a, b) == key:
                return f"{a}-{b}"
        return "-".join(str(b) for b in sorted(key, key=bus_sort_key))

    return {
        "ac_buses": {
            str(bus): {"inertia": p.inertia, "damping": p.damping, "injection": p.injection}
            for bus, p in sorted(params.ac_buses.items(), key=lambda kv: bus_sort_key(kv[0]))
        },
        "ac_lines": {line_name(k, grid.ac_lines): {"susceptance": v} for k, v in params.ac_lines.items()},
        "dc_buses": {
            str(bus): {"capacitance": cap} for bus, cap in sorted(params.dc_buses.items(), key=lambda kv: bus_sort_key(kv[0]))
        },
        "dc_lines": {
            line_name(k, grid.dc_lines): {"inductance": p.inductance, "resistance": p.resistance}
            for k, p in params.dc_lines.items()
        },
        "converters": {conv_id: {"nominal_voltage": v} for conv_id, v in params.converters.items()},
    }


def write_grid(doc: GridDocument, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(grid_to_document(doc), indent=2) + "\n", encoding="utf-8")
    return path


def _partition_to_dict(partition: BlockPartition) -> dict[str, list]:
    return {"labels": list(partition.labels), "block_of_index": list(partition.block_of_index)}


def _partition_from_dict(payload: Mapping, path: str) -> BlockPartition:
    _reject_unknown(_expect(payload, dict, path), {"labels", "block_of_index"}, path)
    return BlockPartition(
        tuple(str(x) for x in _expect(payload.get("labels", []), list, f"{path}.labels")),
        tuple(int(x) for x in _expect(payload.get("block_of_index", []), list, f"{path}.block_of_index")),
    )


def statespace_to_dict(ss: StateSpace) -> dict[str, Any]:
    return {
        "A": ss.A.tolist(),
        "B": ss.B.tolist(),
        "F": ss.F.tolist(),
        "C": ss.C.tolist(),
        "D": ss.D.tolist(),
        "drift": ss.drift.tolist(),
        "state_labels": [label._asdict() for label in ss.state_labels],
        "input_labels": list(ss.input_labels),
        "state_partition": _partition_to_dict(ss.state_partition),
        "input_partition": _partition_to_dict(ss.input_partition),
    }


def statespace_from_dict(payload: Mapping) -> StateSpace:
    _expect(payload, dict, "$")
    _reject_unknown(payload, STATESPACE_KEYS, "$")
    try:
        n = len(payload["state_labels"])
        m = len(payload["input_labels"])
        return StateSpace(
            A=np.array(payload["A"], dtype=float).reshape(n, n),
            B=np.array(payload["B"], dtype=float).reshape(n, m),
            F=np.array(payload["F"], dtype=float).reshape(n, -1) if n else np.zeros((0, 0)),
            C=np.array(payload["C"], dtype=float).reshape(-1, n) if n else np.zeros((m, 0)),
            D=np.array(payload["D"], dtype=float).reshape(-1, m) if m else np.zeros((n, 0)),
            state_labels=tuple(StateLabel(**item) for item in payload["state_labels"]),
            input_labels=tuple(payload["input_labels"]),
            state_partition=_partition_from_dict(payload["state_partition"], "$.state_partition"),
            input_partition=_partition_from_dict(payload["input_partition"], "$.input_partition"),
            drift=np.array(payload.get("drift", [0.0] * n), dtype=float),
        )
    except InputError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"Malformed state-space document: {exc}") from exc


def _poset_to_dict(poset: Poset) -> dict[str, list]:
    return {"elements": list(poset.elements), "covers": sorted([a, b] for a, b in poset.covers())}


def gain_to_dict(gain: GainMatrix) -> dict[str, Any]:
    return {
        "K": gain.K.tolist(),
        "input_labels": list(gain.input_labels),
        "state_labels": list(gain.state_labels),
        "row_partition": _partition_to_dict(gain.row_partition),
        "col_partition": _partition_to_dict(gain.col_partition),
        "declared_structure": _poset_to_dict(gain.declared_structure) if gain.declared_structure else None,
    }


def gain_from_dict(payload: Mapping) -> GainMatrix:
    _expect(payload, dict, "$")
    _reject_unknown(payload, {"K", "input_labels", "state_labels", "row_partition", "col_partition", "declared_structure"}, "$")
    try:
        rows = _partition_from_dict(payload["row_partition"], "$.row_partition")
        cols = _partition_from_dict(payload["col_partition"], "$.col_partition")
        structure = payload.get("declared_structure")
        poset = None
        if structure:
            poset = Poset.from_pairs(structure["elements"], [tuple(pair) for pair in structure["covers"]])
        return GainMatrix(
            K=np.array(payload["K"], dtype=float).reshape(rows.size, cols.size),
            row_partition=rows,
            col_partition=cols,
            declared_structure=poset,
            input_labels=tuple(payload.get("input_labels", [])),
            state_labels=tuple(payload.get("state_labels", [])),
        )
    except InputError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"Malformed gain document: {exc}") from exc


def write_json(payload: Mapping, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def write_statespace(ss: StateSpace, path: str | Path) -> Path:
    return write_json(statespace_to_dict(ss), path)


def read_statespace(path: str | Path) -> StateSpace:
    return statespace_from_dict(read_json(path))


def write_gain(gain: GainMatrix, path: str | Path) -> Path:
    return write_json(gain_to_dict(gain), path)


def read_gain(path: str | Path) -> GainMatrix:
    return gain_from_dict(read_json(path))


def write_trace_csv(trace: Trace, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace.to_frame().to_csv(path, index=False)
    return path


def _dot_id(value: Any) -> str:
    return '"' + str(value).replace('"', '\\"') + '"'


def to_dot(grid: GridGraph, level: str = "subgrid") -> str:
    lines = [f"digraph {_dot_id(grid.name or 'grid')} {{"]
    if level == "bus":
        for bus in _sorted_buses(grid.ac_buses):
            lines.append(f'  {_dot_id(f"AC:{bus}")} [shape=ellipse, label={_dot_id(bus)}];')
        for bus in _sorted_buses(grid.dc_buses):
            lines.append(f'  {_dot_id(f"DC:{bus}")} [shape=box, label={_dot_id(bus)}];')
        for a, b in grid.ac_lines:
            lines.append(f'  {_dot_id(f"AC:{a}")} -> {_dot_id(f"AC:{b}")} [dir=none, class="ac_line"];')
        for a, b in grid.dc_lines:
            lines.append(f'  {_dot_id(f"DC:{a}")} -> {_dot_id(f"DC:{b}")} [dir=none, class="dc_line"];')
        for conv in grid.converters:
            ac, dc = _dot_id(f"AC:{conv.ac_bus}"), _dot_id(f"DC:{conv.dc_bus}")
            lines.append(_converter_edge(conv, ac, dc))
    elif level == "subgrid":
        smap = connected_components(grid)
        for sub in smap.subgrids():
            shape = "ellipse" if sub.kind == "AC" else "box"
            lines.append(f"  {_dot_id(sub.label)} [shape={shape}];")
        for conv in grid.converters:
            ac = _dot_id(smap.subgrid_of(conv.ac_bus).label)
            dc = _dot_id(smap.subgrid_of(conv.dc_bus).label)
            lines.append(_converter_edge(conv, ac, dc))
    else:
        raise SchemaError(f"Unknown DOT level '{level}' (expected bus or subgrid)")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _converter_edge(conv: Converter, ac: str, dc: str) -> str:
    label = _dot_id(conv.id)
    if conv.orientation == "dc_to_ac":
        return f'  {dc} -> {ac} [label={label}, class="converter"];'
    if conv.orientation == "ac_to_dc":
        return f'  {ac} -> {dc} [label={label}, class="converter"];'
    return f'  {ac} -> {dc} [label={label}, dir=none, style=dashed, class="converter"];'


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    inputs: dict[str, str] = field(default_factory=dict)
    seed: int = 0
    tolerances: dict[str, float] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)

    @classmethod
    def for_inputs(cls, command: str, paths: list[str | Path], seed: int, tolerances: Any) -> RunManifest:
        tol = asdict(tolerances) if hasattr(tolerances, "__dataclass_fields__") else dict(tolerances)
        return cls(
            command=command,
            inputs={str(p): file_digest(p) for p in paths if p is not None and Path(p).exists()},
            seed=seed,
            tolerances=tol,
        )

    def write(self, path: str | Path) -> Path:
        return write_json(asdict(self), path)


def quotient_summary(grid: GridGraph) -> dict[str, Any]:
    smap = connected_components(grid)
    q = build_quotient_graph(grid, smap)
    return {
        "ac_subgrids": smap.ac_count,
        "dc_subgrids": smap.dc_count,
        "edges": sorted(q.edges),
        "bipartite": q.is_bipartite(),
        "acyclic": q.is_dag(),
    }
