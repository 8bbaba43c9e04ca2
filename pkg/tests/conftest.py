from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from src.acdc_poset.grid import Converter, GridGraph
from src.acdc_poset.linear_model import AcBusParams, DcLineParams, LinearGridParams, StateLabel, StateSpace, line_key
from src.acdc_poset.poset import BlockPartition
from src.acdc_poset.serialization import read_grid


DATA_DIR = Path(__file__).resolve().parents[1] / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def point_to_point():
    return read_grid(DATA_DIR / "point_to_point.json")


@pytest.fixture
def fig_acyclic():
    return read_grid(DATA_DIR / "fig_acyclic.json")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def two_terminal_grid(orientations: tuple[str, str]) -> GridGraph:
    """Two-area point-to-point link: AC buses {1, 4}, DC buses {2, 3}, converters 1-2 and 4-3."""
    return GridGraph(
        ac_buses=frozenset({1, 4}),
        dc_buses=frozenset({2, 3}),
        ac_lines=((1, 4),),
        dc_lines=((2, 3),),
        converters=(
            Converter("VSC1", 1, 2, orientations[0]),
            Converter("VSC2", 4, 3, orientations[1]),
        ),
    )


def random_grid(rng: np.random.Generator, max_subgrids: int = 6, lossless: bool = False) -> tuple[GridGraph, LinearGridParams]:
    """Random grid with at most `max_subgrids` subgrids, every converter oriented along a random subgrid order."""
    n_ac = int(rng.integers(1, max_subgrids // 2 + 1))
    n_dc = int(rng.integers(1, max_subgrids - n_ac + 1))

    ac_buses, dc_buses, ac_lines, dc_lines = [], [], [], []
    ac_groups, dc_groups = [], []
    bus = 1
    for _ in range(n_ac):
        members = list(range(bus, bus + int(rng.integers(1, 4))))
        bus += len(members)
        ac_buses += members
        ac_lines += list(zip(members[:-1], members[1:]))
        ac_groups.append(members)
    for k in range(n_dc):
        members = [f"D{k}_{j}" for j in range(int(rng.integers(1, 4)))]
        dc_buses += members
        dc_lines += list(zip(members[:-1], members[1:]))
        dc_groups.append(members)

    # rank over subgrids decides every converter direction, so the quotient is acyclic
    rank = rng.permutation(n_ac + n_dc)
    converters = []
    pairs = set()
    for a in range(n_ac):
        for d in range(n_dc):
            if rng.random() < 0.6:
                ac = int(rng.choice(ac_groups[a]))
                dc = str(rng.choice(dc_groups[d]))
                if (ac, dc) in pairs:
                    continue
                pairs.add((ac, dc))
                orientation = "ac_to_dc" if rank[a] < rank[n_ac + d] else "dc_to_ac"
                converters.append(Converter(f"VSC{len(converters) + 1}", ac, dc, orientation))

    grid = GridGraph(
        ac_buses=frozenset(ac_buses),
        dc_buses=frozenset(dc_buses),
        ac_lines=tuple(ac_lines),
        dc_lines=tuple(dc_lines),
        converters=tuple(converters),
        name="random",
    )
    params = LinearGridParams(
        ac_buses={
            b: AcBusParams(
                inertia=float(rng.uniform(2.0, 12.0)),
                damping=0.0 if lossless else float(rng.uniform(0.05, 1.0)),
            )
            for b in ac_buses
        },
        ac_lines={line_key(a, b): float(rng.uniform(0.5, 3.0)) for a, b in ac_lines},
        dc_buses={b: float(rng.uniform(0.2, 1.0)) for b in dc_buses},
        dc_lines={
            line_key(a, b): DcLineParams(
                inductance=float(rng.uniform(0.05, 0.3)),
                resistance=0.0 if lossless else float(rng.uniform(0.05, 0.2)),
            )
            for a, b in dc_lines
        },
        converters={c.id: float(rng.uniform(0.8, 1.2)) for c in converters},
    )
    return grid, params


def toy_statespace(
    A: np.ndarray,
    B: np.ndarray,
    state_blocks: list[str] | None = None,
    input_blocks: list[str] | None = None,
    block_order: list[str] | None = None,
) -> StateSpace:
    """Identity-weighted state space over arbitrary matrices; states are labelled x[k], inputs u{k}."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float)
    B = B.reshape(n, B.size // n)
    m = B.shape[1]
    state_blocks = state_blocks or ["S1"] * n
    input_blocks = input_blocks or ["S1"] * m
    order = block_order or list(dict.fromkeys(state_blocks))
    return StateSpace(
        A=A,
        B=B,
        F=np.eye(n),
        C=np.vstack([np.eye(n), np.zeros((m, n))]),
        D=np.vstack([np.zeros((n, m)), np.eye(m)]),
        state_labels=tuple(StateLabel(block, "omega", str(k)) for k, block in enumerate(state_blocks)),
        input_labels=tuple(f"u{k}" for k in range(m)),
        state_partition=BlockPartition.from_labels(state_blocks, order),
        input_partition=BlockPartition.from_labels(input_blocks, order),
    )
