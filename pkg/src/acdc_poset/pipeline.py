from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .config import PipelineConfig, SimConfig
from .grid import GridGraph, QuotientGraph, SubgridMap, build_quotient_graph, coarsen_quotient, connected_components
from .linear_model import verify_lemma1
from .orientation import orient_converters
from .poset import Poset, StructureClass, classify_structure, poset_from_dag
from .serialization import RunManifest, write_gain, write_json, write_trace_csv
from .simulation import Trace, TraceMetrics, group_settling_time, simulate_linear, trace_metrics
from .synthesis import SynthesisReport, synthesize_centralized, synthesize_leader_follower, verify_controller_structure
from .test_system import MtdcSystem, build_test_system


logger = logging.getLogger(__name__)

EXPERIMENT_SIM = SimConfig(dt=1e-3, horizon=120.0)
PERTURBED_FREQUENCIES = ("omega[1]", "omega[4]", "omega[6]")
ZERO_START_FREQUENCIES = ("omega[2]", "omega[3]", "omega[5]")
LINK_VOLTAGE = "v[P1]"
LINK_CURRENT = "i[P1-P2]"


@dataclass
class GridAnalysis:
    grid: GridGraph
    smap: SubgridMap
    quotient: QuotientGraph
    poset: Poset
    structure: StructureClass
    oriented_here: bool = False
    group_structure: StructureClass | None = None

    def lines(self) -> list[str]:
        out = [
            f"Grid: {self.grid.name or '<unnamed>'}",
            f"AC subgrids: {self.smap.ac_count}",
            f"DC subgrids: {self.smap.dc_count}",
            f"Quotient edges: {', '.join(f'{a}->{b}' for a, b in sorted(self.quotient.edges)) or 'none'}",
            f"Bipartite: {self.quotient.is_bipartite()}",
            f"Structure: {self.structure.describe()}",
        ]
        if self.oriented_here:
            out.append("Note: free converters were oriented with the configured strategy")
        if self.group_structure is not None:
            out.append(f"Group structure: {self.group_structure.describe()}")
        return out


def analyze_grid(
    grid: GridGraph,
    cfg: PipelineConfig | None = None,
    groups: dict[str, list[str]] | None = None,
) -> GridAnalysis:
    cfg = cfg or PipelineConfig()
    oriented_here = not grid.is_fully_oriented
    if oriented_here:
        grid = orient_converters(grid, cfg.orientation.strategy)
    smap = connected_components(grid)
    q = build_quotient_graph(grid, smap)
    poset = poset_from_dag(q)
    group_structure = None
    if groups:
        coarse = coarsen_quotient(q, groups)
        group_structure = classify_structure(poset_from_dag(coarse), coarse)
    return GridAnalysis(
        grid=grid,
        smap=smap,
        quotient=q,
        poset=poset,
        structure=classify_structure(poset, q),
        oriented_here=oriented_here,
        group_structure=group_structure,
    )


@dataclass
class ExperimentResult:
    system: MtdcSystem
    centralized: SynthesisReport
    leader_follower: SynthesisReport
    traces: dict[str, Trace] = field(default_factory=dict)
    metrics: dict[str, TraceMetrics] = field(default_factory=dict)
    checks: pd.DataFrame = field(default_factory=pd.DataFrame)
    outputs: list[str] = field(default_factory=list)

    @property
    def summary(self) -> dict[str, float | str]:
        return {
            "States": self.system.ss.n,
            "Inputs": self.system.ss.m,
            "H2 (centralized)": self.centralized.h2_norm,
            "H2 (leader-follower)": self.leader_follower.h2_norm,
            "H2 ratio": self.leader_follower.h2_norm / self.centralized.h2_norm,
            "Spectral abscissa (centralized)": self.centralized.closed_loop_spectral_abscissa,
            "Spectral abscissa (leader-follower)": self.leader_follower.closed_loop_spectral_abscissa,
            "Checks passed": int((self.checks["status"] == "PASS").sum()) if not self.checks.empty else 0,
            "Checks total": len(self.checks),
        }


def run_experiment(
    parameter_file: str | Path | None = None,
    cfg: PipelineConfig | None = None,
    sim: SimConfig | None = None,
    out_dir: str | Path | None = None,
    plot: bool = False,
    excel: bool = False,
) -> ExperimentResult:
    cfg = cfg or PipelineConfig()
    sim = sim or EXPERIMENT_SIM
    system = build_test_system(parameter_file, disturbance=cfg.synthesis.disturbance)
    ss = system.ss

    centralized = synthesize_centralized(ss, cfg.synthesis, cfg.tolerances)
    leader_follower = synthesize_leader_follower(
        ss, system.leader, system.leader_inputs, cfg.synthesis, cfg.tolerances
    )

    x0 = system.initial_state()
    traces = {
        "uncontrolled": simulate_linear(ss, None, x0, sim, cfg.tolerances),
        "centralized": simulate_linear(ss, centralized.gain, x0, sim, cfg.tolerances),
        "leader_follower": simulate_linear(ss, leader_follower.gain, x0, sim, cfg.tolerances),
    }
    metrics = {name: trace_metrics(trace, ss.Q, ss.R) for name, trace in traces.items()}

    result = ExperimentResult(
        system=system,
        centralized=centralized,
        leader_follower=leader_follower,
        traces=traces,
        metrics=metrics,
    )
    result.checks = _build_checks(result, cfg)
    logger.info("Experiment finished: %d/%d checks pass", result.summary["Checks passed"], len(result.checks))

    if out_dir is not None:
        _write_outputs(result, Path(out_dir), parameter_file, cfg, plot=plot, excel=excel)
    return result


def _check_row(check: str, value, passed: bool) -> dict:
    return {"check": check, "value": value, "status": "PASS" if passed else "FAIL"}


def _build_checks(result: ExperimentResult, cfg: PipelineConfig) -> pd.DataFrame:
    system = result.system
    ss = system.ss
    rows = []

    q = build_quotient_graph(system.grid, connected_components(system.grid))
    lemma = verify_lemma1(ss, poset_from_dag(q))
    rows.append(_check_row("Poset-causal structure (A block diagonal, B in incidence algebra)", lemma.passed, lemma.passed))

    coarse = coarsen_quotient(q, system.groups)
    structure = classify_structure(poset_from_dag(coarse), coarse)
    rows.append(_check_row("Leader/follower grouping classifies LeaderFollower", structure.describe(), structure.kind == "LeaderFollower"))

    for name, report in (("centralized", result.centralized), ("leader-follower", result.leader_follower)):
        abscissa = report.closed_loop_spectral_abscissa
        rows.append(_check_row(f"Closed loop Hurwitz ({name})", abscissa, abscissa < 0))

    gap = result.leader_follower.h2_norm - result.centralized.h2_norm
    rows.append(_check_row("H2 leader-follower >= centralized", gap, gap >= -1e-9 * result.centralized.h2_norm))

    K = result.leader_follower.gain
    leader_rows = [ss.input_index(name) for name in system.leader_inputs]
    follower_cols = np.setdiff1d(np.arange(ss.n), ss.states_of(system.leader))
    leak = float(np.max(np.abs(K.K[np.ix_(leader_rows, follower_cols)]), initial=0.0))
    rows.append(_check_row("Link VSC gains zero outside leader states", leak, leak == 0.0))

    ok, violations = verify_controller_structure(K, K.declared_structure)
    rows.append(_check_row("Leader-follower gain in incidence algebra", len(violations), ok))

    uncontrolled = result.metrics["uncontrolled"].settling_time
    controlled = result.metrics["leader_follower"].settling_time
    for label in PERTURBED_FREQUENCIES:
        rows.append(
            _check_row(f"Settling {label}: controlled < uncontrolled", controlled[label], controlled[label] < uncontrolled[label])
        )
    group_controlled = group_settling_time(result.traces["leader_follower"], PERTURBED_FREQUENCIES)
    group_uncontrolled = group_settling_time(result.traces["uncontrolled"], PERTURBED_FREQUENCIES)
    rows.append(
        _check_row(
            "Group settling (perturbed frequencies): controlled < uncontrolled",
            group_controlled,
            group_controlled < group_uncontrolled,
        )
    )

    central_peak = result.metrics["centralized"].peak
    lf_peak = result.metrics["leader_follower"].peak
    for label in (LINK_VOLTAGE, LINK_CURRENT):
        rows.append(
            _check_row(f"Peak {label}: leader-follower >= centralized", lf_peak[label] - central_peak[label], lf_peak[label] >= central_peak[label])
        )

    quiet = max(lf_peak[label] for label in ZERO_START_FREQUENCIES)
    loud = min(lf_peak[label] for label in PERTURBED_FREQUENCIES)
    rows.append(_check_row("Zero-start frequency peaks at least 5x smaller", quiet / loud if loud else float("inf"), 5.0 * quiet <= loud))

    return pd.DataFrame(rows)


def _write_outputs(
    result: ExperimentResult,
    out_dir: Path,
    parameter_file: str | Path | None,
    cfg: PipelineConfig,
    plot: bool,
    excel: bool,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [
        write_gain(result.centralized.gain, out_dir / "centralized_gain.json"),
        write_gain(result.leader_follower.gain, out_dir / "leader_follower_gain.json"),
        write_json({k: v for k, v in result.summary.items()}, out_dir / "summary.json"),
    ]
    for name, trace in result.traces.items():
        outputs.append(write_trace_csv(trace, out_dir / f"trace_{name}.csv"))
    checks_path = out_dir / "checks.csv"
    result.checks.to_csv(checks_path, index=False)
    outputs.append(checks_path)

    if plot or excel:
        from .report_export import export_experiment_workbook, plot_experiment

        if plot:
            outputs.append(plot_experiment(result, out_dir / "experiment.png"))
        if excel:
            outputs.append(export_experiment_workbook(result, out_dir / "experiment_report.xlsx"))

    manifest = RunManifest.for_inputs(
        "experiment",
        [parameter_file] if parameter_file else [],
        cfg.simulation.seed,
        cfg.tolerances,
    )
    manifest.outputs = [str(p) for p in outputs]
    manifest.write(out_dir / "manifest.json")
    result.outputs = manifest.outputs
