from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from .config import SimConfig, ToleranceConfig
from .dq_model import (
    CurrentSetpoint,
    DqBoundary,
    DqControls,
    DqParams,
    DqState,
    M,
    ModelVariant,
    convert_controls,
    dq_derivatives,
    dq_outputs,
    nominal_modulation,
)
from .errors import DimensionMismatch, NonFiniteState
from .linear_model import StateSpace
from .synthesis import GainMatrix, closed_loop


logger = logging.getLogger(__name__)

DQ_STATE_LABELS = ("i_d", "i_q", "v_dc")
DQ_OUTPUT_LABELS = ("zeta", "p_dc", "p_ac", "q_ac")


@dataclass
class Trace:
    times: np.ndarray
    states: np.ndarray
    state_labels: tuple[str, ...]
    inputs: np.ndarray | None = None
    input_labels: tuple[str, ...] = ()
    outputs: np.ndarray | None = None
    output_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        steps = len(self.times)
        if self.states.shape != (steps, len(self.state_labels)):
            raise DimensionMismatch(f"states are {self.states.shape}, expected {(steps, len(self.state_labels))}")
        for name, values, labels in (("inputs", self.inputs, self.input_labels), ("outputs", self.outputs, self.output_labels)):
            if values is not None and values.shape != (steps, len(labels)):
                raise DimensionMismatch(f"{name} are {values.shape}, expected {(steps, len(labels))}")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def channel(self, label: str) -> np.ndarray:
        return self.states[:, self.state_labels.index(label)]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.states, columns=list(self.state_labels))
        if self.inputs is not None:
            frame = pd.concat([frame, pd.DataFrame(self.inputs, columns=list(self.input_labels))], axis=1)
        if self.outputs is not None:
            frame = pd.concat([frame, pd.DataFrame(self.outputs, columns=list(self.output_labels))], axis=1)
        frame.insert(0, "t", self.times)
        return frame


def _step_count(cfg: SimConfig) -> int:
    return int(round(cfg.horizon / cfg.dt))


def rk4_propagator(M_mat: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step of x' = M x written as a matrix."""
    hM = h * M_mat
    hM2 = hM @ hM
    hM3 = hM2 @ hM
    return np.eye(M_mat.shape[0]) + hM + hM2 / 2.0 + hM3 / 6.0 + hM3 @ hM / 24.0


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + h / 2.0, x + h / 2.0 * k1)
    k3 = f(t + h / 2.0, x + h / 2.0 * k2)
    k4 = f(t + h, x + h * k3)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_finite(x: np.ndarray, t: float, limit: float) -> None:
    if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > limit:
        raise NonFiniteState(f"State diverged at t = {t:.6g} (threshold {limit:g})")


def simulate_linear(
    ss: StateSpace,
    K: GainMatrix | np.ndarray | None,
    x0: Sequence[float] | np.ndarray,
    cfg: SimConfig | None = None,
    tol: ToleranceConfig | None = None,
) -> Trace:
    cfg = cfg or SimConfig()
    tol = tol or ToleranceConfig()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (ss.n,):
        raise DimensionMismatch(f"x0 has shape {x0.shape}, system has {ss.n} states")

    A_cl, _ = closed_loop(ss, K)
    # affine drift is carried as an extra constant state
    M_aug = np.zeros((ss.n + 1, ss.n + 1))
    M_aug[: ss.n, : ss.n] = A_cl
    M_aug[: ss.n, ss.n] = ss.drift
    phi = rk4_propagator(M_aug, cfg.dt)

    steps = _step_count(cfg)
    states = np.empty((steps + 1, ss.n))
    z = np.append(x0, 1.0)
    states[0] = x0
    for k in range(1, steps + 1):
        z = phi @ z
        states[k] = z[: ss.n]
        _check_finite(z[: ss.n], k * cfg.dt, tol.divergence)

    times = np.arange(steps + 1) * cfg.dt
    inputs = None
    if K is not None:
        gain = K.K if isinstance(K, GainMatrix) else np.asarray(K, dtype=float)
        inputs = states @ gain.T
    logger.debug("Linear simulation: %d steps of %g s, %d states", steps, cfg.dt, ss.n)
    return Trace(
        times=times,
        states=states,
        state_labels=tuple(ss.state_names),
        inputs=inputs,
        input_labels=ss.input_labels if K is not None else (),
    )


ControlSource = Callable[[float, DqState], DqControls] | DqControls
BoundarySource = Callable[[float], DqBoundary] | DqBoundary


def simulate_dq(
    variant: ModelVariant,
    params: DqParams,
    controls: ControlSource,
    boundary: BoundarySource,
    x0: DqState,
    cfg: SimConfig | None = None,
    tol: ToleranceConfig | None = None,
) -> Trace:
    """Single-converter RK4 run with prescribed controls u(t, state) and boundary signals b(t)."""
    cfg = cfg or SimConfig()
    tol = tol or ToleranceConfig()
    control_at = controls if callable(controls) else (lambda t, s: controls)
    boundary_at = boundary if callable(boundary) else (lambda t: boundary)

    def rates(t: float, x: np.ndarray) -> np.ndarray:
        state = DqState(*x)
        return np.array(
            dq_derivatives(variant, params, state, control_at(t, state), boundary_at(t), tol.current_guard)
        )

    steps = _step_count(cfg)
    states = np.empty((steps + 1, 3))
    outputs = np.empty((steps + 1, 4))
    x = np.array([x0.i_d, x0.i_q, x0.v_dc], dtype=float)
    for k in range(steps + 1):
        t = k * cfg.dt
        if k:
            x = rk4_step(rates, t - cfg.dt, x, cfg.dt)
            _check_finite(x, t, tol.divergence)
        states[k] = x
        outputs[k] = _dq_outputs_at(variant, params, DqState(*x), control_at(t, DqState(*x)), boundary_at(t), tol)

    return Trace(
        times=np.arange(steps + 1) * cfg.dt,
        states=states,
        state_labels=DQ_STATE_LABELS,
        outputs=outputs,
        output_labels=DQ_OUTPUT_LABELS,
    )


def _dq_outputs_at(
    variant: ModelVariant,
    params: DqParams,
    state: DqState,
    controls: DqControls,
    boundary: DqBoundary,
    tol: ToleranceConfig,
) -> tuple[float, float, float, float]:
    if variant.const_ac_voltage:
        boundary = DqBoundary(params.v_ac_nominal, 0.0, boundary.i_line)
    if isinstance(controls, CurrentSetpoint):
        state = DqState(controls.i_d, controls.i_q, state.v_dc)
        m = nominal_modulation(params, controls, variant)
    else:
        m = convert_controls(controls, ModelVariant("Full", cross_coupling=variant.cross_coupling), state, params, tol.current_guard)
    return tuple(dq_outputs(state, m, boundary))


@dataclass
class TraceMetrics:
    settling_time: dict[str, float] = field(default_factory=dict)
    peak: dict[str, float] = field(default_factory=dict)
    cost: float = 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"channel": list(self.settling_time), "settling_time": list(self.settling_time.values()), "peak": [self.peak[c] for c in self.settling_time]}
        )


def settling_time(times: np.ndarray, values: np.ndarray, fraction: float = 0.1) -> float:
    """First time after which |x| stays within fraction * |x(0)|; zero-start channels use their peak instead."""
    magnitude = np.abs(values)
    reference = magnitude[0] if magnitude[0] > 0 else np.max(magnitude, initial=0.0)
    outside = np.flatnonzero(magnitude > fraction * reference)
    if outside.size == 0:
        return float(times[0])
    last = outside[-1]
    if last + 1 >= len(times):
        return float("inf")
    return float(times[last + 1])


def group_settling_time(trace: Trace, labels: Sequence[str], fraction: float = 0.1) -> float:
    """Settling time of max |x| over a group of channels, against the group's initial peak."""
    envelope = np.max(np.abs(np.column_stack([trace.channel(label) for label in labels])), axis=1)
    return settling_time(trace.times, envelope, fraction)


def trace_metrics(
    trace: Trace,
    Q: np.ndarray | None = None,
    R: np.ndarray | None = None,
    fraction: float = 0.1,
) -> TraceMetrics:
    metrics = TraceMetrics()
    for k, label in enumerate(trace.state_labels):
        metrics.settling_time[label] = settling_time(trace.times, trace.states[:, k], fraction)
        metrics.peak[label] = float(np.max(np.abs(trace.states[:, k]), initial=0.0))

    n = trace.states.shape[1]
    Q = np.eye(n) if Q is None else Q
    integrand = np.einsum("ti,ij,tj->t", trace.states, Q, trace.states)
    if trace.inputs is not None and trace.inputs.size:
        R = np.eye(trace.inputs.shape[1]) if R is None else R
        integrand = integrand + np.einsum("ti,ij,tj->t", trace.inputs, R, trace.inputs)
    metrics.cost = float(trapezoid(integrand, trace.times)) if len(trace.times) > 1 else 0.0
    return metrics
