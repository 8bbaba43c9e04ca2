from __future__ import annotations

import numpy as np
import pytest

from src.acdc_poset.dq_model import (
    Beta,
    CurrentSetpoint,
    DqBoundary,
    DqParams,
    DqState,
    M,
    ModelVariant,
    Rho,
    convert_controls,
    converter_current,
    coupling_graph,
    dq_derivatives,
    dq_outputs,
    partition_type,
    steady_state_terminal_mismatch,
)
from src.acdc_poset.errors import DivisionGuard, GuardViolation, InvariantError, VariantMismatch


PARAMS = DqParams(L=0.15, R=0.02, C_dc=0.8, omega=1.0)


def _signed(rng: np.random.Generator, low: float, high: float) -> float:
    return float(rng.choice((-1.0, 1.0)) * rng.uniform(low, high))


def _random_point(rng: np.random.Generator) -> tuple[DqState, M, DqBoundary]:
    state = DqState(_signed(rng, 0.1, 1.0), _signed(rng, 0.1, 1.0), float(rng.uniform(0.5, 1.5)))
    controls = M(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)))
    boundary = DqBoundary(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)))
    return state, controls, boundary


@pytest.mark.parametrize(
    "variant, loops, expected",
    [
        (ModelVariant("Full"), (), "NotPartitioned"),
        (ModelVariant("BetaSub"), (), "OneWayAcToDc"),
        (ModelVariant("RhoSub"), (), "OneWayDcToAc"),
        (ModelVariant("Full", const_dc_voltage=True), (), "OneWayAcToDc"),
        (ModelVariant("Full", const_ac_voltage=True), (), "OneWayDcToAc"),
        (ModelVariant("BetaSub", const_ac_voltage=True), (), "Full"),
        (ModelVariant("RhoSub", const_dc_voltage=True), (), "Full"),
        (ModelVariant("Full", const_ac_voltage=True, const_dc_voltage=True), (), "Full"),
        (ModelVariant("Timescale"), (), "Full"),
        (ModelVariant("Timescale"), ("dc_voltage",), "OneWayDcToAc"),
        (ModelVariant("Timescale"), ("reactive_power",), "OneWayAcToDc"),
    ],
)
def test_partition_table(variant, loops, expected):
    assert partition_type(variant, loops) == expected


@pytest.mark.parametrize("cross_coupling", ["symmetric", "antisymmetric"])
def test_partition_type_does_not_depend_on_cross_coupling_sign(cross_coupling):
    assert partition_type(ModelVariant("BetaSub", cross_coupling=cross_coupling)) == "OneWayAcToDc"


def test_full_model_couples_both_ways():
    edges = coupling_graph(ModelVariant("Full")).edges
    assert ("v_dc", "i_d") in edges
    assert ("i_d", "v_dc") in edges


def test_constant_dc_voltage_cuts_voltage_edges():
    edges = coupling_graph(ModelVariant("Full", const_dc_voltage=True)).edges
    assert ("v_dc", "i_d") not in edges
    assert ("v_dc", "i_q") not in edges
    assert ("i_d", "i_line") in edges


def test_timescale_currents_have_no_physical_inputs():
    graph = coupling_graph(ModelVariant("Timescale"))
    assert not any(target in ("i_d", "i_q") for _, target in graph.physical)


def test_loops_add_one_way_edges():
    graph = coupling_graph(ModelVariant("Timescale"), ["dc_voltage"])
    assert graph.loops == frozenset({("v_dc", "i_d")})
    assert graph.to_networkx().edges["v_dc", "i_d"]["kind"] == "loop"


def test_unknown_loop_is_rejected():
    with pytest.raises(InvariantError):
        coupling_graph(ModelVariant("Full"), ["frequency_droop"])


@pytest.mark.parametrize("variant", [ModelVariant("Full"), ModelVariant("RhoSub"), ModelVariant("BetaSub", const_ac_voltage=True)])
def test_coupling_edges_are_structural(variant):
    assert coupling_graph(variant, seed=0).edges == coupling_graph(variant, seed=7).edges


@pytest.mark.parametrize("cross_coupling", ["symmetric", "antisymmetric"])
def test_full_and_beta_models_agree(rng, cross_coupling):
    full = ModelVariant("Full", cross_coupling=cross_coupling)
    beta = ModelVariant("BetaSub", cross_coupling=cross_coupling)
    for _ in range(1000):
        state, m, boundary = _random_point(rng)
        b = convert_controls(m, beta, state, PARAMS)
        assert isinstance(b, Beta)
        np.testing.assert_allclose(
            dq_derivatives(beta, PARAMS, state, b, boundary),
            dq_derivatives(full, PARAMS, state, m, boundary),
            rtol=0,
            atol=1e-12,
        )


@pytest.mark.parametrize("cross_coupling", ["symmetric", "antisymmetric"])
def test_full_and_rho_models_agree(rng, cross_coupling):
    full = ModelVariant("Full", cross_coupling=cross_coupling)
    rho = ModelVariant("RhoSub", cross_coupling=cross_coupling)
    for _ in range(1000):
        state, m, boundary = _random_point(rng)
        r = convert_controls(m, rho, state, PARAMS)
        assert isinstance(r, Rho)
        np.testing.assert_allclose(
            dq_derivatives(rho, PARAMS, state, r, boundary),
            dq_derivatives(full, PARAMS, state, m, boundary),
            rtol=0,
            atol=1e-12,
        )
        assert converter_current(rho, PARAMS, state, r) == pytest.approx(
            converter_current(full, PARAMS, state, m), abs=1e-12
        )


def test_beta_round_trip(rng):
    beta = ModelVariant("BetaSub")
    full = ModelVariant("Full")
    for _ in range(200):
        state, _, _ = _random_point(rng)
        b = Beta(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)))
        back = convert_controls(convert_controls(b, full, state, PARAMS), beta, state, PARAMS)
        assert back.beta_d == pytest.approx(b.beta_d, abs=1e-12)
        assert back.beta_q == pytest.approx(b.beta_q, abs=1e-12)


def test_zero_point_is_an_equilibrium():
    zero = DqState(0.0, 0.0, 0.0)
    assert dq_derivatives(ModelVariant("Full"), PARAMS, zero, M(0.0, 0.0), DqBoundary(0.0, 0.0, 0.0)) == (0.0, 0.0, 0.0)
    assert convert_controls(M(0.0, 0.0), ModelVariant("BetaSub"), DqState(0.0, 0.0, 1.0), PARAMS) == Beta(0.0, 0.0)


def test_beta_equilibrium():
    state = DqState(0.3, -0.2, 1.0)
    boundary = DqBoundary(0.9, 0.1, 0.0)
    controls = Beta(boundary.v_d - PARAMS.R * state.i_d, boundary.v_q - PARAMS.R * state.i_q)
    d = dq_derivatives(ModelVariant("BetaSub"), PARAMS, state, controls, boundary)
    assert d.di_d == pytest.approx(0.0, abs=1e-15)
    assert d.di_q == pytest.approx(0.0, abs=1e-15)


def test_constant_dc_voltage_freezes_capacitor():
    d = dq_derivatives(
        ModelVariant("Full", const_dc_voltage=True), PARAMS, DqState(0.5, 0.5, 1.0), M(0.5, 0.5), DqBoundary(1.0, 0.0, 0.3)
    )
    assert d.dv_dc == 0.0


def test_timescale_holds_currents():
    d = dq_derivatives(
        ModelVariant("Timescale"), PARAMS, DqState(0.5, 0.1, 1.0), CurrentSetpoint(0.5, 0.1), DqBoundary(1.0, 0.0, 0.0)
    )
    assert (d.di_d, d.di_q) == (0.0, 0.0)
    assert d.dv_dc != 0.0


def test_outputs():
    assert dq_outputs(DqState(0.0, 0.0, 0.0), M(0.0, 0.0), DqBoundary(0.0, 0.0, 0.0)) == (0.0, 0.0, 0.0, 0.0)
    assert dq_outputs(DqState(1.0, 0.0, 1.0), M(1.0, 0.0), DqBoundary(0.0, 0.0, 0.0)).zeta == pytest.approx(0.75)


def test_internal_terminal_power_matches_dc_power(rng):
    for _ in range(200):
        state, m, boundary = _random_point(rng)
        t_d, t_q = 0.5 * state.v_dc * m.m_d, 0.5 * state.v_dc * m.m_q
        out = dq_outputs(state, m, boundary)
        assert out.p_dc == pytest.approx(1.5 * (t_d * state.i_d + t_q * state.i_q), abs=1e-12)
        assert out.p_dc == pytest.approx(state.v_dc * out.zeta, abs=1e-15)


def test_terminal_mismatch_depends_on_cross_coupling_sign(rng):
    lossless = DqParams(L=0.15, R=0.0, C_dc=0.8, omega=1.0)
    for _ in range(50):
        state, m, _ = _random_point(rng)
        symmetric = steady_state_terminal_mismatch(lossless, state, m, "symmetric")
        assert symmetric == pytest.approx(-2.0 * lossless.omega * lossless.L * state.i_d * state.i_q, abs=1e-12)
        assert steady_state_terminal_mismatch(lossless, state, m, "antisymmetric") == pytest.approx(0.0, abs=1e-12)


def test_rho_model_guards_small_currents():
    with pytest.raises(GuardViolation):
        dq_derivatives(ModelVariant("RhoSub"), PARAMS, DqState(0.0, 0.5, 1.0), Rho(0.1, 0.1), DqBoundary(1.0, 0.0, 0.0))


def test_inverse_maps_guard_divisions():
    with pytest.raises(DivisionGuard):
        convert_controls(Rho(0.1, 0.1), ModelVariant("Full"), DqState(0.0, 0.5, 1.0), PARAMS)
    with pytest.raises(DivisionGuard):
        convert_controls(Beta(0.1, 0.1), ModelVariant("Full"), DqState(0.5, 0.5, 0.0), PARAMS)


def test_variant_mismatch():
    with pytest.raises(VariantMismatch):
        dq_derivatives(ModelVariant("Full"), PARAMS, DqState(0.5, 0.5, 1.0), Beta(0.1, 0.1), DqBoundary(1.0, 0.0, 0.0))
    with pytest.raises(VariantMismatch):
        convert_controls(CurrentSetpoint(0.5, 0.1), ModelVariant("Full"), DqState(0.5, 0.5, 1.0), PARAMS)
    with pytest.raises(VariantMismatch):
        dq_outputs(DqState(0.5, 0.5, 1.0), Beta(0.1, 0.1), DqBoundary(1.0, 0.0, 0.0))


def test_parameter_and_variant_invariants():
    with pytest.raises(InvariantError):
        DqParams(L=0.0, R=0.0, C_dc=1.0, omega=1.0)
    with pytest.raises(InvariantError):
        ModelVariant("Switching")
    assert ModelVariant("RhoSub", const_dc_voltage=True).describe() == "RhoSub + const DC voltage"
