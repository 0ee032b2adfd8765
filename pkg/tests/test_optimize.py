from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fluxchain.chain import build_system, chain_from_ej, named_chain
from fluxchain.dynamics import DriveSpec
from fluxchain.errors import DegenerateDriveError, ParameterError
from fluxchain.optimize import (
    DEFAULT_BOUNDS,
    OptimizationProblem,
    SweepResult,
    area_scaled,
    best_so_far,
    initial_guess,
    optimize_gate,
    row_pair,
    spectator_chain,
    spectator_sweep,
)

LM_OPT = dict(epsilon=0.48792, eta=-0.108846, delta=1.0000264)


@pytest.fixture(scope="module")
def lm_problem():
    return OptimizationProblem(named_chain("LM"), 0, 1)


@pytest.fixture(scope="module")
def lm_result(lm_problem, lm_system):
    return optimize_gate(lm_problem, system=lm_system)


def test_initial_guess_short_ramp(lm_system):
    ops, dressed = lm_system
    g = initial_guess(dressed, ops, 0, 1, t_g=100, t_r=5)
    # published starting point for a short ramp: epsilon 0.396, eta -0.107
    assert abs(g.epsilon - 0.396) / 0.396 < 0.30
    assert abs(g.eta - (-0.107)) / 0.107 < 0.10
    assert g.delta == 1.0


def test_initial_guess_scales_with_plateau(lm_system):
    ops, dressed = lm_system
    a = initial_guess(dressed, ops, 0, 1, t_g=100, t_r=20)
    b = initial_guess(dressed, ops, 0, 1, t_g=60, t_r=20)
    assert b.epsilon * 40 == pytest.approx(a.epsilon * 80, rel=1e-12)


def test_uncoupled_chain_is_degenerate():
    ops, dressed = build_system(chain_from_ej([3.8, 3.0], j_ff=0.0, j_nn=0.0))
    with pytest.raises(DegenerateDriveError):
        initial_guess(dressed, ops, 0, 1)


def test_lm_optimum(lm_result):
    assert lm_result.error < 1e-5
    assert lm_result.error <= lm_result.initial_error
    assert lm_result.best.epsilon == pytest.approx(LM_OPT["epsilon"], rel=2e-3)
    assert lm_result.best.eta == pytest.approx(LM_OPT["eta"], rel=5e-3)
    assert lm_result.best.delta == pytest.approx(LM_OPT["delta"], abs=2e-5)
    assert lm_result.evals <= 300
    assert lm_result.status == "ok"


def test_best_so_far_monotone(lm_result):
    curve = best_so_far(lm_result.trace)
    assert len(curve) == lm_result.evals
    assert all(b <= a for a, b in zip(curve, curve[1:]))
    assert curve[-1] == pytest.approx(lm_result.error, rel=1e-9)


def test_optimization_deterministic(lm_problem, lm_system, lm_result):
    again = optimize_gate(lm_problem, system=lm_system)
    assert again.trace == lm_result.trace
    assert again.error == lm_result.error


def test_fixed_point_restart(lm_problem, lm_system, lm_result):
    res = optimize_gate(replace(lm_problem, initial=lm_result.best), system=lm_system)
    assert res.error <= res.initial_error
    assert res.initial_error == pytest.approx(lm_result.error, rel=1e-9)
    assert (res.best.epsilon, res.best.eta, res.best.delta) == pytest.approx(
        (lm_result.best.epsilon, lm_result.best.eta, lm_result.best.delta), rel=1e-6
    )
    # a started-at-optimum run stops on stall rather than exhausting the budget
    assert res.evals < lm_problem.max_evals // 2


def test_problem_validation():
    chain = named_chain("LM")
    with pytest.raises(ParameterError):
        OptimizationProblem(chain, 0, 1, max_evals=10)
    bad = DriveSpec(epsilon=5.0, eta=0.0)
    with pytest.raises(ParameterError):
        OptimizationProblem(chain, 0, 1, initial=bad)
    with pytest.raises(ParameterError):
        OptimizationProblem(chain, 0, 1, bounds={**DEFAULT_BOUNDS, "eta": (1.0, -1.0)})


def test_sweep_axis_monotone():
    SweepResult("x", (1.0, 2.0, 3.0), ())
    SweepResult("x", (3.0, 2.0), ())
    with pytest.raises(ParameterError):
        SweepResult("x", (1.0, 3.0, 2.0), ())
    with pytest.raises(ParameterError):
        SweepResult("x", (1.0, 1.0), ())


@pytest.mark.parametrize(
    "name,pair",
    [("LM*", (0, 1)), ("L*M", (1, 0)), ("HLM*H'", (1, 2)), ("HL*MH'", (2, 1)), ("LMH*L'", (1, 2))],
)
def test_row_pair(name, pair):
    assert row_pair(name) == pair


def test_row_pair_rejects_edge_target():
    with pytest.raises(ParameterError):
        row_pair("H*LMH'")
    with pytest.raises(ParameterError):
        row_pair("LM")


@given(
    st.floats(0.1, 2.0),
    st.floats(5.0, 25.0),
    st.floats(60.0, 200.0),
    st.floats(60.0, 200.0),
)
def test_area_scaled_conserves_area(eps, t_r, t_g0, t_g1):
    d = DriveSpec(epsilon=eps, eta=0.1, t_g=t_g0, t_r=t_r)
    s = area_scaled(d, t_g1)
    assert s.t_g == t_g1
    assert s.epsilon * (t_g1 - t_r) == pytest.approx(eps * (t_g0 - t_r), rel=1e-12)


def test_area_scaled_rejects_short_gate():
    with pytest.raises(ParameterError):
        area_scaled(DriveSpec(epsilon=0.5, eta=0.0, t_g=100, t_r=20), 15.0)


def test_spectator_chain_layout():
    c = spectator_chain(named_chain("LM"), 2.6)
    assert [q.e_j for q in c.qubits] == pytest.approx([2.6, 4.5, 3.8, 2.5])


def test_spectator_sweep_unoptimized(lm_problem):
    base = replace(lm_problem, control=1, target=2)
    reuse = DriveSpec(**LM_OPT)
    res = spectator_sweep(base, [2.5, 5.2], reuse, optimize=False)
    assert res.axis_values == (2.5, 5.2)
    far, near = res.points
    assert all(math.isnan(p.error_optimized) for p in res.points)
    # a detuned spectator barely perturbs the gate, a near-resonant one spoils it
    assert far.error_unoptimized < 1e-4
    assert near.error_unoptimized > 10 * far.error_unoptimized
    assert far.extra["spectator_freq_GHz"] > near.extra["spectator_freq_GHz"]
    assert np.isfinite([p.error_unoptimized for p in res.points]).all()
