from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fluxchain.errors import ParameterError
from fluxchain.fluxonium import (
    FluxoniumParams,
    build_oscillator_basis,
    convergence_report,
    diagonalize_fluxonium,
    fix_gauge,
    transition_frequency,
)
from fluxchain.oracles import phase_grid_fluxonium

TIERS = {"L": 4.5, "M": 3.8, "H": 3.0}

# lowest five levels from the phase-grid oracle (8th-order finite differences,
# 4001 points on +-12 pi), frozen
ORACLE_LEVELS = {
    4.5: [0.0, 0.2666557907, 4.1720145482, 6.1238781814, 9.2444755834],
    3.8: [0.0, 0.3979110019, 3.8095554734, 5.9919515225, 8.9862907072],
    3.0: [0.0, 0.6272807280, 3.5589477015, 5.9474285777, 8.8171278615],
}


def params(ej):
    return FluxoniumParams(1.0, 0.7, ej)


@pytest.mark.parametrize("bad", [dict(e_c=0.0), dict(e_c=-1.0), dict(e_l=0.0), dict(e_j=-0.1), dict(phi_ext=np.inf)])
def test_params_validation(bad):
    kw = dict(e_c=1.0, e_l=0.7, e_j=3.0)
    kw.update(bad)
    with pytest.raises(ParameterError):
        FluxoniumParams(**kw)


def test_oscillator_length():
    p = params(4.5)
    assert p.phi_zpf == pytest.approx((8 / 0.7) ** 0.25)
    assert p.plasma_frequency == pytest.approx(np.sqrt(5.6))


@pytest.mark.parametrize("ej", sorted(ORACLE_LEVELS))
def test_levels_match_frozen_oracle(ej):
    spec = diagonalize_fluxonium(params(ej))
    np.testing.assert_allclose(spec.energies, ORACLE_LEVELS[ej], atol=1e-9)


@pytest.mark.parametrize("ej", [4.5, 3.8, 3.0, 0.0, 1.7])
def test_levels_match_phase_grid_oracle(ej):
    spec = diagonalize_fluxonium(params(ej))
    e, phi, n = phase_grid_fluxonium(params(ej))
    np.testing.assert_allclose(spec.energies, e, atol=1e-9)
    np.testing.assert_allclose(np.abs(spec.phi_op), np.abs(phi), atol=1e-7)
    np.testing.assert_allclose(np.abs(spec.n_op), np.abs(n), atol=1e-6)


def test_tier_qubit_frequencies():
    # tier 0-1 frequencies quoted to five digits
    for tier, f in (("L", 0.26666), ("M", 0.39791), ("H", 0.62728)):
        assert transition_frequency(diagonalize_fluxonium(params(TIERS[tier])), 0, 1) == pytest.approx(f, abs=1e-5)


def test_harmonic_limit():
    p = params(0.0)
    spec = diagonalize_fluxonium(p, basis_size=40)
    np.testing.assert_allclose(spec.energies, p.plasma_frequency * np.arange(5), atol=1e-10)


def test_basis_size_independence():
    a = diagonalize_fluxonium(params(4.5), basis_size=60).energies
    b = diagonalize_fluxonium(params(4.5), basis_size=120).energies
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_commutator_on_low_levels():
    # truncation spoils [phi, n] = i only near the top of the kept block
    spec = diagonalize_fluxonium(params(4.5), basis_size=120, n_keep=30)
    comm = spec.phi_op @ spec.n_op - spec.n_op @ spec.phi_op
    low = comm[:15, :15]
    np.testing.assert_allclose(low, 1j * np.eye(15), atol=1e-6)


def test_half_flux_parity():
    spec = diagonalize_fluxonium(params(3.8))
    # symmetric potential: states alternate parity, phi only couples opposite parity
    k = np.arange(5)
    same = (k[:, None] + k[None, :]) % 2 == 0
    assert np.abs(spec.phi_op[same]).max() < 1e-9
    assert np.abs(spec.n_op[same]).max() < 1e-9


def test_rejects_small_basis_and_large_n_keep():
    with pytest.raises(ParameterError):
        build_oscillator_basis(params(3.0), 10)
    with pytest.raises(ParameterError):
        diagonalize_fluxonium(params(3.0), basis_size=40, n_keep=11)
    with pytest.raises(ParameterError):
        diagonalize_fluxonium(params(3.0), n_keep=0)


def test_transition_frequency_rules():
    spec = diagonalize_fluxonium(params(3.0))
    assert transition_frequency(spec, 2, 2) == 0.0
    assert transition_frequency(spec, 0, 2) == pytest.approx(spec.energies[2])
    with pytest.raises(ParameterError):
        transition_frequency(spec, 2, 1)
    with pytest.raises(ParameterError):
        transition_frequency(spec, 0, 5)


def test_convergence_report_flags():
    # 40 -> 80 still moves levels 2-4 by 2e-8 to 8e-8 for the L tier
    rep = convergence_report(params(4.5), [40, 80])
    assert rep.flagged_levels == [2, 3, 4]
    assert rep.drift[0, 3] == pytest.approx(8.2e-8, rel=0.05)
    assert not rep.converged
    assert convergence_report(params(4.5), [60, 120]).converged
    hard = convergence_report(params(20.0), [20, 40])
    assert hard.flagged_levels == [1, 2, 3, 4]
    assert hard.drift[0, 4] > 1.0
    with pytest.raises(ParameterError):
        convergence_report(params(4.5), [40])


def test_fix_gauge():
    rng = np.random.default_rng(3)
    v = rng.normal(size=(6, 3)) + 1j * rng.normal(size=(6, 3))
    g = fix_gauge(v)
    idx = np.argmax(np.abs(g), axis=0)
    piv = g[idx, np.arange(3)]
    assert np.all(piv.real > 0) and np.allclose(piv.imag, 0)
    np.testing.assert_allclose(np.abs(g), np.abs(v))


@given(st.floats(0.0, 8.0), st.floats(0.5, 2.0), st.floats(0.3, 1.5))
def test_spectrum_properties(ej, ec, el):
    spec = diagonalize_fluxonium(FluxoniumParams(ec, el, ej), basis_size=60)
    assert spec.energies[0] == 0.0
    assert np.all(np.diff(spec.energies) > 0)
    np.testing.assert_allclose(spec.phi_op, spec.phi_op.conj().T, atol=1e-12)
    np.testing.assert_allclose(spec.n_op, spec.n_op.conj().T, atol=1e-12)
    assert np.abs(spec.phi_op.imag).max() < 1e-12
