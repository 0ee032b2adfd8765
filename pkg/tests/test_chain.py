from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import ortho_group

from fluxchain.chain import (
    ChainSpec,
    assemble_chain,
    assemble_from_spectra,
    build_system,
    chain_from_ej,
    computational_labels,
    computational_subspace,
    diagonalize_chain,
    embed,
    label_states,
    named_chain,
    parse_tiers,
    rotate,
    solve_qubit,
    target_index,
    tier_ej,
)
from fluxchain.errors import LabelingError, ParameterError
from fluxchain.fluxonium import FluxoniumParams


def test_named_configurations():
    assert tier_ej("HLMH'") == [3.0, 4.5, 3.8, 2.9]
    assert tier_ej("LMHL'") == [4.5, 3.8, 3.0, 4.4]
    assert tier_ej("MLHM'") == [3.8, 4.5, 3.0, 3.7]
    assert tier_ej("SLMS'", spectator_ej=3.05) == [3.05, 4.5, 3.8, 2.95]
    assert tier_ej("L*M") == [4.5, 3.8]
    spec = named_chain("HL*MH'")
    assert spec.name == "HLMH'" and spec.n_qubits == 4
    assert spec.j_ff == 0.003 and spec.j_nn == 0.0
    assert spec.qubits[0].e_c == 1.0 and spec.qubits[0].e_l == 0.7


def test_name_errors():
    with pytest.raises(ParameterError):
        parse_tiers("HXM")
    with pytest.raises(ParameterError):
        tier_ej("SLMS'")
    assert target_index("HL*MH'") == 1
    assert target_index("LM*") == 1
    assert target_index("LM") is None


@pytest.mark.parametrize("n", [1, 7])
def test_chain_length_limits(n):
    with pytest.raises(ParameterError):
        chain_from_ej([3.0] * n)


def test_levels_limit():
    with pytest.raises(ParameterError):
        chain_from_ej([3.0, 4.5], levels_per_qubit=2)
    with pytest.raises(ParameterError):
        ChainSpec(qubits=(1.0, 2.0))


def test_embed_ordering():
    x = np.array([[0, 1], [1, 0]])
    big = embed(x, 0, (2, 3))
    np.testing.assert_array_equal(big, np.kron(x, np.eye(3)))
    np.testing.assert_array_equal(embed(np.diag([1, 2, 3]), 1, (2, 3)), np.kron(np.eye(2), np.diag([1, 2, 3])))


def test_uncoupled_additivity_and_identity_labels():
    spec = chain_from_ej([3.0, 4.5, 3.8], j_ff=0.0)
    ops, dressed = build_system(spec)
    singles = [s.energies for s in ops.spectra]
    sums = sorted(sum(e) for e in itertools.product(*singles))
    np.testing.assert_allclose(dressed.eigenvalues, sums, atol=1e-12)
    for lab, k in dressed.label_map.items():
        assert dressed.overlap_quality[lab] == pytest.approx(1.0)
        assert dressed.energy(lab) == pytest.approx(sum(s[i] for s, i in zip(singles, lab)), abs=1e-12)


def test_hamiltonian_real_symmetric(hlmh_system):
    ops, _ = hlmh_system
    h = ops.h0_static
    assert h.shape == (625, 625)
    assert np.isrealobj(h)
    np.testing.assert_allclose(h, h.T, atol=1e-15)


def test_nearest_neighbour_only():
    spec = chain_from_ej([3.0, 4.5, 3.8])
    ops = assemble_chain(spec)
    s = ops.spectra
    h_direct = sum(embed(np.diag(q.energies), i, ops.dims) for i, q in enumerate(s))
    h_direct = h_direct + 0.003 * (
        embed(s[0].phi_op, 0, ops.dims) @ embed(s[1].phi_op, 1, ops.dims)
        + embed(s[1].phi_op, 1, ops.dims) @ embed(s[2].phi_op, 2, ops.dims)
    )
    np.testing.assert_allclose(ops.h0_static, h_direct, atol=1e-14)


def test_mismatched_levels():
    p = FluxoniumParams(1.0, 0.7, 3.0)
    with pytest.raises(ParameterError):
        assemble_from_spectra([solve_qubit(p, 80, 5), solve_qubit(p, 80, 4)], 0.003, 0.0)


def test_computational_overlap_quality(hlmh_system):
    _, dressed = hlmh_system
    worst = min(dressed.overlap_quality[lab] for lab in computational_labels(4))
    # frozen from a direct run: the H spectator sits 0.23 GHz from M
    assert worst == pytest.approx(0.988922, abs=2e-6)
    assert len(computational_subspace(dressed)) == 16
    with pytest.raises(LabelingError):
        computational_subspace(dressed, min_overlap=0.995)


def test_second_order_energy_shifts():
    # phi has no diagonal elements at half flux, so shifts start at J_ff^2
    e = {}
    for j in (0.0, 0.0015, 0.003):
        _, d = build_system(chain_from_ej([4.5, 3.8], j_ff=j))
        e[j] = np.array([d.energy(lab) for lab in computational_labels(2)])
    ratio = (e[0.003] - e[0.0]) / (e[0.0015] - e[0.0])
    np.testing.assert_allclose(ratio, 4.0, rtol=0.02)


def test_rotate_diagonalizes(lm_system):
    ops, dressed = lm_system
    h = rotate(ops.h0_static, dressed)
    np.testing.assert_allclose(h, np.diag(dressed.eigenvalues), atol=1e-12)


def test_tie_raises_in_strict_mode():
    s = 1 / np.sqrt(2)
    v = np.array([[s, s], [s, -s]])
    with pytest.raises(LabelingError):
        label_states(v, (2,), strict=True, threshold=0.0)
    label_map, quality = label_states(v, (2,), strict=False)
    assert sorted(label_map.values()) == [0, 1]


def test_low_overlap_raises_in_strict_mode():
    c, s = np.cos(0.9), np.sin(0.9)
    v = np.array([[c, s], [-s, c]])  # overlap cos(0.9) = 0.62 on the diagonal, 0.78 off it
    v3 = np.eye(3)
    full = np.kron(v, v3[:1, :1])
    label_map, quality = label_states(full, (2,), strict=True, threshold=0.5)
    assert label_map == {(0,): 1, (1,): 0}
    with pytest.raises(LabelingError):
        label_states(full, (2,), strict=True, threshold=0.8)


@given(st.integers(0, 10_000))
def test_labels_form_a_bijection(seed):
    q = ortho_group.rvs(6, random_state=seed)
    label_map, quality = label_states(q, (2, 3), strict=False)
    assert sorted(label_map.values()) == list(range(6))
    for lab, k in label_map.items():
        b = np.ravel_multi_index(lab, (2, 3))
        assert quality[lab] == pytest.approx(abs(q[b, k]))


def test_diagonalize_chain_gauge(lm_system):
    ops, dressed = lm_system
    v = dressed.eigenvectors
    idx = np.argmax(np.abs(v), axis=0)
    assert np.all(v[idx, np.arange(v.shape[1])] > 0)
    again = diagonalize_chain(ops)
    np.testing.assert_array_equal(again.eigenvectors, v)
