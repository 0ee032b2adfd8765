from __future__ import annotations

import csv
from dataclasses import replace

import numpy as np
import pytest

from fluxchain.chain import build_system, chain_from_ej, named_chain
from fluxchain.errors import DegenerateDriveError, ParameterError
from fluxchain.spectral import (
    ZZ_CSV_COLUMNS,
    charge_matrix_element,
    default_pair,
    full_label,
    relative_signs,
    sd_ratio,
    table_row,
    write_zz_csv,
    zz_rate,
    zz_vs_coupling_sweep,
)

# tabulated ZZ (kHz) with spectators 00, and the first-row matrix elements
PUBLISHED_ZZ_00 = {"HLMH'": -9.5624, "LMHL'": -24.7227, "MLHM'": -12.9368}
PUBLISHED_ELEMENTS_00 = {
    "HLMH'": [-0.08167, 0.01217, -0.08164, -0.01188, -0.01287, -0.11603, 0.01318, -0.11607],
    "LMHL'": [-0.11593, 0.00852, -0.1159, -0.00803, 0.00933, 0.16822, -0.00969, 0.16824],
    "MLHM'": [-0.08168, 0.00442, -0.08166, -0.0039, 0.00506, 0.16817, -0.00525, 0.16817],
}


def test_labels_helpers():
    assert default_pair(4) == (1, 2)
    assert default_pair(2) == (0, 1)
    assert full_label(4, (1, 2), (1, 0), (0, 1)) == (0, 1, 0, 1)
    assert full_label(4, (2, 1), (1, 0)) == (0, 0, 1, 0)
    assert full_label(2, (0, 1), (1, 1)) == (1, 1)
    with pytest.raises(ParameterError):
        full_label(4, (1, 2), (0, 0), (1,))


def test_zz_zero_without_coupling():
    _, d = build_system(chain_from_ej([3.0, 4.5, 3.8, 2.9], j_ff=0.0))
    for spect in ((0, 0), (1, 1), (0, 1)):
        assert abs(zz_rate(d, spectators=spect)) < 1e-6  # kHz; energies are exact sums


@pytest.mark.parametrize("name", sorted(PUBLISHED_ZZ_00))
def test_published_zz_and_elements(name, four_qubit_systems):
    ops, d = four_qubit_systems[name]
    row = table_row(d, ops, (0, 0))
    assert row["zz_kHz"] == pytest.approx(PUBLISHED_ZZ_00[name], rel=0.02)
    vals = np.array([r.value for r in row["elements"]])
    assert np.abs(vals.imag).max() < 1e-12
    np.testing.assert_allclose(np.abs(vals.real), np.abs(PUBLISHED_ELEMENTS_00[name]), rtol=0.02)
    # per-transition relative sign of the two qubits is gauge invariant
    assert relative_signs(vals) == relative_signs(PUBLISHED_ELEMENTS_00[name])


def test_zz_weak_spectator_dependence(hlmh_system):
    _, d = hlmh_system
    vals = [zz_rate(d, spectators=s) for s in ((0, 0), (0, 1), (1, 0), (1, 1))]
    assert max(vals) - min(vals) < 0.01 * abs(vals[0])


def test_sd_ratio_frozen_and_dark(hlmh_system):
    ops, d = hlmh_system
    eta = sd_ratio(d, ops, 1, 2)
    assert eta == pytest.approx(-0.110953, abs=2e-6)  # direct evaluation, frozen
    lab00 = full_label(4, (1, 2), (0, 0))
    lab01 = full_label(4, (1, 2), (0, 1))
    dark = charge_matrix_element(d, ops, 1, lab01, lab00) + eta * charge_matrix_element(d, ops, 2, lab01, lab00)
    assert abs(dark) < 1e-12


def test_sd_ratio_degenerate_target(lm_system):
    ops, d = lm_system
    zeroed = replace(ops, n_embedded=(ops.n_embedded[0], np.zeros_like(ops.n_embedded[1])))
    with pytest.raises(DegenerateDriveError):
        sd_ratio(d, zeroed, 0, 1)


def test_sweep_records_and_csv(tmp_path):
    spec = named_chain("HLMH'")
    recs = zz_vs_coupling_sweep(spec, [0.0, 0.003], [0.0], spectators=(1, 1))
    assert [r.status for r in recs] == ["ok", "ok"]
    assert abs(recs[0].value) < 1e-6
    assert recs[1].value == pytest.approx(-9.5615, rel=0.02)
    path = tmp_path / "zz.csv"
    write_zz_csv(recs, path)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == ZZ_CSV_COLUMNS
    assert rows[2][0] == "HLMH'" and float(rows[2][1]) == 0.003


def test_sweep_keeps_failed_points():
    spec = chain_from_ej([4.5, 4.5, 3.8, 3.7], name="LLMM'")
    # identical neighbours hybridize strongly and labeling fails at large coupling
    recs = zz_vs_coupling_sweep(spec, [0.0, 0.05], [0.0], spectators=(0, 0))
    assert recs[0].status == "ok"
    assert recs[1].status.startswith("failed")
    assert np.isnan(recs[1].value)
    with pytest.raises(ParameterError):
        zz_vs_coupling_sweep(spec, [], [0.0])
