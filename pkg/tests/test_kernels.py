from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import linalg

from fluxchain import kernels
from fluxchain._accel import NUMBA_ENABLED


def random_stack(rng, n_nodes, dim, ncols):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    b = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h0, hd = (a + a.conj().T) / 4, (b + b.conj().T) / 4
    nodes = kernels.chebyshev_nodes(n_nodes)
    stack = np.array([linalg.expm(-0.05j * (h0 + x * hd)) for x in nodes])
    u = np.linalg.qr(rng.normal(size=(dim, ncols)) + 1j * rng.normal(size=(dim, ncols)))[0]
    return stack, u


@pytest.mark.skipif(kernels._apply_steps_numba is None, reason="numba missing")
@given(st.integers(0, 10_000), st.integers(2, 12), st.integers(1, 5), st.integers(1, 30))
def test_numba_matches_numpy(seed, dim, ncols, n_steps):
    rng = np.random.default_rng(seed)
    stack, u = random_stack(rng, 8, dim, ncols)
    w = kernels.barycentric_weights(rng.uniform(-1, 1, n_steps), 8)
    ref = kernels._apply_steps_numpy(stack, w, u)
    out = kernels._apply_steps_numba(stack, w, u)
    assert np.allclose(out, ref, atol=1e-12, rtol=0)


def test_dispatch_does_not_mutate_input():
    rng = np.random.default_rng(3)
    stack, u = random_stack(rng, 6, 5, 2)
    u0 = u.copy()
    w = kernels.barycentric_weights(np.array([0.1, -0.4]), 6)
    kernels.apply_steps(stack, w, u)
    assert np.array_equal(u, u0)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=20), st.integers(2, 16))
def test_barycentric_rows_sum_to_one(xs, n):
    w = kernels.barycentric_weights(np.array(xs), n)
    assert w.shape == (len(xs), n)
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-10)


@given(st.integers(2, 14), st.floats(-1, 1))
def test_barycentric_reproduces_polynomials(n, x):
    nodes = kernels.chebyshev_nodes(n)
    coef = np.arange(1, n + 1, dtype=float) / n
    poly = np.polynomial.Polynomial(coef)  # degree n - 1 is interpolated exactly
    w = kernels.barycentric_weights(np.array([x]), n)[0]
    assert w @ poly(nodes) == pytest.approx(poly(x), abs=1e-9)


def test_barycentric_at_node_is_one_hot():
    nodes = kernels.chebyshev_nodes(7)
    w = kernels.barycentric_weights(nodes[[2, 5]], 7)
    assert np.array_equal(w, np.eye(7)[[2, 5]])


def test_env_flag_selects_numpy_path():
    code = "from fluxchain._accel import NUMBA_ENABLED; print(NUMBA_ENABLED)"
    env = dict(os.environ, FLUXCHAIN_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
    env["FLUXCHAIN_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == str(kernels._apply_steps_numba is not None)


def test_flag_read_in_this_process():
    assert NUMBA_ENABLED == (
        kernels._apply_steps_numba is not None and os.environ.get("FLUXCHAIN_DISABLE_NUMBA", "0") in ("", "0")
    )
