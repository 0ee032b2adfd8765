"""Hot loops of the propagator.

Each kernel has a numpy implementation and, when numba is available, a
compiled twin built from the same loop. ``apply_steps`` dispatches on
``fluxchain._accel.NUMBA_ENABLED``; both variants are importable so the
benchmark can time them side by side.
"""

from __future__ import annotations

import numpy as np

from fluxchain import _accel


def chebyshev_nodes(n: int) -> np.ndarray:
    """First-kind Chebyshev points on [-1, 1], descending."""
    k = np.arange(n)
    return np.cos((2 * k + 1) * np.pi / (2 * n))


def barycentric_weights(x: np.ndarray, n: int) -> np.ndarray:
    """Lagrange basis values at ``x`` for the ``n`` first-kind Chebyshev nodes.

    Returns an array of shape ``(len(x), n)`` whose rows sum to one.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.arange(n)
    nodes = np.cos((2 * k + 1) * np.pi / (2 * n))
    bw = (-1.0) ** k * np.sin((2 * k + 1) * np.pi / (2 * n))
    diff = x[:, None] - nodes[None, :]
    exact = np.abs(diff) < 1e-15
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(exact, 0.0, bw[None, :] / diff)
        out = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    if hit.any():
        out[hit] = exact[hit].astype(float)
    return out


def _apply_steps_numpy(stack: np.ndarray, weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    for s in range(weights.shape[0]):
        step = np.tensordot(weights[s], stack, axes=1)
        u = step @ u
    return u


def _apply_steps_loop(stack, weights, u):
    n_nodes, dim, _ = stack.shape
    flat = stack.reshape(n_nodes, dim * dim)
    wc = weights.astype(np.complex128)
    step = np.empty(dim * dim, dtype=np.complex128)
    cur = u.copy()
    nxt = np.empty_like(cur)
    for s in range(weights.shape[0]):
        np.dot(wc[s], flat, step)
        np.dot(step.reshape(dim, dim), cur, nxt)
        cur, nxt = nxt, cur
    return cur


if _accel.numba is not None:
    _apply_steps_numba = _accel.numba.njit(cache=True)(_apply_steps_loop)
else:  # pragma: no cover
    _apply_steps_numba = None


def apply_steps(stack: np.ndarray, weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Left-multiply ``u`` by a sequence of interpolated exponentials.

    Step ``s`` applies ``sum_j weights[s, j] * stack[j]``. ``stack`` holds the
    node exponentials ``(n_nodes, dim, dim)``; ``u`` is ``(dim, ncols)``.
    """
    stack = np.ascontiguousarray(stack, dtype=np.complex128)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.complex128)
    if _accel.NUMBA_ENABLED and _apply_steps_numba is not None:
        return _apply_steps_numba(stack, weights, u)
    return _apply_steps_numpy(stack, weights, u)
