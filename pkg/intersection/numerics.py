# intersection/numerics.py

"""Small numerical helpers shared by the queue-length solver."""

import math

import numpy as np
from scipy import linalg


def richardson_limit(step_ratio: float, values):
    """
    Extrapolates a sequence computed at steps h, h/r, h/r^2, ... to h -> 0,
    assuming an error expansion in integer powers of h (pass r^2 as
    ``step_ratio`` for expansions in even powers).

    :param step_ratio: Factor by which the error scale shrinks between values
    :param values: Estimates, coarsest first
    :return: Extrapolated limit
    """
    n_steps = len(values)
    if n_steps == 1:
        return values[0]

    last_level = list(values)
    this_level = None
    for m in range(1, n_steps):
        this_level = []
        mult = step_ratio ** m
        factor = 1.0 / (mult - 1.0)
        for i in range(n_steps - m):
            this_level.append(factor * (mult * last_level[i + 1] - last_level[i]))
        last_level = this_level
    return this_level[0]


def phase_winding(signs) -> float:
    """
    Total phase change, in turns, of a closed sequence of nonzero complex
    numbers (the last value connects back to the first). Each step must turn
    by less than half a turn for the count to be exact.
    """
    signs = np.asarray(signs, dtype=complex)
    increments = np.angle(np.roll(signs, -1) / signs)
    return float(increments.sum() / (2.0 * math.pi))


def open_phase_winding(signs) -> float:
    """Like :func:`phase_winding` for an open path (no closing step)."""
    signs = np.asarray(signs, dtype=complex)
    return float(np.angle(signs[1:] / signs[:-1]).sum() / (2.0 * math.pi))


def null_space(matrix: np.ndarray, dim: int = None, rtol: float = 1e-8):
    """
    Right null vectors of ``matrix`` from its SVD, as columns.

    :param matrix: (m, n) array
    :param dim: Number of vectors to return; if None it is the count of
        singular values below ``rtol`` times the largest
    :param rtol: Relative threshold used when ``dim`` is None
    :return: (vectors (n, d), singular values)
    """
    _, sv, vh = linalg.svd(matrix)
    n = matrix.shape[1]
    if dim is None:
        scale = sv[0] if sv.size and sv[0] > 0 else 1.0
        dim = int(np.sum(sv <= rtol * scale)) + max(0, n - sv.size)
    if dim == 0:
        return np.zeros((n, 0), dtype=vh.dtype), sv
    return np.conj(vh[-dim:]).T, sv
