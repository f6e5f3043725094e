"""Independent reference implementations used only by the tests.

These deliberately avoid the package's own code paths: the DFT oracle is a
dense O(N^2) matrix product, and the Godunov marcher is the classical
minimax form of the flux in a plain one-pass update loop. Agreement between
these and the shipped implementations is evidence, not tautology.
"""

from __future__ import annotations

import numpy as np


def dense_dft_matrix(n: int) -> np.ndarray:
    """W[k, j] = exp(-2*pi*i*k*j/n), the unnormalized DFT as a dense matrix."""
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n)


def dense_rdft(v: np.ndarray, kmax: int) -> np.ndarray:
    """First kmax+1 rows of the dense DFT applied along the last axis."""
    v = np.asarray(v, dtype=np.float64)
    w = dense_dft_matrix(v.shape[-1])[: kmax + 1]
    return v @ w.T


def dense_lowpass(v: np.ndarray, kmax: int) -> np.ndarray:
    """Remove every mode with |k| > kmax via the dense DFT and its inverse."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    w = dense_dft_matrix(n)
    coeffs = v @ w.T
    k = np.arange(n)
    keep = (np.minimum(k, n - k) <= kmax).astype(np.float64)
    return ((coeffs * keep) @ np.conj(w).T).real / n


def godunov_flux_minimax(ul: np.ndarray, ur: np.ndarray) -> np.ndarray:
    """Godunov flux for f(u) = u^2/2 in the convex-flux minimax form:
    F = max(f(max(uL, 0)), f(min(uR, 0)))."""
    f = lambda u: 0.5 * u * u
    return np.maximum(f(np.maximum(ul, 0.0)), f(np.minimum(ur, 0.0)))


def godunov_march(u0: np.ndarray, dx: float, dt: float, n_steps: int) -> np.ndarray:
    """First-order Godunov scheme for Burgers on a periodic grid.

    Plain forward loop: per step, the flux at every interface j+1/2 from the
    minimax formula, then the conservative update. Returns all n_steps+1
    states stacked [n_steps+1, n].
    """
    u = np.array(u0, dtype=np.float64)
    states = [u.copy()]
    for _ in range(n_steps):
        f = godunov_flux_minimax(u, np.roll(u, -1))
        u = u - (dt / dx) * (f - np.roll(f, 1))
        states.append(u.copy())
    return np.stack(states)
