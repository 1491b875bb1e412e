"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the package's breakpoint water-level
search: water levels come from interval bisection and the classical
iterative waterfiller is a self-contained gauss-seidel loop, so agreement
checks compare two genuinely different code paths.
"""

import numpy as np
import pytest

from rategame import ChannelSet, GameConfig


def bisect_water_level(phi, P, pmax, iters=200):
    """Water level by bisection on the monotone filled-power function."""
    phi = np.asarray(phi, dtype=float)
    pmax = np.asarray(pmax, dtype=float)
    lo = phi.min()
    hi = (phi + pmax).max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.clip(mid - phi, 0.0, pmax).sum() < P:
            lo = mid
        else:
            hi = mid
    return hi


def classical_best_response(F, sigma2, p, q, P_q, pmax_q):
    """Zero-uncertainty best response through the bisection oracle."""
    phi = sigma2[q] + np.einsum("rk,rk->k", F[:, q, :], p)
    mu = bisect_water_level(phi, P_q, pmax_q)
    return np.clip(mu - phi, 0.0, pmax_q)


def classical_iwf(F, sigma2, P, pmax, tol=1e-13, max_rounds=20000):
    """Independent classical iterative waterfiller (sequential updates)."""
    Q, _, N = F.shape
    p = np.stack([np.full(N, P[q] / N) for q in range(Q)])
    for q in range(Q):  # restore budgets under the masks
        p[q] = classical_best_response(F, sigma2, np.zeros_like(p), q, P[q], pmax[q])
    for _ in range(max_rounds):
        prev = p.copy()
        for q in range(Q):
            p[q] = classical_best_response(F, sigma2, p, q, P[q], pmax[q])
        if np.abs(p - prev).max() < tol:
            break
    return p


def random_instance(rng, Q, N, strength=0.8, eps=0.0, sigma_lo=0.1, sigma_hi=2.0):
    """Random game whose coupling matrix row sums stay below `strength`.

    Cross coefficients are uniform on [0, strength/(Q-1)], so the max-row-sum
    contraction modulus is at most strength + eps (Q - 1); keep that below 1
    for guaranteed convergence and uniqueness.
    """
    fmax = strength / max(Q - 1, 1)
    F = rng.uniform(0.0, fmax, size=(Q, Q, N))
    idx = np.arange(Q)
    F[idx, idx, :] = 0.0
    sigma2 = rng.uniform(sigma_lo, sigma_hi, size=(Q, N))
    ch = ChannelSet(F=F, sigma2=sigma2)
    cfg = GameConfig(
        P=np.ones(Q),
        pmax=np.full((Q, N), 1.0),
        eps=np.full(Q, float(eps)),
    )
    return ch, cfg


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
