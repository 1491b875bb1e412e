"""Equilibrium quality measures: partitioning, occupancy, social-optimum oracles.

The social optimum of the sum-rate is NP-hard in general, so the oracles here
are a desk-scale brute force over a simplex grid and an FDMA-restricted
search; both are meant for validating small systems, not production use.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ChannelSet,
    DomainError,
    GameConfig,
    PowerProfile,
    UnsupportedArityError,
    check_dims,
)
from .waterfill import waterfill_powers

OCCUPANCY_FACTOR = 1e-6  # p(k) > factor * P_q counts as occupied
BRUTEFORCE_POINT_CAP = 10_000_000


@dataclass(frozen=True)
class PartitionProfile:
    """Two-user partitioning measure J(k) in [-1, 0] and occupancy counts.

    J(k) = -p1(k) p2(k) on powers normalized by the shared budget: -1 when
    both users dump everything on bin k, 0 when at most one occupies it.
    """

    J: np.ndarray
    occupied_counts: np.ndarray


def occupancy_counts(profile: PowerProfile, P, factor: float = OCCUPANCY_FACTOR):
    """Number of bins per user with power above factor * P_q."""
    P = np.asarray(P, dtype=float)
    return (profile.p > factor * P[:, None]).sum(axis=1)


def partition_measure(profile: PowerProfile, P_T: float) -> PartitionProfile:
    """Per-frequency extent of partitioning for a two-user profile.

    Bins occupied by at most one user get an exact 0 so that near-converged
    profiles (tolerance-level residual powers) report clean partitions.
    """
    if profile.Q != 2:
        raise UnsupportedArityError("partition measure is defined for Q = 2 only")
    if not P_T > 0:
        raise DomainError("P_T must be positive")
    phat = profile.p / P_T
    J = -(phat[0] * phat[1])
    counts = occupancy_counts(profile, [P_T, P_T])
    both = (profile.p > OCCUPANCY_FACTOR * P_T).all(axis=0)
    J[~both] = 0.0
    return PartitionProfile(J=J, occupied_counts=counts)


def fdma_condition_check(ch: ChannelSet, eps: float):
    """Per-bin test (F_21(k) - eps)(F_12(k) - eps) > 1/4 and its conjunction.

    When it holds on every bin, FDMA is the Pareto-optimal structure even for
    the worst-case coefficients, so better partitioning raises the sum-rate.
    """
    if ch.Q != 2:
        raise UnsupportedArityError("FDMA condition is defined for Q = 2 only")
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    f21 = ch.F[1, 0, :]
    f12 = ch.F[0, 1, :]
    flags = (f21 - eps) * (f12 - eps) > 0.25
    return flags, bool(flags.all())


def _per_user_grid(P_q: float, pmax_q: np.ndarray, steps: int):
    """Feasible grid allocations of one user: multiples of P_q/steps under the mask."""
    N = pmax_q.shape[0]
    unit = P_q / steps
    out = []
    for combo in itertools.product(range(steps + 1), repeat=N - 1):
        used = sum(combo)
        if used > steps:
            continue
        counts = combo + (steps - used,)
        alloc = np.array(counts, dtype=float) * unit
        if np.all(alloc <= pmax_q + 1e-12):
            out.append(alloc)
    return out


def social_optimum_bruteforce(
    ch: ChannelSet, cfg: GameConfig, grid_resolution: float = None
):
    """Max nominal sum-rate over a uniform grid of the per-user simplices.

    grid_resolution is the power step (default P_q/50 per user). Ties break
    toward the lexicographically smallest profile, which the enumeration
    order delivers for free. Refuses grids beyond 1e7 points.
    """
    check_dims(ch, cfg)
    steps = []
    total = 1
    for q in range(cfg.Q):
        h = grid_resolution if grid_resolution is not None else cfg.P[q] / 50
        if not h > 0:
            raise DomainError("grid_resolution must be positive")
        s = max(1, round(cfg.P[q] / h))
        steps.append(s)
        total *= math.comb(s + cfg.N - 1, cfg.N - 1)
    if total > BRUTEFORCE_POINT_CAP:
        raise DomainError(
            f"simplex grid would hold about {total} points "
            f"(cap {BRUTEFORCE_POINT_CAP}); coarsen the resolution"
        )

    grids = [_per_user_grid(cfg.P[q], cfg.pmax[q], steps[q]) for q in range(cfg.Q)]
    for q, g in enumerate(grids):
        if not g:
            raise DomainError(f"mask of user {q + 1} excludes every grid point")

    best_rate = -np.inf
    best = None
    for rows in itertools.product(*grids):
        p = np.stack(rows)
        rate = _sum_rate_fast(ch, p)
        if rate > best_rate:
            best_rate = rate
            best = p
    return float(best_rate), PowerProfile(best)


def _sum_rate_fast(ch, p):
    total = 0.0
    for q in range(p.shape[0]):
        den = ch.sigma2[q] + np.einsum("rk,rk->k", ch.F[:, q, :], p)
        total += np.log1p(p[q] / den).sum()
    return float(total)


def _fdma_profile(ch, cfg, owner):
    """Waterfill both users over disjoint bins given a 0/1 ownership vector.

    A user with no bins stays silent; masks that cannot absorb the budget cap
    the allocated power at what fits.
    """
    p = np.zeros((2, ch.N))
    for q in range(2):
        bins = np.flatnonzero(owner == q)
        if bins.size == 0:
            continue
        cap = cfg.pmax[q, bins].sum()
        budget = min(cfg.P[q], cap)
        if budget <= 0:
            continue
        if budget >= cap:
            p[q, bins] = cfg.pmax[q, bins]
        else:
            powers, _ = waterfill_powers(ch.sigma2[q, bins], budget, cfg.pmax[q, bins])
            p[q, bins] = powers
    return p


def social_optimum_fdma(ch: ChannelSet, cfg: GameConfig):
    """Best sum-rate over FDMA assignments of bins to the two users.

    Exact enumeration of the 2^N assignments for N <= 20; a greedy single-bin
    swap search above that, in which case the result is only a lower bound
    and the third return value is False.
    """
    check_dims(ch, cfg)
    if ch.Q != 2:
        raise UnsupportedArityError("FDMA search is defined for Q = 2 only")
    N = ch.N

    if N <= 20:
        best_rate = -np.inf
        best = None
        for mask in range(2 ** N):
            owner = np.array([(mask >> k) & 1 for k in range(N)])
            p = _fdma_profile(ch, cfg, owner)
            rate = _sum_rate_fast(ch, p)
            if rate > best_rate:
                best_rate = rate
                best = p
        return float(best_rate), PowerProfile(best), True

    # local search: start from noise-favoring ownership, flip bins while it helps
    owner = (ch.sigma2[1] < ch.sigma2[0]).astype(int)
    rate = _sum_rate_fast(ch, _fdma_profile(ch, cfg, owner))
    improved = True
    sweeps = 0
    while improved and sweeps < 200:
        improved = False
        sweeps += 1
        for k in range(N):
            owner[k] ^= 1
            cand = _sum_rate_fast(ch, _fdma_profile(ch, cfg, owner))
            if cand > rate + 1e-12:
                rate = cand
                improved = True
            else:
                owner[k] ^= 1
    return float(rate), PowerProfile(_fdma_profile(ch, cfg, owner)), False
