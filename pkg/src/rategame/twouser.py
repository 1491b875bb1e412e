"""Closed-form two-user analytics.

Two families live here. First, the anti-symmetric two-frequency system
(direct gains 1, cross gains [alpha, m*alpha] and [m*alpha, alpha], flat
noise): its interior equilibrium is described by a single split p, with
closed forms for p, dp/deps, the sum-rate and the critical interference
level at which the sum-rate is insensitive to both uncertainty and the
split. Second, the overlap-set linear system of a general two-user
equilibrium with flat noise, which yields the analytic sensitivity of the
partitioning measure J(k) = -p1(k) p2(k) to the uncertainty bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ChannelSet,
    DegenerateSystemError,
    DomainError,
    GameConfig,
    PowerProfile,
    RegimeError,
    UnsupportedArityError,
    check_dims,
)
from .metrics import OCCUPANCY_FACTOR

INTERIOR_MARGIN = 1e-9
G = np.array([[0.0, 1.0], [1.0, 0.0]])  # d/deps of each overlap block


@dataclass(frozen=True)
class AntiSymSystem:
    """Anti-symmetric Q=2, N=2 system: interference alpha / m*alpha, flat noise."""

    alpha: float
    m: float
    sigma2: float
    eps: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise DomainError("alpha must lie in (0, 1)")
        if not self.m >= 1.0:
            raise DomainError("m must be >= 1")
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")
        if self.eps < 0:
            raise DomainError("eps must be nonnegative")

    def denominator(self) -> float:
        return 1.0 - (self.m + 1.0) * self.alpha / 2.0 - self.eps


def antisym_channels(sys: AntiSymSystem) -> ChannelSet:
    """ChannelSet of the anti-symmetric system (unit direct gains)."""
    a, ma = sys.alpha, sys.m * sys.alpha
    F = np.zeros((2, 2, 2))
    F[1, 0, :] = (a, ma)   # transmitter 2 into link 1
    F[0, 1, :] = (ma, a)   # transmitter 1 into link 2
    return ChannelSet(F=F, sigma2=np.full((2, 2), sys.sigma2))


def antisym_config(sys: AntiSymSystem, P_T: float = 1.0, pmax: float = 1.0) -> GameConfig:
    return GameConfig(
        P=np.full(2, P_T),
        pmax=np.full((2, 2), pmax),
        eps=np.full(2, sys.eps),
    )


def antisym_profile(p: float, P_T: float = 1.0) -> PowerProfile:
    """Symmetric-family profile: user 1 puts p on bin 1, user 2 mirrors it."""
    return PowerProfile(P_T * np.array([[p, 1.0 - p], [1.0 - p, p]]))


def _require_interior(sys: AntiSymSystem, p: float):
    # all four equilibrium powers (p and 1-p twice each) must be strictly
    # positive with margin; otherwise the linear closed form is invalid
    if min(p, 1.0 - p) <= INTERIOR_MARGIN:
        raise RegimeError(
            f"split p={p:.6g} is not interior; the closed form does not apply"
        )


def interior_p(sys: AntiSymSystem) -> float:
    """Interior equilibrium split p = (1 - alpha - eps) / (2 (1 - (m+1) alpha/2 - eps)).

    Always >= 0.5 in its regime; raises RegimeError when the denominator is
    not positive or any equilibrium power would hit zero.
    """
    den = sys.denominator()
    if den <= 0:
        raise RegimeError(f"denominator {den:.6g} is not positive")
    p = (1.0 - sys.alpha - sys.eps) / (2.0 * den)
    _require_interior(sys, p)
    return float(p)


def interior_dp_deps(sys: AntiSymSystem) -> float:
    """Sensitivity dp/deps = (m - 1) alpha / (4 (1 - (m+1) alpha/2 - eps)^2).

    Positive for m > 1: uncertainty pushes the equilibrium toward FDMA.
    """
    den = sys.denominator()
    if den <= 0:
        raise RegimeError(f"denominator {den:.6g} is not positive")
    _require_interior(sys, interior_p(sys))
    return float((sys.m - 1.0) * sys.alpha / (4.0 * den * den))


def split_sum_rate(sys: AntiSymSystem, p: float) -> float:
    """Sum-rate of the symmetric-family profile with split p (nominal rates)."""
    a, m, s2 = sys.alpha, sys.m, sys.sigma2
    return float(
        2.0 * np.log1p(p / (s2 + a * (1.0 - p)))
        + 2.0 * np.log1p((1.0 - p) / (s2 + m * a * p))
    )


def antisym_sum_rate(sys: AntiSymSystem) -> float:
    """Equilibrium sum-rate of the interior regime (split from interior_p)."""
    return split_sum_rate(sys, interior_p(sys))


def split_sum_rate_slope(alpha: float, m: float, sigma2: float, p: float) -> float:
    """d/dp of the symmetric-family sum-rate at the given split."""
    d1 = sigma2 + alpha * (1.0 - p)
    d2 = sigma2 + m * alpha * p
    t1 = (1.0 / d1 + alpha * p / d1**2) / (1.0 + p / d1)
    t2 = (1.0 / d2 + (1.0 - p) * m * alpha / d2**2) / (1.0 + (1.0 - p) / d2)
    return float(2.0 * (t1 - t2))


def alpha_crit(m: float, sigma2: float) -> float:
    """Interference level where the sum-rate is flat in both eps and the split.

    sigma2/(2m) * (sqrt((m+1)^2 + 4m/sigma2) - m - 1): the positive root of
    the slope equation that does not depend on the split.
    """
    if not m >= 1.0 or not sigma2 > 0:
        raise DomainError("need m >= 1 and sigma2 > 0")
    return float(
        sigma2 / (2.0 * m) * (np.sqrt((m + 1.0) ** 2 + 4.0 * m / sigma2) - m - 1.0)
    )


def alpha_roots(m: float, sigma2: float, p: float) -> np.ndarray:
    """All stationary points of the sum-rate in eps at a fixed split p.

    Zero kills dp/deps; the branch pair and the split-dependent root kill the
    slope in p. Only alpha_crit is positive and split-independent. The
    split-dependent root is -sigma2 (2p - 1) / ((m - 1) p^2 + 2p - 1): the
    sign is fixed by checking the root against the slope directly.
    """
    if not (0.5 < p < 1.0):
        raise DomainError("split p must lie in (0.5, 1)")
    root_sq = np.sqrt(4.0 * m / sigma2 + (m + 1.0) ** 2)
    branch_neg = -sigma2 / (2.0 * m) * (m + 1.0 + root_sq)
    branch_pos = -sigma2 / (2.0 * m) * (m + 1.0 - root_sq)  # equals alpha_crit
    split_root = -sigma2 * (2.0 * p - 1.0) / ((m - 1.0) * p * p + 2.0 * p - 1.0)
    return np.array([0.0, branch_neg, branch_pos, split_root])


@dataclass(frozen=True)
class OverlapSystem:
    """Exclusive/overlap frequency sets of a two-user equilibrium, flat noise.

    On overlap bins the clamp is inactive and the equilibrium solves a block
    linear system with one 2x2 block A_k per bin coupled through the water
    levels; Z maps the budget vector p_t to the water-level offsets.
    """

    d1: np.ndarray       # bins used by user 1 only
    d2: np.ndarray       # bins used by user 2 only
    d_ol: np.ndarray     # bins used by both
    n1: int
    n2: int
    A: np.ndarray        # (n_ol, 2, 2) blocks
    dets: np.ndarray     # det(A_k) = 1 - (F21 + eps)(F12 + eps)
    Z: np.ndarray        # 2x2 water-level block of the inverse
    mu1: float
    mu2: float
    p_t: np.ndarray      # (P_T, P_T)
    eps: float
    sigma2: float


def _flat_sigma2(ch: ChannelSet) -> float:
    s = ch.sigma2
    if not np.allclose(s, s.flat[0], rtol=1e-9, atol=0.0):
        raise DomainError("overlap analysis needs identical noise across users and bins")
    return float(s.flat[0])


def classify_frequency_sets(
    ch: ChannelSet, cfg: GameConfig, equilibrium: PowerProfile
) -> OverlapSystem:
    """Partition the occupied bins of a converged two-user equilibrium.

    Requires equal budgets and uncertainty bounds and flat noise; raises
    DegenerateSystemError when an overlap block or the coupled water-level
    system is singular, or when a mask clips an occupied bin (the linear
    model assumes slack masks).
    """
    check_dims(ch, cfg, equilibrium)
    if ch.Q != 2:
        raise UnsupportedArityError("overlap analysis is defined for Q = 2 only")
    if cfg.eps[0] != cfg.eps[1]:
        raise DomainError("overlap analysis needs equal uncertainty bounds")
    if cfg.P[0] != cfg.P[1]:
        raise DomainError("overlap analysis needs equal power budgets")
    sigma2 = _flat_sigma2(ch)
    eps = float(cfg.eps[0])
    P_T = float(cfg.P[0])

    p = equilibrium.p
    occupied = p > OCCUPANCY_FACTOR * P_T
    if np.any(p[occupied] > cfg.pmax[occupied] - 1e-9):
        raise DegenerateSystemError("mask active on an occupied bin")
    d1 = np.flatnonzero(occupied[0] & ~occupied[1])
    d2 = np.flatnonzero(occupied[1] & ~occupied[0])
    d_ol = np.flatnonzero(occupied[0] & occupied[1])
    n1, n2 = d1.size, d2.size

    f21 = ch.F[1, 0, d_ol] + eps
    f12 = ch.F[0, 1, d_ol] + eps
    A = np.zeros((d_ol.size, 2, 2))
    A[:, 0, 0] = 1.0
    A[:, 1, 1] = 1.0
    A[:, 0, 1] = f21
    A[:, 1, 0] = f12
    dets = 1.0 - f21 * f12
    if np.any(np.abs(dets) < 1e-12):
        raise DegenerateSystemError("singular overlap block: (F21+eps)(F12+eps) = 1")

    inv_sum = float((1.0 / dets).sum())
    zbar = np.array(
        [
            [n2 + inv_sum, float((f21 / dets).sum())],
            [float((f12 / dets).sum()), n1 + inv_sum],
        ]
    )
    det_hat = zbar[0, 0] * zbar[1, 1] - zbar[0, 1] * zbar[1, 0]
    if abs(det_hat) < 1e-12:
        raise DegenerateSystemError("singular water-level coupling")
    Z = zbar / det_hat

    p_t = np.full(2, P_T)
    mu_off = Z @ p_t
    return OverlapSystem(
        d1=d1, d2=d2, d_ol=d_ol, n1=n1, n2=n2,
        A=A, dets=dets, Z=Z,
        mu1=float(sigma2 + mu_off[0]), mu2=float(sigma2 + mu_off[1]),
        p_t=p_t, eps=eps, sigma2=sigma2,
    )


def _block_inverses(sys: OverlapSystem) -> np.ndarray:
    inv = np.empty_like(sys.A)
    inv[:, 0, 0] = sys.A[:, 1, 1]
    inv[:, 1, 1] = sys.A[:, 0, 0]
    inv[:, 0, 1] = -sys.A[:, 0, 1]
    inv[:, 1, 0] = -sys.A[:, 1, 0]
    return inv / sys.dets[:, None, None]


def reconstruct_powers(sys: OverlapSystem) -> np.ndarray:
    """Overlap-bin powers from the block solution, p(k) = A_k^{-1} Z p_t."""
    zp = sys.Z @ sys.p_t
    return _block_inverses(sys) @ zp


def dense_overlap_solve(sys: OverlapSystem):
    """Solve the full (2 n_ol + 2) coupled system directly; validation oracle.

    Returns (powers on overlap bins, water-level offsets (mu_q - sigma2)).
    """
    n = sys.d_ol.size
    dim = 2 * n + 2
    M = np.zeros((dim, dim))
    rhs = np.zeros(dim)
    for i in range(n):
        M[2 * i: 2 * i + 2, 2 * i: 2 * i + 2] = sys.A[i]
        M[2 * i: 2 * i + 2, 2 * n: 2 * n + 2] = -np.eye(2)
        M[2 * n: 2 * n + 2, 2 * i: 2 * i + 2] = np.eye(2)
    M[2 * n, 2 * n] = sys.n1
    M[2 * n + 1, 2 * n + 1] = sys.n2
    rhs[2 * n:] = sys.p_t
    sol = np.linalg.solve(M, rhs)
    return sol[: 2 * n].reshape(n, 2), sol[2 * n:]


def partition_derivative(
    sys: OverlapSystem,
    ch: ChannelSet,
    cfg: GameConfig,
    boundary_factor: float = 1e-3,
):
    """Analytic d/deps of J(k) = -p1(k) p2(k), plus partition-boundary flags.

    Exclusive and unused bins have exact zero derivative. The derivative is
    valid only while the frequency-set partition is locally constant in eps;
    bins close to entering or leaving the overlap set are flagged (the value
    for the current region is still returned).
    """
    check_dims(ch, cfg)
    N = ch.N
    dJ = np.zeros(N)
    flags = np.zeros(N, dtype=bool)
    P_T = float(sys.p_t[0])
    btol = boundary_factor * P_T

    inv = _block_inverses(sys)
    zp = sys.Z @ sys.p_t
    powers = inv @ zp  # (n_ol, 2)

    # coupling_sum = sum_i A_i^{-1} G A_i^{-1}
    coupling = np.einsum("kab,bc,kcd->ad", inv, G, inv)
    for idx, k in enumerate(sys.d_ol):
        p_k = powers[idx]
        dp_k = inv[idx] @ sys.Z @ coupling @ zp - inv[idx] @ G @ inv[idx] @ zp
        dJ[k] = -float(p_k @ G @ dp_k)
        if min(p_k) < btol:
            flags[k] = True  # a user is about to drop this bin

    # exclusive bins: flag when the silent user's headroom is nearly zero
    for k in sys.d1:
        p1k = sys.mu1 - sys.sigma2
        head = sys.mu2 - sys.sigma2 - (ch.F[0, 1, k] + sys.eps) * p1k
        if head > -btol:
            flags[k] = True
    for k in sys.d2:
        p2k = sys.mu2 - sys.sigma2
        head = sys.mu1 - sys.sigma2 - (ch.F[1, 0, k] + sys.eps) * p2k
        if head > -btol:
            flags[k] = True
    # bins used by nobody: flag when either user is close to activating them
    used = np.zeros(N, dtype=bool)
    used[sys.d1] = used[sys.d2] = used[sys.d_ol] = True
    head = max(sys.mu1, sys.mu2) - sys.sigma2
    if head > -btol:
        flags[~used] = True
    return dJ, flags
