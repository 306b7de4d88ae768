"""Rate-splitting precoders and the common-then-private SIC rate chain.

All functions accept leading batch dimensions, so a stack of channel
realizations ``(..., K, M)`` can be processed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, CsitEstimate, complex_normal
from .errors import (
    ConditioningError,
    DegenerateInputError,
    DimensionError,
    DomainError,
    InfeasibleZFError,
)

POWER_SLACK = 1e-9
COMMON_STRATEGIES = ("dominant-svd", "matched-sum", "uniform-random")


def _as_matrix(H):
    if isinstance(H, (ChannelRealization, CsitEstimate)):
        H = H.H if isinstance(H, ChannelRealization) else H.Hhat
    H = np.asarray(H, dtype=complex)
    if H.ndim < 2 or H.shape[-1] < 1 or H.shape[-2] < 1:
        raise DimensionError(f"expected a (..., K, M) channel array, got {H.shape}")
    return H


@dataclass(frozen=True)
class PrecoderSet:
    """Common precoder ``common`` (..., M) and private precoders as the columns
    of ``private`` (..., M, K).  ``P`` is the power budget they must respect."""

    common: np.ndarray
    private: np.ndarray
    rho: float
    P: float

    def __post_init__(self):
        common = np.asarray(self.common, dtype=complex)
        private = np.asarray(self.private, dtype=complex)
        if private.ndim < 2 or common.shape != private.shape[:-1]:
            raise DimensionError(
                f"common {common.shape} and private {private.shape} precoders disagree")
        object.__setattr__(self, "common", common)
        object.__setattr__(self, "private", private)
        if np.any(self.total_power > self.P + POWER_SLACK):
            raise DomainError(f"precoders exceed the power budget {self.P}")

    @property
    def K(self) -> int:
        return self.private.shape[-1]

    @property
    def common_power(self):
        return np.sum(np.abs(self.common) ** 2, axis=-1)

    @property
    def private_powers(self):
        return np.sum(np.abs(self.private) ** 2, axis=-2)

    @property
    def total_power(self):
        return self.common_power + self.private_powers.sum(axis=-1)

    def stacked(self):
        """Precoders as columns ``[common, p_1, ..., p_K]``."""
        return np.concatenate([self.common[..., None], self.private], axis=-1)


@dataclass(frozen=True)
class RateReport:
    """Achievable rates in bits/s/Hz.  Per-user arrays have ``K`` as last axis."""

    sinr_common: np.ndarray
    rate_common: np.ndarray
    sinr_private: np.ndarray
    rate_private: np.ndarray
    common_share: np.ndarray
    user_totals: np.ndarray
    sum_rate: np.ndarray
    min_user_rate: np.ndarray


def zf_directions(Hhat, cond_max=1e12):
    """Unit-norm zero-forcing directions, one column per user.

    The columns of the right pseudoinverse of ``Hhat`` are normalized, so
    ``Hhat @ V`` is diagonal.
    """
    Hhat = _as_matrix(Hhat)
    K, M = Hhat.shape[-2:]
    if K > M:
        raise InfeasibleZFError(f"zero-forcing {K} users needs at least {K} antennas, got {M}")
    gram = Hhat @ np.swapaxes(Hhat.conj(), -1, -2)
    if np.any(np.linalg.cond(gram) >= cond_max):
        raise ConditioningError("channel estimate is too ill-conditioned for zero-forcing")
    V = np.swapaxes(Hhat.conj(), -1, -2) @ np.linalg.inv(gram)
    return V / np.linalg.norm(V, axis=-2, keepdims=True)


def common_precoder(Hhat, strategy="dominant-svd", seed=None):
    """Unit-norm multicast direction for the common stream.

    ``dominant-svd`` maximizes ``sum_k |hhat_k^H q|**2``; ``matched-sum``
    normalizes the sum of the users' channel directions; ``uniform-random``
    draws an isotropic vector from ``seed``.
    """
    Hhat = _as_matrix(Hhat)
    if strategy == "dominant-svd":
        _, _, Vh = np.linalg.svd(Hhat)
        return Vh[..., 0, :].conj()
    if strategy == "matched-sum":
        dirs = Hhat.conj() / np.linalg.norm(Hhat, axis=-1, keepdims=True)
        q = dirs.sum(axis=-2)
        n = np.linalg.norm(q, axis=-1, keepdims=True)
        if np.any(n < 1e-12):
            raise DegenerateInputError("user directions cancel; matched-sum is undefined")
        return q / n
    if strategy == "uniform-random":
        rng = np.random.default_rng(seed)
        q = complex_normal(rng, Hhat.shape[:-2] + Hhat.shape[-1:])
        return q / np.linalg.norm(q, axis=-1, keepdims=True)
    raise DomainError(f"unknown common-precoder strategy {strategy!r}")


def assemble_rs(dirs, pc_dir, rho, P) -> PrecoderSet:
    """Scale unit directions into an RS precoder set with uniform private split."""
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [0, 1], got {rho}")
    if not P > 0:
        raise DomainError(f"power must be positive, got {P}")
    dirs = np.asarray(dirs, dtype=complex)
    K = dirs.shape[-1]
    private = np.sqrt(rho * P / K) * dirs
    common = np.sqrt((1.0 - rho) * P) * np.asarray(pc_dir, dtype=complex)
    return PrecoderSet(common, private, float(rho), float(P))


def rs_powers(rho, P, K):
    """Per-stream powers ``[common, private_1..K]`` for a uniform split."""
    rho = np.asarray(rho, dtype=float)
    pp = rho * P / K
    return np.concatenate([np.atleast_1d((1.0 - rho) * P)[..., None],
                           np.repeat(np.atleast_1d(pp)[..., None], K, axis=-1)], axis=-1)


def received_powers(H, columns):
    """``|h_k^H p_s|**2`` for every user ``k`` and precoder column ``s``."""
    return np.abs(_as_matrix(H) @ np.asarray(columns, dtype=complex)) ** 2


def rates_from_gains(G, shares=None) -> RateReport:
    """Rate chain from received powers ``G[..., k, s]`` with ``s = 0`` the
    common stream and ``s = 1..K`` the private streams; unit noise.

    The common stream is decoded first treating every private stream as
    noise, then removed (perfect SIC) before private decoding.
    """
    G = np.asarray(G, dtype=float)
    K = G.shape[-2]
    if G.shape[-1] != K + 1:
        raise DimensionError(f"expected {K + 1} streams for {K} users, got {G.shape[-1]}")
    priv = G[..., 1:]
    eye = np.eye(K, dtype=bool)
    own = np.where(eye, priv, 0.0).sum(axis=-1)
    leak = np.where(eye, 0.0, priv).sum(axis=-1)
    sinr_c = G[..., 0] / (own + leak + 1.0)
    sinr_p = own / (leak + 1.0)
    rate_c = np.log2(1.0 + sinr_c.min(axis=-1))
    rate_p = np.log2(1.0 + sinr_p)
    return _report(sinr_c, rate_c, sinr_p, rate_p, shares)


def _report(sinr_c, rate_c, sinr_p, rate_p, shares=None):
    K = rate_p.shape[-1]
    if shares is None:
        shares = np.repeat(rate_c[..., None] / K, K, axis=-1)
    else:
        shares = np.broadcast_to(np.asarray(shares, dtype=float), rate_p.shape)
        if np.any(shares < 0) or not np.allclose(shares.sum(axis=-1), rate_c, atol=1e-9, rtol=0):
            raise DomainError("common shares must be non-negative and sum to the common rate")
    totals = rate_p + shares
    # min-user rate apportions the whole common rate to the weakest private rate
    weakest = np.argmin(rate_p, axis=-1)
    boost = np.where(np.arange(K) == weakest[..., None], rate_c[..., None], 0.0)
    min_rate = (rate_p + boost).min(axis=-1)
    return RateReport(
        sinr_common=sinr_c,
        rate_common=rate_c,
        sinr_private=sinr_p,
        rate_private=rate_p,
        common_share=shares,
        user_totals=totals,
        sum_rate=rate_c + rate_p.sum(axis=-1),
        min_user_rate=min_rate,
    )


def evaluate_rates(H, precoders: PrecoderSet, shares=None) -> RateReport:
    """Evaluate an RS precoder set on the true channel (unit noise power)."""
    H = _as_matrix(H)
    cols = precoders.stacked()
    if cols.shape[-2] != H.shape[-1] or cols.shape[-1] != H.shape[-2] + 1:
        raise DimensionError(
            f"channel {H.shape} does not match precoders with {cols.shape[-1] - 1} users "
            f"and {cols.shape[-2]} antennas")
    return rates_from_gains(received_powers(H, cols), shares)


def maxmin_shares(rate_private, rate_common):
    """Apportion the common rate to maximize the minimum user total.

    Water-fills the common rate onto the smallest private rates.
    """
    r = np.asarray(rate_private, dtype=float)
    order = np.sort(r)
    K = r.size
    level = order[0] + rate_common
    for n in range(1, K + 1):
        level = (rate_common + order[:n].sum()) / n
        if n == K or level <= order[n]:
            break
    return np.maximum(level - r, 0.0)


def tdma_directions(Hhat):
    """Matched-filter direction ``hhat_k / ||hhat_k||`` per user (columns)."""
    Hhat = _as_matrix(Hhat)
    d = Hhat.conj() / np.linalg.norm(Hhat, axis=-1, keepdims=True)
    return np.swapaxes(d, -1, -2)


def baseline_rates(H, Hhat, P, scheme) -> RateReport:
    """Conventional private-only schemes.

    ``tdma`` serves the single user with the highest achieved rate at full
    power along its estimated direction; ``zfbf`` is RS with ``rho = 1``;
    ``sumu`` keeps whichever of the two gives the larger sum rate.
    """
    H = _as_matrix(H)
    Hhat = _as_matrix(Hhat)
    if H.shape != Hhat.shape:
        raise DimensionError(f"channel {H.shape} and estimate {Hhat.shape} disagree")
    if not P > 0:
        raise DomainError(f"power must be positive, got {P}")
    if scheme == "zfbf":
        V = zf_directions(Hhat)
        pre = PrecoderSet(np.zeros(V.shape[:-1], dtype=complex), np.sqrt(P / V.shape[-1]) * V, 1.0, P)
        return evaluate_rates(H, pre)
    if scheme == "tdma":
        return tdma_report(received_powers(H, tdma_directions(Hhat)), P)
    if scheme == "sumu":
        z = baseline_rates(H, Hhat, P, "zfbf")
        t = baseline_rates(H, Hhat, P, "tdma")
        return select_report(t.sum_rate > z.sum_rate, t, z)
    raise DomainError(f"unknown baseline scheme {scheme!r}")


def tdma_report(unit_gains, P) -> RateReport:
    """TDMA from ``unit_gains[..., k, j] = |h_k^H w_j|**2`` of matched directions."""
    own = np.diagonal(unit_gains, axis1=-2, axis2=-1)
    rates = np.log2(1.0 + P * own)
    best = np.argmax(rates, axis=-1)
    K = own.shape[-1]
    pick = np.arange(K) == best[..., None]
    sinr_p = np.where(pick, P * own, 0.0)
    rate_p = np.where(pick, rates, 0.0)
    zero = np.zeros(rate_p.shape[:-1])
    return _report(np.zeros_like(sinr_p), zero, sinr_p, rate_p)


def select_report(mask, a: RateReport, b: RateReport) -> RateReport:
    """Per-realization choice: ``a`` where ``mask`` holds, else ``b``."""
    mask = np.asarray(mask)
    out = {}
    for name in RateReport.__dataclass_fields__:
        va, vb = getattr(a, name), getattr(b, name)
        m = mask if np.ndim(va) == mask.ndim else mask[..., None]
        out[name] = np.where(m, va, vb)
    return RateReport(**out)
