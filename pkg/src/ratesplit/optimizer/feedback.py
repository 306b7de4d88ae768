"""Feedback-bit requirement search for a target sum-rate gap."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..channel import MAX_RVQ_BITS, CsitQuality
from ..errors import DomainError, PreconditionError
from .power_split import Scenario, best_rho, rs_sum_rates, sample_link_gains


@dataclass
class FeedbackBitsResult:
    """Outcome of the search.  ``bits`` is ``None`` when no ``B <= max_bits``
    met the target; ``attained`` reports that without raising."""

    scheme: str
    target_gap: float
    bits: int | None
    attained: bool
    gaps: dict = field(default_factory=dict)
    reference_rate: float = float("nan")


def required_feedback_bits(target_gap, P, M, scheme, trials=500, K=2, seed=0,
                           max_bits=MAX_RVQ_BITS, tol=1e-3, sampler=None) -> FeedbackBitsResult:
    """Smallest RVQ bit count keeping ``scheme`` within ``target_gap`` of
    perfect-CSIT ZFBF.

    Bits are searched upward from one.  Every ``B`` reuses the same channels
    and codebook seeds (nested codebooks), so the comparison across ``B`` is
    paired.  For ``scheme="rs"`` the power split is re-optimized at every
    ``B``.  ``sampler(scenario, trials, seed)`` may replace the serial
    gain sampler (e.g. with a parallel one drawing the same trials).
    """
    if not target_gap > 0:
        raise PreconditionError(f"target gap must be positive, got {target_gap}")
    if scheme not in ("rs", "zfbf"):
        raise DomainError(f"unknown scheme {scheme!r}")
    if not 1 <= max_bits <= MAX_RVQ_BITS:
        raise PreconditionError(f"max_bits must lie in [1, {MAX_RVQ_BITS}]")
    sampler = sampler or sample_link_gains
    result = FeedbackBitsResult(scheme, float(target_gap), None, False)
    for B in range(1, max_bits + 1):
        gains = sampler(Scenario(M, K, P, CsitQuality.rvq(B)), trials, seed)
        ref = float(rs_sum_rates(gains.perfect_zf, 1.0, P).mean())
        if scheme == "zfbf":
            rate = float(rs_sum_rates(gains.rs, 1.0, P).mean())
        else:
            rate = best_rho(gains.rs, P, tol).sum_rate
        result.reference_rate = ref
        result.gaps[B] = ref - rate
        if ref - rate <= target_gap:
            result.bits, result.attained = B, True
            break
    return result
