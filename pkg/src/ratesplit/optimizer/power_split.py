"""Ergodic power-split search for RS with ZF private precoders."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import rng as rngs
from ..channel import CsitQuality, complex_normal, gaussian_csit, rvq_quantize
from ..errors import DomainError, PreconditionError
from ..transceiver import (
    common_precoder,
    rates_from_gains,
    rs_powers,
    tdma_directions,
    zf_directions,
)
from .search import golden_max


@dataclass(frozen=True)
class Scenario:
    """Single-cell MISO broadcast scenario evaluated by Monte Carlo."""

    M: int
    K: int
    P: float
    csit: CsitQuality
    common_strategy: str = "dominant-svd"

    def __post_init__(self):
        if self.K < 1 or self.M < 1:
            raise DomainError(f"need K, M >= 1, got K={self.K}, M={self.M}")
        if not self.P > 0:
            raise DomainError(f"power must be positive, got {self.P}")


@dataclass
class LinkGains:
    """Unit-power received gains per trial.

    ``rs[t, k, s]`` is ``|h_k^H d_s|**2`` for ``d_0`` the common direction and
    ``d_1..d_K`` the ZF directions computed from the estimate.  ``tdma`` holds
    matched-direction gains and ``perfect_zf`` ZF gains computed from the
    true channel (same layout as ``rs`` with an all-zero common column).
    """

    rs: np.ndarray
    tdma: np.ndarray
    perfect_zf: np.ndarray
    sin_sq: np.ndarray | None = field(default=None)


def draw_estimate(H, csit: CsitQuality, P, seed, trial):
    """CSIT estimate of ``H`` for one trial, using per-user codebook streams."""
    if csit.kind == "perfect":
        return H.copy(), None
    if csit.kind == "exponent":
        est = gaussian_csit(H, csit.alpha, P, rngs.trial_rng(seed, trial, rngs.ERROR))
        return est.Hhat, None
    rows, sins = [], []
    for k in range(H.shape[0]):
        w, s = rvq_quantize(H[k].conj(), csit.bits, rngs.trial_rng(seed, trial, rngs.CODEBOOK, k))
        rows.append(w.conj())
        sins.append(s)
    return np.array(rows), np.array(sins)


def trial_gains(scenario: Scenario, seed, trial):
    H = complex_normal(rngs.trial_rng(seed, trial, rngs.CHANNEL), (scenario.K, scenario.M))
    Hhat, sins = draw_estimate(H, scenario.csit, scenario.P, seed, trial)
    q = common_precoder(Hhat, scenario.common_strategy, rngs.trial_rng(seed, trial, rngs.COMMON))
    cols = np.concatenate([q[:, None], zf_directions(Hhat)], axis=1)
    rs = np.abs(H @ cols) ** 2
    tdma = np.abs(H @ tdma_directions(Hhat)) ** 2
    pz = np.abs(H @ zf_directions(H)) ** 2
    pz = np.concatenate([np.zeros((H.shape[0], 1)), pz], axis=1)
    return rs, tdma, pz, sins


def sample_link_gains(scenario: Scenario, trials, seed=0, start=0) -> LinkGains:
    """Gains for trials ``start .. start + trials - 1`` (common random numbers)."""
    out = [trial_gains(scenario, seed, t) for t in range(start, start + trials)]
    rs, tdma, pz, sins = zip(*out)
    sin_sq = None if sins[0] is None else np.array(sins)
    return LinkGains(np.array(rs), np.array(tdma), np.array(pz), sin_sq)


def rs_sum_rates(unit_gains, rho, P):
    """Per-trial RS sum rate for a uniform private split ``rho``."""
    K = unit_gains.shape[-2]
    G = unit_gains * rs_powers(rho, P, K)[..., None, :]
    return rates_from_gains(G).sum_rate


def ci95(values):
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(1.96 * v.std(ddof=1) / np.sqrt(v.size))


@dataclass(frozen=True)
class PowerSplitResult:
    rho: float
    sum_rate: float
    ci95: float
    evaluations: int


def best_rho(unit_gains, P, tol=1e-3, rule=None) -> PowerSplitResult:
    """Maximize the sample-mean RS sum rate over ``rho`` in ``[0, 1]``.

    ``rule`` may be a callable returning ``rho`` directly (e.g. a closed-form
    expression); the search is then skipped.
    """
    if rule is not None:
        rho = float(rule())
        rates = rs_sum_rates(unit_gains, rho, P)
        return PowerSplitResult(rho, float(rates.mean()), ci95(rates), 1)
    rho, val, n = golden_max(lambda r: float(rs_sum_rates(unit_gains, r, P).mean()), tol=tol)
    return PowerSplitResult(rho, val, ci95(rs_sum_rates(unit_gains, rho, P)), n)


def optimize_power_split(scenario: Scenario, trials=1000, tol=1e-3, seed=0, rule=None,
                         gains: LinkGains | None = None) -> PowerSplitResult:
    """Ergodic sum-rate maximizing private-power fraction ``rho``.

    Parameters
    ----------
    scenario : Scenario
        Antennas, users, SNR and CSIT model.
    trials : int
        Monte Carlo trials (at least 100).
    tol : float
        Width of the final golden-section bracket.
    seed : int
        Master seed; trial ``t`` draws from ``(seed, t)`` streams.
    rule : callable, optional
        Closed-form substitute for the search.
    gains : LinkGains, optional
        Pre-drawn gains to reuse instead of sampling.
    """
    if trials < 100:
        raise PreconditionError(f"need at least 100 trials, got {trials}")
    if not tol > 0:
        raise PreconditionError(f"tol must be positive, got {tol}")
    if gains is None:
        gains = sample_link_gains(scenario, trials, seed)
    return best_rho(gains.rs, scenario.P, tol, rule)
