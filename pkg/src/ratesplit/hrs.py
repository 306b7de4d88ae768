"""Hierarchical rate splitting for spatially correlated (massive) MIMO.

Users are grouped by the similarity of their transmit covariances.  An outer
precoder built from long-term statistics separates the groups, and inside
each group an RS layer (group common plus zero-forced privates) runs on the
effective channel.  An outer common stream on top is decoded by everyone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngs
from .channel import SpatialCovariance, complex_normal, gaussian_csit, one_ring_covariance
from .errors import DimensionError, DomainError, InfeasibleOuterError, PreconditionError
from .optimizer.search import golden_max
from .sic import LayeredPlan, Stream
from .transceiver import POWER_SLACK, common_precoder, zf_directions

RANK_ENERGY = 0.95


@dataclass(frozen=True)
class Grouping:
    """User-to-group map with per-group covariance and eigenspace rank."""

    assignments: np.ndarray
    G: int
    covariances: tuple
    ranks: tuple

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=int)
        object.__setattr__(self, "assignments", a)
        if a.ndim != 1 or np.any(a < 0) or np.any(a >= self.G):
            raise DomainError("every user must be assigned to exactly one group in [0, G)")
        if len(self.covariances) != self.G or len(self.ranks) != self.G:
            raise DimensionError("need one covariance and one rank per group")
        for g in range(self.G):
            if self.ranks[g] < self.size(g):
                raise DomainError(f"group {g} rank {self.ranks[g]} is below its size {self.size(g)}")

    @property
    def K(self) -> int:
        return self.assignments.size

    def members(self, g):
        return np.flatnonzero(self.assignments == g)

    def size(self, g):
        return int(np.sum(self.assignments == g))

    @property
    def sizes(self):
        return np.bincount(self.assignments, minlength=self.G)


def chordal_distances(covariances, r):
    """Pairwise chordal distance between dominant ``r``-dimensional eigenspaces."""
    U = np.stack([c.dominant_eigvecs(r) for c in covariances])
    overlap = np.abs(np.einsum("imr,jms->ijrs", U.conj(), U)) ** 2
    return np.sqrt(np.clip(r - overlap.sum(axis=(-1, -2)), 0.0, None))


def _assign(D, medoids):
    """Nearest-medoid labels; ties go to the group with fewer members."""
    K, G = D.shape[0], len(medoids)
    labels = np.full(K, -1)
    counts = np.zeros(G, dtype=int)
    for g, m in enumerate(medoids):
        labels[m] = g
        counts[g] += 1
    for k in range(K):
        if labels[k] >= 0:
            continue
        d = D[k, medoids]
        near = np.flatnonzero(d <= d.min() + 1e-12)
        g = near[np.argmin(counts[near])]
        labels[k] = g
        counts[g] += 1
    return labels


def _kmedoids(D, G, rng, max_iter=100):
    K = D.shape[0]
    medoids = [int(rng.integers(K))]
    while len(medoids) < G:
        w = np.min(D[:, medoids], axis=1) ** 2
        w[medoids] = 0.0
        if w.sum() > 0:
            medoids.append(int(rng.choice(K, p=w / w.sum())))
        else:
            medoids.append(int(np.setdiff1d(np.arange(K), medoids)[0]))
    for _ in range(max_iter):
        labels = _assign(D, medoids)
        new = []
        for g in range(G):
            idx = np.flatnonzero(labels == g)
            new.append(int(idx[np.argmin(D[np.ix_(idx, idx)].sum(axis=1))]))
        if new == medoids:
            break
        medoids = new
    labels = _assign(D, medoids)
    cost = sum(D[k, medoids[labels[k]]] for k in range(K))
    return labels, cost


def group_users(covariances, G, seed=0, n_init=4, energy=RANK_ENERGY) -> Grouping:
    """Cluster users by the chordal distance of their dominant eigenspaces.

    Parameters
    ----------
    covariances : sequence of SpatialCovariance
        One transmit covariance per user.
    G : int
        Number of groups.
    seed : int
        Seeds the k-medoids initializations; the best of ``n_init`` is kept.
    energy : float
        Trace fraction defining the effective rank.

    Returns
    -------
    Grouping
        Groups are relabelled in order of their smallest member.
    """
    covariances = list(covariances)
    K = len(covariances)
    if int(G) != G or G < 1:
        raise DomainError(f"group count must be a positive integer, got {G}")
    if G > K:
        raise DomainError(f"cannot form {G} groups from {K} users")
    M = covariances[0].M
    r = min(M, max(c.effective_rank(energy) for c in covariances))
    D = chordal_distances(covariances, r)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        labels, cost = _kmedoids(D, int(G), rng)
        if best is None or cost < best[1] - 1e-12:
            best = (labels, cost)
    labels = best[0]
    _, first = np.unique(labels, return_index=True)
    relabel = {old: new for new, old in enumerate(labels[np.sort(first)])}
    labels = np.array([relabel[x] for x in labels])
    covs, ranks = [], []
    for g in range(int(G)):
        idx = np.flatnonzero(labels == g)
        R = np.mean([covariances[k].R for k in idx], axis=0)
        R = R * M / np.trace(R).real
        cov = SpatialCovariance(R)
        covs.append(cov)
        ranks.append(max(cov.effective_rank(energy), idx.size))
    return Grouping(labels, int(G), tuple(covs), tuple(ranks))


def outer_precoder(grouping: Grouping, g):
    """Orthonormal ``M x r_g`` outer precoder of group ``g``.

    Group ``g``'s covariance is projected onto the null space of every other
    group's dominant eigenvectors and its leading ``r_g`` eigenvectors there
    are kept (block diagonalization on long-term statistics).
    """
    cov = grouping.covariances[g]
    M, r = cov.M, grouping.ranks[g]
    others = [grouping.covariances[j].dominant_eigvecs(grouping.ranks[j])
              for j in range(grouping.G) if j != g]
    if others:
        E = np.concatenate(others, axis=1)
        if E.shape[1] >= M:
            raise InfeasibleOuterError(
                f"other groups occupy {E.shape[1]} of {M} dimensions; no null space is left")
        _, s, Vh = np.linalg.svd(E.conj().T)
        tol = max(E.shape) * np.finfo(float).eps * s[0]
        N = Vh[int(np.sum(s > tol)):].conj().T
    else:
        N = np.eye(M, dtype=complex)
    if N.shape[1] < r:
        raise InfeasibleOuterError(
            f"group {g} needs {r} dimensions but only {N.shape[1]} remain after projection")
    w, U = np.linalg.eigh(N.conj().T @ cov.R @ N)
    B = N @ U[:, ::-1][:, :r]
    q, _ = np.linalg.qr(B)
    return q


def outer_precoders(grouping: Grouping):
    return tuple(outer_precoder(grouping, g) for g in range(grouping.G))


def split_inner(grouping: Grouping, rho_inner):
    rho_inner = np.broadcast_to(np.asarray(rho_inner, dtype=float), (grouping.G,))
    if np.any(rho_inner < 0) or np.any(rho_inner > 1):
        raise DomainError("inner splits must lie in [0, 1]")
    return rho_inner


def hrs_powers(grouping: Grouping, rho_outer, rho_inner, P):
    """Stream powers ``[outer common, group commons, privates by user]``.

    The outer common gets ``(1 - rho_outer) P``; each group gets an equal
    share of the rest, split ``1 - rho_inner : rho_inner`` between its common
    and its (equal) privates.
    """
    if not 0.0 <= rho_outer <= 1.0:
        raise DomainError(f"rho_outer must lie in [0, 1], got {rho_outer}")
    rho_inner = split_inner(grouping, rho_inner)
    per_group = rho_outer * P / grouping.G
    sizes = grouping.sizes
    priv = rho_inner[grouping.assignments] * per_group / sizes[grouping.assignments]
    return np.concatenate([[(1.0 - rho_outer) * P], (1.0 - rho_inner) * per_group, priv])


def hrs_directions(grouping: Grouping, Hhat, outer):
    """Unit-norm columns ``[outer common, group commons, privates]``.

    Privates are zero-forced and group commons dominant-svd on the effective
    channels ``Hhat_g B_g``; the outer common is dominant-svd on the full
    estimate.
    """
    Hhat = np.asarray(Hhat, dtype=complex)
    K, M = Hhat.shape[-2:]
    if K != grouping.K:
        raise DimensionError(f"estimate has {K} users, grouping has {grouping.K}")
    cols = np.zeros(Hhat.shape[:-2] + (M, 1 + grouping.G + K), dtype=complex)
    cols[..., 0] = common_precoder(Hhat, "dominant-svd")
    for g in range(grouping.G):
        idx = grouping.members(g)
        B = outer[g]
        eff = Hhat[..., idx, :] @ B
        cols[..., 1 + g] = common_precoder(eff, "dominant-svd") @ B.T
        cols[..., 1 + grouping.G + idx] = B @ zf_directions(eff)
    return cols


@dataclass(frozen=True)
class HrsPrecoderSet:
    """Scaled HRS precoders in antenna space.

    ``outer_common`` is ``(..., M)``, ``group_common`` ``(..., M, G)`` and
    ``private`` ``(..., M, K)``; ``outer`` holds the ``B_g`` used to build them.
    """

    outer_common: np.ndarray
    group_common: np.ndarray
    private: np.ndarray
    outer: tuple
    rho_outer: float
    rho_inner: np.ndarray
    P: float

    def __post_init__(self):
        for B in self.outer:
            if not np.allclose(B.conj().T @ B, np.eye(B.shape[1]), atol=1e-12, rtol=0):
                raise DomainError("outer precoder columns are not orthonormal")
        if np.any(self.total_power > self.P + POWER_SLACK):
            raise DomainError(f"precoders exceed the power budget {self.P}")

    def stacked(self):
        return np.concatenate([self.outer_common[..., None], self.group_common, self.private], axis=-1)

    @property
    def total_power(self):
        return np.sum(np.abs(self.stacked()) ** 2, axis=(-1, -2))


def hrs_assemble(grouping: Grouping, Hhat, outer, rho_outer, rho_inner, P) -> HrsPrecoderSet:
    """Build the HRS precoder set from the estimate and the power splits."""
    if not P > 0:
        raise DomainError(f"power must be positive, got {P}")
    cols = hrs_directions(grouping, Hhat, outer) * np.sqrt(hrs_powers(grouping, rho_outer, rho_inner, P))
    G = grouping.G
    return HrsPrecoderSet(cols[..., 0], cols[..., 1:1 + G], cols[..., 1 + G:], tuple(outer),
                          float(rho_outer), split_inner(grouping, rho_inner).copy(), float(P))


@dataclass(frozen=True)
class HrsRateReport:
    """Per-layer HRS rates (bits/s/Hz).  ``sinr_group[..., k]`` is user
    ``k``'s SINR for its own group's common stream."""

    sinr_outer: np.ndarray
    rate_outer: np.ndarray
    sinr_group: np.ndarray
    rate_group: np.ndarray
    sinr_private: np.ndarray
    rate_private: np.ndarray
    sum_rate: np.ndarray


def _masks(assignments, G):
    K = assignments.size
    S = 1 + G + K
    users = np.arange(K)
    outer = np.ones((K, S), dtype=bool)
    outer[:, 0] = False
    group = outer.copy()
    group[users, 1 + assignments] = False
    private = group.copy()
    private[users, 1 + G + users] = False
    return outer, group, private


def hrs_rates_from_gains(G, grouping: Grouping) -> HrsRateReport:
    """Three-stage SIC chain from received powers ``G[..., k, s]``.

    Stream order is ``[outer common, group commons 1..G, privates 1..K]``.
    Each user decodes the outer common, then its group common, then its
    private stream, treating everything not yet removed as noise.
    """
    G = np.asarray(G, dtype=float)
    n, K = grouping.G, grouping.K
    if G.shape[-2:] != (K, 1 + n + K):
        raise DimensionError(f"gains {G.shape} do not match {K} users in {n} groups")
    users = np.arange(K)
    a = grouping.assignments
    m_outer, m_group, m_priv = _masks(a, n)
    sinr_o = G[..., 0] / (np.where(m_outer, G, 0.0).sum(axis=-1) + 1.0)
    sinr_g = G[..., users, 1 + a] / (np.where(m_group, G, 0.0).sum(axis=-1) + 1.0)
    sinr_p = G[..., users, 1 + n + users] / (np.where(m_priv, G, 0.0).sum(axis=-1) + 1.0)
    rate_o = np.log2(1.0 + sinr_o.min(axis=-1))
    rate_g = np.zeros(G.shape[:-2] + (n,))
    for g in range(n):
        idx = grouping.members(g)
        if idx.size:
            rate_g[..., g] = np.log2(1.0 + sinr_g[..., idx].min(axis=-1))
    rate_p = np.log2(1.0 + sinr_p)
    total = rate_o + rate_g.sum(axis=-1) + rate_p.sum(axis=-1)
    return HrsRateReport(sinr_o, rate_o, sinr_g, rate_g, sinr_p, rate_p, total)


def hrs_evaluate_rates(H, pset: HrsPrecoderSet, grouping: Grouping) -> HrsRateReport:
    H = np.asarray(H, dtype=complex)
    cols = pset.stacked()
    if H.shape[-1] != cols.shape[-2] or H.shape[-2] != grouping.K:
        raise DimensionError(f"channel {H.shape} does not match precoders {cols.shape}")
    return hrs_rates_from_gains(np.abs(H @ cols) ** 2, grouping)


def hrs_plan(grouping: Grouping) -> LayeredPlan:
    """The HRS decode order as a generic layered plan (same stream order)."""
    K, n = grouping.K, grouping.G
    streams = [Stream("outer-common", "system-common", tuple(range(K)))]
    streams += [Stream(f"group-common-{g}", "group-common", tuple(int(k) for k in grouping.members(g)))
                for g in range(n)]
    streams += [Stream(f"private-{k}", "private", (k,)) for k in range(K)]
    chains = tuple((0, 1 + int(grouping.assignments[k]), 1 + n + k) for k in range(K))
    return LayeredPlan(tuple(streams), chains)


@dataclass(frozen=True)
class HrsScenario:
    """Users in angular clusters under the one-ring model.

    User ``k`` sits in cluster ``k * len(azimuths) // K``; angles in degrees.
    CSIT is the exponent model with errors shaped like the channel.
    """

    M: int
    K: int
    G: int
    azimuths: tuple
    spread: float
    alpha: float
    P: float
    spacing: float = 0.5
    covariances: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.G > self.K:
            raise DomainError(f"cannot form {self.G} groups from {self.K} users")
        if not self.azimuths:
            raise DomainError("need at least one cluster azimuth")
        if not self.covariances:
            per = [one_ring_covariance(np.deg2rad(az), np.deg2rad(self.spread), self.M, self.spacing)
                   for az in self.azimuths]
            n = len(self.azimuths)
            object.__setattr__(self, "covariances",
                               tuple(per[k * n // self.K] for k in range(self.K)))

    def cluster_labels(self):
        n = len(self.azimuths)
        return np.array([k * n // self.K for k in range(self.K)])


def hrs_trial_gains(scenario: HrsScenario, grouping: Grouping, outer, seed, trial):
    """Unit-power gains ``|h_k^H d_s|**2`` for one trial, columns as in
    :func:`hrs_directions`."""
    rng = rngs.trial_rng(seed, trial, rngs.CHANNEL)
    g = complex_normal(rng, (scenario.K, scenario.M))
    H = np.stack([g[k] @ c.sqrtm() for k, c in enumerate(scenario.covariances)])
    est = gaussian_csit(H, scenario.alpha, scenario.P, rngs.trial_rng(seed, trial, rngs.ERROR),
                        covariances=scenario.covariances)
    return np.abs(H @ hrs_directions(grouping, est.Hhat, outer)) ** 2


def hrs_sum_rates(unit_gains, grouping, rho_outer, rho_inner, P):
    pw = hrs_powers(grouping, rho_outer, rho_inner, P)
    return hrs_rates_from_gains(unit_gains * pw, grouping).sum_rate


@dataclass(frozen=True)
class HrsSplit:
    rho_outer: float
    rho_inner: float
    sum_rate: float


def optimize_hrs_split(unit_gains, grouping, P, inner=True, rounds=4, tol=1e-3) -> HrsSplit:
    """Coordinate golden-section search over ``(rho_outer, rho_inner)``.

    The search starts from the best ``rho_outer`` with no group commons
    (``rho_inner = 1``), so the result never falls below that RS point.  With
    ``inner=False`` only that first step is taken.  One ``rho_inner`` is
    shared by all groups.
    """
    if rounds < 1:
        raise PreconditionError("need at least one round")

    def mean(ro, ri):
        return float(hrs_sum_rates(unit_gains, grouping, ro, ri, P).mean())

    ro, val, _ = golden_max(lambda x: mean(x, 1.0), tol=tol)
    best = HrsSplit(ro, 1.0, val)
    if not inner:
        return best
    for _ in range(rounds):
        start = best.sum_rate
        ri, v, _ = golden_max(lambda x: mean(best.rho_outer, x), tol=tol)
        if v > best.sum_rate:
            best = HrsSplit(best.rho_outer, ri, v)
        ro, v, _ = golden_max(lambda x: mean(x, best.rho_inner), tol=tol)
        if v > best.sum_rate:
            best = HrsSplit(ro, best.rho_inner, v)
        if best.sum_rate <= start + 1e-12:
            break
    return best
