"""Coordinated multi-cell RS: the two-cell scheme and three-cell topological RS.

Transmitters share CSI but not data, so every stream is emitted by exactly
one transmitter.  Channels are stored as ``H[..., k, i, :]``, the row user
``k`` sees from transmitter ``i``.  Stacking the transmitters gives a
single-cell view with block-sparse precoders, evaluated like any other
superposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngs
from .channel import complex_normal
from .errors import DimensionError, DomainError, UnsupportedTopology
from .optimizer.search import golden_max
from .sic import LayeredPlan, LayeredRates, Stream, layered_rates
from .transceiver import POWER_SLACK, RateReport, common_precoder, rates_from_gains


@dataclass(frozen=True)
class CellTopology:
    """CSIT-quality layout of a cluster of single-user cells.

    ``cross[i, k]`` is the exponent of TX ``i``'s estimate of its link to
    user ``k`` (``k != i``); ``direct[i]`` that of its own user's link.  An
    exponent of ``inf`` means perfect knowledge.  ``groups`` partitions the
    users for topological RS.
    """

    num_cells: int
    antennas_per_tx: int
    cross: np.ndarray
    direct: np.ndarray = None
    groups: tuple = ()

    def __post_init__(self):
        n = self.num_cells
        cross = np.asarray(self.cross, dtype=float)
        if cross.shape != (n, n):
            raise DimensionError(f"cross qualities must be {n}x{n}, got {cross.shape}")
        direct = np.full(n, np.inf) if self.direct is None else np.asarray(self.direct, dtype=float)
        if direct.shape != (n,):
            raise DimensionError(f"need {n} direct qualities, got {direct.shape}")
        off = cross[~np.eye(n, dtype=bool)]
        if np.any(off < 0) or np.any(direct < 0):
            raise DomainError("CSIT exponents must be non-negative")
        if np.any(off[np.isfinite(off)] > 1):
            raise DomainError("finite cross exponents must lie in [0, 1]")
        groups = self.groups or tuple((k,) for k in range(n))
        flat = sorted(k for grp in groups for k in grp)
        if flat != list(range(n)):
            raise DomainError(f"groups {groups} do not partition {n} users")
        object.__setattr__(self, "cross", cross)
        object.__setattr__(self, "direct", direct)
        object.__setattr__(self, "groups", tuple(tuple(int(k) for k in grp) for grp in groups))

    @classmethod
    def two_cell(cls, alpha, antennas=2):
        return cls(2, antennas, np.full((2, 2), float(alpha)))

    @classmethod
    def three_cell(cls, alpha, beta, antennas=3):
        """User 1 alone, users 2 and 3 grouped: intra-group links at ``alpha``,
        inter-group links at ``beta``."""
        cross = np.full((3, 3), float(beta))
        cross[1, 2] = cross[2, 1] = float(alpha)
        return cls(3, antennas, cross, groups=((0,), (1, 2)))

    def quality(self, tx, user):
        return self.direct[tx] if tx == user else self.cross[tx, user]


def draw_cell_channels(topology: CellTopology, seed=None, size=None):
    """I.i.d. Rayleigh links ``(..., users, transmitters, antennas)``."""
    n, N = topology.num_cells, topology.antennas_per_tx
    shape = (n, n, N) if size is None else (int(size), n, n, N)
    return complex_normal(np.random.default_rng(seed), shape)


def cell_csit(H, topology: CellTopology, P, seed=None):
    """Shared CSIT estimate: every link gets the exponent-model error of its
    quality (error variance ``min(1, P**-q)``)."""
    H = np.asarray(H, dtype=complex)
    n = topology.num_cells
    tau2 = np.empty((n, n))
    for i in range(n):
        for k in range(n):
            tau2[k, i] = min(1.0, float(P) ** -topology.quality(i, k))
    tau2 = tau2[..., None]
    E = complex_normal(np.random.default_rng(seed), H.shape)
    return np.sqrt(1.0 - tau2) * H + np.sqrt(tau2) * E


def stacked(H):
    """Single-cell view ``(..., users, transmitters * antennas)``."""
    H = np.asarray(H)
    return H.reshape(H.shape[:-2] + (H.shape[-2] * H.shape[-1],))


def private_direction(Hhat, k):
    """Unit direction of TX ``k`` for its user: the own-link channel
    projected onto the null space of the estimated cross links."""
    Hhat = np.asarray(Hhat, dtype=complex)
    n, N = Hhat.shape[-3], Hhat.shape[-1]
    if N < n:
        raise DomainError(f"nulling {n - 1} cross links needs at least {n} antennas, got {N}")
    others = [j for j in range(n) if j != k]
    A = Hhat[..., others, k, :]
    # projector onto the null space of the rows of A
    Q, _ = np.linalg.qr(np.swapaxes(A.conj(), -1, -2))
    own = Hhat[..., k, k, :].conj()
    v = own - (Q @ (np.swapaxes(Q.conj(), -1, -2) @ own[..., None]))[..., 0]
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def place(direction, tx, n):
    """Embed a per-TX vector into the stacked antenna space."""
    direction = np.asarray(direction, dtype=complex)
    N = direction.shape[-1]
    out = np.zeros(direction.shape[:-1] + (n * N,), dtype=complex)
    out[..., tx * N:(tx + 1) * N] = direction
    return out


def per_tx_power(columns, n):
    """Power each transmitter emits for stacked ``columns (..., n*N, S)``."""
    c = np.asarray(columns)
    blocks = c.reshape(c.shape[:-2] + (n, c.shape[-2] // n, c.shape[-1]))
    return np.sum(np.abs(blocks) ** 2, axis=(-1, -2))


def check_per_tx_power(columns, n, P):
    if np.any(per_tx_power(columns, n) > P + POWER_SLACK):
        raise DomainError(f"a transmitter exceeds its power budget {P}")


def two_cell_directions(Hhat, common_tx=0):
    """Unit columns ``[common, private 1, private 2]`` in stacked space."""
    Hhat = np.asarray(Hhat, dtype=complex)
    if Hhat.shape[-3:-1] != (2, 2):
        raise DimensionError(f"two-cell channels must be (..., 2, 2, N), got {Hhat.shape}")
    if common_tx not in (0, 1):
        raise DomainError(f"common transmitter must be 0 or 1, got {common_tx}")
    pc = place(common_precoder(Hhat[..., :, common_tx, :], "dominant-svd"), common_tx, 2)
    cols = [pc] + [place(private_direction(Hhat, k), k, 2) for k in range(2)]
    return np.stack(cols, axis=-1)


def two_cell_powers(rho, P):
    """``[common, private 1, private 2]``: the common gets ``(1 - rho) P`` at
    its transmitter, each private ``rho P`` at its own."""
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [0, 1], got {rho}")
    return np.array([(1.0 - rho) * P, rho * P, rho * P])


def two_cell_rs_rates(H, Hhat, P, rho, common_tx=0) -> RateReport:
    """Two-cell RS rates on the true channels.

    Each TX zero-forces its private stream against the estimated cross link;
    ``common_tx`` also sends the common stream.  Decoding is the usual
    common-then-private SIC chain.
    """
    H = np.asarray(H, dtype=complex)
    Hhat = np.asarray(Hhat, dtype=complex)
    if H.shape != Hhat.shape:
        raise DimensionError(f"channel {H.shape} and estimate {Hhat.shape} disagree")
    cols = two_cell_directions(Hhat, common_tx) * np.sqrt(two_cell_powers(rho, P))
    check_per_tx_power(cols, 2, P)
    return rates_from_gains(np.abs(stacked(H) @ cols) ** 2)


def two_cell_trial_gains(topology: CellTopology, P, seed, trial, common_tx=0):
    H = draw_cell_channels(topology, rngs.trial_rng(seed, trial, rngs.CHANNEL))
    Hhat = cell_csit(H, topology, P, rngs.trial_rng(seed, trial, rngs.ERROR))
    return np.abs(stacked(H) @ two_cell_directions(Hhat, common_tx)) ** 2


def two_cell_sum_rates(unit_gains, rho, P):
    return rates_from_gains(unit_gains * two_cell_powers(rho, P)).sum_rate


def best_two_cell_rho(unit_gains, P, tol=1e-3):
    """Sample-mean optimal global ``rho``; returns ``(rho, mean sum rate)``."""
    rho, val, _ = golden_max(lambda r: float(two_cell_sum_rates(unit_gains, r, P).mean()), tol=tol)
    return rho, val


# ---------------------------------------------------------------- three cells

@dataclass(frozen=True)
class TrsPlan:
    """A layered plan plus the transmitter carrying each stream."""

    plan: LayeredPlan
    carriers: tuple
    topology: CellTopology = field(repr=False)

    @property
    def streams(self):
        return self.plan.streams


def _check_trs(topology: CellTopology):
    reasons = []
    if topology.num_cells != 3:
        reasons.append(f"topological RS is built for three cells, got {topology.num_cells}")
        raise UnsupportedTopology(reasons)
    sizes = sorted(len(g) for g in topology.groups)
    if sizes not in ([1, 2], [1, 1, 1]):
        reasons.append(f"grouping {topology.groups} is neither singleton+pair nor all singletons")
    if sizes == [1, 2]:
        pair = next(g for g in topology.groups if len(g) == 2)
        single = next(g for g in topology.groups if len(g) == 1)[0]
        a, b = pair
        intra = max(topology.cross[a, b], topology.cross[b, a])
        inter = min(topology.cross[single, a], topology.cross[a, single],
                    topology.cross[single, b], topology.cross[b, single])
        if intra > inter:
            reasons.append(f"intra-group quality {intra} exceeds inter-group quality {inter}")
    if topology.antennas_per_tx < 3:
        reasons.append(f"each TX needs 3 antennas to null two cross links, got {topology.antennas_per_tx}")
    if reasons:
        raise UnsupportedTopology(reasons)


def trs_build_plan(topology: CellTopology, P=1.0, rho=1.0, rho_group=1.0, system_tx=0) -> TrsPlan:
    """Layered plan of topological RS.

    Streams are ``[system common, group commons..., privates by user]``.
    Powers nest like hierarchical RS: the system common gets ``(1 - rho) P``
    at ``system_tx``; a singleton's private gets ``rho P``; within a group
    the common gets ``(1 - rho_group) rho P`` at the first member's
    transmitter and each private ``rho_group rho P``.  No transmitter then
    exceeds ``P``.
    """
    _check_trs(topology)
    for name, r in (("rho", rho), ("rho_group", rho_group)):
        if not 0.0 <= r <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {r}")
    n = topology.num_cells
    if not 0 <= system_tx < n:
        raise DomainError(f"system_tx must lie in [0, {n - 1}], got {system_tx}")
    streams = [Stream("system-common", "system-common", tuple(range(n)))]
    carriers = [system_tx]
    powers = [(1.0 - rho) * P]
    pairs = [g for g in topology.groups if len(g) > 1]
    for g in pairs:
        streams.append(Stream("group-common-" + "-".join(str(k) for k in g), "group-common", g))
        carriers.append(g[0])
        powers.append((1.0 - rho_group) * rho * P)
    first_private = len(streams)
    grouped = {k for g in pairs for k in g}
    for k in range(n):
        streams.append(Stream(f"private-{k}", "private", (k,)))
        carriers.append(k)
        powers.append(rho_group * rho * P if k in grouped else rho * P)
    chains = []
    for k in range(n):
        chain = [0] + [1 + i for i, g in enumerate(pairs) if k in g] + [first_private + k]
        chains.append(tuple(chain))
    plan = LayeredPlan(tuple(streams), tuple(chains), tuple(powers), tuple(carriers))
    problems = plan.validate()
    if problems:
        raise UnsupportedTopology(problems)
    return TrsPlan(plan, tuple(carriers), topology)


def group_common_direction(Hhat, members, tx):
    """Dominant-svd direction over the members' estimated links from ``tx``,
    restricted to the null space of its estimated links to everyone else,
    who treat this stream as noise."""
    Hhat = np.asarray(Hhat, dtype=complex)
    n = Hhat.shape[-3]
    others = [k for k in range(n) if k not in members]
    eff = Hhat[..., list(members), tx, :]
    if not others:
        return common_precoder(eff, "dominant-svd")
    Q, _ = np.linalg.qr(np.swapaxes(Hhat[..., others, tx, :].conj(), -1, -2))
    N = Hhat.shape[-1]
    proj = np.eye(N) - Q @ np.swapaxes(Q.conj(), -1, -2)
    # project the members' channels, then take the dominant right singular vector
    q = common_precoder(eff @ proj, "dominant-svd")
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def trs_directions(Hhat, trs: TrsPlan):
    """Unit stacked-space columns, one per stream of the plan."""
    Hhat = np.asarray(Hhat, dtype=complex)
    n = trs.topology.num_cells
    if Hhat.shape[-3:-1] != (n, n) or Hhat.shape[-1] != trs.topology.antennas_per_tx:
        raise DimensionError(f"channels {Hhat.shape} do not match the topology")
    cols = []
    for st, tx in zip(trs.streams, trs.carriers):
        if st.kind == "private":
            d = private_direction(Hhat, st.decoders[0])
        elif st.kind == "group-common":
            d = group_common_direction(Hhat, st.decoders, tx)
        else:
            d = common_precoder(Hhat[..., list(st.decoders), tx, :], "dominant-svd")
        cols.append(place(d, tx, n))
    return np.stack(cols, axis=-1)


def trs_precoders(Hhat, trs: TrsPlan):
    """Scaled precoders: unit directions times the plan's stream powers."""
    return trs_directions(Hhat, trs) * np.sqrt(np.asarray(trs.plan.powers))


def trs_evaluate_rates(H, trs: TrsPlan, precoders, P) -> LayeredRates:
    """Layered-SIC rates of the plan on true channels ``H``."""
    H = np.asarray(H, dtype=complex)
    precoders = np.asarray(precoders, dtype=complex)
    n = trs.topology.num_cells
    if precoders.shape[-1] != len(trs.streams):
        raise DimensionError(f"{precoders.shape[-1]} precoders for {len(trs.streams)} streams")
    if stacked(H).shape[-1] != precoders.shape[-2]:
        raise DimensionError(f"channels {H.shape} do not match precoders {precoders.shape}")
    check_per_tx_power(precoders, n, P)
    return layered_rates(np.abs(stacked(H) @ precoders) ** 2, trs.plan)


def trs_trial_gains(trs: TrsPlan, P, seed, trial):
    H = draw_cell_channels(trs.topology, rngs.trial_rng(seed, trial, rngs.CHANNEL))
    Hhat = cell_csit(H, trs.topology, P, rngs.trial_rng(seed, trial, rngs.ERROR))
    return np.abs(stacked(H) @ trs_directions(Hhat, trs)) ** 2
