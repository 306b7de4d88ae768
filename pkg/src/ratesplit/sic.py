"""Generic layered successive-interference-cancellation rate evaluation.

A plan lists the streams, who must decode each one, and the order in which
every user peels them off.  Rates follow from received powers alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError

KINDS = ("system-common", "group-common", "private")


@dataclass(frozen=True)
class Stream:
    name: str
    kind: str
    decoders: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown stream kind {self.kind!r}")
        if not self.decoders:
            raise DomainError(f"stream {self.name!r} has no decoders")
        if self.kind == "private" and len(self.decoders) != 1:
            raise DomainError(f"private stream {self.name!r} must have exactly one decoder")


@dataclass(frozen=True)
class LayeredPlan:
    """Streams plus per-user decode chains (stream indices in SIC order).

    ``powers`` optionally carries the power of every stream and ``carriers``
    the transmitter that emits it.
    """

    streams: tuple
    chains: tuple
    powers: tuple | None = None
    carriers: tuple | None = None

    @property
    def K(self) -> int:
        return len(self.chains)

    def validate(self):
        """Structural check; returns the list of problems (empty when valid)."""
        problems = []
        rank = {k: i for i, k in enumerate(KINDS)}
        S = len(self.streams)
        for k, chain in enumerate(self.chains):
            if not chain:
                problems.append(f"user {k} decodes nothing")
                continue
            if len(set(chain)) != len(chain):
                problems.append(f"user {k} decodes a stream twice")
            if any(not 0 <= s < S for s in chain):
                problems.append(f"user {k} references an unknown stream")
                continue
            last = self.streams[chain[-1]]
            if last.kind != "private" or last.decoders != (k,):
                problems.append(f"user {k}'s chain does not end in its own private stream")
            kinds = [rank[self.streams[s].kind] for s in chain]
            if kinds != sorted(kinds) or kinds.count(rank["private"]) != 1:
                problems.append(f"user {k}'s chain is not ordered common-to-private")
        for s, st in enumerate(self.streams):
            for k in st.decoders:
                if not 0 <= k < self.K or s not in self.chains[k]:
                    problems.append(f"decoder {k} of stream {st.name!r} does not decode it")
            for k, chain in enumerate(self.chains):
                if s in chain and k not in st.decoders:
                    problems.append(f"user {k} decodes {st.name!r} outside its decoder set")
        if self.powers is not None and len(self.powers) != S:
            problems.append("one power per stream is required")
        return problems


@dataclass(frozen=True)
class LayeredRates:
    """``sinr[..., k, s]`` is user ``k``'s SINR for stream ``s`` (NaN when
    ``k`` does not decode it); ``rates[..., s]`` the stream rates."""

    sinr: np.ndarray
    rates: np.ndarray
    sum_rate: np.ndarray

    def kind_total(self, plan: LayeredPlan, kind):
        idx = [s for s, st in enumerate(plan.streams) if st.kind == kind]
        return self.rates[..., idx].sum(axis=-1)


def layered_rates(G, plan: LayeredPlan) -> LayeredRates:
    """Rates from received powers ``G[..., k, s]`` under ``plan``; unit noise.

    At each step of a user's chain the streams not yet decoded (including
    every stream the user never decodes) act as noise.  A stream's rate is
    the minimum over its decoder set.
    """
    G = np.asarray(G, dtype=float)
    S = len(plan.streams)
    if G.shape[-2:] != (plan.K, S):
        raise DimensionError(f"gains {G.shape} do not match {plan.K} users and {S} streams")
    problems = plan.validate()
    if problems:
        raise DomainError("invalid plan: " + "; ".join(problems))
    sinr = np.full(G.shape, np.nan)
    for k, chain in enumerate(plan.chains):
        pending = np.ones(S, dtype=bool)
        for s in chain:
            pending[s] = False
            noise = np.where(pending, G[..., k, :], 0.0).sum(axis=-1) + 1.0
            sinr[..., k, s] = G[..., k, s] / noise
    rates = np.empty(G.shape[:-2] + (S,))
    for s, st in enumerate(plan.streams):
        worst = np.min(sinr[..., list(st.decoders), s], axis=-1)
        rates[..., s] = np.log2(1.0 + worst)
    return LayeredRates(sinr, rates, rates.sum(axis=-1))
