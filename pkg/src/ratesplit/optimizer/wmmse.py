"""Sample-average rate-WMMSE optimization of RS precoders.

The average rates over ``S`` conditional channel samples are rewritten as
weighted MSE problems.  Three blocks alternate:

1. MMSE receive filters for the common and private streams of every sample;
2. MSE weights ``u = 1 / MSE``;
3. precoders, which for fixed filters and weights maximize a concave
   quadratic under the total power constraint.

The common rate is the minimum over users, so block 3 is solved through its
Lagrange dual: multipliers on the per-user rate terms are optimized on a
simplex and, for given multipliers, the precoders follow in closed form with
a single power multiplier found by a bracketed root search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..channel import complex_normal
from ..errors import DimensionError, DomainError, DualSearchError, NumericalFailure, PreconditionError
from ..transceiver import PrecoderSet, common_precoder, maxmin_shares, zf_directions

LN2 = np.log(2.0)
MU_BRACKET = (1e-12, 1e6)
MU_TOL = 1e-10
MONOTONE_SLACK = 1e-8


@dataclass(frozen=True)
class SaaSample:
    """Conditional channel samples ``H[s]`` of shape ``(S, K, M)``."""

    H: np.ndarray

    def __post_init__(self):
        if self.H.ndim != 3 or self.H.shape[0] < 1:
            raise DimensionError(f"samples must have shape (S, K, M) with S >= 1, got {self.H.shape}")

    @property
    def S(self):
        return self.H.shape[0]


def saa_samples(Hhat, error_var, S, seed=None) -> SaaSample:
    """Draw ``S`` channels from the posterior of ``H`` given ``Hhat``.

    Under the estimate model ``hhat = sqrt(1 - t) h + sqrt(t) e`` the
    posterior is ``h ~ CN(sqrt(1 - t) hhat, t I)`` per user.
    """
    Hhat = np.asarray(Hhat, dtype=complex)
    if int(S) != S or S < 1:
        raise PreconditionError(f"need S >= 1 samples, got {S}")
    t = np.broadcast_to(np.asarray(error_var, dtype=float), Hhat.shape[:1])[:, None]
    if np.any(t < 0) or np.any(t > 1):
        raise DomainError("error variances must lie in [0, 1]")
    E = complex_normal(np.random.default_rng(seed), (int(S),) + Hhat.shape)
    return SaaSample(np.sqrt(1.0 - t) * Hhat + np.sqrt(t) * E)


@dataclass
class Filters:
    g_common: np.ndarray   # (S, K)
    g_private: np.ndarray  # (S, K)
    mse_common: np.ndarray
    mse_private: np.ndarray


def _split(pc, Pp):
    return np.asarray(pc, dtype=complex), np.asarray(Pp, dtype=complex)


def mse_with_filters(Hs, pc, Pp, g_c, g_p):
    """Per-sample MSEs of the common and private streams for given filters."""
    pc, Pp = _split(pc, Pp)
    f_c = Hs @ pc
    F = Hs @ Pp
    own = np.diagonal(F, axis1=-2, axis2=-1)
    t_priv = np.sum(np.abs(F) ** 2, axis=-1) + 1.0
    t_com = t_priv + np.abs(f_c) ** 2
    mse_c = np.abs(g_c) ** 2 * t_com - 2.0 * np.real(g_c * f_c) + 1.0
    mse_p = np.abs(g_p) ** 2 * t_priv - 2.0 * np.real(g_p * own) + 1.0
    return mse_c, mse_p


def mmse_filters(Hs, pc, Pp) -> Filters:
    """MMSE equalizers; the private stream is equalized after common SIC."""
    pc, Pp = _split(pc, Pp)
    f_c = Hs @ pc
    F = Hs @ Pp
    own = np.diagonal(F, axis1=-2, axis2=-1)
    t_priv = np.sum(np.abs(F) ** 2, axis=-1) + 1.0
    t_com = t_priv + np.abs(f_c) ** 2
    g_c = f_c.conj() / t_com
    g_p = own.conj() / t_priv
    return Filters(g_c, g_p, 1.0 - np.abs(f_c) ** 2 / t_com, 1.0 - np.abs(own) ** 2 / t_priv)


def optimal_weights(mse):
    """Minimizer of ``u * mse - log(u)`` over ``u > 0``."""
    return 1.0 / np.asarray(mse)


def average_rates(Hs, pc, Pp):
    """Sample-average common rates (per decoding user) and private rates, in bits."""
    f = mmse_filters(Hs, pc, Pp)
    return (-np.log2(f.mse_common).mean(axis=0), -np.log2(f.mse_private).mean(axis=0))


def objective_value(common_rates, private_rates, objective, use_common=True):
    """Sum rate or max-min user rate from per-user average rates."""
    c = float(np.min(common_rates)) if use_common else 0.0
    if objective == "sumrate":
        return c + float(np.sum(private_rates))
    shares = maxmin_shares(private_rates, c)
    return float(np.min(private_rates + shares))


class _Quadratic:
    """Precoder-block quadratic for fixed filters and weights.

    Per user ``k`` the augmented common and private terms (nats) are
    ``C_k = cc_k - sum_i p_i^H Ac_k p_i + 2 Re(tc_k^H p_c)`` (sum over all
    streams) and ``R_k = cp_k - sum_j p_j^H Ap_k p_j + 2 Re(tp_k^H p_k)``
    (sum over private streams).
    """

    def __init__(self, Hs, flt: Filters, P):
        S = Hs.shape[0]
        u_c = optimal_weights(flt.mse_common)
        u_p = optimal_weights(flt.mse_private)
        wc = u_c * np.abs(flt.g_common) ** 2 / S
        wp = u_p * np.abs(flt.g_private) ** 2 / S
        self.Ac = np.einsum("sk,ski,skj->kij", wc, Hs.conj(), Hs)
        self.Ap = np.einsum("sk,ski,skj->kij", wp, Hs.conj(), Hs)
        self.tc = np.einsum("sk,ski->ki", u_c * flt.g_common.conj(), Hs.conj()) / S
        self.tp = np.einsum("sk,ski->ki", u_p * flt.g_private.conj(), Hs.conj()) / S
        self.cc = np.mean(1.0 - u_c * (np.abs(flt.g_common) ** 2 + 1.0) + np.log(u_c), axis=0)
        self.cp = np.mean(1.0 - u_p * (np.abs(flt.g_private) ** 2 + 1.0) + np.log(u_p), axis=0)
        self.P = P
        self.K, self.M = Hs.shape[1:]

    def terms(self, pc, Pp):
        """Augmented per-user (common, private) terms in nats."""
        q_c = np.einsum("i,kij,j->k", pc.conj(), self.Ac, pc).real
        q_cp = np.einsum("ij,kil,lj->k", Pp.conj(), self.Ac, Pp).real
        q_pp = np.einsum("ij,kil,lj->k", Pp.conj(), self.Ap, Pp).real
        C = self.cc - q_c - q_cp + 2.0 * np.real(self.tc.conj() @ pc)
        R = self.cp - q_pp + 2.0 * np.real(np.einsum("ki,ik->k", self.tp.conj(), Pp))
        return C, R

    def solve(self, a, b):
        """Maximize ``sum a_k R_k + sum b_k C_k`` under ``sum ||p||^2 <= P``."""
        Phi_c = np.tensordot(b, self.Ac, axes=1)
        Phi_p = Phi_c + np.tensordot(a, self.Ap, axes=1)
        t_c = b @ self.tc
        T_p = (a[:, None] * self.tp).T
        lc, Uc = np.linalg.eigh(Phi_c)
        lp, Up = np.linalg.eigh(Phi_p)
        zc = np.abs(Uc.conj().T @ t_c) ** 2
        zp = np.sum(np.abs(Up.conj().T @ T_p) ** 2, axis=1)
        lam = np.concatenate([lc, lp])
        z = np.concatenate([zc, zp])

        def power(mu):
            return float(np.sum(z / (lam + mu) ** 2))

        scale = max(np.max(np.abs(lam)), 1e-300)
        if lam.min() > 1e-12 * scale and power(0.0) <= self.P:
            mu = 0.0
        else:
            lo, hi = MU_BRACKET
            if power(lo) <= self.P:
                mu = lo
            elif power(hi) > self.P:
                raise DualSearchError("power multiplier bracket does not contain the root")
            else:
                mu = self._secular_root(lam, z, lo, hi)
        pc = Uc @ ((Uc.conj().T @ t_c) / (lc + mu))
        Pp = Up @ ((Up.conj().T @ T_p) / (lp + mu)[:, None])
        used = np.vdot(pc, pc).real + np.vdot(Pp, Pp).real
        if used > self.P:
            # the root is approached from below; trim the last ulps of excess
            pc, Pp = pc * np.sqrt(self.P / used), Pp * np.sqrt(self.P / used)
        return pc, Pp

    def _secular_root(self, lam, z, lo, hi):
        """Root of ``sum z / (lam + mu)**2 = P`` in ``(lo, hi)``.

        Newton on ``power**-0.5``, which is concave and increasing in ``mu``,
        so iterates started at ``lo`` rise monotonically to the root.
        Bisection takes over if a step leaves the bracket.
        """
        target = self.P ** -0.5
        mu = lo
        for _ in range(200):
            w = z / (lam + mu) ** 2
            p = w.sum()
            if p > self.P:
                lo = mu
            else:
                hi = mu
            dp = -2.0 * np.sum(w / (lam + mu))
            g = p ** -0.5 - target
            step = mu - g / (-0.5 * p ** -1.5 * dp)
            if not lo <= step <= hi:
                step = np.sqrt(lo * hi)
            if abs(step - mu) <= MU_TOL * max(mu, MU_BRACKET[0]) or hi - lo <= MU_TOL * hi:
                return step
            mu = step
        raise DualSearchError("power multiplier search did not converge")


def _augmented_objective(quad, pc, Pp, objective, use_common):
    C, R = quad.terms(pc, Pp)
    return objective_value(C / LN2, R / LN2, objective, use_common)


def _precoder_step(quad: _Quadratic, objective, use_common, warm):
    """Block 3: dual over per-user multipliers, closed-form precoders inside."""
    K = quad.K
    zero = np.zeros(K)
    if not use_common:
        if objective == "sumrate":
            return quad.solve(np.ones(K), zero), warm

        def dual(x):
            pc, Pp = quad.solve(x, zero)
            C, R = quad.terms(pc, Pp)
            return float(x @ R), R

        cons = [{"type": "eq", "fun": lambda x: np.sum(x) - 1.0, "jac": lambda x: np.ones(K)}]
        x0 = warm if warm is not None and warm.size == K else np.full(K, 1.0 / K)
        bounds = [(0.0, 1.0)] * K
    elif objective == "sumrate":
        if K == 1:
            return quad.solve(np.ones(1), np.ones(1)), warm

        def dual(x):
            pc, Pp = quad.solve(np.ones(K), x)
            C, R = quad.terms(pc, Pp)
            return float(np.sum(R) + x @ C), C

        cons = [{"type": "eq", "fun": lambda x: np.sum(x) - 1.0, "jac": lambda x: np.ones(K)}]
        x0 = warm if warm is not None and warm.size == K else np.full(K, 1.0 / K)
        bounds = [(0.0, 1.0)] * K
    else:
        # variables (a, b): a on private terms (simplex), b on common terms,
        # with a_k <= sum(b) from the non-negative common shares
        def dual(x):
            a, b = x[:K], x[K:]
            pc, Pp = quad.solve(a, b)
            C, R = quad.terms(pc, Pp)
            return float(a @ R + b @ C), np.concatenate([R, C])

        jac_a = np.concatenate([np.ones(K), np.zeros(K)])
        cons = [{"type": "eq", "fun": lambda x: np.sum(x[:K]) - 1.0, "jac": lambda x: jac_a}]
        for k in range(K):
            row = np.concatenate([-np.eye(K)[k], np.ones(K)])
            cons.append({"type": "ineq", "fun": lambda x, r=row: r @ x, "jac": lambda x, r=row: r})
        x0 = warm if warm is not None and warm.size == 2 * K else np.concatenate(
            [np.full(K, 1.0 / K), np.full(K, 1.0 / K)])
        bounds = [(0.0, 1.0)] * K + [(0.0, float(K))] * K

    memo = {}

    def cached(x):
        key = x.tobytes()
        if key not in memo:
            memo.clear()
            memo[key] = dual(x)
        return memo[key]

    res = optimize.minimize(lambda x: cached(x)[0], x0, jac=lambda x: cached(x)[1], method="SLSQP",
                            bounds=bounds, constraints=cons,
                            options={"ftol": 1e-13, "maxiter": 200})
    x = np.clip(res.x, 0.0, None)
    if objective == "sumrate":
        a, b = (x, zero) if not use_common else (np.ones(K), x)
    elif not use_common:
        a, b = x, zero
    else:
        a, b = x[:K], x[K:]
    return quad.solve(a, b), x


@dataclass
class WmmseState:
    precoders: PrecoderSet
    filters: Filters
    weights_common: np.ndarray
    weights_private: np.ndarray
    objective_trace: list
    common_power_trace: list = field(default_factory=list)
    private_power_trace: list = field(default_factory=list)
    common_shares: np.ndarray | None = None
    converged: bool = False

    @property
    def objective(self):
        return self.objective_trace[-1]

    def trace_rows(self):
        """Rows ``(iteration, objective, commonPower, privatePower)``."""
        return list(zip(range(len(self.objective_trace)), self.objective_trace,
                        self.common_power_trace, self.private_power_trace))


def initial_precoders(Hhat, P, kind="zf", rho=0.5, seed=None):
    """Starting point: ZF (or matched) private directions, dominant-svd common."""
    Hhat = np.asarray(Hhat, dtype=complex)
    K, M = Hhat.shape
    if kind == "zf":
        V = zf_directions(Hhat)
        q = common_precoder(Hhat, "dominant-svd")
    elif kind == "mrt":
        V = (Hhat.conj() / np.linalg.norm(Hhat, axis=1, keepdims=True)).T
        q = common_precoder(Hhat, "dominant-svd")
    elif kind == "random":
        rng = np.random.default_rng(seed)
        V = complex_normal(rng, (M, K))
        V /= np.linalg.norm(V, axis=0)
        q = complex_normal(rng, M)
        q /= np.linalg.norm(q)
    else:
        raise DomainError(f"unknown initialization {kind!r}")
    return np.sqrt((1.0 - rho) * P) * q, np.sqrt(rho * P / K) * V


def wmmse_optimize(Hhat, error_var, P, S=50, objective="sumrate", max_iter=200, epsilon=1e-6,
                   seed=None, samples: SaaSample | None = None, starts=1, use_common=True,
                   init=None) -> WmmseState:
    """Optimize RS precoders for the sample-average sum rate or max-min rate.

    Parameters
    ----------
    Hhat : (K, M) array
        Channel estimate.
    error_var : float or (K,) array
        CSIT error variance per user (0 for perfect CSIT).
    P : float
        Total transmit power (noise power is one).
    S : int
        Number of conditional samples for the sample average.
    objective : {"sumrate", "maxmin"}
    max_iter, epsilon : stop after ``max_iter`` iterations or once the
        objective improves by less than ``epsilon`` bits/s/Hz.
    seed : seed for the samples and random restarts.
    samples : SaaSample, optional
        Pre-drawn samples (overrides ``S`` and ``seed`` for sampling).
    starts : int
        Number of initializations (ZF, matched, then random); best is kept.
    use_common : bool
        ``False`` pins the common stream to zero power.
    init : (pc, Pp) tuple, optional
        Explicit single starting point.
    """
    if objective not in ("sumrate", "maxmin"):
        raise DomainError(f"unknown objective {objective!r}")
    if not P > 0:
        raise DomainError(f"power must be positive, got {P}")
    Hhat = np.asarray(Hhat, dtype=complex)
    rng = np.random.default_rng(seed)
    if samples is None:
        samples = saa_samples(Hhat, error_var, S, rng)
    if samples.H.shape[1:] != Hhat.shape:
        raise DimensionError("samples and estimate disagree in shape")
    if init is not None:
        inits = [init]
    else:
        kinds = ["zf", "mrt"] + ["random"] * max(0, starts - 2)
        inits = [initial_precoders(Hhat, P, kind, seed=rng) for kind in kinds[:max(1, starts)]]
    best = None
    for pc, Pp in inits:
        state = _run(samples.H, pc, Pp, P, objective, max_iter, epsilon, use_common)
        if best is None or state.objective > best.objective:
            best = state
    return best


def _run(Hs, pc, Pp, P, objective, max_iter, epsilon, use_common):
    pc = np.asarray(pc, dtype=complex)
    Pp = np.asarray(Pp, dtype=complex)
    if not use_common:
        pc = np.zeros_like(pc)

    def record(state_lists, pc, Pp):
        c_rates, p_rates = average_rates(Hs, pc, Pp)
        state_lists[0].append(objective_value(c_rates, p_rates, objective, use_common))
        state_lists[1].append(float(np.vdot(pc, pc).real))
        state_lists[2].append(float(np.sum(np.abs(Pp) ** 2)))

    lists = ([], [], [])
    record(lists, pc, Pp)
    warm = None
    converged = False
    for _ in range(max_iter):
        flt = mmse_filters(Hs, pc, Pp)
        quad = _Quadratic(Hs, flt, P)
        (pc_new, Pp_new), warm = _precoder_step(quad, objective, use_common, warm)
        if not use_common:
            pc_new = np.zeros_like(pc_new)
        # keep the previous point if the inexact dual step did not improve
        # the block objective; the filters/weights are then a fixed point
        if (_augmented_objective(quad, pc_new, Pp_new, objective, use_common)
                < _augmented_objective(quad, pc, Pp, objective, use_common)):
            pc_new, Pp_new = pc, Pp
        pc, Pp = pc_new, Pp_new
        record(lists, pc, Pp)
        trace = lists[0]
        if trace[-1] < trace[-2] - MONOTONE_SLACK:
            raise NumericalFailure(
                f"objective decreased from {trace[-2]:.12g} to {trace[-1]:.12g}")
        if abs(trace[-1] - trace[-2]) < epsilon:
            converged = True
            break
    flt = mmse_filters(Hs, pc, Pp)
    c_rates, p_rates = average_rates(Hs, pc, Pp)
    shares = None
    if objective == "maxmin":
        shares = maxmin_shares(p_rates, float(np.min(c_rates)) if use_common else 0.0)
    total = float(np.vdot(pc, pc).real + np.sum(np.abs(Pp) ** 2))
    rho = float(np.sum(np.abs(Pp) ** 2) / total) if total > 0 else 1.0
    pre = PrecoderSet(pc, Pp, rho, P)
    return WmmseState(pre, flt, optimal_weights(flt.mse_common), optimal_weights(flt.mse_private),
                      lists[0], lists[1], lists[2], shares, converged)
