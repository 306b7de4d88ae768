import numpy as np
import pytest

from oracles import cn
from ratesplit.errors import DimensionError, DomainError, PreconditionError
from ratesplit.optimizer.wmmse import (
    SaaSample,
    average_rates,
    initial_precoders,
    mmse_filters,
    mse_with_filters,
    optimal_weights,
    saa_samples,
    wmmse_optimize,
)
from ratesplit.transceiver import assemble_rs, common_precoder, evaluate_rates, zf_directions


def zf_waterfill_rate(H, P):
    # [DERIVED] perfect-CSIT ZF with water-filled powers over unit ZF gains
    V = zf_directions(H)
    g = np.abs(np.diag(H @ V)) ** 2
    inv = np.sort(1.0 / g)
    for n in range(len(inv), 0, -1):
        level = (P + inv[:n].sum()) / n
        if level > inv[n - 1]:
            break
    p = np.maximum(level - 1.0 / g, 0.0)
    return float(np.sum(np.log2(1.0 + p * g)))


@pytest.mark.parametrize("seed", range(5))
def test_perfect_csit_beats_zf_waterfilling(seed):
    H = cn(np.random.default_rng(seed), (2, 4))
    st = wmmse_optimize(H, 0.0, 10.0, S=1, seed=seed, max_iter=500, epsilon=1e-9)
    rate = float(evaluate_rates(H, st.precoders).sum_rate)
    assert rate >= zf_waterfill_rate(H, 10.0) - 1e-3


@pytest.mark.parametrize("seed", range(3))
def test_perfect_csit_drops_common_stream(seed):
    H = cn(np.random.default_rng(10 + seed), (2, 4))
    st = wmmse_optimize(H, 0.0, 100.0, S=1, max_iter=1000, epsilon=1e-10,
                        init=initial_precoders(H, 100.0, rho=1.0))
    assert st.precoders.common_power < 0.01 * 100.0


@pytest.mark.parametrize("objective", ["sumrate", "maxmin"])
def test_trace_monotone_and_power_feasible(objective):
    rng = np.random.default_rng(21)
    for i in range(10):
        Hhat = cn(rng, (2, 4))
        st = wmmse_optimize(Hhat, 0.1, 100.0, S=10, objective=objective, max_iter=60, seed=i)
        assert np.all(np.diff(st.objective_trace) >= -1e-8)
        total = np.add(st.common_power_trace, st.private_power_trace)
        assert np.all(total <= 100.0 + 1e-9)
        assert st.precoders.total_power <= 100.0 + 1e-9


def test_maxmin_shares_sum_to_common():
    Hhat = cn(np.random.default_rng(2), (3, 4))
    st = wmmse_optimize(Hhat, 0.05, 30.0, S=8, objective="maxmin", max_iter=40, seed=0)
    c, p = average_rates(np.asarray(saa_samples(Hhat, 0.05, 8, np.random.default_rng(0)).H),
                         st.precoders.common, st.precoders.private)
    assert st.common_shares is not None and np.all(st.common_shares >= 0)
    assert st.common_shares.sum() == pytest.approx(np.min(c), rel=1e-9)


def test_mmse_filters_beat_perturbations(rng):
    Hs = cn(rng, (5, 2, 4))
    pc, Pp = initial_precoders(Hs[0], 10.0)
    f = mmse_filters(Hs, pc, Pp)
    mc, mp = mse_with_filters(Hs, pc, Pp, f.g_common, f.g_private)
    assert np.allclose(mc, f.mse_common) and np.allclose(mp, f.mse_private)
    for _ in range(50):
        dc = 0.1 * cn(rng, f.g_common.shape)
        dp = 0.1 * cn(rng, f.g_private.shape)
        mc2, mp2 = mse_with_filters(Hs, pc, Pp, f.g_common + dc, f.g_private + dp)
        assert np.all(mc <= mc2 + 1e-14) and np.all(mp <= mp2 + 1e-14)


def test_weights_minimize_weighted_mse():
    for mse in (0.01, 0.3, 0.99):
        u = optimal_weights(mse)
        obj = lambda w: w * mse - np.log(w)
        grid = u * np.linspace(0.5, 1.5, 101)
        assert obj(u) <= obj(grid).min() + 1e-15
        assert mse - 1.0 / u == pytest.approx(0.0, abs=1e-15)


def test_private_only_is_at_least_equal_power_zf():
    H = cn(np.random.default_rng(4), (2, 4))
    st = wmmse_optimize(H, 0.0, 100.0, S=1, use_common=False, max_iter=300, epsilon=1e-9)
    assert st.precoders.common_power == 0.0
    zf = assemble_rs(zf_directions(H), common_precoder(H), 1.0, 100.0)
    assert evaluate_rates(H, st.precoders).sum_rate >= evaluate_rates(H, zf).sum_rate - 1e-9


def test_posterior_samples_moments():
    Hhat = np.array([[1.0 + 1j, 0.5, 0.0, -1.0]])
    t = 0.2
    s = saa_samples(Hhat, t, 40000, seed=0).H
    assert np.allclose(s.mean(axis=0), np.sqrt(1 - t) * Hhat, atol=0.01)
    assert np.allclose(s.var(axis=0), t, rtol=0.03)


def test_errors_and_shapes():
    H = np.eye(2, 3)
    with pytest.raises(DomainError):
        wmmse_optimize(H, 0.0, 1.0, objective="fair")
    with pytest.raises(DomainError):
        wmmse_optimize(H, 0.0, 0.0)
    with pytest.raises(PreconditionError):
        saa_samples(H, 0.1, 0)
    with pytest.raises(DomainError):
        saa_samples(H, 1.5, 2)
    with pytest.raises(DimensionError):
        SaaSample(np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        wmmse_optimize(H, 0.0, 1.0, samples=SaaSample(np.zeros((1, 3, 3))))
    with pytest.raises(DomainError):
        initial_precoders(H, 1.0, kind="svd")


def test_trace_rows_and_multistart():
    H = cn(np.random.default_rng(7), (2, 3))
    one = wmmse_optimize(H, 0.1, 10.0, S=5, seed=1, max_iter=30)
    many = wmmse_optimize(H, 0.1, 10.0, S=5, seed=1, max_iter=30, starts=3)
    assert many.objective >= one.objective - 1e-12
    rows = one.trace_rows()
    assert rows[0][0] == 0 and len(rows) == len(one.objective_trace)
