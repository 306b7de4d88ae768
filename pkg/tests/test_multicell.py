import numpy as np
import pytest

from oracles import cn, rel_close, sic_oracle
from ratesplit.errors import DimensionError, DomainError, UnsupportedTopology
from ratesplit.hrs import Grouping, hrs_rates_from_gains
from ratesplit.channel import SpatialCovariance
from ratesplit.multicell import (
    CellTopology,
    best_two_cell_rho,
    cell_csit,
    check_per_tx_power,
    draw_cell_channels,
    per_tx_power,
    place,
    private_direction,
    stacked,
    trs_build_plan,
    trs_directions,
    trs_evaluate_rates,
    trs_precoders,
    trs_trial_gains,
    two_cell_directions,
    two_cell_powers,
    two_cell_rs_rates,
    two_cell_sum_rates,
    two_cell_trial_gains,
)


def test_topology_validation():
    with pytest.raises(DimensionError):
        CellTopology(2, 2, np.zeros((3, 3)))
    with pytest.raises(DomainError):
        CellTopology(2, 2, np.full((2, 2), 1.5))
    with pytest.raises(DomainError):
        CellTopology(3, 3, np.zeros((3, 3)), groups=((0, 1),))
    t = CellTopology.three_cell(0.3, 0.8)
    assert t.quality(1, 2) == 0.3 and t.quality(0, 2) == 0.8 and t.quality(1, 1) == np.inf


def test_two_cell_perfect_cross_csit_nulls_interference(rng):
    H = cn(rng, (2, 2, 2))
    P = 100.0
    rep = two_cell_rs_rates(H, H, P, 1.0)
    for k in range(2):
        v = private_direction(H, k)
        assert abs(H[1 - k, k] @ v) < 1e-12
        assert rep.rate_private[k] == pytest.approx(np.log2(1 + P * abs(H[k, k] @ v) ** 2), rel=1e-12)


def test_two_cell_rho_one_is_independent_zf(rng):
    # [TRIVIAL] per-TX oracle: TX k sends only its own private with power P
    P = 300.0
    for _ in range(20):
        H = cn(rng, (2, 2, 2))
        Hhat = H + 0.3 * cn(rng, H.shape)
        rep = two_cell_rs_rates(H, Hhat, P, 1.0)
        assert rep.rate_common == 0.0
        for k in range(2):
            # the cross row stores a conjugated vector: project off its conjugate
            u = Hhat[1 - k, k].conj()
            v = Hhat[k, k].conj() - (np.vdot(u, Hhat[k, k].conj()) / np.vdot(u, u)) * u
            v /= np.linalg.norm(v)
            j = 1 - k
            w = Hhat[j, j].conj() - (np.vdot(Hhat[k, j].conj(), Hhat[j, j].conj())
                                     / np.vdot(Hhat[k, j], Hhat[k, j])) * Hhat[k, j].conj()
            w /= np.linalg.norm(w)
            sig = P * abs(H[k, k] @ v) ** 2
            leak = P * abs(H[k, j] @ w) ** 2
            assert rel_close(float(rep.rate_private[k]), np.log2(1 + sig / (1 + leak)))


def test_two_cell_per_tx_power(rng):
    H = cn(rng, (2, 2, 2))
    for rho in (0.0, 0.3, 1.0):
        cols = two_cell_directions(H) * np.sqrt(two_cell_powers(rho, 10.0))
        assert np.all(per_tx_power(cols, 2) <= 10.0 + 1e-9)
    with pytest.raises(DomainError):
        check_per_tx_power(np.ones((4, 1)) * 3, 2, 10.0)
    with pytest.raises(DomainError):
        two_cell_powers(1.5, 1.0)
    with pytest.raises(DomainError):
        two_cell_directions(H, common_tx=2)
    with pytest.raises(DimensionError):
        two_cell_rs_rates(H, H[:, :, :1], 1.0, 1.0)


def test_common_tx_swap(rng):
    H = cn(rng, (2, 2, 2))
    cols = two_cell_directions(H, common_tx=1)
    assert np.allclose(cols[:2, 0], 0.0) and np.linalg.norm(cols[2:, 0]) == pytest.approx(1.0)


def test_place_and_stack():
    d = np.array([1.0, 2.0])
    assert np.array_equal(place(d, 1, 3), [0, 0, 1, 2, 0, 0])
    H = np.arange(8).reshape(2, 2, 2)
    assert np.array_equal(stacked(H)[1], [4, 5, 6, 7])


def test_cell_csit_error_levels():
    topo = CellTopology.two_cell(0.5)
    H = draw_cell_channels(topo, seed=0, size=20000)
    P = 100.0
    Hhat = cell_csit(H, topo, P, seed=1)
    err_cross = np.mean(np.abs(Hhat[:, 0, 1] - np.sqrt(1 - 0.1) * H[:, 0, 1]) ** 2)
    assert err_cross == pytest.approx(0.1, rel=0.03)
    assert np.array_equal(Hhat[:, 0, 0], H[:, 0, 0])


def _slope(seed, trials=1000):
    topo = CellTopology.two_cell(0.5)
    rates = {}
    for db in (30.0, 40.0):
        P = 10 ** (db / 10)
        g = np.array([two_cell_trial_gains(topo, P, seed, t) for t in range(trials)])
        rho, val = best_two_cell_rho(g, P)
        rates[db] = (val, float(two_cell_sum_rates(g, 1.0, P).mean()))
    r = np.log2(10.0)
    return (rates[40][0] - rates[30][0]) / r, (rates[40][1] - rates[30][1]) / r


def test_two_cell_slopes_are_seed_stable():
    slopes = np.array([_slope(s) for s in range(5)])
    assert np.ptp(slopes[:, 0]) < 0.1 and np.ptp(slopes[:, 1]) < 0.1
    assert np.all(slopes[:, 0] > slopes[:, 1])


def test_trs_plan_layers():
    trs = trs_build_plan(CellTopology.three_cell(0.3, 0.8), P=10.0, rho=0.6, rho_group=0.5)
    kinds = [s.kind for s in trs.streams]
    assert kinds.count("system-common") == 1
    assert kinds.count("group-common") == 1
    assert kinds.count("private") == 3
    assert trs.plan.chains == ((0, 2), (0, 1, 3), (0, 1, 4))
    assert trs.plan.validate() == []
    assert trs.streams[1].decoders == (1, 2)
    assert np.allclose(trs.plan.powers, [4.0, 3.0, 6.0, 3.0, 3.0])


def test_trs_degenerate_grouping_is_rs():
    topo = CellTopology(3, 3, np.full((3, 3), 0.5))
    trs = trs_build_plan(topo, P=10.0, rho=0.7)
    assert [s.kind for s in trs.streams] == ["system-common"] + ["private"] * 3
    assert trs.plan.chains == ((0, 1), (0, 2), (0, 3))


@pytest.mark.parametrize("topo", [
    CellTopology.two_cell(0.5),
    CellTopology.three_cell(0.9, 0.2),
    CellTopology.three_cell(0.3, 0.8, antennas=2),
    CellTopology(3, 3, np.full((3, 3), 0.5), groups=((0, 1, 2),)),
])
def test_unsupported_topologies(topo):
    with pytest.raises(UnsupportedTopology):
        trs_build_plan(topo)


def test_trs_split_validation():
    with pytest.raises(DomainError):
        trs_build_plan(CellTopology.three_cell(0.3, 0.8), rho=1.1)
    with pytest.raises(DomainError):
        trs_build_plan(CellTopology.three_cell(0.3, 0.8), system_tx=3)


def _instance(rng, topo, P):
    H = draw_cell_channels(topo, seed=int(rng.integers(2**32)))
    Hhat = cell_csit(H, topo, P, seed=int(rng.integers(2**32)))
    return H, Hhat


def test_trs_matches_oracle_and_power_caps(rng):
    topo = CellTopology.three_cell(0.3, 0.8)
    P = 1000.0
    for _ in range(30):
        trs = trs_build_plan(topo, P, rng.uniform(), rng.uniform())
        H, Hhat = _instance(rng, topo, P)
        pre = trs_precoders(Hhat, trs)
        assert np.all(per_tx_power(pre, 3) <= P + 1e-9)
        got = trs_evaluate_rates(H, trs, pre, P)
        want = sic_oracle(stacked(H), pre, [set(s.decoders) for s in trs.streams], trs.plan.chains)
        assert all(rel_close(a, b) for a, b in zip(got.rates, want))
        # system common rate is the weakest decoder's
        assert np.all(np.log2(1 + got.sinr[:, 0]) >= got.rates[0] - 1e-14)


def test_trs_without_commons_is_zf_with_residual(rng):
    topo = CellTopology.three_cell(0.3, 0.8)
    P = 100.0
    trs = trs_build_plan(topo, P, 1.0, 1.0)
    H, Hhat = _instance(rng, topo, P)
    pre = trs_precoders(Hhat, trs)
    got = trs_evaluate_rates(H, trs, pre, P)
    S = stacked(H)
    for k in range(3):
        gains = [abs(S[k] @ pre[:, 2 + j]) ** 2 for j in range(3)]
        sinr = gains[k] / (1 + sum(gains) - gains[k])
        assert rel_close(float(got.rates[2 + k]), np.log2(1 + sinr))
    assert got.rates[0] == 0.0 and got.rates[1] == 0.0


def test_trs_matches_hrs_evaluator(rng):
    # one singleton group plus one pair, laid out as an HRS grouping; the
    # singleton's unused group common is a zero column
    topo = CellTopology.three_cell(0.3, 0.8)
    P = 500.0
    eye = SpatialCovariance(np.eye(9, dtype=complex))
    grouping = Grouping(np.array([0, 1, 1]), 2, (eye, eye), (3, 3))
    for _ in range(30):
        trs = trs_build_plan(topo, P, rng.uniform(), rng.uniform())
        H, Hhat = _instance(rng, topo, P)
        G = np.abs(stacked(H) @ trs_precoders(Hhat, trs)) ** 2
        lr = trs_evaluate_rates(H, trs, trs_precoders(Hhat, trs), P)
        Gh = np.concatenate([G[:, :1], np.zeros((3, 1)), G[:, 1:]], axis=1)
        hr = hrs_rates_from_gains(Gh, grouping)
        assert hr.rate_group[0] == 0.0
        assert rel_close(float(hr.rate_outer), float(lr.rates[0]))
        assert rel_close(float(hr.rate_group[1]), float(lr.rates[1]))
        assert np.allclose(hr.rate_private, lr.rates[2:], rtol=1e-12, atol=0)


def test_trs_rejects_overspend_and_shape(rng):
    topo = CellTopology.three_cell(0.3, 0.8)
    trs = trs_build_plan(topo, 10.0, 0.5, 0.5)
    H, Hhat = _instance(rng, topo, 10.0)
    pre = trs_precoders(Hhat, trs)
    with pytest.raises(DomainError):
        trs_evaluate_rates(H, trs, 2 * pre, 10.0)
    with pytest.raises(DimensionError):
        trs_evaluate_rates(H, trs, pre[:, :4], 10.0)
    with pytest.raises(DimensionError):
        trs_directions(Hhat[:, :, :2], trs)


def test_group_common_avoids_outsider(rng):
    topo = CellTopology.three_cell(0.3, 0.8)
    trs = trs_build_plan(topo, 10.0, 0.5, 0.5)
    H = draw_cell_channels(topo, seed=3)
    cols = trs_directions(H, trs)
    # group common from TX 2 is orthogonal to TX 2's link to user 1
    assert abs(stacked(H)[0] @ cols[:, 1]) < 1e-12


def test_trial_gains_are_reproducible():
    trs = trs_build_plan(CellTopology.three_cell(0.3, 0.8), 100.0)
    a = trs_trial_gains(trs, 100.0, 7, 3)
    b = trs_trial_gains(trs, 100.0, 7, 3)
    assert np.array_equal(a, b) and a.shape == (3, 5)
