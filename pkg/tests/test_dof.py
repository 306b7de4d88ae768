import csv
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ratesplit.dof import (
    STRATEGIES,
    convex_hull,
    dof_region_two_user,
    rs_sum_dof,
    two_cell_dof,
    write_regions_csv,
    zf_sum_dof,
)
from ratesplit.errors import DomainError


def test_rs_sum_dof_values():
    assert rs_sum_dof(2, 0.6) == 1.6
    assert rs_sum_dof(3, 1.0) == 3.0
    assert rs_sum_dof(5, 0.0) == 1.0


def test_zf_sum_dof_values():
    assert zf_sum_dof(2, 0.6) == 1.2
    assert zf_sum_dof(7, 0.0) == 0.0
    assert zf_sum_dof(4, 0.5) == 2.0


def test_two_cell_dof_values():
    assert two_cell_dof(0.5) == {"zf": 1.0, "rs": 1.5}
    assert two_cell_dof(1.0) == {"zf": 2.0, "rs": 2.0}
    assert two_cell_dof(0.0) == {"zf": 0.0, "rs": 1.0}


def test_alpha_is_clamped_with_warning():
    with pytest.warns(UserWarning):
        assert rs_sum_dof(2, 1.7) == 2.0
    with pytest.warns(UserWarning):
        assert zf_sum_dof(2, -0.5) == 0.0
    with pytest.raises(DomainError):
        rs_sum_dof(0, 0.5)


@given(st.integers(1, 64), st.floats(0, 1))
def test_rs_dominates_zf(K, a):
    rs, zf = rs_sum_dof(K, a), zf_sum_dof(K, a)
    assert rs >= zf - 1e-12 and rs >= 1.0 - 1e-12
    if a == 1.0:
        assert rs == zf


def test_rs_region_max_sum():
    assert dof_region_two_user("rs", 0.6).max_sum() == pytest.approx(1.6)


def test_rs_region_at_perfect_csit_is_square():
    assert sorted(dof_region_two_user("rs", 1.0).vertices) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_unknown_strategy():
    with pytest.raises(DomainError):
        dof_region_two_user("noma", 0.5)


def _grid():
    x = np.linspace(0, 1, 100)
    return np.meshgrid(x, x)


def _containment_oracle(vertices, d1, d2):
    # [DERIVED] independent half-plane test on a ccw polygon
    inside = np.ones(d1.shape, dtype=bool)
    n = len(vertices)
    for i in range(n):
        (x0, y0), (x1, y1) = vertices[i], vertices[(i + 1) % n]
        inside &= (x1 - x0) * (d2 - y0) - (y1 - y0) * (d1 - x0) >= -1e-12
    return inside


@pytest.mark.parametrize("alpha", np.round(np.arange(0.05, 1.0001, 0.05), 2))
def test_region_nesting(alpha):
    d1, d2 = _grid()
    regions = {s: dof_region_two_user(s, alpha) for s in STRATEGIES}
    inside = {s: _containment_oracle(r.vertices, d1, d2) for s, r in regions.items()}
    assert np.all(inside["rs"] >= inside["sumu"])
    assert np.all(inside["sumu"] >= inside["tdma"])
    assert np.all(inside["sumu"] >= inside["zfbf"])
    for s, r in regions.items():
        assert np.array_equal(r.contains(d1, d2), inside[s])


@pytest.mark.parametrize("strategy", STRATEGIES)
@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.6, 1.0])
def test_region_invariants(strategy, alpha):
    reg = dof_region_two_user(strategy, alpha)
    V = np.array(reg.vertices)
    assert np.all((V >= 0) & (V <= 1))
    assert reg.contains(0.0, 0.0)
    if len(V) >= 3:
        # convex and counter-clockwise: every turn is a left turn
        for i in range(len(V)):
            a, b, c = V[i], V[(i + 1) % len(V)], V[(i + 2) % len(V)]
            assert (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) > 0


@given(st.floats(0, 1))
def test_rs_region_agrees_with_sum_dof(a):
    assert dof_region_two_user("rs", a).max_sum() == pytest.approx(rs_sum_dof(2, a), abs=1e-12)


def test_hull_degenerate_inputs():
    assert convex_hull([(0, 0), (0, 0)]) == [(0.0, 0.0)]
    assert convex_hull([(0, 0), (1, 0), (0.5, 0)]) == [(0.0, 0.0), (1.0, 0.0)]
    zf = dof_region_two_user("zfbf", 0.0)
    assert zf.contains(0.0, 0.0) and not zf.contains(0.1, 0.0)


def test_region_csv_export(tmp_path):
    path = tmp_path / "regions.csv"
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        regions = [dof_region_two_user(s, 0.6) for s in STRATEGIES]
    write_regions_csv(regions, path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["strategy", "alpha", "vertex_index", "d1", "d2"]
    assert len(rows) == sum(len(r.vertices) for r in regions)
    rs = [(float(r["d1"]), float(r["d2"])) for r in rows if r["strategy"] == "rs"]
    assert rs == regions[0].vertices
