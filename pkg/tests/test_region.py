import math

import numpy as np
import pytest
from scipy.optimize import linprog

from ccregion.bounds import k_split, NoiseAssumption
from ccregion.conformal import PredictionInterval, UnlabelledDataset, intervals_for, split_calibrate
from ccregion.exceptions import AuditError, DimensionError, DomainError
from ccregion.region import (
    RegionSpec,
    build_region,
    coordinate_intervals,
    is_empty,
    max_votes,
    membership,
    optimize,
    region_from_bands,
    to_lp_text,
)
from ccregion.milp import from_lp_text
from ccregion.synthetic import ScenarioConfig, sample_scenario

from oracles import random_region, subset_oracle


def one_d(bounds, k, box=10.0):
    lo = [b[0] for b in bounds]
    hi = [b[1] for b in bounds]
    return region_from_bands(np.ones((len(bounds), 1)), lo, hi, k, box)


def test_big_m_formula():
    spec = build_region([PredictionInterval(2.0, 4.0)], np.array([[1.0]]), 1, 10.0)
    assert spec.big_m >= (10 + 4) * 1.1 - 1e-12


def test_build_errors():
    with pytest.raises(DomainError):
        build_region([], np.zeros((0, 1)), 0)
    with pytest.raises(DomainError):
        build_region([PredictionInterval(0, 1)], np.array([[1.0]]), 2)
    with pytest.raises(DimensionError):
        build_region([PredictionInterval(0, 1)], np.ones((2, 1)), 1)


def test_k_zero_is_whole_box():
    spec = one_d([(2.0, 4.0)], 0)
    res = is_empty(spec)
    assert res.empty is False
    assert membership(spec, res.witness)[0]
    opt = optimize(spec, [1.0], "max")
    assert opt.value == pytest.approx(10.0) and opt.status == "box_clamped"


def test_serialisation_round_trip(tmp_path):
    sc = sample_scenario(ScenarioConfig(d=3, n_obs=100, n=30))
    cal = split_calibrate(sc.labelled, 0.1, seed=0)
    sel = k_split(30, cal.n_cal, 0.1, 0.1, NoiseAssumption(0.5, True))
    spec = build_region(intervals_for(cal, sc.unlabelled), sc.unlabelled, sel)
    spec.save(tmp_path / "r.json")
    back = RegionSpec.load(tmp_path / "r.json")
    for name in ("inputs", "lower", "upper", "box_lower", "box_upper"):
        assert np.array_equal(getattr(back, name), getattr(spec, name))
    assert (back.k, back.big_m) == (spec.k, spec.big_m)
    prob = from_lp_text(to_lp_text(spec, [1.0, 2.0, 3.0]))
    assert prob.n_binary == 30 and prob.A.shape == (61, 33)


def test_membership_closed_and_exact():
    spec = one_d([(2.0, 4.0), (3.0, 5.0)], 2)
    assert membership(spec, [4.0]) == (True, 2)
    assert membership(spec, [3.0]) == (True, 2)
    assert membership(spec, [np.nextafter(4.0, 5.0)]) == (False, 1)
    with pytest.raises(DimensionError):
        membership(spec, [1.0, 2.0])


def test_membership_noiseless_truth():
    rng = np.random.default_rng(4)
    theta = rng.standard_normal(3)
    x = rng.random((20, 3))
    y = x @ theta
    spec = region_from_bands(x, y, y, 20)
    assert membership(spec, theta, tol=1e-12)[1] == 20


def test_membership_brute_recount():
    rng = np.random.default_rng(6)
    x, lo, hi = random_region(rng, 12, 3)
    spec = region_from_bands(x, lo, hi, 6)
    for _ in range(50):
        theta = rng.standard_normal(3) * 2
        v = x @ theta
        want = sum(1 for i in range(12) if lo[i] <= v[i] <= hi[i])
        assert membership(spec, theta)[1] == want


def test_disjoint_emptiness():
    assert is_empty(one_d([(-10.0, 1.0), (2.0, 10.0)], 2)).empty is True
    res = is_empty(one_d([(-10.0, 1.0), (2.0, 10.0)], 1))
    assert res.empty is False and membership(one_d([(-10.0, 1.0), (2.0, 10.0)], 1), res.witness)[0]


def test_emptiness_matches_subsets():
    rng = np.random.default_rng(10)
    for _ in range(8):
        x, lo, hi = random_region(rng, 12, 2, spread=2.5)
        spec = region_from_bands(x, lo, hi, 8, 10.0)
        want, _ = subset_oracle(x, lo, hi, 8, (spec.box_lower, spec.box_upper))
        res = is_empty(spec)
        assert res.empty == want
        if not res.empty:
            assert membership(spec, res.witness)[0]


def test_optimize_one_d():
    spec = one_d([(2.0, 4.0)], 1)
    assert optimize(spec, [1.0], "min").value == pytest.approx(2.0)
    assert optimize(spec, [1.0], "max").value == pytest.approx(4.0)
    assert optimize(spec, [1.0], "max").status == "optimal"
    with pytest.raises(DomainError):
        optimize(spec, [0.0], "max")
    assert optimize(one_d([(-10.0, 1.0), (2.0, 10.0)], 2), [1.0]).status == "empty"


def test_optimize_all_votes_is_plain_lp():
    rng = np.random.default_rng(12)
    theta = rng.standard_normal(3)
    x = rng.random((10, 3))
    lo, hi = x @ theta - 0.5, x @ theta + 0.5
    spec = region_from_bands(x, lo, hi, 10, 50.0)
    c = rng.standard_normal(3)
    res = linprog(-c, A_ub=np.vstack([x, -x]), b_ub=np.concatenate([hi, -lo]), bounds=[(-50, 50)] * 3,
                  method="highs")
    assert optimize(spec, c, "max").value == pytest.approx(-res.fun, abs=1e-7)


def test_optimize_matches_subsets_and_symmetry():
    rng = np.random.default_rng(13)
    for _ in range(6):
        x, lo, hi = random_region(rng, 12, 2)
        spec = region_from_bands(x, lo, hi, 7, 10.0)
        c = rng.standard_normal(2)
        empty, best = subset_oracle(x, lo, hi, 7, (spec.box_lower, spec.box_upper), c)
        res = optimize(spec, c, "max")
        if empty:
            assert res.status == "empty"
            continue
        assert res.value == pytest.approx(best, abs=1e-6)
        assert optimize(spec, -c, "min").value == pytest.approx(-res.value, abs=1e-8)


def test_coordinate_intervals_collapse_without_noise():
    rng = np.random.default_rng(14)
    theta = rng.standard_normal(3)
    x = rng.random((15, 3))
    y = x @ theta
    spec = region_from_bands(x, y - 1e-6, y + 1e-6, 15)
    for ci in coordinate_intervals(spec):
        assert ci.lower <= theta[ci.coordinate] <= ci.upper
        assert ci.width < 1e-3


def test_coordinate_intervals_mark_clamping():
    spec = region_from_bands(np.array([[1.0, 1.0]]), [0.0], [1.0], 1, 10.0)
    cis = coordinate_intervals(spec)
    assert all(ci.lower == -math.inf and ci.upper == math.inf for ci in cis)


def test_monotone_in_k():
    rng = np.random.default_rng(15)
    x, lo, hi = random_region(rng, 10, 2)
    prev = None
    for k in range(10, 4, -1):
        spec = region_from_bands(x, lo, hi, k, 10.0)
        if is_empty(spec).empty:
            continue
        cis = coordinate_intervals(spec)
        if prev is not None:
            for a, b in zip(prev, cis):
                assert b.lower <= a.lower + 1e-9 and b.upper >= a.upper - 1e-9
        prev = cis
    for _ in range(50):
        theta = rng.standard_normal(2)
        member_hi = membership(region_from_bands(x, lo, hi, 7), theta)[0]
        if member_hi:
            assert membership(region_from_bands(x, lo, hi, 6), theta)[0]


def test_max_votes():
    spec = one_d([(-10.0, 1.0), (2.0, 10.0), (0.0, 3.0)], 3)
    votes, theta, status = max_votes(spec)
    assert (votes, status) == (2, "optimal")
    assert membership(spec, theta, tol=1e-7)[1] == 2


def test_small_big_m_over_restricts():
    x = np.array([[1.0], [1.0]])
    spec = RegionSpec(x, [0.0, 50.0], [1.0, 51.0], 1, 1e-3, [-100.0], [100.0])
    assert optimize(spec, [1.0], "max").status == "empty"


def test_audit_rejects_inconsistent_point():
    from ccregion.milp import MilpSolution
    from ccregion.region import _audit
    spec = one_d([(2.0, 4.0), (3.0, 5.0)], 2)
    bad = MilpSolution("optimal", 4.5, np.array([4.5, 1.0, 1.0]), 1, 0.0, 3, 4.5)
    with pytest.raises(AuditError):
        _audit(spec, bad, 2)
    good = MilpSolution("optimal", 4.0, np.array([4.0, 1.0, 1.0]), 1, 0.0, 3, 4.0)
    _audit(spec, good, 2)


def _oracle_interval(x, lo, hi, k, box, j):
    d = x.shape[1]
    e = np.zeros(d)
    e[j] = 1.0
    ends = []
    for sign in (-1.0, 1.0):
        _, v = subset_oracle(x, lo, hi, k, (np.full(d, -box), np.full(d, box)), sign * e)
        _, wide = subset_oracle(x, lo, hi, k, (np.full(d, -2 * box), np.full(d, 2 * box)), sign * e)
        clamped = abs(wide - v) > 1e-7 * (1 + abs(v))
        ends.append(sign * math.inf if clamped else sign * v)
    return ends


def test_hundred_instances_agree_with_subset_oracle():
    rng = np.random.default_rng(2025)
    for _ in range(100):
        n = int(rng.integers(2, 13))
        d = int(rng.integers(1, 3))
        k = int(rng.integers(max(1, n - 4), n + 1))
        x, lo, hi = random_region(rng, n, d)
        spec = region_from_bands(x, lo, hi, k, 10.0)
        box = (spec.box_lower, spec.box_upper)
        empty, _ = subset_oracle(x, lo, hi, k, box)
        res = is_empty(spec)
        assert res.empty == empty
        if empty:
            continue
        assert membership(spec, res.witness)[0]
        c = rng.standard_normal(d)
        _, best = subset_oracle(x, lo, hi, k, box, c)
        opt = optimize(spec, c, "max")
        assert opt.value == pytest.approx(best, abs=1e-6)
        assert membership(spec, opt.theta, tol=1e-7)[0]
        cis = coordinate_intervals(spec)
        for ci in cis:
            want = _oracle_interval(x, lo, hi, k, 10.0, ci.coordinate)
            assert [ci.lower, ci.upper] == pytest.approx(want, abs=1e-6)
