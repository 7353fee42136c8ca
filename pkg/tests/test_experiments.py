import math

import numpy as np
import pytest

from sigmaflow.experiments import (
    RATIO_TOLERANCES,
    asymptotic_ratios,
    cos2_profile,
    eps_sweep,
    family_point,
    leading_terms,
    ratio_violations,
    round_sphere_value,
    sweep_trend_ok,
)
from sigmaflow.flow import FlowConfig
from sigmaflow.functionals import ConformalFactor, evaluate_functionals

# (n, ell) -> (F2, vol, int sigma_1 dvol) from a 30-digit mpmath quadrature
ORACLE = {
    (5, 10): (-1335.1467967260166, 6.4989720070919256, 95.94203049538536),
    (5, 100): (-86325.97001663037, 2.0830848999147075, 272.69959241579784),
    (5, 1000): (-2927567.1775075256, 0.65961916840312666, 852.75717752046989),
    (5, 1600): (-5942230.2157145975, 0.52150407389355768, 1078.1568948031668),
    (5, 10000): (-93225951.331941528, 0.20861805758251962, 2693.6246066676664),
    (6, 10): (-862.06488003788, 6.978172360456224, 103.14142547884286),
    (6, 100): (-46181.062515996306, 2.2398833812580434, 279.93690373590819),
    (6, 1000): (-1528430.7114365045, 0.70937609595676226, 870.57878183508971),
    (6, 10000): (-48551471.71860502, 0.22435806773374829, 2748.3749476222067),
}


@pytest.mark.parametrize("key", sorted(ORACLE))
def test_family_point_matches_oracle(key):
    n, ell = key
    F2, vol, sig1 = ORACLE[key]
    p = family_point(ell, n)
    assert p.F2 == pytest.approx(F2, rel=1e-9)
    assert p.vol == pytest.approx(vol, rel=1e-9)
    assert p.total_sigma1 == pytest.approx(sig1, rel=1e-9)
    assert p.total_scalar == pytest.approx(2 * (n - 1) * sig1, rel=1e-9)
    assert p.vol > 0 and p.total_scalar > 0


@pytest.mark.parametrize("ell", [0.5, 10, 60, 1600, 1e5])
def test_refinement_at_four_times_order(ell):
    a, b = family_point(ell, 5), family_point(ell, 5, order=256)
    for key in ("F2", "vol", "total_scalar"):
        assert getattr(a, key) == pytest.approx(getattr(b, key), rel=1e-9)


def test_round_limit():
    p = family_point(1e-8, 5)
    assert p.F2 == pytest.approx(2.5 * math.pi**3, rel=1e-6)
    assert p.vol == pytest.approx(math.pi**3, rel=1e-6)
    gaps = [abs(family_point(ell, 5).vol / math.pi**3 - 1) for ell in (1e-4, 1e-5)]
    assert gaps[0] / gaps[1] == pytest.approx(10, rel=0.01)


def test_ell_1600_examples():
    p = family_point(1600, 5)
    lead_vol = leading_terms(1600, 5)[1]
    assert abs(p.vol / lead_vol - 1) <= 0.01
    assert p.F2 < 0


def test_family_requires_n_at_least_5():
    with pytest.raises(ValueError, match="n >= 5"):
        family_point(100, 4)
    with pytest.raises(ValueError):
        family_point(0.0, 5)


@pytest.mark.parametrize("n", [5, 6])
def test_ratio_table(n):
    rows = asymptotic_ratios([100, 1000, 10000], n)
    assert [r["ell"] for r in rows] == [100, 1000, 10000]
    assert ratio_violations(rows) == []
    dev = [abs(r["F2_ratio"] - 1) for r in rows]
    assert dev[0] <= 0.15 and dev[1] <= 0.05 and dev[2] <= 0.02
    assert abs(rows[2]["vol_ratio"] - 1) <= 1e-3
    assert abs(rows[2]["scalar_ratio"] - 1) <= 0.05
    for key in ("quotient_vol", "quotient_scalar"):
        q = [r[key] for r in rows]
        assert q[0] > q[1] > q[2] and q[0] < 0


def test_ratio_violations_detects_bad_rows():
    rows = asymptotic_ratios([100, 1000, 10000], 5)
    rows[2] = dict(rows[2], F2_ratio=1.5)
    problems = ratio_violations(rows)
    assert any("F2_ratio at ell=10000" in p for p in problems)
    assert set(RATIO_TOLERANCES) == {"F2_ratio", "vol_ratio", "scalar_ratio"}


@pytest.mark.parametrize("ells", [[], [100, 50], [5, 100]])
def test_ratio_preconditions(ells):
    with pytest.raises(ValueError):
        asymptotic_ratios(ells, 5)


def test_parallel_points_match_serial():
    serial = asymptotic_ratios([100, 1000], 5)
    parallel = asymptotic_ratios([100, 1000], 5, jobs=2)
    assert serial == parallel


def test_round_sphere_value():
    assert round_sphere_value(5, 0.0) == pytest.approx(2.5 * math.pi**3 * math.pi ** (-3 / 5))


def test_sweep_on_round_sphere():
    config = FlowConfig(n=5)
    u0 = ConformalFactor(config.grid(), np.zeros(config.grid_size), 5)
    rows = eps_sweep(config, u0, [0.2, 0.1, 0.05])
    for row in rows:
        assert row.converged
        expected = 2.5 * (math.pi**3) ** (1 - 1 / (5 - 2 * row.eps))
        assert row.tildeF2eps == pytest.approx(expected, rel=1e-9)
        assert row.tildeF2eps == pytest.approx(round_sphere_value(5, row.eps), rel=1e-9)
        assert row.holder_ok()
    assert sweep_trend_ok(rows)


def test_sweep_flags_unconverged_rows():
    config = FlowConfig(n=5, max_time=0.01)
    rows = eps_sweep(config, cos2_profile(config.grid(), 0.2, 5), [0.2])
    assert rows[0].status == "MaxTimeReached"
    assert not rows[0].converged


def test_sweep_rejects_bad_eps():
    config = FlowConfig(n=5)
    with pytest.raises(ValueError):
        eps_sweep(config, cos2_profile(config.grid(), 0.2, 5), [0.0])


def test_cone_entry_profile_oracle():
    # bisection oracle for u = A cos(2 theta), g = exp(2u) g0, n = 5:
    # min sigma_2 = 0 at A = 5/16 and min sigma_1 = 0 at A = 5/8
    config = FlowConfig(n=5)
    grid = config.grid()

    def min_sigmas(amp):
        rep = evaluate_functionals(cos2_profile(grid, amp, 5), 0.1)
        return rep.min_sigma1, rep.min_sigma2

    lo, hi = 0.1, 0.6
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if min_sigmas(mid)[1] > 0 else (lo, mid)
    assert lo == pytest.approx(5 / 16, abs=1e-3)
    s1, s2 = min_sigmas(0.45)
    assert s1 > 0 > s2
