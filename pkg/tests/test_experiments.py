import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare, norm

from bernoulli_lines import BernoulliLineEnsemble, EnsembleSpec, LimitSpec, RngHandle
from bernoulli_lines.errors import DomainError, WindowTooSmallError
from bernoulli_lines.exact import fixed_time_pmf
from bernoulli_lines.experiments import (
    ExperimentReport,
    RescaleSpec,
    ScalingSpec,
    _repair,
    gibbs_resampled_law,
    is_valid_cdf,
    lattice_sup_cdf_distance,
    ordered_map,
    random_ordered_pair,
    rescale_ensemble,
    resolve_threads,
    run_convergence,
    run_coupling_test,
    run_gibbs_invariance,
    run_mingap,
    sample_fixed_time,
    state_law,
)


# -- scaling ----------------------------------------------------------------------------

def test_scaling_boundary_nearest_and_floor():
    sc = ScalingSpec(100, 0.5, 0.5, (0.26, -0.26), (0.0, -0.55))
    assert sc.boundary() == ((3, -3), (50, 45))
    fl = ScalingSpec(100, 0.5, 0.5, (0.26, -0.26), (0.0, -0.55), rounding="floor")
    assert fl.boundary() == ((2, -3), (50, 44))
    assert sc.m == 50 and sc.center() == 25.0
    assert sc.rescale([35, 25]) == pytest.approx([1.0, 0.0])


def test_scaling_unknown_rounding():
    with pytest.raises(ValueError):
        ScalingSpec(10, 0.5, 0.5, (0,), (0,), rounding="ceil").boundary()


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=4), st.data(), st.integers(1, 6))
def test_repair_restores_conditions(x, data, T):
    y = data.draw(st.lists(st.integers(-5, 10), min_size=len(x), max_size=len(x)))
    rx, ry = _repair(x, y, T)
    assert all(a >= b for a, b in zip(rx, rx[1:]))
    assert all(a >= b for a, b in zip(ry, ry[1:]))
    assert all(0 <= b - a <= T for a, b in zip(rx, ry))
    assert all(a <= b for a, b in zip(rx, x)) and all(a <= b for a, b in zip(ry, y))


@given(st.integers(2, 400))
def test_scaling_limits(T):
    sc = ScalingSpec(T, 0.5, 0.5, (1.0, -1.0), (0.5, -0.5))
    x, y = sc.boundary()
    r = math.sqrt(T)
    assert all(abs(xi / r - a) <= 1 / r for xi, a in zip(x, sc.a))


def test_sample_fixed_time_methods_agree_with_pmf():
    sc = ScalingSpec(16, 0.5, 0.5, (0.5, -0.5), (0.5, -0.5))
    x, y = sc.boundary()
    pmf = fixed_time_pmf(x, y, 16, sc.m)
    support = np.array(list(pmf))
    probs = np.array([float(v) for v in pmf.values()])
    keep = probs * 4000 >= 5
    for method in ("column", "sequential"):
        cols = sample_fixed_time(RngHandle(1), sc, 4000, method)
        counts = state_law(cols, support) * 4000
        obs = np.append(counts[keep], counts[~keep].sum())
        exp = np.append(probs[keep], probs[~keep].sum()) * 4000
        assert chisquare(obs, exp).pvalue > 1e-3


def test_sample_fixed_time_bad_inputs():
    with pytest.raises(DomainError):
        sample_fixed_time(RngHandle(0), ScalingSpec(4, 0.5, 0.1, (0,), (0,)), 10)
    with pytest.raises(ValueError):
        sample_fixed_time(RngHandle(0), ScalingSpec(4, 0.5, 0.5, (0,), (0,)), 10, method="magic")


# -- distances ------------------------------------------------------------------------------

def test_lattice_distance_point_mass():
    raw, mid = lattice_sup_cdf_distance(np.zeros(100, dtype=int), norm.cdf, 0.0, 1.0)
    assert raw == pytest.approx(0.5)
    assert mid == pytest.approx(1 - norm.cdf(0.5))


def test_lattice_distance_matches_brute_force():
    gen = np.random.default_rng(0)
    v = gen.binomial(40, 0.5, size=3000)
    cdf = norm.cdf
    raw, mid = lattice_sup_cdf_distance(v, cdf, 20.0, math.sqrt(10))
    # brute force over a fine grid of real points for the raw distance
    xs = np.linspace(-5, 45, 200_001)
    Fn = np.searchsorted(np.sort(v), xs, side="right") / len(v)
    brute = np.max(np.abs(Fn - cdf((xs - 20) / math.sqrt(10))))
    assert raw == pytest.approx(brute, abs=2e-4)
    assert mid < raw


def test_valid_cdf():
    assert is_valid_cdf([0, 0.2, 0.2, 1.0])
    assert not is_valid_cdf([0, 0.3, 0.2])
    assert not is_valid_cdf([0, 1.2])


# -- convergence ----------------------------------------------------------------------------

def test_convergence_k1_small():
    spec = LimitSpec(0.5, 0.5, (0,), (0,))
    rep = run_convergence(spec, [50, 200], 20_000, RngHandle(3), threshold=0.03, keep_samples=True)
    assert rep.passed
    assert rep.statistics[-1]["distance"] < 0.02
    z = rep.extras["samples"][200][:, 0]
    assert abs(z.var() - 1 / 16) < 0.005
    grid = np.linspace(-1, 1, 201)
    F = np.searchsorted(np.sort(z), grid, side="right") / len(z)
    assert is_valid_cdf(F)


def test_convergence_insufficient_data():
    rep = run_convergence(LimitSpec(0.5, 0.5, (0,), (0,)), [50], 0, RngHandle(0))
    assert rep.passed is None
    assert rep.summary["insufficient_data"]


def test_convergence_reproducible_across_threads():
    spec = LimitSpec(0.5, 0.5, (1, -1), (1, -1))
    a = run_convergence(spec, [20, 40], 2000, RngHandle(7), threads=1)
    b = run_convergence(spec, [20, 40], 2000, RngHandle(7), threads=2)
    assert a.to_json() == b.to_json()


# -- coupling -------------------------------------------------------------------------------

def test_coupling_report():
    pairs = [random_ordered_pair(RngHandle(i), 2, 4) for i in range(3)]
    rep = run_coupling_test(pairs, 20_000, RngHandle(1), tv_records=5_000, tv_threshold=0.1)
    assert rep.summary["violations"] == 0
    assert rep.passed


def test_coupling_equal_specs():
    spec = EnsembleSpec(0, 4, (1, 0), (3, 2))
    rep = run_coupling_test([(spec, spec)], 10_000, RngHandle(2))
    assert rep.passed and rep.statistics[0]["violations"] == 0


# -- Gibbs -----------------------------------------------------------------------------------

def test_gibbs_exact_equality():
    spec = EnsembleSpec(0, 4, (1, 0, 0), (3, 2, 1))
    rep = run_gibbs_invariance(spec, (1, 3), (0, 0))
    assert rep.passed and rep.statistics[0]["mismatches"] == 0
    assert rep.statistics[0]["total_after"] == 1


def test_gibbs_full_window():
    spec = EnsembleSpec(0, 4, (1, 0), (3, 2))
    before, after = gibbs_resampled_law(spec, (0, 4), (0, 0))
    assert before == after and len(before) > 1


def test_gibbs_short_window_trivial():
    spec = EnsembleSpec(0, 4, (1, 0, 0), (3, 2, 1))
    assert run_gibbs_invariance(spec, (1, 2), (0, 1)).passed


def test_gibbs_rejects_bottom_path():
    spec = EnsembleSpec(0, 4, (1, 0), (3, 2))
    with pytest.raises(DomainError):
        run_gibbs_invariance(spec, (1, 3), (0, 1))


# -- min gap ---------------------------------------------------------------------------------

def test_mingap_monotone():
    spec = LimitSpec(0.5, 0.5, (1, -1), (1, -1))
    rep = run_mingap(spec, [50, 100], 5_000, [0, 0.05, 0.2, 0.5], RngHandle(4), epsilon=0.1)
    assert rep.summary["monotone_in_delta"]
    assert rep.summary["smallest_delta"] == 0.05
    for s in rep.statistics:
        assert all(np.diff(s["probabilities"]) >= 0)


def test_mingap_needs_two_paths():
    with pytest.raises(DomainError):
        run_mingap(LimitSpec(0.5, 0.5, (0,), (0,)), [10], 10, [0.1], RngHandle(0))


# -- rescaling -------------------------------------------------------------------------------

def test_rescale_domain():
    with pytest.raises(DomainError):
        RescaleSpec(1.0, 1.0, 0.5)
    with pytest.raises(DomainError):
        RescaleSpec(0.0, 0.5, 0.5)


def test_rescale_at_zero():
    ens = BernoulliLineEnsemble.from_values(-4, [[3, 3, 4, 5, 5, 6, 6, 7, 7]])
    spec = RescaleSpec(1.0, 0.5, 0.25)
    out = rescale_ensemble(ens, spec, 4, [0.0])
    assert out.f[0, 0] == pytest.approx(5 / 2)
    assert out.curves[0, 0] == pytest.approx(5 / 2 / 0.5)


def test_rescale_constant_slope_bound():
    N, alpha, lam, p = 100, 1.0, 0.3, 0.5
    t = np.arange(-100, 101)
    ens = BernoulliLineEnsemble.from_values(-100, [np.floor(p * t + 0.5).astype(int).tolist()])
    s = np.linspace(-1, 1, 41)
    out = rescale_ensemble(ens, RescaleSpec(alpha, p, lam), N, s)
    bound = N ** (-alpha / 2) * (1 + lam * s**2 * N ** (alpha / 2))
    assert np.all(np.abs(out.f[0]) <= bound + 1e-12)


def test_rescale_window_too_small():
    ens = BernoulliLineEnsemble.from_values(0, [[0, 1, 1]])
    with pytest.raises(WindowTooSmallError):
        rescale_ensemble(ens, RescaleSpec(1.0, 0.5, 1.0), 4, [-0.5, 0.5])
    out = rescale_ensemble(ens, RescaleSpec(1.0, 0.5, 1.0), 4, [-0.5, 0.5], extend=True)
    # held constant at the boundary value 0 for s < 0
    assert out.f[0, 0] == pytest.approx((0 + 0.5 * 2 + 0.25 * 2) / 2)


# -- reports and threads ----------------------------------------------------------------------

def test_report_json_schema():
    rep = ExperimentReport("demo", {"a": 1}, 5, [{"x": np.int64(2)}], {"ok": np.bool_(True)}, True)
    rep.extras["big"] = np.zeros(3)
    doc = json.loads(rep.to_json())
    assert doc == {"experiment": "demo", "config": {"a": 1}, "seed": 5, "statistics": [{"x": 2}],
                   "summary": {"ok": True}, "pass": True, "schema_version": 1}


def test_resolve_threads_env(monkeypatch):
    monkeypatch.setenv("GLE_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    monkeypatch.delenv("GLE_THREADS")
    assert resolve_threads(None) == 1


def test_ordered_map_keeps_order():
    assert ordered_map(lambda v: v * v, range(20), threads=4) == [v * v for v in range(20)]
