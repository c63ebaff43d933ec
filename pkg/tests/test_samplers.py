import math

import numpy as np
import pytest
from scipy.stats import chisquare
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bernoulli_lines import (
    BernoulliLineEnsemble,
    EnsembleSpec,
    GlauberMove,
    RngHandle,
    boundary_feasible,
    coupled_glauber_run,
    glauber_run,
    glauber_step,
    is_admissible,
    maximal_ensemble,
    rejection_sample,
    sample_bridge,
    sequential_exact_sample,
)
from bernoulli_lines.errors import (
    InadmissibleStateError,
    IncompatibleSpecError,
    InfeasibleBoundaryError,
    MaxTriesExceededError,
)
from bernoulli_lines.exact import enumerate_avoiding, fixed_time_pmf
from bernoulli_lines.experiments import random_ordered_pair, state_law, tv_to_uniform
from bernoulli_lines.samplers import (
    ColumnSampler,
    SequentialSampler,
    _barrier_args,
    _constraint_arrays,
    _glauber_kernel,
    _move_chunks,
    default_burn_in,
    glauber_samples,
    level_window,
    rejection_sample_many,
    sample_bridge_array,
    uniform_below,
)

from strategies import feasible_specs

SMALL = EnsembleSpec(0, 2, (0, 0), (1, 1))


# -- rng ------------------------------------------------------------------------------

def test_rng_reproducible():
    a = RngHandle(7, 3).gen.random(5)
    b = RngHandle(7, 3).gen.random(5)
    c = RngHandle(7, 4).gen.random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_rng_children_independent_of_order():
    r = RngHandle(11)
    first = r.child(2).gen.random(3)
    r.child(1).gen.random(100)
    assert np.array_equal(r.child(2).gen.random(3), first)


def test_uniform_below_big():
    gen = np.random.default_rng(0)
    n = 3 * 2**100 + 1
    draws = [uniform_below(gen, n) for _ in range(2000)]
    assert all(0 <= d < n for d in draws)
    # the top third of the range should hold about a third of the draws
    share = sum(d >= 2 * 2**100 for d in draws) / len(draws)
    assert abs(share - 1 / 3) < 0.05


# -- bridges --------------------------------------------------------------------------

def test_bridge_constant_and_staircase():
    rng = RngHandle(0)
    assert sample_bridge(rng, 0, 4, 2, 2).values == (2,) * 5
    assert sample_bridge(rng, 3, 6, 0, 3).values == (0, 1, 2, 3)


def test_bridge_infeasible():
    with pytest.raises(InfeasibleBoundaryError):
        sample_bridge(RngHandle(0), 0, 2, 0, 3)


def test_bridge_frequencies():
    rng = RngHandle(1)
    n = 100_000
    arr = sample_bridge_array(rng, 2, 1, n)
    share = (arr[:, 1] == 1).mean()
    assert abs(share - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_bridge_uniform_over_subsets():
    arr = sample_bridge_array(RngHandle(2), 5, 2, 50_000)
    _, counts = np.unique(arr, axis=0, return_counts=True)
    assert len(counts) == math.comb(5, 2)
    p = 1 / len(counts)
    sd = math.sqrt(p * (1 - p) / len(arr))
    assert np.all(np.abs(counts / len(arr) - p) <= 4 * sd)


# -- rejection --------------------------------------------------------------------------

def test_rejection_k1_one_try():
    spec = EnsembleSpec(0, 5, (0,), (3,))
    rng = RngHandle(3)
    for _ in range(20):
        ens, tries = rejection_sample(rng, spec)
        assert tries == 1 and is_admissible(spec, ens)


def test_rejection_mean_tries():
    _, tries = rejection_sample_many(RngHandle(4), SMALL, 20_000)
    se = math.sqrt((1 - 0.75) / 0.75**2 / len(tries))
    assert abs(tries.mean() - 4 / 3) <= 3 * se


def test_rejection_single_and_batched_agree_in_law():
    support = enumerate_avoiding(SMALL)
    samples, _ = rejection_sample_many(RngHandle(5), SMALL, 30_000)
    assert tv_to_uniform(samples, support) <= 0.02
    singles = np.array([rejection_sample(RngHandle(6, j), SMALL)[0].to_array() for j in range(3000)])
    assert tv_to_uniform(singles, support) <= 0.05


def test_rejection_max_tries():
    # four bridges of length 20 almost never avoid each other
    spec = EnsembleSpec(0, 20, (0, 0, 0, 0), (10, 10, 10, 10))
    with pytest.raises(MaxTriesExceededError) as info:
        rejection_sample(RngHandle(0), spec, max_tries=1)
    assert info.value.tries == 1


# -- sequential and column samplers -------------------------------------------------------

def test_sequential_mid_column_law():
    s = SequentialSampler((0, 0), (1, 1), 2)
    rng = RngHandle(7)
    n = 30_000
    mids = [tuple(s.sample_array(rng)[:, 1]) for _ in range(n)]
    for lam, p in fixed_time_pmf((0, 0), (1, 1), 2, 1).items():
        share = sum(m == lam for m in mids) / n
        assert abs(share - float(p)) <= 3 * math.sqrt(float(p * (1 - p)) / n)


def test_sequential_forced():
    ens = sequential_exact_sample(RngHandle(0), (3, 1), (4, 1), 1)
    assert ens.to_array().tolist() == [[3, 4], [1, 1]]


def test_sequential_infeasible():
    with pytest.raises(InfeasibleBoundaryError):
        sequential_exact_sample(RngHandle(0), (0, 1), (1, 1), 2)


def test_sequential_reproducible():
    a = sequential_exact_sample(RngHandle(9), (2, 0), (5, 3), 6)
    b = sequential_exact_sample(RngHandle(9), (2, 0), (5, 3), 6)
    assert a == b


@pytest.mark.parametrize("x,y,T", [((0, 0), (1, 1), 2), ((1, 0, 0), (3, 2, 1), 4), ((2, 0), (4, 3), 5)])
def test_sequential_uniform_on_small_instances(x, y, T):
    spec = EnsembleSpec(0, T, x, y)
    support = enumerate_avoiding(spec)
    s = SequentialSampler(x, y, T)
    rng = RngHandle(10)
    draws = np.array([s.sample_array(rng) for _ in range(20_000)])
    assert all(is_admissible(spec, BernoulliLineEnsemble.from_array(0, d)) for d in draws[:200])
    # chi-square against uniform; a plain TV bound would sit at the noise
    # floor once the support has ~100 states
    counts = state_law(draws, support) * len(draws)
    assert chisquare(counts).pvalue > 1e-3


def test_column_sampler_matches_sequential():
    x, y, T, m = (2, 1, 0), (5, 3, 3), 6, 3
    pmf = fixed_time_pmf(x, y, T, m)
    cols = ColumnSampler(x, y, T, m).sample(RngHandle(12), 40_000)
    seq = SequentialSampler(x, y, T)
    rng = RngHandle(13)
    seq_cols = np.array([seq.sample_array(rng)[:, m] for _ in range(40_000)])
    support = np.array(list(pmf))
    law_col = state_law(cols, support)
    law_seq = state_law(seq_cols, support)
    exact = np.array([float(v) for v in pmf.values()])
    assert 0.5 * np.abs(law_col - exact).sum() <= 0.02
    assert 0.5 * np.abs(law_seq - exact).sum() <= 0.02


# -- Glauber --------------------------------------------------------------------------

def test_glauber_endpoints_unchanged():
    spec = EnsembleSpec(0, 2, (1, 0), (2, 1))
    state = maximal_ensemble(spec)
    for t in (0, 2):
        for heads in (True, False):
            for z in range(-1, 3):
                assert glauber_step(state, spec, GlauberMove(0, t, z, heads)) == state


def test_glauber_heads_raises():
    spec = EnsembleSpec(0, 2, (0,), (1,))
    state = BernoulliLineEnsemble.from_values(0, [(0, 0, 1)])
    out = glauber_step(state, spec, GlauberMove(0, 1, 0, True))
    assert out.to_array().tolist() == [[0, 1, 1]]
    back = glauber_step(out, spec, GlauberMove(0, 1, 0, False))
    assert back == state


def test_glauber_requires_local_shape():
    spec = EnsembleSpec(0, 3, (0,), (2,))
    state = BernoulliLineEnsemble.from_values(0, [(0, 1, 1, 2)])
    # neighbours at t=1 are 0 and 1, so z must be 0 there
    assert glauber_step(state, spec, GlauberMove(0, 1, 1, True)) == state


def test_glauber_suppresses_crossing_upper_neighbour():
    spec = EnsembleSpec(0, 2, (0, 0), (1, 1))
    state = BernoulliLineEnsemble.from_values(0, [(0, 0, 1), (0, 0, 1)])
    assert glauber_step(state, spec, GlauberMove(1, 1, 0, True)) == state
    # path 1 may rise, after which path 2 can follow
    s1 = glauber_step(state, spec, GlauberMove(0, 1, 0, True))
    s2 = glauber_step(s1, spec, GlauberMove(1, 1, 0, True))
    assert s2.to_array().tolist() == [[0, 1, 1], [0, 1, 1]]


def test_glauber_crossing_allowed_off_S():
    spec = EnsembleSpec(0, 2, (0, 0), (1, 1), S=(0, 2))
    state = BernoulliLineEnsemble.from_values(0, [(0, 0, 1), (0, 0, 1)])
    out = glauber_step(state, spec, GlauberMove(1, 1, 0, True))
    assert out.to_array().tolist() == [[0, 0, 1], [0, 1, 1]]


def test_glauber_rejects_inadmissible_state():
    bad = BernoulliLineEnsemble.from_values(0, [(0, 0, 1), (0, 1, 1)])
    with pytest.raises(InadmissibleStateError):
        glauber_step(bad, SMALL, GlauberMove(0, 1, 0, True))


@settings(max_examples=100, deadline=None)
@given(feasible_specs(k_max=3, T_max=8, partial_S=True), st.integers(0, 2**32 - 1))
def test_glauber_step_changes_one_value_and_stays_admissible(spec, seed):
    assume(boundary_feasible(spec))
    gen = np.random.default_rng(seed)
    state = maximal_ensemble(spec)
    lo, hi = level_window(spec)
    for _ in range(60):
        move = GlauberMove(int(gen.integers(spec.k)), int(gen.integers(spec.T0, spec.T1 + 1)),
                           int(gen.integers(lo - 1, hi + 2)), bool(gen.integers(2)))
        new = glauber_step(state, spec, move)
        diff = new.to_array() != state.to_array()
        assert diff.sum() <= 1
        assert is_admissible(spec, new)
        state = new


@settings(max_examples=60, deadline=None)
@given(feasible_specs(k_max=3, T_max=8, partial_S=True), st.integers(0, 2**32 - 1))
def test_compiled_kernel_matches_glauber_step(spec, seed):
    assume(boundary_feasible(spec))
    state = maximal_ensemble(spec)
    X = state.to_array()
    lo, hi = level_window(spec)
    assume(hi >= lo)
    mi, mt, mz, mc = next(_move_chunks(RngHandle(seed), spec.k, X.shape[1], lo, hi, 300))
    _glauber_kernel(X, mi, mt, mz, mc, *_barrier_args(spec))
    for i, c, z, h in zip(mi, mt, mz, mc):
        state = glauber_step(state, spec, GlauberMove(int(i), spec.T0 + int(c), int(z), bool(h)))
    assert np.array_equal(X, state.to_array())


def test_glauber_run_zero_steps():
    spec = EnsembleSpec(0, 4, (1, 0), (3, 2))
    init = maximal_ensemble(spec)
    assert glauber_run(RngHandle(0), spec, 0, init) == init


def test_glauber_run_keeps_endpoints():
    spec = EnsembleSpec(0, 6, (2, 1, 0), (5, 3, 2))
    out = glauber_run(RngHandle(1), spec, 10_000)
    assert out.column(0) == spec.x and out.column(6) == spec.y
    assert is_admissible(spec, out)


def test_glauber_samples_uniform():
    spec = EnsembleSpec(0, 3, (1, 0), (2, 2))
    support = enumerate_avoiding(spec)
    recs = glauber_samples(RngHandle(2), spec, 20_000)
    assert tv_to_uniform(recs, support) <= 0.05


def test_default_burn_in():
    spec = EnsembleSpec(0, 4, (1, 0), (3, 2))
    lo, hi = level_window(spec)
    assert (lo, hi) == (0, 2)
    assert default_burn_in(spec) == 10 * 2 * 4 * 3


def test_constraint_arrays_mask():
    mask, top, bottom = _constraint_arrays(EnsembleSpec(0, 3, (0,), (1,), S=(0, 3)))
    assert mask.tolist() == [True, False, False, True]
    assert top is None and bottom is None


# -- coupling -------------------------------------------------------------------------

def test_coupled_identical_specs():
    spec = EnsembleSpec(0, 6, (2, 0), (5, 3))
    res = coupled_glauber_run(RngHandle(3), spec, spec, 50_000)
    assert res.low == res.high
    assert res.violations == 0


def test_coupled_matches_single_chain_on_identical_specs():
    spec = EnsembleSpec(0, 6, (2, 0), (5, 3))
    res = coupled_glauber_run(RngHandle(4), spec, spec, 5_000)
    assert res.low == glauber_run(RngHandle(4), spec, 5_000)


def test_coupled_incompatible():
    low = EnsembleSpec(0, 4, (1, 0), (3, 2))
    with pytest.raises(IncompatibleSpecError):
        coupled_glauber_run(RngHandle(0), low, low.replace(x=(0, 0)), 10)
    with pytest.raises(IncompatibleSpecError):
        coupled_glauber_run(RngHandle(0), low, low.replace(S=(0, 4)), 10)


@pytest.mark.parametrize("seed", range(8))
def test_coupled_random_pairs_ordered(seed):
    low, high = random_ordered_pair(RngHandle(seed), k=3, T=8)
    assert np.all(maximal_ensemble(low).to_array() <= maximal_ensemble(high).to_array())
    res = coupled_glauber_run(RngHandle(seed, 1), low, high, 100_000)
    assert res.violations == 0
    assert np.all(res.low.to_array() <= res.high.to_array())
    assert is_admissible(low, res.low) and is_admissible(high, res.high)
