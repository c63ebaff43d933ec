"""Samplers for avoiding Bernoulli line ensembles.

Three routes to the uniform measure on the avoiding set:

* rejection from independent uniform bridges,
* exact column-by-column sampling driven by determinantal counts,
* single-site Glauber dynamics, optionally coupled across two boundary data.

All randomness flows through :class:`RngHandle`, so a (seed, stream) pair
fixes every draw.
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numba
import numpy as np

from .ensemble import (
    BernoulliLineEnsemble,
    EnsembleSpec,
    is_admissible,
    make_path,
    maximal_ensemble,
)
from .errors import (
    DimensionMismatchError,
    IncompatibleSpecError,
    InadmissibleStateError,
    InfeasibleBoundaryError,
    MaxTriesExceededError,
)
from .exact import count_avoid_lgv, fixed_time_weights

_MOVE_CHUNK = 1 << 18


@dataclass
class RngHandle:
    """Seeded PCG64 stream. ``stream`` may be an int or a tuple of ints; equal
    (seed, stream) pairs give identical draws."""

    seed: int
    stream: int | tuple = 0
    gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        key = self.stream if isinstance(self.stream, tuple) else (self.stream,)
        ss = np.random.SeedSequence(int(self.seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *key: int) -> "RngHandle":
        """Independent stream derived from this one's (seed, stream) and ``key``."""
        base = self.stream if isinstance(self.stream, tuple) else (self.stream,)
        return RngHandle(self.seed, tuple(base) + tuple(key))


def as_rng(rng) -> RngHandle:
    if isinstance(rng, RngHandle):
        return rng
    return RngHandle(int(rng))


def uniform_below(gen: np.random.Generator, n: int) -> int:
    """Uniform integer in [0, n) for arbitrarily large ``n``."""
    if n <= 0:
        raise ValueError("n must be positive")
    if n < 2**63:
        return int(gen.integers(0, n))
    bits = n.bit_length()
    words = (bits + 63) // 64
    excess = words * 64 - bits
    while True:
        chunk = gen.integers(0, 2**64, size=words, dtype=np.uint64, endpoint=False)
        v = int.from_bytes(chunk.tobytes(), "little") >> excess
        if v < n:
            return v


# -- bridges and rejection -----------------------------------------------------------

def sample_bridge_array(rng: RngHandle, T: int, d: int, size: int) -> np.ndarray:
    """``size`` uniform step sequences of length T with d up-steps, as
    cumulative heights starting at 0, shape (size, T+1)."""
    if not 0 <= d <= T:
        raise InfeasibleBoundaryError(f"cannot climb {d} in {T} steps", (1,))
    out = np.zeros((size, T + 1), dtype=np.int64)
    if d == 0 or size == 0:
        return out
    if d == T:
        out[:, 1:] = np.arange(1, T + 1)
        return out
    # the d smallest of T iid uniforms sit at a uniform d-subset of slots
    keys = rng.gen.random((size, T))
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    np.cumsum(ranks < d, axis=1, out=out[:, 1:])
    return out


def sample_bridge(rng: RngHandle, t0: int, t1: int, x: int, y: int):
    """Uniform up-right path from (t0, x) to (t1, y)."""
    arr = sample_bridge_array(rng, t1 - t0, y - x, 1)[0] + x
    return make_path(t0, arr.tolist())


def _constraint_arrays(spec: EnsembleSpec):
    L = spec.T1 - spec.T0 + 1
    mask = np.zeros(L, dtype=bool)
    mask[np.asarray(spec.S, dtype=np.int64) - spec.T0] = True
    top = np.asarray(spec.top.path.values, dtype=np.int64) if spec.top.is_path else None
    bottom = np.asarray(spec.bottom.path.values, dtype=np.int64) if spec.bottom.is_path else None
    return mask, top, bottom


def admissible_mask(spec: EnsembleSpec, arr: np.ndarray) -> np.ndarray:
    """Vectorised :func:`is_admissible` for an (n, k, L) batch whose endpoints
    are already correct."""
    mask, top, bottom = _constraint_arrays(spec)
    sub = arr[:, :, mask]
    ok = (sub[:, :-1, :] >= sub[:, 1:, :]).all(axis=(1, 2))
    if top is not None:
        ok &= (sub[:, 0, :] <= top[mask]).all(axis=1)
    if bottom is not None:
        ok &= (sub[:, -1, :] >= bottom[mask]).all(axis=1)
    return ok


def _candidate_batch(rng, spec, size):
    T = spec.length
    k = spec.k
    arr = np.empty((size, k, T + 1), dtype=np.int64)
    for i in range(k):
        arr[:, i, :] = sample_bridge_array(rng, T, spec.y[i] - spec.x[i], size) + spec.x[i]
    return arr


def rejection_sample(rng: RngHandle, spec: EnsembleSpec, max_tries: int = 10**6):
    """Draw independent bridges until the tuple is admissible.

    Returns ``(ensemble, tries)``; ``tries`` is geometric with success
    probability equal to the acceptance probability.
    """
    for i, (a, b) in enumerate(zip(spec.x, spec.y)):
        if not 0 <= b - a <= spec.length:
            raise InfeasibleBoundaryError(f"y[{i}] - x[{i}] outside [0, T]", (1,))
    for tries in range(1, max_tries + 1):
        cand = _candidate_batch(rng, spec, 1)
        if admissible_mask(spec, cand)[0]:
            return BernoulliLineEnsemble.from_array(spec.T0, cand[0]), tries
    raise MaxTriesExceededError(max_tries)


def rejection_sample_many(rng: RngHandle, spec: EnsembleSpec, n: int,
                          batch: int = 1 << 14, max_tries: int = 10**9):
    """``n`` independent rejection samples, proposed in batches.

    Returns ``(samples, tries)`` with samples of shape (n, k, L) and the
    per-sample try counts. Batching does not change the law: candidates are
    consumed in order and each acceptance closes one geometric run.
    """
    out, tries = [], []
    run, total, got = 0, 0, 0
    while got < n:
        cand = _candidate_batch(rng, spec, batch)
        ok = admissible_mask(spec, cand)
        pos = np.flatnonzero(ok)
        if len(pos):
            gaps = np.diff(np.concatenate(([-1], pos)))
            gaps[0] += run
            take = min(len(pos), n - got)
            out.append(cand[pos[:take]])
            tries.append(gaps[:take])
            got += take
            run = batch - 1 - pos[-1]
        else:
            run += batch
        total += batch
        if total >= max_tries and got < n:
            raise MaxTriesExceededError(total)
    return np.concatenate(out)[:n], np.concatenate(tries)[:n]


# -- exact sequential sampling ----------------------------------------------------

class SequentialSampler:
    """Exact sampler for the barrier-free avoiding ensemble from ``x`` to ``y``.

    From column lam with r steps left, the next column is lam + eps
    (eps in {0,1}^k, still weakly decreasing) with probability
    N(lam + eps, y, r - 1) / N(lam, y, r), N being the determinantal count.
    Transition tables are cached per (column, steps left).
    """

    def __init__(self, x: Sequence[int], y: Sequence[int], T: int):
        self.x = tuple(int(v) for v in x)
        self.y = tuple(int(v) for v in y)
        self.T = int(T)
        if len(self.x) != len(self.y):
            raise DimensionMismatchError("x and y differ in length")
        self.total = count_avoid_lgv(self.x, self.y, self.T)
        if self.total == 0:
            raise InfeasibleBoundaryError("no avoiding ensemble joins x to y", (1,))
        self.k = len(self.x)
        self._eps = list(itertools.product((1, 0), repeat=self.k))
        self._table: dict = {}

    def _transitions(self, lam, r):
        key = (lam, r)
        hit = self._table.get(key)
        if hit is not None:
            return hit
        succ, cum, acc = [], [], 0
        for eps in self._eps:
            mu = tuple(a + e for a, e in zip(lam, eps))
            if any(mu[i] < mu[i + 1] for i in range(self.k - 1)):
                continue
            w = count_avoid_lgv(mu, self.y, r - 1)
            if w:
                acc += w
                succ.append(mu)
                cum.append(acc)
        self._table[key] = (succ, cum, acc)
        return succ, cum, acc

    def sample_array(self, rng: RngHandle) -> np.ndarray:
        cols = [self.x]
        lam = self.x
        for r in range(self.T, 0, -1):
            succ, cum, acc = self._transitions(lam, r)
            if len(succ) == 1:
                lam = succ[0]
            else:
                u = uniform_below(rng.gen, acc)
                lam = succ[bisect.bisect_right(cum, u)]
            cols.append(lam)
        return np.array(cols, dtype=np.int64).T

    def sample(self, rng: RngHandle, t0: int = 0) -> BernoulliLineEnsemble:
        return BernoulliLineEnsemble.from_array(t0, self.sample_array(rng))


@lru_cache(maxsize=64)
def _sequential_sampler(x, y, T):
    return SequentialSampler(x, y, T)


def sequential_exact_sample(rng: RngHandle, x: Sequence[int], y: Sequence[int], T: int,
                            t0: int = 0) -> BernoulliLineEnsemble:
    """Exact uniform sample of the barrier-free avoiding ensemble."""
    return _sequential_sampler(tuple(x), tuple(y), int(T)).sample(rng, t0)


class ColumnSampler:
    """Exact draws of the single column at time ``m``, by inverse transform on
    the integer weights of the fixed-time law (no floating point)."""

    def __init__(self, x: Sequence[int], y: Sequence[int], T: int, m: int):
        weights, self.total = fixed_time_weights(x, y, T, m)
        self.columns = np.array(list(weights), dtype=np.int64)
        self.cum = list(itertools.accumulate(weights.values()))

    def sample(self, rng: RngHandle, size: int) -> np.ndarray:
        idx = np.empty(size, dtype=np.int64)
        cum, total, gen = self.cum, self.total, rng.gen
        for j in range(size):
            idx[j] = bisect.bisect_right(cum, uniform_below(gen, total))
        return self.columns[idx]


# -- Glauber dynamics ------------------------------------------------------------------

@dataclass(frozen=True)
class GlauberMove:
    """One proposal: path ``i`` (0-based), absolute time ``t``, level ``z`` and
    a fair coin (True for heads)."""

    i: int
    t: int
    z: int
    heads: bool


def level_window(spec: EnsembleSpec, high: EnsembleSpec | None = None) -> tuple[int, int]:
    """Levels z at which a flip can ever fire: [x_k, y_1 - 1], widened to the
    higher spec's y_1 for a coupled pair."""
    top_y = (high or spec).y[0]
    return spec.x[-1], top_y - 1


def default_burn_in(spec: EnsembleSpec) -> int:
    lo, hi = level_window(spec)
    width = max(hi - lo + 1, 1)
    return 10 * spec.k * spec.length * width


def _apply(X, spec, move: GlauberMove, mask, top, bottom):
    """In-place update; returns True when X changed."""
    i, t, z = move.i, move.t, move.z
    if t <= spec.T0 or t >= spec.T1:
        return False
    c = t - spec.T0
    if X[i, c - 1] != z or X[i, c + 1] != z + 1:
        return False
    new = z + 1 if move.heads else z
    if X[i, c] == new:
        return False
    if mask[c]:
        if new > X[i, c]:
            upper = X[i - 1, c] if i > 0 else (top[c] if top is not None else None)
            if upper is not None and new > upper:
                return False
        else:
            lower = X[i + 1, c] if i < X.shape[0] - 1 else (bottom[c] if bottom is not None else None)
            if lower is not None and new < lower:
                return False
    X[i, c] = new
    return True


def glauber_step(state: BernoulliLineEnsemble, spec: EnsembleSpec,
                 move: GlauberMove) -> BernoulliLineEnsemble:
    """Apply one move. At a time in S a flip that would break the ordering
    against either neighbour (or a barrier) is suppressed."""
    if not is_admissible(spec, state):
        raise InadmissibleStateError("glauber_step needs an admissible state")
    if not 0 <= move.i < spec.k:
        raise ValueError(f"path index {move.i} outside [0, {spec.k})")
    X = state.to_array()
    mask, top, bottom = _constraint_arrays(spec)
    if not _apply(X, spec, move, mask, top, bottom):
        return state
    return BernoulliLineEnsemble.from_array(spec.T0, X)


@numba.njit(cache=True, nogil=True)
def _glauber_kernel(X, mi, mt, mz, mc, mask, top, has_top, bottom, has_bottom):
    k, L = X.shape
    for n in range(mi.shape[0]):
        i = mi[n]
        c = mt[n]
        z = mz[n]
        if c <= 0 or c >= L - 1:
            continue
        if X[i, c - 1] != z or X[i, c + 1] != z + 1:
            continue
        new = z + 1 if mc[n] else z
        if X[i, c] == new:
            continue
        if mask[c]:
            if new > X[i, c]:
                if i > 0:
                    if new > X[i - 1, c]:
                        continue
                elif has_top and new > top[c]:
                    continue
            else:
                if i < k - 1:
                    if new < X[i + 1, c]:
                        continue
                elif has_bottom and new < bottom[c]:
                    continue
        X[i, c] = new


@numba.njit(cache=True, nogil=True)
def _glauber_kernel_record(X, mi, mt, mz, mc, mask, top, has_top, bottom, has_bottom,
                           thin, phase, out, filled):
    """Like the plain kernel but copies X into ``out`` every ``thin`` moves.
    ``phase`` counts moves since the last record; returns (phase, filled)."""
    k, L = X.shape
    for n in range(mi.shape[0]):
        i = mi[n]
        c = mt[n]
        z = mz[n]
        if 0 < c < L - 1 and X[i, c - 1] == z and X[i, c + 1] == z + 1:
            new = z + 1 if mc[n] else z
            ok = X[i, c] != new
            if ok and mask[c]:
                if new > X[i, c]:
                    if i > 0:
                        ok = new <= X[i - 1, c]
                    elif has_top:
                        ok = new <= top[c]
                else:
                    if i < k - 1:
                        ok = new >= X[i + 1, c]
                    elif has_bottom:
                        ok = new >= bottom[c]
            if ok:
                X[i, c] = new
        phase += 1
        if phase == thin:
            phase = 0
            if filled < out.shape[0]:
                for a in range(k):
                    for b in range(L):
                        out[filled, a, b] = X[a, b]
                filled += 1
    return phase, filled


@numba.njit(cache=True, nogil=True)
def _coupled_kernel(X, Y, mi, mt, mz, mc, mask,
                    topX, has_topX, botX, has_botX,
                    topY, has_topY, botY, has_botY):
    """Apply the same moves to both chains; return the number of steps after
    which some X value exceeded the matching Y value."""
    k, L = X.shape
    violations = 0
    for n in range(mi.shape[0]):
        i = mi[n]
        c = mt[n]
        z = mz[n]
        if 0 < c < L - 1:
            new = z + 1 if mc[n] else z
            for which in range(2):
                Z = X if which == 0 else Y
                top = topX if which == 0 else topY
                has_top = has_topX if which == 0 else has_topY
                bot = botX if which == 0 else botY
                has_bot = has_botX if which == 0 else has_botY
                if Z[i, c - 1] != z or Z[i, c + 1] != z + 1 or Z[i, c] == new:
                    continue
                ok = True
                if mask[c]:
                    if new > Z[i, c]:
                        if i > 0:
                            ok = new <= Z[i - 1, c]
                        elif has_top:
                            ok = new <= top[c]
                    else:
                        if i < k - 1:
                            ok = new >= Z[i + 1, c]
                        elif has_bot:
                            ok = new >= bot[c]
                if ok:
                    Z[i, c] = new
        bad = False
        for a in range(k):
            for b in range(L):
                if X[a, b] > Y[a, b]:
                    bad = True
        if bad:
            violations += 1
    return violations


def _barrier_args(spec):
    mask, top, bottom = _constraint_arrays(spec)
    L = len(mask)
    dummy = np.zeros(L, dtype=np.int64)
    return (mask,
            top if top is not None else dummy, top is not None,
            bottom if bottom is not None else dummy, bottom is not None)


def _move_chunks(rng: RngHandle, k: int, L: int, lo: int, hi: int, n_steps: int):
    """Uniform (path, column, level, coin) arrays in fixed-size chunks."""
    gen = rng.gen
    left = n_steps
    while left > 0:
        m = min(left, _MOVE_CHUNK)
        mi = gen.integers(0, k, size=m)
        mt = gen.integers(0, L, size=m)
        mz = gen.integers(lo, hi + 1, size=m)
        mc = gen.integers(0, 2, size=m).astype(np.bool_)
        yield mi, mt, mz, mc
        left -= m


def _initial_state(spec, init):
    if init is None:
        return maximal_ensemble(spec).to_array()
    if not is_admissible(spec, init):
        raise InadmissibleStateError("initial state is not admissible")
    return init.to_array()


def glauber_run(rng: RngHandle, spec: EnsembleSpec, n_steps: int,
                init: BernoulliLineEnsemble | None = None) -> BernoulliLineEnsemble:
    """Run ``n_steps`` uniformly random moves starting from ``init`` (the
    maximal ensemble by default)."""
    X = _initial_state(spec, init)
    lo, hi = level_window(spec)
    if n_steps <= 0 or hi < lo:
        return BernoulliLineEnsemble.from_array(spec.T0, X)
    args = _barrier_args(spec)
    for mi, mt, mz, mc in _move_chunks(rng, spec.k, X.shape[1], lo, hi, n_steps):
        _glauber_kernel(X, mi, mt, mz, mc, *args)
    return BernoulliLineEnsemble.from_array(spec.T0, X)


def glauber_samples(rng: RngHandle, spec: EnsembleSpec, n_records: int,
                    burn_in: int | None = None, thin: int | None = None,
                    init: BernoulliLineEnsemble | None = None) -> np.ndarray:
    """States of one long chain, recorded every ``thin`` moves after burn-in.

    ``thin`` defaults to the number of distinct (path, time, level) triples.
    Returns an array of shape (n_records, k, L).
    """
    X = _initial_state(spec, init)
    k, L = X.shape
    lo, hi = level_window(spec)
    if burn_in is None:
        burn_in = default_burn_in(spec)
    if thin is None:
        thin = k * L * max(hi - lo + 1, 1)
    out = np.empty((n_records, k, L), dtype=np.int64)
    if hi < lo:
        out[:] = X
        return out
    args = _barrier_args(spec)
    for mi, mt, mz, mc in _move_chunks(rng, k, L, lo, hi, burn_in):
        _glauber_kernel(X, mi, mt, mz, mc, *args)
    phase, filled = 0, 0
    for mi, mt, mz, mc in _move_chunks(rng, k, L, lo, hi, n_records * thin):
        phase, filled = _glauber_kernel_record(X, mi, mt, mz, mc, *args, thin, phase, out, filled)
    return out


def check_ordered_pair(low: EnsembleSpec, high: EnsembleSpec) -> None:
    """Raise unless ``low`` and ``high`` satisfy the monotone-coupling
    hypotheses: same interval, k and S, and every boundary datum of ``low``
    at most the matching one of ``high``."""
    if (low.T0, low.T1, low.k, low.S) != (high.T0, high.T1, high.k, high.S):
        raise IncompatibleSpecError("specs must share T0, T1, k and S")
    if any(a > b for a, b in zip(low.x, high.x)) or any(a > b for a, b in zip(low.y, high.y)):
        raise IncompatibleSpecError("need x <= x' and y <= y' coordinatewise")
    for t in low.S:
        if low.bottom(t) > high.bottom(t):
            raise IncompatibleSpecError(f"bottom barriers out of order at t={t}")
        if low.top(t) > high.top(t):
            raise IncompatibleSpecError(f"top barriers out of order at t={t}")


@dataclass
class CoupledRun:
    low: BernoulliLineEnsemble
    high: BernoulliLineEnsemble
    steps: int
    violations: int


def coupled_glauber_run(rng: RngHandle, spec_low: EnsembleSpec, spec_high: EnsembleSpec,
                        n_steps: int, init_low: BernoulliLineEnsemble | None = None,
                        init_high: BernoulliLineEnsemble | None = None) -> CoupledRun:
    """Drive two chains with one move sequence.

    Both start from their maximal ensembles unless told otherwise. The
    returned ``violations`` counts steps after which the low chain exceeded
    the high one anywhere; it stays 0 for ordered specs.
    """
    check_ordered_pair(spec_low, spec_high)
    X = _initial_state(spec_low, init_low)
    Y = _initial_state(spec_high, init_high)
    k, L = X.shape
    lo, hi = level_window(spec_low, spec_high)
    violations = int((X > Y).any())
    if n_steps > 0 and hi >= lo:
        ax = _barrier_args(spec_low)
        ay = _barrier_args(spec_high)
        for mi, mt, mz, mc in _move_chunks(rng, k, L, lo, hi, n_steps):
            violations += _coupled_kernel(X, Y, mi, mt, mz, mc, ax[0], *ax[1:], *ay[1:])
    return CoupledRun(
        BernoulliLineEnsemble.from_array(spec_low.T0, X),
        BernoulliLineEnsemble.from_array(spec_high.T0, Y),
        int(n_steps),
        int(violations),
    )
