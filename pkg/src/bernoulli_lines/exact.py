"""Exact counts and probabilities for avoiding Bernoulli line ensembles.

Everything here is integer or :class:`fractions.Fraction` arithmetic, except
the float helpers for the binomial asymptotics at the bottom.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .ensemble import EnsembleSpec
from .errors import CapExceededError, DegenerateDenominatorError, DomainError

DEFAULT_CAP = 10**7


def elem_sym(r: int, n: int) -> int:
    """e_r(1^n): the binomial coefficient, zero outside 0 <= r <= n."""
    if r < 0 or r > n:
        return 0
    return math.comb(n, r)


def bareiss_det(matrix: Sequence[Sequence[int]]) -> int:
    """Fraction-free Gaussian elimination; exact for integer matrices."""
    a = [list(row) for row in matrix]
    n = len(a)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        akk = a[k][k]
        rowk = a[k]
        for i in range(k + 1, n):
            ai = a[i]
            aik = ai[k]
            for j in range(k + 1, n):
                ai[j] = (ai[j] * akk - aik * rowk[j]) // prev
        prev = akk
    return sign * a[n - 1][n - 1]


def count_free(spec: EnsembleSpec) -> int:
    """Number of unconstrained k-tuples of bridges with the endpoints of ``spec``."""
    T = spec.length
    out = 1
    for a, b in zip(spec.x, spec.y):
        out *= elem_sym(b - a, T)
    return out


def jacobi_trudi_matrix(x: Sequence[int], y: Sequence[int], T: int) -> list[list[int]]:
    k = len(x)
    return [[elem_sym(y[i] - x[j] - i + j, T) for j in range(k)] for i in range(k)]


@lru_cache(maxsize=1 << 18)
def _count_lgv(x: tuple, y: tuple, T: int) -> int:
    if any(not 0 <= b - a <= T for a, b in zip(x, y)):
        return 0
    if any(x[i] < x[i + 1] or y[i] < y[i + 1] for i in range(len(x) - 1)):
        return 0
    return bareiss_det(jacobi_trudi_matrix(x, y, T))


def count_avoid_lgv(x: Sequence[int], y: Sequence[int], T: int) -> int:
    """Number of non-crossing k-tuples from ``x`` to ``y`` in ``T`` steps
    (no barriers), as a determinant of binomial coefficients.
    """
    if T < 0:
        return 0
    if T == 0:
        return int(tuple(x) == tuple(y))
    return _count_lgv(tuple(int(v) for v in x), tuple(int(v) for v in y), int(T))


# -- brute force ----------------------------------------------------------------

def enumerate_bridges(t0: int, t1: int, x: int, y: int) -> np.ndarray:
    """All up-right paths from (t0, x) to (t1, y), one per row, lexicographic."""
    T = t1 - t0
    d = y - x
    if not 0 <= d <= T:
        return np.empty((0, T + 1), dtype=np.int64)
    combos = list(itertools.combinations(range(T), d))
    steps = np.zeros((len(combos), T), dtype=np.int64)
    for r, c in enumerate(combos):
        steps[r, list(c)] = 1
    out = np.empty((len(combos), T + 1), dtype=np.int64)
    out[:, 0] = x
    np.cumsum(steps, axis=1, out=out[:, 1:])
    out[:, 1:] += x
    # descending order so the highest path comes first
    return out[::-1].copy()


def _barrier_array(barrier, T0, T1):
    if not barrier.is_path:
        return None
    return np.asarray(barrier.path.values, dtype=np.int64)


def enumerate_avoiding(spec: EnsembleSpec, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Every element of the avoiding set, as an array of shape (M, k, T+1).

    Candidates are all k-tuples of bridges; the pairwise constraints are
    applied path by path so tuples failing early are dropped early.
    """
    size = count_free(spec)
    if size > cap:
        raise CapExceededError(size, cap)
    T0, T1, k = spec.T0, spec.T1, spec.k
    L = T1 - T0 + 1
    if size == 0:
        return np.empty((0, k, L), dtype=np.int64)
    mask = np.zeros(L, dtype=bool)
    mask[np.asarray(spec.S, dtype=np.int64) - T0] = True
    top = _barrier_array(spec.top, T0, T1)
    bottom = _barrier_array(spec.bottom, T0, T1)

    first = enumerate_bridges(T0, T1, spec.x[0], spec.y[0])
    if top is not None:
        first = first[(first[:, mask] <= top[mask]).all(axis=1)]
    partial = first[:, None, :]
    for j in range(1, k):
        cand = enumerate_bridges(T0, T1, spec.x[j], spec.y[j])
        prev = partial[:, -1, :][:, mask]
        ok = (prev[:, None, :] >= cand[:, mask][None, :, :]).all(axis=2)
        pi, ci = np.nonzero(ok)
        partial = np.concatenate([partial[pi], cand[ci][:, None, :]], axis=1)
    if bottom is not None:
        last = partial[:, -1, :]
        partial = partial[(last[:, mask] >= bottom[mask]).all(axis=1)]
    return partial


def count_avoid_enum(spec: EnsembleSpec, cap: int = DEFAULT_CAP) -> int:
    return int(len(enumerate_avoiding(spec, cap)))


def count_avoid(spec: EnsembleSpec, cap: int = DEFAULT_CAP) -> int:
    """Determinant route when it applies, enumeration otherwise."""
    if spec.barrier_free and spec.full_S:
        return count_avoid_lgv(spec.x, spec.y, spec.length)
    return count_avoid_enum(spec, cap)


# -- distributions ------------------------------------------------------------------

def _column_ranges(x, y, m, n):
    return [range(max(a, b - n), min(a + m, b) + 1) for a, b in zip(x, y)]


def iter_columns(x: Sequence[int], y: Sequence[int], m: int, n: int):
    """Weakly decreasing columns reachable at time m from x and reaching y
    after n more steps."""
    ranges = _column_ranges(x, y, m, n)
    k = len(ranges)

    def rec(i, upper, acc):
        if i == k:
            yield tuple(acc)
            return
        r = ranges[i]
        hi = r.stop - 1 if upper is None else min(r.stop - 1, upper)
        for v in range(hi, r.start - 1, -1):
            acc.append(v)
            yield from rec(i + 1, v, acc)
            acc.pop()

    yield from rec(0, None, [])


def fixed_time_weights(x: Sequence[int], y: Sequence[int], T: int, m: int):
    """Integer weights of the column at time ``m``: ``({column: count}, total)``
    where count is the number of avoiding ensembles through that column."""
    if not 0 < m < T:
        raise ValueError(f"m must satisfy 0 < m < T, got m={m}, T={T}")
    x, y = tuple(x), tuple(y)
    total = count_avoid_lgv(x, y, T)
    if total == 0:
        raise DegenerateDenominatorError("no admissible ensemble for these boundary data")
    n = T - m
    out = {}
    for lam in iter_columns(x, y, m, n):
        w = bareiss_det(jacobi_trudi_matrix(x, lam, m))
        if w == 0:
            continue
        w *= bareiss_det(jacobi_trudi_matrix(lam, y, n))
        if w:
            out[lam] = w
    return out, total


def fixed_time_pmf(x: Sequence[int], y: Sequence[int], T: int, m: int) -> dict:
    """Exact law of the column at time ``m`` of the uniform avoiding ensemble
    on [0, T] with entry ``x`` and exit ``y`` (no barriers).

    Returns ``{column: Fraction}``; only columns of positive mass are listed.
    """
    weights, total = fixed_time_weights(x, y, T, m)
    return {lam: Fraction(w, total) for lam, w in weights.items()}


def acceptance_probability(spec: EnsembleSpec, cap: int = DEFAULT_CAP) -> Fraction:
    """Share of independent bridge tuples that land in the avoiding set."""
    free = count_free(spec)
    if free == 0:
        raise DegenerateDenominatorError("some y_i - x_i lies outside [0, T]")
    return Fraction(count_avoid(spec, cap), free)


# -- binomial asymptotics ----------------------------------------------------------

def _check_prob(p):
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")


def log_elem_sym_asymptotic(n: int, N: int, p: float) -> float:
    _check_prob(p)
    x = (N - p * n) / math.sqrt(n)
    return (
        -0.5 * math.log(2 * math.pi)
        - x * x / (2 * p * (1 - p))
        + N * math.log((1 - p) / p)
        - n * math.log(1 - p)
        - 0.5 * math.log(n)
        - 0.5 * math.log(p * (1 - p))
    )


def elem_sym_asymptotic(n: int, N: int, p: float) -> float:
    """Gaussian approximation of C(n, N) around N = pn (correction factor
    dropped). Returns ``inf`` when the value exceeds the float range; use
    :func:`log_elem_sym_asymptotic` for large n."""
    if n < 2 or not 0 <= N <= n:
        raise DomainError("need n >= 2 and 0 <= N <= n")
    try:
        return math.exp(log_elem_sym_asymptotic(n, N, p))
    except OverflowError:
        return math.inf


def _log_bound_shape(n, N, p):
    return N * math.log((1 - p) / p) - n * math.log(1 - p) - 0.5 * math.log(n)


def elem_sym_upper_bound(n: int, N: int, p: float, C: float, c: float) -> bool:
    """Does e_N(1^n) <= C exp(N log((1-p)/p) - n log(1-p) - log(n)/2 - c (N-pn)^2/n)?"""
    _check_prob(p)
    if not 0 <= N <= n:
        return True
    lhs = math.log(math.comb(n, N))
    rhs = math.log(C) + _log_bound_shape(n, N, p) - c * (N - p * n) ** 2 / n
    return lhs <= rhs


def upper_bound_ratio(n: int, p: float, c: float) -> float:
    """max over N of e_N(1^n) divided by the bound without its constant.

    Uses log-gamma for the binomials (absolute error ~1e-12 in the log at
    n = 10^4), so whole sweeps over n stay cheap.
    """
    _check_prob(p)
    N = np.arange(n + 1)
    log_comb = gammaln(n + 1) - gammaln(N + 1) - gammaln(n - N + 1)
    shape = N * math.log((1 - p) / p) - n * math.log(1 - p) - 0.5 * math.log(n)
    return float(np.exp(np.max(log_comb - shape + c * (N - p * n) ** 2 / n)))


def calibrate_upper_bound(p: float, c: float, n_cal: int = 100, margin: float | None = None) -> float:
    """Constant ``C`` for :func:`elem_sym_upper_bound`, fitted at ``n_cal``.

    The fitted ratio still carries an exp(O(n^{-1/2})) factor, so by default it
    is inflated by exp(n_cal^{-1/2}).
    """
    _check_prob(p)
    if margin is None:
        margin = math.exp(1.0 / math.sqrt(n_cal))
    return upper_bound_ratio(n_cal, p, c) * margin
