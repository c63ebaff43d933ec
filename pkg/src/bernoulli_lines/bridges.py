"""Brownian bridge formulas and discretised bridge Monte Carlo.

A bridge with diffusion parameter sigma is B(t) = sigma (W(t) - t W(1)) on
[0, 1]; its covariance is sigma^2 (min(r, s) - r s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def _q(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    return p * (1.0 - p)


def bb_max_tail(p: float, C: float) -> float:
    """P(max B >= C) for a bridge with sigma^2 = p(1-p)."""
    if C <= 0:
        raise DomainError("C must be positive")
    return math.exp(-2.0 * C * C / _q(p))


def bb_abs_max_tail(p: float, C: float, term_tol: float = 1e-16) -> float:
    """P(max |B| >= C) by the alternating series, stopped once a term drops
    below ``term_tol``."""
    if C <= 0:
        raise DomainError("C must be positive")
    a = 2.0 * C * C / _q(p)
    total, n = 0.0, 1
    while True:
        term = math.exp(-a * n * n)
        if term < term_tol:
            break
        total += term if n % 2 else -term
        n += 1
    return min(1.0, 2.0 * total)


def bridge_covariance(r: float, s: float, sigma: float = 1.0) -> float:
    return sigma * sigma * (min(r, s) - r * s)


def sample_brownian_bridge(rng, n_grid: int, sigma: float = 1.0, size: int | None = None) -> np.ndarray:
    """Bridge values on ``linspace(0, 1, n_grid)``; both endpoints are exactly 0.

    Returns shape (n_grid,) or (size, n_grid).
    """
    if n_grid < 2:
        raise DomainError("n_grid must be at least 2")
    gen = rng.gen
    m = 1 if size is None else size
    t = np.linspace(0.0, 1.0, n_grid)
    W = np.zeros((m, n_grid))
    inc = gen.standard_normal((m, n_grid - 1))
    np.cumsum(inc * math.sqrt(1.0 / (n_grid - 1)), axis=1, out=W[:, 1:])
    B = sigma * (W - t[None, :] * W[:, -1:])
    B[:, 0] = 0.0
    B[:, -1] = 0.0
    return B[0] if size is None else B


@dataclass
class McEstimate:
    mean: float
    stderr: float
    n: int


def bridge_max_exceedance(rng, n_bridges: int, n_grid: int, sigma: float, level: float,
                          absolute: bool = False, batch: int = 1000) -> McEstimate:
    """Fraction of discretised bridges whose (absolute) maximum reaches
    ``level``. The grid misses excursions between nodes, so the estimate is
    biased low by O(n_grid^-1/2)."""
    hits, done = 0, 0
    while done < n_bridges:
        m = min(batch, n_bridges - done)
        B = sample_brownian_bridge(rng, n_grid, sigma, size=m)
        mx = np.abs(B).max(axis=1) if absolute else B.max(axis=1)
        hits += int((mx >= level).sum())
        done += m
    p = hits / n_bridges
    return McEstimate(p, math.sqrt(p * (1 - p) / n_bridges), n_bridges)


def empirical_covariance(samples: np.ndarray, i: int, j: int) -> McEstimate:
    """Mean of X_i X_j for centred samples, with its standard error."""
    prod = samples[:, i] * samples[:, j]
    n = len(prod)
    return McEstimate(float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(n)), n)


def two_bridge_process(rng, tau: float, n_left: int, n_right: int, sigma: float = 1.0,
                       size: int = 1):
    """Assemble a bridge from a Gaussian midpoint value and two independent
    bridges, split at ``tau``.

    xi ~ N(0, sigma^2 tau (1 - tau)); left piece u/tau xi + B1(u/tau) with
    B1 of parameter sigma sqrt(tau); right piece (1-u)/(1-tau) xi + B2(...)
    with parameter sigma sqrt(1-tau). Returns ``(grid, samples)``.
    """
    if not 0.0 < tau < 1.0:
        raise DomainError("tau must lie in (0, 1)")
    gen = rng.gen
    xi = gen.standard_normal(size) * sigma * math.sqrt(tau * (1 - tau))
    B1 = sample_brownian_bridge(rng, n_left, sigma * math.sqrt(tau), size=size)
    B2 = sample_brownian_bridge(rng, n_right, sigma * math.sqrt(1 - tau), size=size)
    v1 = np.linspace(0.0, 1.0, n_left)
    v2 = np.linspace(0.0, 1.0, n_right)
    left = v1[None, :] * xi[:, None] + B1
    right = (1.0 - v2[None, :]) * xi[:, None] + B2
    grid = np.concatenate([tau * v1, tau + (1 - tau) * v2[1:]])
    return grid, np.concatenate([left, right[:, 1:]], axis=1)


def bridge_difference(rng, n_grid: int, sigma: float = 1.0, size: int = 1):
    """(B1 - B2) / sqrt(2) for independent bridges of parameter ``sigma``."""
    B1 = sample_brownian_bridge(rng, n_grid, sigma, size=size)
    B2 = sample_brownian_bridge(rng, n_grid, sigma, size=size)
    return (B1 - B2) / math.sqrt(2.0)
