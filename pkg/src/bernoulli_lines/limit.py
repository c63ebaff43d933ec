"""Limiting density of the diffusively rescaled fixed-time column.

With q = p(1-p), the unnormalised density on the Weyl chamber is

    H(z) = phi(a, z) * psi(b, z) * prod_i exp(-c3 z_i^2)

where phi and psi are confluent exponential determinants built from the
blocks of equal entries of ``a`` and ``b``. Everything is evaluated in log
space with row rescaling, because exp(c * alpha * z) easily spans hundreds of
orders of magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml
from scipy.integrate import cumulative_simpson
from scipy.special import logsumexp

from .errors import ConfigError, DegenerateDenominatorError, DomainError, QuadratureError


def limit_constants(p: float, t: float) -> tuple[float, float, float]:
    """(c1, c2, c3) = (1/(q t), 1/(q (1-t)), 1/(2 q t (1-t))) with q = p(1-p)."""
    if not (0.0 < p < 1.0 and 0.0 < t < 1.0):
        raise DomainError(f"need p, t in (0, 1), got p={p}, t={t}")
    q = p * (1.0 - p)
    return 1.0 / (q * t), 1.0 / (q * (1.0 - t)), 1.0 / (2.0 * q * t * (1.0 - t))


def _is_exact(v) -> bool:
    return isinstance(v, (int, np.integer, Fraction))


def block_structure(v: Sequence[float], tol: float | None = None):
    """Collapse maximal runs of (nearly) equal entries.

    Returns ``(values, multiplicities)``. Integer and rational entries are
    compared exactly; floats are equal when they differ by at most
    ``tol * max(1, |value|)`` (``tol`` defaults to 1e-12).
    """
    v = list(v)
    if not v:
        return (), ()
    rel = 1e-12 if tol is None else tol
    values, mults = [v[0]], [1]
    for i, a in enumerate(v[1:]):
        ref = values[-1]
        if _is_exact(a) and _is_exact(ref):
            same = a == ref
        else:
            same = abs(float(ref) - float(a)) <= rel * max(1.0, abs(float(ref)))
        if same:
            mults[-1] += 1
        elif a > v[i]:
            raise DomainError(f"vector is not weakly decreasing at index {i}: {v}")
        else:
            values.append(a)
            mults.append(1)
    return tuple(values), tuple(mults)


@dataclass(frozen=True)
class LimitSpec:
    p: float
    t: float
    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        b = tuple(float(v) for v in self.b)
        if not a or len(a) != len(b):
            raise DomainError("a and b must be non-empty and of equal length")
        limit_constants(self.p, self.t)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "t", float(self.t))
        # raises on vectors that are not weakly decreasing
        block_structure(a)
        block_structure(b)

    @property
    def k(self) -> int:
        return len(self.a)

    @property
    def q(self) -> float:
        return self.p * (1.0 - self.p)

    @property
    def constants(self):
        return limit_constants(self.p, self.t)

    @property
    def blocks_a(self):
        return block_structure(self.a)

    @property
    def blocks_b(self):
        return block_structure(self.b)

    @property
    def distinct(self) -> bool:
        return max(self.blocks_a[1]) == 1 and max(self.blocks_b[1]) == 1


# -- determinants --------------------------------------------------------------------

def confluent_sign(mults: Sequence[int]) -> int:
    """(-1)^u with u = sum C(m_i, 2); makes the block determinant non-negative
    on the Weyl chamber."""
    return -1 if sum(m * (m - 1) // 2 for m in mults) % 2 else 1


def _log_block_det(values, mults, c, Z):
    """sign and log|det| of the block matrix with rows
    (c z_j)^i exp(c alpha z_j), i < m, for each block, batched over rows of Z."""
    Z = np.asarray(Z, dtype=float)
    N, k = Z.shape
    logmag = np.empty((N, k, k))
    sgn = np.empty((N, k, k))
    cz = c * Z
    with np.errstate(divide="ignore"):
        log_cz = np.log(np.abs(cz))
    sign_cz = np.sign(cz)
    row = 0
    for alpha, m in zip(values, mults):
        base = c * alpha * Z
        for i in range(m):
            if i == 0:
                logmag[:, row, :] = base
                sgn[:, row, :] = 1.0
            else:
                logmag[:, row, :] = base + i * log_cz
                sgn[:, row, :] = sign_cz**i
            row += 1
    shift = logmag.max(axis=2, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    M = sgn * np.exp(logmag - shift)
    s, ld = np.linalg.slogdet(M)
    return s, ld + shift[:, :, 0].sum(axis=1)


def log_H_batch(spec: LimitSpec, Z) -> tuple[np.ndarray, np.ndarray]:
    """(sign, log|H|) for each row of ``Z`` (no ordering indicator).

    The product of the two determinants is invariant under permuting z, so
    this is the symmetric extension of H off the chamber.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    c1, c2, c3 = spec.constants
    va, ma = spec.blocks_a
    vb, mb = spec.blocks_b
    s1, l1 = _log_block_det(va, ma, c1, Z)
    s2, l2 = _log_block_det(vb, mb, c2, Z)
    sign = s1 * s2 * confluent_sign(ma) * confluent_sign(mb)
    return sign, l1 + l2 - c3 * (Z**2).sum(axis=1)


def _has_ties(z) -> bool:
    z = np.sort(np.asarray(z, dtype=float))
    return bool(np.any(z[1:] == z[:-1]))


def H_density(spec: LimitSpec, z: Sequence[float]) -> float:
    """Unnormalised density at ``z``.

    Exactly 0 when two coordinates coincide. Elsewhere the value is
    positive; a negative result can only come from roundoff right next to the
    chamber boundary and is reported as 0.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (spec.k,):
        raise DomainError(f"z must have {spec.k} entries")
    if _has_ties(z):
        return 0.0
    s, l = log_H_batch(spec, z[None, :])
    if s[0] <= 0:
        return 0.0
    return float(np.exp(l[0]))


def log_H_literal(spec: LimitSpec, z):
    """(sign, log|H|) with the determinants exactly as written, i.e. without
    the (-1)^u sign normalisation of :func:`log_H_batch`."""
    s, l = log_H_batch(spec, np.asarray(z, dtype=float)[None, :])
    fix = confluent_sign(spec.blocks_a[1]) * confluent_sign(spec.blocks_b[1])
    return float(s[0] * fix), float(l[0])


# -- normalising constant -----------------------------------------------------------

def log_normalizing_constant_closed(spec: LimitSpec) -> float:
    """log Z_c from the closed form, valid when all entries of a and b are distinct."""
    if not spec.distinct:
        raise DomainError("closed form needs distinct entries in a and b")
    c1, c2, _ = spec.constants
    q, t, k = spec.q, spec.t, spec.k
    a = np.asarray(spec.a)
    b = np.asarray(spec.b)
    G = np.exp(-((b[:, None] - a[None, :]) ** 2) / (2 * q))
    s, ld = np.linalg.slogdet(G)
    if s <= 0:
        raise DegenerateDenominatorError("Gaussian kernel determinant is not positive")
    return (0.5 * k * math.log(2 * math.pi * q * t * (1 - t))
            + 0.5 * c1 * float(a @ a) + 0.5 * c2 * float(b @ b) + ld)


def envelope_box(spec: LimitSpec, tail: float = 30.0) -> float:
    """Half-width L of a box [-L, L]^k outside which H is negligible.

    |H(z)| <= (k!)^2 prod exp(C|z_i| - c3 z_i^2) with C = sum c1|a_i| + sum c2|b_i|;
    each factor peaks at C/(2 c3) and is below exp(-tail) beyond
    C/(2 c3) + sqrt(tail / c3).
    """
    c1, c2, c3 = spec.constants
    C = c1 * sum(abs(v) for v in spec.a) + c2 * sum(abs(v) for v in spec.b)
    return C / (2 * c3) + math.sqrt((tail + 2 * math.log(math.factorial(spec.k))) / c3)


def _gl_box_log_integral(spec: LimitSpec, n: int, L: float, chunk: int = 1 << 17) -> float:
    """log of the integral of the symmetric H over [-L, L]^k by tensor
    Gauss-Legendre with n nodes per axis."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = x * L
    logw = np.log(w * L)
    k = spec.k
    grids = np.meshgrid(*([np.arange(n)] * k), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    parts = []
    for start in range(0, len(idx), chunk):
        block = idx[start:start + chunk]
        Z = x[block]
        s, l = log_H_batch(spec, Z)
        lw = logw[block].sum(axis=1)
        # roundoff can flip the sign of near-zero values at ties; drop them
        keep = s > 0
        if keep.any():
            parts.append(logsumexp(l[keep] + lw[keep]))
    if not parts:
        raise QuadratureError("integrand vanished on every node")
    return float(logsumexp(parts))


def quadrature_log_normalizing_constant(spec: LimitSpec, rtol: float = 1e-6,
                                        n_start: int = 16, max_nodes: int = 2_500_000):
    """log Z_c by quadrature: Z_c = (1/k!) * integral over R^k of the symmetric H.

    The node count per axis doubles until successive estimates agree to
    ``rtol``. Returns ``(log Z_c, nodes_per_axis)``.
    """
    L = envelope_box(spec)
    k = spec.k
    lf = math.lgamma(k + 1)
    n = n_start
    prev = _gl_box_log_integral(spec, n, L) - lf
    while True:
        n *= 2
        if n**k > max_nodes:
            raise QuadratureError(
                f"no convergence to rtol={rtol} within {max_nodes} nodes (k={k})")
        cur = _gl_box_log_integral(spec, n, L) - lf
        if abs(math.expm1(cur - prev)) < rtol:
            return cur, n
        prev = cur


@lru_cache(maxsize=256)
def log_normalizing_constant(spec: LimitSpec) -> float:
    if spec.distinct:
        return log_normalizing_constant_closed(spec)
    return quadrature_log_normalizing_constant(spec)[0]


def normalizing_constant(spec: LimitSpec) -> float:
    """Z_c: closed form for distinct entries, quadrature otherwise."""
    return math.exp(log_normalizing_constant(spec))


def rho(spec: LimitSpec, z: Sequence[float]) -> float:
    """Normalised density: zero unless z_1 > ... > z_k."""
    z = np.asarray(z, dtype=float)
    if np.any(z[:-1] <= z[1:]):
        return 0.0
    s, l = log_H_batch(spec, z[None, :])
    if s[0] <= 0:
        return 0.0
    return float(np.exp(l[0] - log_normalizing_constant(spec)))


def rho_batch(spec: LimitSpec, Z) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    s, l = log_H_batch(spec, Z)
    inside = np.all(Z[:, :-1] > Z[:, 1:], axis=1) & (s > 0)
    out = np.zeros(len(Z))
    out[inside] = np.exp(l[inside] - log_normalizing_constant(spec))
    return out


# -- marginals ---------------------------------------------------------------------

def marginal_density(spec: LimitSpec, i: int, s_grid: Sequence[float], n_nodes: int = 48) -> np.ndarray:
    """Density of the i-th largest coordinate (0-based) under rho at each s.

    Fixing z_i = s, the i coordinates above s range over [s, L] and the rest
    over [-L, s]; by symmetry each box is integrated without ordering and
    divided by the factorials of its dimension.
    """
    k = spec.k
    s_grid = np.asarray(s_grid, dtype=float)
    if k == 1:
        return rho_batch(spec, s_grid[:, None])
    L = envelope_box(spec)
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    n_up, n_down = i, k - 1 - i
    lz = log_normalizing_constant(spec)
    lf = math.lgamma(n_up + 1) + math.lgamma(n_down + 1)
    out = np.zeros(len(s_grid))
    for r, s in enumerate(s_grid):
        if s >= L or s <= -L:
            continue
        axes, logws = [], []
        for _ in range(n_up):
            half = (L - s) / 2
            axes.append(s + half * (x + 1))
            logws.append(np.log(w * half))
        for _ in range(n_down):
            half = (s + L) / 2
            axes.append(-L + half * (x + 1))
            logws.append(np.log(w * half))
        mesh = np.meshgrid(*axes, indexing="ij")
        wmesh = np.meshgrid(*logws, indexing="ij")
        Z = np.column_stack([np.full(mesh[0].size, s)] + [g.ravel() for g in mesh])
        lw = sum(g.ravel() for g in wmesh)
        sg, l = log_H_batch(spec, Z)
        keep = sg > 0
        if keep.any():
            out[r] = math.exp(logsumexp(l[keep] + lw[keep]) - lz - lf)
    return out


def marginal_cdf(spec: LimitSpec, i: int, n_grid: int = 801, n_nodes: int = 48):
    """Tabulated CDF of the i-th coordinate: ``(grid, cdf, mass)``.

    ``mass`` is the integral of the tabulated density before the table is
    normalised to end at exactly 1; it should be within about 1e-6 of 1.
    """
    L = envelope_box(spec)
    grid = np.linspace(-L, L, n_grid)
    dens = marginal_density(spec, i, grid, n_nodes)
    cdf = cumulative_simpson(dens, x=grid, initial=0.0)
    mass = float(cdf[-1])
    cdf = np.clip(cdf / mass, 0.0, 1.0)
    return grid, np.maximum.accumulate(cdf), mass


def normal_marginal(spec: LimitSpec) -> tuple[float, float]:
    """Mean and variance of the k = 1 limit: ((1-t) a + t b, q t (1-t))."""
    if spec.k != 1:
        raise DomainError("only defined for k = 1")
    t = spec.t
    return (1 - t) * spec.a[0] + t * spec.b[0], spec.q * t * (1 - t)


# -- confluent limits ----------------------------------------------------------------

def _perturbed(values, mults, eps, sign):
    out = []
    for alpha, m in zip(values, mults):
        for j in range(1, m + 1):
            out.append(alpha + (m - j + 1) * eps if sign > 0 else alpha - j * eps)
    return tuple(out)


def perturbed_spec(spec: LimitSpec, eps: float, sign: int = 1) -> LimitSpec:
    """Split every block of a and b into distinct entries a distance eps apart
    (upwards for sign=+1, downwards for sign=-1)."""
    va, ma = spec.blocks_a
    vb, mb = spec.blocks_b
    return LimitSpec(spec.p, spec.t, _perturbed(va, ma, eps, sign), _perturbed(vb, mb, eps, sign))


def confluent_limit_constant(mults: Sequence[int], sign: int = 1) -> Fraction:
    """Exact limit of eps^-u det[exp(c a_eps z)] / phi for the perturbation
    used by :func:`perturbed_spec`, where phi has rows (c z)^i exp(c alpha z).

    Per block it is det[o_j^i / i!] over offsets o_j: a Vandermonde
    determinant divided by prod i!, which always equals (-1)^C(m, 2).
    """
    out = Fraction(1)
    for m in mults:
        offs = [m - j + 1 if sign > 0 else -j for j in range(1, m + 1)]
        vdm = 1
        for j1 in range(m):
            for j2 in range(j1 + 1, m):
                vdm *= offs[j2] - offs[j1]
        out *= Fraction(vdm, math.prod(math.factorial(i) for i in range(m)))
    return out


def vandermonde_constant(mults: Sequence[int]) -> Fraction:
    """prod_i (1/m_i!) prod_{j1<j2} (j2 - j1), the textbook normalisation."""
    out = Fraction(1)
    for m in mults:
        v = math.prod(j2 - j1 for j1 in range(1, m + 1) for j2 in range(j1 + 1, m + 1))
        out *= Fraction(v, math.factorial(m))
    return out


def confluent_check(spec_block: LimitSpec, z: Sequence[float], eps: float, sign: int = 1,
                    constant: str = "exact") -> float:
    """eps^-(u+v) H_eps(z) / (K(m) K(n) H_lit(z)) with H_eps the distinct-entry
    density of the perturbed vectors and H_lit the literal block density.

    ``constant="exact"`` uses :func:`confluent_limit_constant` for K, so the
    ratio tends to 1 as eps -> 0. ``constant="vandermonde"`` uses
    :func:`vandermonde_constant` instead.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    z = np.asarray(z, dtype=float)
    ma, mb = spec_block.blocks_a[1], spec_block.blocks_b[1]
    u = sum(m * (m - 1) // 2 for m in ma)
    v = sum(m * (m - 1) // 2 for m in mb)
    pert = perturbed_spec(spec_block, eps, sign)
    if len(set(pert.a)) != pert.k or len(set(pert.b)) != pert.k:
        raise DomainError("eps too large: perturbed entries collide")
    s_lit, l_lit = log_H_literal(spec_block, z)
    if s_lit == 0 or not np.isfinite(l_lit):
        raise DegenerateDenominatorError("H(z) = 0; choose z in the open chamber")
    s_eps, l_eps = log_H_batch(pert, z[None, :])
    if constant == "exact":
        K = confluent_limit_constant(ma, sign) * confluent_limit_constant(mb, sign)
    elif constant == "vandermonde":
        K = vandermonde_constant(ma) * vandermonde_constant(mb)
    else:
        raise ValueError(f"unknown constant {constant!r}")
    sign_total = float(s_eps[0]) * s_lit * (1 if K > 0 else -1)
    return sign_total * math.exp(l_eps[0] - l_lit - (u + v) * math.log(eps) - math.log(abs(K)))


# -- documents ---------------------------------------------------------------------

def limit_spec_from_dict(doc: dict) -> LimitSpec:
    try:
        return LimitSpec(float(doc["p"]), float(doc["t"]),
                         tuple(float(v) for v in doc["a"]), tuple(float(v) for v in doc["b"]))
    except KeyError as exc:
        raise ConfigError(f"limit spec is missing field {exc}") from None


def limit_spec_to_dict(spec: LimitSpec) -> dict:
    return {"p": spec.p, "t": spec.t, "a": list(spec.a), "b": list(spec.b)}


def load_limit_spec(path: str | Path) -> LimitSpec:
    with open(path) as fh:
        return limit_spec_from_dict(yaml.safe_load(fh))
