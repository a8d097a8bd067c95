"""
Poisson-binomial expectations.

For Z = Σ a_i with independent a_i ~ Bernoulli(α_i):

    E[1 / (1 + Z)] = ∫_0^1 Π_i (1 - α_i t) dt

The integrand is a polynomial of degree m, so a Gauss-Legendre rule with
⌊m/2⌋ + 1 nodes integrates it exactly. The PMF sum and the inclusion-exclusion
expansion give two independent ways to get the same number.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
from scipy import integrate

from prcut import config
from prcut.errors import ProfileError, QuadratureError

logger = logging.getLogger(__name__)

METHODS = ("quadrature", "pmf", "inclusion-exclusion")

_NEWTON_TOL = 1e-15
_NEWTON_MAX_ITER = 100
_CLAMP = 1.0 - 1e-15


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Legendre nodes t_q and weights s_q on [0, 1]."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values: np.ndarray) -> float:
        """Σ_q s_q f(t_q) given f evaluated at the nodes."""
        return float(np.dot(self.weights, values))


@dataclass(frozen=True, eq=False)
class BernoulliProfile:
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64).ravel()
        if not np.all(np.isfinite(alpha)):
            raise ProfileError("Bernoulli parameters must be finite")
        if np.any(alpha < 0.0) or np.any(alpha > 1.0):
            raise ProfileError("Bernoulli parameters must lie in [0, 1]")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @property
    def m(self) -> int:
        return int(self.alpha.size)

    @property
    def mean(self) -> float:
        return float(self.alpha.mean()) if self.m else 0.0


ProfileLike = Union[BernoulliProfile, Sequence[float], np.ndarray]


def as_profile(alpha: ProfileLike) -> BernoulliProfile:
    return alpha if isinstance(alpha, BernoulliProfile) else BernoulliProfile(np.asarray(alpha, dtype=np.float64))


def _legendre_roots(c: int) -> tuple[np.ndarray, np.ndarray]:
    """Roots of P_c on [-1, 1] and P_c' at the roots (Newton on the recurrence)."""
    i = np.arange(1, c + 1)
    x = np.cos(np.pi * (i - 0.25) / (c + 0.5))
    dp = np.ones_like(x)
    for _ in range(_NEWTON_MAX_ITER):
        p_prev, p = np.ones_like(x), x.copy()
        for j in range(2, c + 1):
            p_prev, p = p, ((2 * j - 1) * x * p - (j - 1) * p_prev) / j
        dp = c * (x * p - p_prev) / (x * x - 1.0)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) <= _NEWTON_TOL:
            break
    # derivative at the converged roots for the weights
    p_prev, p = np.ones_like(x), x.copy()
    for j in range(2, c + 1):
        p_prev, p = p, ((2 * j - 1) * x * p - (j - 1) * p_prev) / j
    dp = c * (x * p - p_prev) / (x * x - 1.0)
    return x, dp


@lru_cache(maxsize=None)
def _unit_rule(c: int) -> QuadratureRule:
    x, dp = _legendre_roots(c)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    nodes = (x[order] + 1.0) / 2.0
    weights = w[order] / 2.0
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(c, nodes, weights)


def gauss_legendre_unit(c: int, max_order: int = config.MAX_QUADRATURE_ORDER) -> QuadratureRule:
    """c-point Gauss-Legendre rule mapped to [0, 1]; memoized per order."""
    if c < 1:
        raise QuadratureError(f"quadrature order must be >= 1, got {c}")
    if c > max_order:
        raise QuadratureError(f"quadrature order {c} exceeds the configured maximum {max_order}")
    return _unit_rule(int(c))


def order_for_degree(m: int) -> int:
    """Smallest c with 2c - 1 >= m."""
    return m // 2 + 1


def product_at_nodes(alpha: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Π_i (1 - α_i t) for every t, evaluated as exp(Σ log(1 - α_i t)).

    Exact zero factors (α_i t = 1 at t = 1) make the product 0; α_i t rounding
    up to 1 at an interior node is clamped just below 1.
    """
    at = np.multiply.outer(np.asarray(t, dtype=np.float64), alpha)
    interior = (np.asarray(t) < 1.0)[:, None]
    hits = at >= 1.0
    at = np.where(hits & interior, _CLAMP, at)
    zero = hits & ~interior
    logs = np.log1p(-np.where(zero, 0.0, at)).sum(axis=1)
    out = np.exp(logs)
    out[zero.any(axis=1)] = 0.0
    return out


def pb_pmf(alpha: ProfileLike) -> np.ndarray:
    """P(Z = i), i = 0..m, by iterative convolution."""
    prof = as_profile(alpha)
    pmf = np.array([1.0])
    for a in prof.alpha:
        nxt = np.zeros(pmf.size + 1)
        nxt[:-1] = pmf * (1.0 - a)
        nxt[1:] += pmf * a
        pmf = nxt
    return pmf


def pb_pmf_enumerate(alpha: ProfileLike) -> np.ndarray:
    """PMF by summing over every subset of active variables (m <= 12)."""
    prof = as_profile(alpha)
    m = prof.m
    if m > config.INCLUSION_EXCLUSION_MAX_M:
        raise ProfileError(f"subset enumeration limited to m <= {config.INCLUSION_EXCLUSION_MAX_M}")
    a = prof.alpha
    pmf = np.zeros(m + 1)
    for i in range(m + 1):
        for subset in itertools.combinations(range(m), i):
            mask = np.zeros(m, dtype=bool)
            mask[list(subset)] = True
            pmf[i] += np.prod(a[mask]) * np.prod(1.0 - a[~mask])
    return pmf


def _inclusion_exclusion(a: np.ndarray) -> float:
    total = 0.0
    for i in range(a.size + 1):
        e_i = sum(math.prod(a[list(s)]) for s in itertools.combinations(range(a.size), i))
        total += (-1) ** i / (1 + i) * e_i
    return total


def pb_inv1p_expect(alpha: ProfileLike, method: str = "quadrature") -> float:
    """E[1 / (1 + Z)] for a Poisson-binomial Z."""
    if method not in METHODS:
        raise ProfileError(f"unknown method {method!r}, expected one of {METHODS}")
    prof = as_profile(alpha)
    m = prof.m
    if method == "inclusion-exclusion" and m > config.INCLUSION_EXCLUSION_MAX_M:
        raise ProfileError(
            f"inclusion-exclusion is limited to m <= {config.INCLUSION_EXCLUSION_MAX_M}, got m={m}"
        )
    if m == 0:
        return 1.0
    if method == "pmf":
        return float(np.dot(pb_pmf(prof), 1.0 / np.arange(1, m + 2)))
    if method == "inclusion-exclusion":
        return float(_inclusion_exclusion(prof.alpha))

    c = order_for_degree(m)
    if m > config.EXACT_PATH_MAX_M:
        logger.warning("quadrature with m=%d is past the validated range (m <= %d)", m, config.EXACT_PATH_MAX_M)
    rule = gauss_legendre_unit(c, max_order=max(c, config.MAX_QUADRATURE_ORDER))
    return rule.integrate(product_at_nodes(prof.alpha, rule.nodes))


def integral_upper_bound(alpha: ProfileLike) -> float:
    """1 / ((m + 1) ᾱ), +inf when ᾱ = 0."""
    prof = as_profile(alpha)
    if prof.m < 1:
        raise ProfileError("the integral bound needs m >= 1")
    if prof.mean == 0.0:
        return math.inf
    return 1.0 / ((prof.m + 1) * prof.mean)


def uniform_grid_integral(alpha: ProfileLike, steps: int) -> float:
    """Right-endpoint estimate (1/T) Σ_{t=1..T} Π(1 - α_i t/T); inexact, for comparison."""
    if steps < 1:
        raise ProfileError("steps must be >= 1")
    prof = as_profile(alpha)
    t = np.arange(1, steps + 1) / steps
    return float(product_at_nodes(prof.alpha, t).mean())


def _power_integral(a: np.ndarray, power: float) -> float:
    a = a[a > 0]
    if a.size == 0:
        return 1.0

    def integrand(t: float) -> float:
        return math.exp(power * float(np.log1p(-a * t).sum())) if t < 1.0 or a.max() < 1.0 else 0.0

    value, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10, limit=200)
    return value


def batch_power_samples(alpha: ProfileLike, inclusion_prob: float, samples: int, seed: int) -> np.ndarray:
    """∫ Π_{s∈S} (1 - α_s t)^{1/γ} dt for `samples` random subsets S.

    Each index enters S independently with probability γ.
    """
    prof = as_profile(alpha)
    if not 0.0 < inclusion_prob < 1.0:
        raise ProfileError("inclusion probability must lie in (0, 1)")
    if samples < 1:
        raise ProfileError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    masks = rng.random((samples, prof.m)) < inclusion_prob
    power = 1.0 / inclusion_prob
    return np.array([_power_integral(prof.alpha[mask], power) for mask in masks])


def batch_power_bound(alpha: ProfileLike, inclusion_prob: float, samples: int, seed: int) -> float:
    """Monte-Carlo estimate of E_S[∫ Π_{s∈S} (1 - α_s t)^{1/γ} dt]."""
    return float(batch_power_samples(alpha, inclusion_prob, samples, seed).mean())
