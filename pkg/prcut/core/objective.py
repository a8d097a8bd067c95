"""
Probabilistic ratio-cut objective.

Conventions (fixed here, tested in tests/test_objective.py):

* L_rc is the summation form Σ_ℓ (1/p̄_ℓ) Σ_ij W_ij (P_iℓ + P_jℓ - 2 P_iℓ P_jℓ).
  The trace form Tr(p̄⁻¹ (1 - P)ᵀ W P) is exactly half of it on symmetric W.
* The expected ratio-cut sums over ordered pairs, so on one-hot P it equals
  Σ_ℓ cut(C_ℓ) / |C_ℓ|, twice `graph.ratio_cut`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from prcut import config
from prcut.core.graph import SparseSimilarity
from prcut.core.poisson_quadrature import gauss_legendre_unit, order_for_degree
from prcut.errors import CollapseError, GraphError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

GRAD_MODES = ("analytic", "row-local")
# earlier name of the row-local mode, still accepted
GRAD_MODE_ALIASES = {"paper-literal": "row-local"}

WeightsLike = Union[SparseSimilarity, np.ndarray]

_CLAMP = 1.0 - 1e-15
_ENUMERATION_MAX_N = 16


@dataclass(frozen=True, eq=False)
class AssignmentMatrix:
    """Row-stochastic n×k matrix of cluster-membership probabilities."""

    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] == 0 or P.shape[1] == 0:
            raise ShapeError(f"assignment matrix must be a non-empty n×k array, got {P.shape}")
        if not np.all(np.isfinite(P)) or np.any(P < 0.0) or np.any(P > 1.0):
            raise ValidationError("assignment probabilities must lie in [0, 1]")
        worst = float(np.max(np.abs(P.sum(axis=1) - 1.0)))
        if worst > config.ROW_SUM_TOL:
            raise ValidationError(f"rows must sum to 1 (max deviation {worst:.3g})")
        object.__setattr__(self, "P", P)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def k(self) -> int:
        return self.P.shape[1]

    def column_means(self) -> np.ndarray:
        return self.P.mean(axis=0)


@dataclass(frozen=True, eq=False)
class ClusterMassState:
    """Moving-average estimate p̄ of the cluster masses."""

    pbar: np.ndarray
    step: int = 0
    beta: float = config.BETA

    def __post_init__(self):
        pbar = np.asarray(self.pbar, dtype=np.float64).ravel()
        if self.step < 0:
            raise ValidationError("step must be >= 0")
        if not self.beta > 0:
            raise ValidationError("beta must be > 0")
        object.__setattr__(self, "pbar", pbar)

    @classmethod
    def uniform(cls, k: int, beta: float = config.BETA) -> "ClusterMassState":
        return cls(np.full(k, 1.0 / k), 0, beta)


@dataclass(frozen=True)
class LossBreakdown:
    step: int
    lrc: float
    kl: float
    total: float
    w_norm: float
    pbar: Tuple[float, ...]

    def to_record(self) -> dict:
        return {
            "step": self.step,
            "lrc": self.lrc,
            "kl": self.kl,
            "total": self.total,
            "w_norm": self.w_norm,
            "pbar": list(self.pbar),
        }


def _dense_weights(S: WeightsLike) -> np.ndarray:
    if isinstance(S, SparseSimilarity):
        return S.dense()
    W = np.asarray(S, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ShapeError(f"expected a square weight matrix, got {W.shape}")
    if np.any(np.diag(W) != 0):
        raise GraphError("W_ii must be 0")
    return W


def _column_probs(P, n: int) -> np.ndarray:
    P = P.P if isinstance(P, AssignmentMatrix) else np.asarray(P, dtype=np.float64)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] != n:
        raise ShapeError(f"P has {P.shape[0]} rows for a graph of {n} vertices")
    if np.any(P < 0.0) or np.any(P > 1.0):
        raise ValidationError("probabilities must lie in [0, 1]")
    return P


def _column_expected_rcut(W: np.ndarray, p: np.ndarray, nodes: np.ndarray, weights: np.ndarray) -> float:
    # I_ij = Σ_q s_q exp(Σ_m log(1 - p_m t_q) - log(1 - p_i t_q) - log(1 - p_j t_q))
    logs = np.log1p(-np.minimum(np.outer(p, nodes), _CLAMP))
    total = logs.sum(axis=0)
    shift = (-logs).max(axis=0)
    A = np.exp(-logs - shift)
    scaled = weights * np.exp(total + 2.0 * shift)
    integral = (A * scaled) @ A.T
    g = p[:, None] + p[None, :] - 2.0 * np.outer(p, p)
    return float(0.5 * np.sum(W * g * integral))


def exact_expected_rcut(S: WeightsLike, P) -> float:
    """E[RCut] of the random clustering with independent memberships P (exact).

    Cost O(c_n n²) per column through per-node log sums; oracle use only.
    """
    W = _dense_weights(S)
    n = W.shape[0]
    if n < 3:
        raise GraphError("the expected ratio-cut needs n >= 3")
    if n > config.EXACT_RCUT_MAX_N:
        raise GraphError(f"exact expected ratio-cut is limited to n <= {config.EXACT_RCUT_MAX_N}")
    P = _column_probs(P, n)
    c = order_for_degree(n - 2)
    rule = gauss_legendre_unit(c, max_order=c)
    return float(sum(_column_expected_rcut(W, P[:, l], rule.nodes, rule.weights) for l in range(P.shape[1])))


def enumerate_expected_rcut(W: np.ndarray, p: np.ndarray) -> float:
    """Σ over all 2ⁿ memberships of P(a) · (1/2) Σ_ij W_ij (f_i - f_j)², f = a / √|C|."""
    W = _dense_weights(W)
    p = np.asarray(p, dtype=np.float64).ravel()
    n = p.size
    if n != W.shape[0]:
        raise ShapeError("p and W disagree on n")
    if n > _ENUMERATION_MAX_N:
        raise ValidationError(f"enumeration is limited to n <= {_ENUMERATION_MAX_N}")
    A = (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
    prob = np.prod(np.where(A == 1, p, 1.0 - p), axis=1)
    sizes = A.sum(axis=1)
    F = A / np.sqrt(np.maximum(sizes, 1))[:, None]
    d = W.sum(axis=1)
    values = (F * F) @ d - np.einsum("ai,ij,aj->a", F, W, F)
    return float(np.dot(prob, values))


def _check_block(W_block, P_l, P_r) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    W = np.asarray(W_block, dtype=np.float64)
    Pl = np.asarray(P_l, dtype=np.float64)
    Pr = np.asarray(P_r, dtype=np.float64)
    if W.ndim != 2 or Pl.ndim != 2 or Pr.ndim != 2:
        raise ShapeError("W_block, P_l and P_r must be 2-D")
    if W.shape != (Pl.shape[0], Pr.shape[0]) or Pl.shape[1] != Pr.shape[1]:
        raise ShapeError(f"shape mismatch: W {W.shape}, P_l {Pl.shape}, P_r {Pr.shape}")
    return W, Pl, Pr


def _check_pbar(pbar, k: int) -> np.ndarray:
    pbar = np.asarray(pbar, dtype=np.float64).ravel()
    if pbar.shape != (k,):
        raise ShapeError(f"p̄ has {pbar.size} entries for k={k}")
    if np.any(pbar < config.PBAR_FLOOR):
        worst = int(np.argmin(pbar))
        raise CollapseError(
            f"cluster {worst} mass {pbar[worst]:.3g} fell below {config.PBAR_FLOOR:g}: assignments collapsed"
        )
    return pbar


def resolve_grad_mode(mode: str) -> str:
    mode = GRAD_MODE_ALIASES.get(mode, mode)
    if mode not in GRAD_MODES:
        raise ValidationError(f"unknown gradient mode {mode!r}, expected one of {GRAD_MODES}")
    return mode


def _pair_sums(W, Pl: np.ndarray, Pr: np.ndarray) -> np.ndarray:
    """Per column Σ_ij W_ij (Pl_i (1 - Pr_j) + (1 - Pl_i) Pr_j).

    Every term is nonnegative, so one-hot inputs that cut nothing give exactly 0.
    """
    return np.sum(Pl * np.asarray(W @ (1.0 - Pr)) + (1.0 - Pl) * np.asarray(W @ Pr), axis=0)


def lrc_loss(W_block, P_l, P_r, pbar, normalize: bool = False) -> float:
    """Batch L_rc; divided by ‖W_block‖₁ when `normalize` (0 for an edgeless block)."""
    W, Pl, Pr = _check_block(W_block, P_l, P_r)
    pbar = _check_pbar(pbar, Pl.shape[1])
    loss = float(np.sum(_pair_sums(W, Pl, Pr) / pbar))
    if normalize:
        w_norm = float(W.sum())
        return loss / w_norm if w_norm > 0 else 0.0
    return loss


def lrc_grad(
    W_block,
    P_l,
    P_r,
    pbar,
    n_eff: int,
    mode: str = "analytic",
    normalize: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient of `lrc_loss` w.r.t. P_l and P_r.

    p̄ is the moving-average constant except for its 1/n_eff dependence on
    every entry of the batch. "row-local" keeps a per-row second term
    for comparison; it is not the derivative of the loss.
    """
    mode = resolve_grad_mode(mode)
    if n_eff < 1:
        raise ValidationError("n_eff must be >= 1")
    W, Pl, Pr = _check_block(W_block, P_l, P_r)
    pbar = _check_pbar(pbar, Pl.shape[1])

    first_l = (W @ (1.0 - 2.0 * Pr)) / pbar
    first_r = (W.T @ (1.0 - 2.0 * Pl)) / pbar
    if mode == "analytic":
        second = _pair_sums(W, Pl, Pr) / (n_eff * pbar**2)
        dPl = first_l - second
        dPr = first_r - second
    else:
        WPr = W @ Pr
        WtPl = W.T @ Pl
        rows_l = W.sum(axis=1)[:, None] * Pl + WPr - 2.0 * Pl * WPr
        rows_r = WtPl + W.sum(axis=0)[:, None] * Pr - 2.0 * Pr * WtPl
        dPl = first_l - rows_l / (n_eff * pbar**2)
        dPr = first_r - rows_r / (n_eff * pbar**2)

    if normalize:
        w_norm = float(W.sum())
        if w_norm == 0:
            return np.zeros_like(Pl), np.zeros_like(Pr)
        dPl, dPr = dPl / w_norm, dPr / w_norm
    return dPl, dPr


def offline_lrc_grad(S: WeightsLike, P) -> np.ndarray:
    """Gradient of the full-graph L_rc with p̄ = column means of P."""
    W = S.matrix if isinstance(S, SparseSimilarity) else _dense_weights(S)
    n = W.shape[0]
    P = _column_probs(P, n)
    pbar = P.mean(axis=0)
    if np.any(pbar == 0):
        raise CollapseError("a column of P has zero mean")
    sums = _pair_sums(W, P, P)
    return 2.0 * np.asarray(W @ (1.0 - 2.0 * P)) / pbar - sums / (n * pbar**2)


def full_lrc(S: WeightsLike, P) -> float:
    """Full-graph L_rc with p̄ = column means (the function `offline_lrc_grad` differentiates)."""
    W = _dense_weights(S)
    P = _column_probs(P, W.shape[0])
    pbar = P.mean(axis=0)
    if np.any(pbar == 0):
        raise CollapseError("a column of P has zero mean")
    return float(np.sum(_pair_sums(W, P, P) / pbar))


def trace_lrc(W: np.ndarray, P: np.ndarray, pbar: np.ndarray) -> float:
    """Tr(p̄⁻¹ (1 - P)ᵀ W P)."""
    W = np.asarray(W, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    return float(np.sum(np.sum((1.0 - P) * (W @ P), axis=0) / np.asarray(pbar)))


def rcut_upper_bound(S: WeightsLike, P) -> float:
    """(e² / 2n) Σ_ℓ (1/p̄_ℓ) Σ_ij W_ij (p_i + p_j - 2 p_i p_j); +inf if a used column has p̄ = 0."""
    W = _dense_weights(S)
    n = W.shape[0]
    P = _column_probs(P, n)
    pbar = P.mean(axis=0)
    sums = _pair_sums(W, P, P)
    total = 0.0
    for s, pb in zip(sums, pbar):
        if pb == 0.0:
            if s > 0:
                return math.inf
            continue
        total += s / pb
    return math.e**2 / (2.0 * n) * total


def kl_regularizer(pbar_batch, k: int) -> Tuple[float, np.ndarray]:
    """KL(p̄ ‖ uniform) = Σ p̄_ℓ log(k p̄_ℓ) and its gradient w.r.t. p̄."""
    q = np.asarray(pbar_batch, dtype=np.float64).ravel()
    if q.shape != (k,):
        raise ShapeError(f"p̄ has {q.size} entries for k={k}")
    if np.any(q < 0):
        raise ValidationError("cluster masses must be nonnegative")
    total = q.sum()
    if total <= 0:
        raise ValidationError("cluster masses sum to zero")
    q = q / total
    positive = q > 0
    value = float(np.sum(q[positive] * np.log(k * q[positive])))
    grad = np.log(k * np.maximum(q, config.KL_LOG_FLOOR)) + 1.0
    return max(value, 0.0), grad


def update_pbar(state: ClusterMassState, batch_mean) -> ClusterMassState:
    """p̄_t = (1 - β_t) p̄_{t-1} + β_t p̄_batch with β_t = min(1, β/t)."""
    batch_mean = np.asarray(batch_mean, dtype=np.float64).ravel()
    if batch_mean.shape != state.pbar.shape:
        raise ShapeError("batch mean and p̄ have different lengths")
    step = state.step + 1
    beta_t = min(1.0, state.beta / step)
    pbar = (1.0 - beta_t) * state.pbar + beta_t * batch_mean
    return ClusterMassState(pbar, step, state.beta)
