"""
Self-check suites run by `prcut verify`.

Each suite compares an implementation against an independent oracle on
seeded random instances and reports the worst discrepancy it saw.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly

from prcut.core import objective
from prcut.core.graph import Partition, SparseSimilarity, ratio_cut
from prcut.core.metrics import ari, nmi, unsupervised_accuracy
from prcut.core.neural_model import MlpSpec, backward, forward, init_mlp
from prcut.core.poisson_quadrature import (
    batch_power_samples,
    gauss_legendre_unit,
    integral_upper_bound,
    pb_inv1p_expect,
)

logger = logging.getLogger(__name__)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    cases: int
    worst: float
    seconds: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name}: {self.cases} cases, worst {self.worst:.3g} ({self.seconds:.2f}s)"
        return f"{text} - {self.detail}" if self.detail else text


def random_profile(rng: np.random.Generator, max_m: int) -> np.ndarray:
    """Mix of interior, near-0 and exact 0/1 Bernoulli parameters."""
    m = int(rng.integers(1, max_m + 1))
    alpha = rng.random(m)
    kinds = rng.integers(0, 5, size=m)
    alpha[kinds == 0] = 0.0
    alpha[kinds == 1] = 1.0
    alpha[kinds == 2] *= 1e-6
    return alpha


def random_weights(rng: np.random.Generator, n: int, density: float = 0.6) -> np.ndarray:
    W = rng.random((n, n)) * (rng.random((n, n)) < density)
    W = np.triu(W, 1)
    return W + W.T


def random_assignment(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    logits = rng.normal(size=(n, k))
    P = np.exp(logits - logits.max(axis=1, keepdims=True))
    return P / P.sum(axis=1, keepdims=True)


def moving_pbar(pbar0: np.ndarray, Pl0, Pr0, Pl, Pr, n_eff: int) -> np.ndarray:
    """p̄ seen as a function of the batch: frozen value plus its 1/n_eff dependence."""
    return pbar0 + ((Pl - Pl0).sum(axis=0) + (Pr - Pr0).sum(axis=0)) / n_eff


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def _suite(name: str, fn: Callable[[np.random.Generator], Tuple[bool, int, float, str]], seed: int) -> SuiteResult:
    tic = time.perf_counter()
    passed, cases, worst, detail = fn(np.random.default_rng(seed))
    return SuiteResult(name, passed, cases, worst, time.perf_counter() - tic, detail)


def check_oracle_identity(rng: np.random.Generator, cases: int = 500):
    worst = 0.0
    for _ in range(cases):
        alpha = random_profile(rng, 12)
        values = [pb_inv1p_expect(alpha, method) for method in ("quadrature", "pmf", "inclusion-exclusion")]
        worst = max(worst, max(abs(a - b) for a, b in itertools.combinations(values, 2)))
    return worst <= 1e-9, cases, worst, "quadrature vs PMF vs inclusion-exclusion"


def check_quadrature_exactness(rng: np.random.Generator):
    worst, cases = 0.0, 0
    for c in range(1, 33):
        rule = gauss_legendre_unit(c)
        for _ in range(5):
            coeffs = rng.uniform(-1.0, 1.0, size=2 * c)
            exact = float(np.sum(coeffs / np.arange(1, 2 * c + 1)))
            worst = max(worst, abs(rule.integrate(npoly.polyval(rule.nodes, coeffs)) - exact))
            cases += 1
    return worst <= 1e-12, cases, worst, "degree 2c-1 polynomials, c = 1..32"


def check_integral_bound(rng: np.random.Generator, cases: int = 1000):
    worst = -math.inf
    for _ in range(cases):
        alpha = random_profile(rng, 64)
        if alpha.mean() == 0.0:
            alpha[0] = rng.random()
        worst = max(worst, pb_inv1p_expect(alpha) - integral_upper_bound(alpha))
    return worst <= 1e-12, cases, worst, "E[1/(1+Z)] - 1/((m+1)ᾱ)"


def check_rcut_bound_chain(rng: np.random.Generator, cases: int = 200):
    worst = -math.inf
    for _ in range(cases):
        n = int(rng.integers(3, 13))
        k = int(rng.integers(1, 4))
        W = random_weights(rng, n)
        P = random_assignment(rng, n, k)
        exact = objective.exact_expected_rcut(W, P)
        bound = objective.rcut_upper_bound(W, P)
        worst = max(worst, exact - bound * (1.0 + 1e-12))
    return worst <= 0.0, cases, worst, "exact expected ratio-cut minus its upper bound"


def check_batch_bound(rng: np.random.Generator, cases: int = 50, samples: int = 200):
    worst = -math.inf
    for _ in range(cases):
        alpha = rng.random(int(rng.integers(4, 40)))
        gamma = float(rng.uniform(0.3, 0.9))
        draws = batch_power_samples(alpha, gamma, samples, int(rng.integers(2**31)))
        stderr = draws.std(ddof=1) / math.sqrt(samples)
        worst = max(worst, pb_inv1p_expect(alpha) - (draws.mean() + 3.0 * stderr))
    return worst <= 0.0, cases, worst, "full integral minus batch estimate (+3 standard errors)"


def check_expectation_enumeration(rng: np.random.Generator, cases: int = 100):
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(3, 11))
        W = random_weights(rng, n)
        p = rng.random(n)
        worst = max(worst, abs(objective.exact_expected_rcut(W, p) - objective.enumerate_expected_rcut(W, p)))
    # one-hot P collapses to the deterministic ratio-cut over ordered pairs
    for _ in range(20):
        n = int(rng.integers(4, 11))
        W = random_weights(rng, n, density=0.8)
        labels = np.concatenate([np.arange(2), rng.integers(0, 2, size=n - 2)])
        part = Partition(labels, k=2)
        P = np.eye(2)[labels]
        expected = 2.0 * ratio_cut(SparseSimilarity.from_dense(W), part)
        worst = max(worst, abs(objective.exact_expected_rcut(W, P) - expected))
    return worst <= 1e-9, cases + 20, worst, "quadrature path vs 2^n enumeration"


def _fd_block_grad(W, Pl, Pr, pbar0, n_eff, eps=1e-6):
    def loss(Pl_, Pr_):
        return objective.lrc_loss(W, Pl_, Pr_, moving_pbar(pbar0, Pl, Pr, Pl_, Pr_, n_eff))

    gl, gr = np.zeros_like(Pl), np.zeros_like(Pr)
    for grad, which in ((gl, 0), (gr, 1)):
        for idx in np.ndindex(grad.shape):
            up, down = [Pl.copy(), Pr.copy()], [Pl.copy(), Pr.copy()]
            up[which][idx] += eps
            down[which][idx] -= eps
            grad[idx] = (loss(*up) - loss(*down)) / (2 * eps)
    return gl, gr


def check_gradients(rng: np.random.Generator, cases: int = 50):
    worst = 0.0
    ok = True
    for _ in range(cases):
        b, k = int(rng.integers(3, 7)), int(rng.integers(2, 4))
        W = rng.random((b, b))
        Pl, Pr = random_assignment(rng, b, k), random_assignment(rng, b, k)
        pbar = rng.uniform(0.2, 0.6, size=k)
        gl, gr = objective.lrc_grad(W, Pl, Pr, pbar, b)
        fl, fr = _fd_block_grad(W, Pl, Pr, pbar, b)
        err = max(relative_error(gl, fl), relative_error(gr, fr))
        ok &= err <= 1e-6
        worst = max(worst, err)

        n = int(rng.integers(3, 8))
        Wf = random_weights(rng, n)
        P = random_assignment(rng, n, k)
        g = objective.offline_lrc_grad(Wf, P)
        f = np.zeros_like(P)
        for idx in np.ndindex(P.shape):
            up, down = P.copy(), P.copy()
            up[idx] += 1e-6
            down[idx] -= 1e-6
            f[idx] = (objective.full_lrc(Wf, up) - objective.full_lrc(Wf, down)) / 2e-6
        err = relative_error(g, f)
        ok &= err <= 1e-6
        worst = max(worst, err)

        err = network_gradient_error(rng)
        ok &= err <= 1e-5
        worst = max(worst, err)
    return ok, 3 * cases, worst, "analytic vs central differences (batch, offline, network)"


def network_gradient_error(rng: np.random.Generator, eps: float = 1e-6) -> float:
    """Backward pass of Σ dP ⊙ P against central differences on every parameter."""
    p, k = int(rng.integers(2, 5)), int(rng.integers(2, 4))
    widths = (p, int(rng.integers(2, 5)), k)
    model = init_mlp(MlpSpec(widths, weight_norm_first_last=bool(rng.integers(2))), int(rng.integers(2**31)))
    X = rng.normal(size=(4, p))
    dP = rng.normal(size=(4, k))
    _, cache = forward(model, X)
    grads = backward(model, cache, dP)
    worst = 0.0
    for name, param in model.params.items():
        fd = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            original = param[idx]
            param[idx] = original + eps
            up = float(np.sum(dP * forward(model, X)[0]))
            param[idx] = original - eps
            down = float(np.sum(dP * forward(model, X)[0]))
            param[idx] = original
            fd[idx] = (up - down) / (2 * eps)
        worst = max(worst, relative_error(grads[name], fd))
    return worst


def check_metric_oracles(rng: np.random.Generator, cases: int = 200):
    worst = 0.0
    for _ in range(cases):
        k = int(rng.integers(1, 7))
        n = int(rng.integers(k, 40))
        y = rng.integers(0, k, size=n)
        c = rng.integers(0, k, size=n)
        brute = max(np.mean(y == np.asarray(perm)[c]) for perm in itertools.permutations(range(k)))
        worst = max(worst, abs(unsupervised_accuracy(y, c, k) - brute))
    y, c = [0, 0, 1, 1], [0, 1, 0, 1]
    examples = [
        abs(unsupervised_accuracy([0, 0, 1, 1], [1, 1, 0, 0], 2) - 1.0),
        abs(unsupervised_accuracy(y, c, 2) - 0.5),
        abs(nmi(y, c) - 0.0),
        abs(ari(y, c) + 0.5),
        abs(nmi([0, 0, 1, 2], [0, 0, 1, 2]) - 1.0),
    ]
    worst = max(worst, max(examples))
    return worst <= 1e-12, cases + len(examples), worst, "Hungarian vs brute force, NMI/ARI examples"


SUITES: List[Tuple[str, Callable]] = [
    ("oracle-identity", check_oracle_identity),
    ("quadrature-exactness", check_quadrature_exactness),
    ("integral-bound", check_integral_bound),
    ("rcut-bound-chain", check_rcut_bound_chain),
    ("batch-bound", check_batch_bound),
    ("expectation-enumeration", check_expectation_enumeration),
    ("gradients", check_gradients),
    ("metric-oracles", check_metric_oracles),
]


def run_suites(seed: int = 0, only: Tuple[str, ...] = ()) -> List[SuiteResult]:
    results = []
    for offset, (name, fn) in enumerate(SUITES):
        if only and name not in only:
            continue
        result = _suite(name, fn, seed + offset)
        logger.debug("suite %s %s", name, "passed" if result.passed else "failed")
        results.append(result)
    return results
