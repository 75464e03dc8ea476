"""Temperature estimators, root finding, and the uniformity test.

All estimating equations here are strictly monotone in theta, so roots
are located by geometric bracket expansion from [-1, 1] (capped at
[-64, 64]) followed by bisection.  A score with constant sign over the
capped bracket has no root; that is a legitimate outcome for extremal
permutations and raises :class:`NoRootError` rather than failing
silently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .grids import ScoreFunction
from .ipfp import w_k_prime
from .models import (
    BRUTE_FORCE_LIMIT,
    KendallModel,
    Model,
    enumerate_statistics,
    kendall_limit_C_prime,
    kendall_logZ_prime,
)
from .perm import Permutation, inversions, linear_statistic

__all__ = [
    "EstimateResult",
    "NoRootError",
    "AllPairsDegenerateError",
    "UniformityTest",
    "find_monotone_root",
    "pairwise_swap_scores",
    "pl_score",
    "pl_score_derivative",
    "pl_estimate",
    "ld_score",
    "ld_estimate",
    "ld_root_for_statistic",
    "ml_exact",
    "kendall_ld_estimate",
    "uniformity_test",
    "threshold_test",
    "multi_sample_scores",
    "multi_estimate",
]

BRACKET_CAP = 64.0


class NoRootError(RuntimeError):
    """The monotone score keeps one sign over the whole capped bracket."""

    def __init__(self, sign: str, bracket: tuple[float, float], evaluations: int):
        self.sign = sign
        self.bracket = bracket
        self.evaluations = evaluations
        super().__init__(
            f"score is {sign} everywhere on [{bracket[0]:g}, {bracket[1]:g}]; no root"
        )


class AllPairsDegenerateError(ValueError):
    """Every pairwise swap score is zero; theta is unidentifiable."""


@dataclass(frozen=True)
class EstimateResult:
    """A fitted temperature with its root-finding diagnostics."""

    theta_hat: float
    method: str
    bracket: tuple[float, float]
    evaluations: int
    score_at_root: float
    k: int | None = None

    def to_json_dict(self) -> dict:
        out = {
            "theta_hat": self.theta_hat,
            "method": self.method,
            "bracket_lo": self.bracket[0],
            "bracket_hi": self.bracket[1],
            "evaluations": self.evaluations,
            "score_at_root": self.score_at_root,
        }
        if self.k is not None:
            out["k"] = self.k
        return out


def find_monotone_root(score: Callable[[float], float], root_tol: float = 1e-8,
                       lo: float = -1.0, hi: float = 1.0,
                       cap: float = BRACKET_CAP) -> tuple[float, tuple, int, float]:
    """Root of a strictly decreasing score by bracket expansion + bisection.

    Returns (root, sign-change bracket, evaluations, score at root).
    Raises NoRootError when no sign change exists within [-cap, cap].
    """
    evals = 0

    def ev(t):
        nonlocal evals
        evals += 1
        return score(t)

    s_lo = ev(lo)
    while s_lo < 0 and lo > -cap:
        lo = max(-cap, 2.0 * lo)
        s_lo = ev(lo)
    if s_lo < 0:
        raise NoRootError("negative", (lo, hi), evals)
    if s_lo == 0:
        return lo, (lo, lo), evals, 0.0

    s_hi = ev(hi)
    while s_hi > 0 and hi < cap:
        hi = min(cap, 2.0 * hi)
        s_hi = ev(hi)
    if s_hi > 0:
        raise NoRootError("positive", (lo, hi), evals)
    if s_hi == 0:
        return hi, (hi, hi), evals, 0.0

    bracket = (lo, hi)
    while hi - lo > root_tol:
        mid = 0.5 * (lo + hi)
        s_mid = ev(mid)
        if s_mid == 0:
            return mid, bracket, evals, 0.0
        if s_mid > 0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    s_root = ev(root)
    return root, bracket, evals, s_root


def pairwise_swap_scores(pi: Permutation, f: ScoreFunction) -> np.ndarray:
    """All C(n,2) pairwise scores y(i,j) = f(i,pi(i)) + f(j,pi(j)) - f(i,pi(j)) - f(j,pi(i)).

    Arguments are scaled to the unit square.  y is unchanged by adding
    any phi(x) + psi(y) to f, which makes everything downstream
    invariant under that reparameterization.
    """
    n = pi.n
    x = np.arange(1, n + 1) / n
    u = pi.values / n
    g = np.asarray(f(x[:, None], u[None, :]), dtype=np.float64)
    d = np.diag(g)
    y = d[:, None] + d[None, :] - g - g.T
    iu = np.triu_indices(n, 1)
    return y[iu]


def _pl_score_from_pairs(y: np.ndarray, theta: float) -> float:
    return float(np.sum(y * expit(-theta * y)))


def pl_score(pi: Permutation, f: ScoreFunction, theta: float) -> float:
    """Pseudo-likelihood score: sum over pairs of y / (1 + e^{theta y})."""
    return _pl_score_from_pairs(pairwise_swap_scores(pi, f), theta)


def pl_score_derivative(pi: Permutation, f: ScoreFunction, theta: float) -> float:
    """d/dtheta of pl_score: -sum y^2 sigma(theta y) sigma(-theta y) < 0."""
    y = pairwise_swap_scores(pi, f)
    return float(-np.sum(y * y * expit(theta * y) * expit(-theta * y)))


def pl_estimate(pi: Permutation, f: ScoreFunction, root_tol: float = 1e-8) -> EstimateResult:
    """Pseudo-likelihood estimate of theta from a single permutation."""
    y = pairwise_swap_scores(pi, f)
    if not np.any(y):
        raise AllPairsDegenerateError("all pairwise scores vanish")
    root, bracket, evals, resid = find_monotone_root(
        lambda t: _pl_score_from_pairs(y, t), root_tol=root_tol)
    return EstimateResult(root, "PL", bracket, evals, resid)


def ld_score(pi: Permutation, f: ScoreFunction, theta: float, k: int,
             tol: float = 1e-12, max_iter: int | None = None) -> float:
    """Limiting-normalizer estimating equation at grid order k.

    Mean statistic of pi minus the grid approximation of the limiting
    derivative of the log normalizer.
    """
    return linear_statistic(pi, f) / pi.n - w_k_prime(f, theta, k, tol=tol,
                                                      max_iter=max_iter)


def ld_root_for_statistic(stat: float, f: ScoreFunction, k: int,
                          root_tol: float = 1e-8, tol: float = 1e-12,
                          max_iter: int | None = None,
                          weight: float = 1.0) -> tuple[float, tuple, int, float]:
    """Solve stat = w_k'(theta) for theta (the LD inverse problem)."""
    def score(theta):
        return weight * (stat - w_k_prime(f, theta, k, tol=tol, max_iter=max_iter))
    return find_monotone_root(score, root_tol=root_tol)


def ld_estimate(pi: Permutation, f: ScoreFunction, k: int, root_tol: float = 1e-8,
                tol: float = 1e-12, max_iter: int | None = None) -> EstimateResult:
    """Estimate theta by matching the statistic to the limiting derivative."""
    stat = linear_statistic(pi, f) / pi.n
    root, bracket, evals, resid = ld_root_for_statistic(
        stat, f, k, root_tol=root_tol, tol=tol, max_iter=max_iter)
    return EstimateResult(root, "LD", bracket, evals, resid, k=k)


def ml_exact(pi: Permutation, model: Model, root_tol: float = 1e-8) -> EstimateResult:
    """Exact maximum-likelihood estimate.

    Linear models use full enumeration of S_n (n <= 9) for the
    normalizer derivative; the Kendall family uses the closed-form
    q-factorial derivative and works at any n.  The supplied model's
    theta is ignored; only its family matters.
    """
    n = pi.n
    if isinstance(model, KendallModel):
        rate = inversions(pi) / (n * n)

        def score(theta):
            return rate - kendall_logZ_prime(n, theta)

        root, bracket, evals, resid = find_monotone_root(score, root_tol=root_tol)
        return EstimateResult(root, "Kendall-ML", bracket, evals, resid)

    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"exact ML for linear models needs n <= {BRUTE_FORCE_LIMIT}")
    _, stats = enumerate_statistics(model.f, n)
    s_obs = linear_statistic(pi, model.f)

    def score(theta):
        w = theta * stats
        w -= w.max()
        e = np.exp(w)
        return (s_obs - float(np.sum(stats * e) / np.sum(e))) / n

    root, bracket, evals, resid = find_monotone_root(score, root_tol=root_tol)
    return EstimateResult(root, "ML", bracket, evals, resid)


def kendall_ld_estimate(pi: Permutation, root_tol: float = 1e-8) -> EstimateResult:
    """Kendall-family estimate matching Inv/n^2 to the limiting derivative.

    The limiting derivative is strictly increasing with range (0, 1/2),
    so extremal inversion rates (identity or reverse) have no root.
    """
    n = pi.n
    rate = inversions(pi) / (n * n)

    def score(theta):
        return rate - kendall_limit_C_prime(theta)

    root, bracket, evals, resid = find_monotone_root(score, root_tol=root_tol)
    return EstimateResult(root, "Kendall-LD", bracket, evals, resid)


@dataclass(frozen=True)
class UniformityTest:
    """Moment test of uniformity based on the normalized statistic.

    ``statistic`` is n^-3 sum i * tau(i); under a uniform tau its mean
    is (1/4)(1 + 1/n)^2 and its variance (1/(144 n))(1 - 1/n)(1 + 1/n)^2.
    """

    statistic: float
    mean: float
    variance: float
    z: float
    p_normal: float
    chebyshev_bound: float

    def to_json_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "mean": self.mean,
            "variance": self.variance,
            "z": self.z,
            "p_normal": self.p_normal,
            "chebyshev_bound": self.chebyshev_bound,
        }


def uniformity_test(tau: Permutation) -> UniformityTest:
    """Test tau for uniformity via the normalized linear statistic."""
    n = tau.n
    stat = float(np.dot(np.arange(1, n + 1, dtype=np.float64), tau.values)) / n ** 3
    mean = 0.25 * (1.0 + 1.0 / n) ** 2
    variance = (1.0 - 1.0 / n) * (1.0 + 1.0 / n) ** 2 / (144.0 * n)
    dev = stat - mean
    z = dev / math.sqrt(variance)
    p_normal = 0.5 * math.erfc(z / math.sqrt(2.0))
    chebyshev = 1.0 if dev == 0.0 else variance / dev ** 2
    return UniformityTest(stat, mean, variance, z, p_normal, chebyshev)


def threshold_test(theta_hat: float, theta0: float, theta1: float) -> bool:
    """Reject theta0 in favor of theta1 iff theta_hat exceeds the midpoint."""
    if not theta0 < theta1:
        raise ValueError("need theta0 < theta1")
    return theta_hat > 0.5 * (theta0 + theta1)


def _check_same_n(perms: Sequence[Permutation]) -> int:
    if not perms:
        raise ValueError("need at least one permutation")
    n = perms[0].n
    if any(p.n != n for p in perms):
        raise ValueError("size mismatch across samples")
    return n


def multi_sample_scores(perms: Sequence[Permutation], f: ScoreFunction,
                        theta: float, method: str, k: int | None = None,
                        **ipfp_kw) -> float:
    """Summed estimating equation over i.i.d. samples."""
    n = _check_same_n(perms)
    if method == "pl":
        return float(sum(pl_score(p, f, theta) for p in perms))
    if method == "ld":
        if k is None:
            raise ValueError("method 'ld' needs a grid order k")
        stat_sum = sum(linear_statistic(p, f) / n for p in perms)
        return stat_sum - len(perms) * w_k_prime(f, theta, k, **ipfp_kw)
    if method == "ml":
        _, stats = enumerate_statistics(f, n)
        w = theta * stats
        w -= w.max()
        e = np.exp(w)
        ex = float(np.sum(stats * e) / np.sum(e))
        return float(sum((linear_statistic(p, f) - ex) / n for p in perms))
    raise ValueError(f"unknown method {method!r}")


def multi_estimate(perms: Sequence[Permutation], f: ScoreFunction, method: str,
                   root_tol: float = 1e-8, k: int | None = None,
                   **ipfp_kw) -> EstimateResult:
    """Pooled estimate from i.i.d. samples; m = 1 reduces to the single fit."""
    n = _check_same_n(perms)
    m = len(perms)
    if method == "pl":
        ys = np.concatenate([pairwise_swap_scores(p, f) for p in perms])
        if not np.any(ys):
            raise AllPairsDegenerateError("all pairwise scores vanish")
        root, bracket, evals, resid = find_monotone_root(
            lambda t: _pl_score_from_pairs(ys, t), root_tol=root_tol)
        return EstimateResult(root, "PL", bracket, evals, resid)
    if method == "ld":
        if k is None:
            raise ValueError("method 'ld' needs a grid order k")
        mean_stat = sum(linear_statistic(p, f) / n for p in perms) / m
        root, bracket, evals, resid = ld_root_for_statistic(
            mean_stat, f, k, root_tol=root_tol, weight=m, **ipfp_kw)
        return EstimateResult(root, "LD", bracket, evals, resid, k=k)
    if method == "ml":
        def score(theta):
            return multi_sample_scores(perms, f, theta, "ml")
        root, bracket, evals, resid = find_monotone_root(score, root_tol=root_tol)
        return EstimateResult(root, "ML", bracket, evals, resid)
    raise ValueError(f"unknown method {method!r}")
