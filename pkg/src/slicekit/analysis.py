"""Closed-form bounds on slice populations and rank-estimate sample sizes,
with Monte-Carlo checks against binomial draws."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import slice_index
from .ranking import UnboundedSampleSize, required_samples, z_score  # noqa: F401


class LemmaBound(NamedTuple):
    epsilon: float  # bound on Pr[|X - np| >= beta np]
    min_p: float    # smallest slice length for which that epsilon is guaranteed


def chernoff_epsilon(p: float, beta: float, n: int) -> float:
    """2 exp(-beta^2 n p / 3): the two-sided tail bound for X ~ Bin(n, p)."""
    return 2.0 * math.exp(-beta * beta * n * p / 3.0)


def min_slice_length(epsilon: float, beta: float, n: int) -> float:
    """Smallest p with 2 exp(-beta^2 n p / 3) <= epsilon."""
    if not 0.0 < epsilon:
        raise ValueError("epsilon must be positive")
    return 3.0 / (beta * beta * n) * math.log(2.0 / epsilon)


def slice_population_bound(p: float, beta: float, n: int) -> LemmaBound:
    """How tightly a slice of length p is populated by n uniform draws: X stays
    within [(1 - beta) np, (1 + beta) np] with probability >= 1 - epsilon."""
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    if n < 1:
        raise ValueError("n must be at least 1")
    eps = chernoff_epsilon(p, beta, n)
    return LemmaBound(eps, min_slice_length(eps, beta, n))


def slice_population_tail(p: float, beta: float, n: int, trials: int,
                          rng: np.random.Generator) -> float:
    """Empirical Pr[X outside [(1 - beta) np, (1 + beta) np]], X ~ Bin(n, p)."""
    x = rng.binomial(n, p, size=trials)
    mean = n * p
    outside = (x < (1.0 - beta) * mean) | (x > (1.0 + beta) * mean)
    return float(np.count_nonzero(outside)) / trials


@dataclass(frozen=True)
class SplitProbability:
    exact: float
    bound: float


def perfect_split_probability(n: int) -> SplitProbability:
    """P[n uniform draws split exactly n/2 - n/2 across two halves] and the
    sqrt(2 / (n pi)) bound on it."""
    if n < 1:
        raise ValueError("n must be positive")
    bound = math.sqrt(2.0 / (n * math.pi))
    if n % 2:
        return SplitProbability(0.0, bound)
    h = n // 2
    log_p = math.lgamma(n + 1) - 2.0 * math.lgamma(h + 1) - n * math.log(2.0)
    exact = math.exp(log_p)
    assert exact <= bound
    return SplitProbability(exact, bound)


@dataclass(frozen=True)
class SampleSizeReport:
    p_hat: float
    d: float
    alpha: float
    z: float
    k: int
    # the normal approximation behind the formula assumes k > 30
    below_clt_regime: bool


def sample_size_report(p_hat: float, d: float, alpha: float) -> SampleSizeReport:
    k = required_samples(p_hat, d, alpha)
    return SampleSizeReport(p_hat, d, alpha, z_score(alpha), k, k <= 30)


def slice_hit_rate(p: float, k: int, spec_bounds: np.ndarray, trials: int,
                   rng: np.random.Generator) -> float:
    """Fraction of trials in which k Bernoulli(p) samples put l/k in the
    slice that contains p."""
    x = rng.binomial(k, p, size=trials) / k
    truth = slice_index(spec_bounds, p)
    est = np.searchsorted(spec_bounds, x, side="left")
    est[est < 1] = 1
    return float(np.count_nonzero(est == truth)) / trials
