"""Closed-form coverage model and the Monte Carlo used to check it.

Each of the l winning proofs per timestamp challenges d chunks; under independent
sampling a given chunk escapes one proof with probability 1 - d/n.
"""
import math
from typing import Optional, Sequence

import numpy as np

from audita.core.exceptions import ParameterException, UnreachableTargetException
from audita.core.logging import get_logger

logger = get_logger(__name__)


def _check(n: int, d: int, l: int) -> None:  # noqa: E741
    if n < 1:
        raise ParameterException(f"n must be positive, got {n}")
    if not 0 <= d <= n:
        raise ParameterException(f"d={d} must lie in [0, n={n}]")
    if l < 1:
        raise ParameterException(f"l must be positive, got {l}")


def analytic_coverage(n: int, d: int, l: int, timestamps: int) -> float:  # noqa: E741
    """Expected fraction of the file proven after ``timestamps`` audits: 1 - (1 - d/n)^(l*T)"""
    _check(n, d, l)
    if timestamps < 0:
        raise ParameterException(f"timestamps must be non-negative, got {timestamps}")
    if timestamps == 0 or d == 0:
        return 0.0
    if d == n:
        return 1.0
    # 1 - exp(lT * ln(1 - d/n)), stable for d/n ~ 1e-7
    return -math.expm1(l * timestamps * math.log1p(-d / n))


def analytic_curve(n: int, d: int, l: int, timestamps: int) -> np.ndarray:  # noqa: E741
    """Expected coverage after each of timestamps 1..T"""
    _check(n, d, l)
    t = np.arange(1, timestamps + 1, dtype=np.float64)
    if d == 0:
        return np.zeros_like(t)
    if d == n:
        return np.ones_like(t)
    return -np.expm1(l * t * math.log1p(-d / n))


def solve_timestamps_for_coverage(n: int, d: int, l: int, target: float) -> int:  # noqa: E741
    _check(n, d, l)
    if not 0.0 < target < 1.0:
        raise ParameterException(f"target must lie in (0, 1), got {target}")
    if d == 0:
        raise UnreachableTargetException("d=0 never proves any chunk")
    if d == n:
        return 1
    return max(1, math.ceil(math.log1p(-target) / (l * math.log1p(-d / n))))


def first_crossing(history: Sequence[float], target: float) -> Optional[int]:
    """1-based timestamp at which ``history`` first reaches ``target``"""
    for timestamp, value in enumerate(history, start=1):
        if value >= target:
            return timestamp
    return None


def monte_carlo_coverage(
    n: int,
    d: int,
    l: int,  # noqa: E741
    timestamps: int,
    seed: int,
) -> np.ndarray:
    """Simulated coverage after each of timestamps 1..T.

    Every winning proof marks a fresh uniform d-subset of the n chunks, which is
    the sampling the closed form assumes.
    """
    _check(n, d, l)
    rng = np.random.default_rng(seed)
    proven = np.zeros(n, dtype=bool)
    count = 0
    history = np.empty(timestamps, dtype=np.float64)
    for t in range(timestamps):
        if d:
            for _ in range(l):
                drawn = rng.choice(n, size=d, replace=False)
                fresh = drawn[~proven[drawn]]
                proven[fresh] = True
                count += fresh.size
        history[t] = count / n
    logger.debug("monte_carlo_coverage", n=n, d=d, l=l, timestamps=timestamps, final=float(history[-1]) if timestamps else 0.0)
    return history


def monte_carlo_mean(
    n: int,
    d: int,
    l: int,  # noqa: E741
    timestamps: int,
    seeds: Sequence[int],
) -> np.ndarray:
    return np.mean([monte_carlo_coverage(n, d, l, timestamps, seed) for seed in seeds], axis=0)


class CoverageService:
    """Service for coverage analysis of one (n, d, l) audit configuration"""

    def __init__(self, n: int, d: int, l: int) -> None:  # noqa: E741
        _check(n, d, l)
        self.n = n
        self.d = d
        self.l = l  # noqa: E741

    def coverage(self, timestamps: int) -> float:
        return analytic_coverage(self.n, self.d, self.l, timestamps)

    def curve(self, timestamps: int) -> np.ndarray:
        return analytic_curve(self.n, self.d, self.l, timestamps)

    def timestamps_for(self, target: float) -> int:
        """Fewest timestamps whose expected coverage reaches ``target``"""
        return solve_timestamps_for_coverage(self.n, self.d, self.l, target)

    def simulate(self, timestamps: int, seeds: Sequence[int]) -> np.ndarray:
        """Mean Monte Carlo coverage over ``seeds``"""
        return monte_carlo_mean(self.n, self.d, self.l, timestamps, seeds)

    def max_deviation(self, timestamps: int, seeds: Sequence[int]) -> float:
        """Largest gap between the simulated mean and the closed form"""
        gap = np.abs(self.simulate(timestamps, seeds) - self.curve(timestamps))
        return float(gap.max()) if timestamps else 0.0
