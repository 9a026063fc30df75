"""Pearson/Spearman correlation with t or permutation p-values, and univariate OLS."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps

T_MIN_N = 10
MAX_PERMUTATIONS = 100_000
_PERM_CHUNK = 5_000


class Method(str, enum.Enum):
    PEARSON = "pearson"
    SPEARMAN = "spearman"


@dataclass(frozen=True)
class CorrelationResult:
    coefficient: float
    p_value: float
    n: int
    method: Method
    p_method: str = "t"

    def significant(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha

    def sign(self, alpha: float = 0.05) -> int:
        """+1 / -1 when significant, else 0."""
        if not self.significant(alpha):
            return 0
        return 1 if self.coefficient > 0 else -1 if self.coefficient < 0 else 0


@dataclass(frozen=True)
class OlsResult:
    slope: float
    intercept: float
    r_squared: float
    p_value: float
    stderr: float
    n: int


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise ValueError("correlation needs at least 3 points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("correlation undefined for constant input")
    return x, y


def _standardize(v: np.ndarray) -> np.ndarray:
    c = v - v.mean()
    return c / math.sqrt(float(np.dot(c, c)))


def _coefficient(x: np.ndarray, y: np.ndarray) -> float:
    r = float(np.dot(_standardize(x), _standardize(y)))
    return max(-1.0, min(1.0, r))


def t_pvalue(r: float, n: int) -> float:
    """Two-sided p-value of the t statistic r*sqrt((n-2)/(1-r^2)) with n-2 df."""
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(min(1.0, 2.0 * sps.t.sf(abs(t), n - 2)))


def permutation_pvalue(x: np.ndarray, y: np.ndarray, permutations: int = MAX_PERMUTATIONS, seed: int = 0) -> float:
    """Two-sided permutation p-value for the product-moment coefficient.

    Enumerates every permutation of ``y`` when there are at most
    ``permutations`` of them (exact p), otherwise samples ``permutations``
    random ones and returns ``(hits + 1) / (permutations + 1)``.
    """
    xs, ys = _standardize(x), _standardize(y)
    observed = abs(float(np.dot(xs, ys)))
    cutoff = observed - 1e-12
    n = xs.size
    if math.factorial(n) <= permutations:
        hits = total = 0
        for perm in itertools.permutations(range(n)):
            total += 1
            hits += abs(float(np.dot(xs, ys[list(perm)]))) >= cutoff
        return hits / total
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < permutations:
        m = min(_PERM_CHUNK, permutations - done)
        shuffled = rng.permuted(np.broadcast_to(ys, (m, n)), axis=1)
        hits += int(np.sum(np.abs(shuffled @ xs) >= cutoff))
        done += m
    return (hits + 1) / (permutations + 1)


def _pvalue(x, y, r, p_method, permutations, seed) -> tuple[float, str]:
    if p_method == "auto":
        p_method = "t" if x.size >= T_MIN_N else "permutation"
    if p_method == "t":
        return t_pvalue(r, x.size), "t"
    if p_method == "permutation":
        return permutation_pvalue(x, y, permutations, seed), "permutation"
    raise ValueError(f"unknown p_method {p_method!r}")


def pearson(x: Sequence[float], y: Sequence[float], p_method: str = "auto", permutations: int = MAX_PERMUTATIONS, seed: int = 0) -> CorrelationResult:
    x, y = _check_pair(x, y)
    r = _coefficient(x, y)
    p, how = _pvalue(x, y, r, p_method, permutations, seed)
    return CorrelationResult(r, p, int(x.size), Method.PEARSON, how)


def midranks(v: Sequence[float]) -> np.ndarray:
    return sps.rankdata(np.asarray(v, dtype=np.float64), method="average")


def spearman(x: Sequence[float], y: Sequence[float], p_method: str = "auto", permutations: int = MAX_PERMUTATIONS, seed: int = 0) -> CorrelationResult:
    """Pearson over mid-ranks."""
    x, y = _check_pair(x, y)
    rx, ry = midranks(x), midranks(y)
    r = _coefficient(rx, ry)
    p, how = _pvalue(rx, ry, r, p_method, permutations, seed)
    return CorrelationResult(r, p, int(x.size), Method.SPEARMAN, how)


def correlate(x, y, method: Method | str = Method.PEARSON, **kw) -> CorrelationResult:
    return pearson(x, y, **kw) if Method(method) is Method.PEARSON else spearman(x, y, **kw)


def univariate_ols(x: Sequence[float], y: Sequence[float]) -> OlsResult:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("regression needs at least 2 points")
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    if sxx == 0:
        raise ValueError("regression undefined for constant x")
    yc = y - y.mean()
    slope = float(np.dot(xc, yc)) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = yc - slope * xc
    sse = float(np.dot(resid, resid))
    sst = float(np.dot(yc, yc))
    r2 = 0.0 if sst == 0 else max(0.0, 1.0 - sse / sst)
    n = x.size
    if n > 2 and sst > 0:
        stderr = math.sqrt(sse / (n - 2) / sxx)
        if stderr == 0:
            p = 0.0
        else:
            p = float(2.0 * sps.t.sf(abs(slope / stderr), n - 2))
    else:
        stderr, p = float("nan"), float("nan") if n <= 2 else 1.0
    return OlsResult(slope, intercept, r2, p, stderr, int(n))
