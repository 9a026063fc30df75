"""Per-collection price analyses: census, variance-explained comparison,
fixed-effect fits, quantile bins, censoring and sales counts.

Rarity predictors use the dense rank (1 = rarest), so a negative rank/price
correlation means rarer tokens sell higher.  Rarity quantiles are
``rank / population``; small quantiles are rare.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ..embeddings import DEFAULT_SAMPLE_SIZE, centroid
from ..model import Category, MarketSnapshot, Transaction, price_to_float
from ..rarity import rarity_rank
from .correlation import CorrelationResult, Method, correlate, spearman, univariate_ols

TokenKey = tuple[str, str]
MIN_MEAN_PRICE = 1e-7


class Predictor(str, enum.Enum):
    RARITY_RANK = "rarity_rank"
    VISUAL_DISTINCTIVENESS = "visual_distinctiveness"

    @property
    def headline_sign(self) -> int:
        # Rarer means a smaller rank but a larger distance.
        return -1 if self is Predictor.RARITY_RANK else 1


class FixedEffectMode(str, enum.Enum):
    MULTIPLICATIVE = "multiplicative"
    ADDITIVE = "additive"
    NONE = "none"


# -- per-token inputs --------------------------------------------------------


def token_average_prices(transactions: Iterable[Transaction]) -> dict[TokenKey, float]:
    """Arithmetic mean sale price per token; tokens without sales are absent."""
    sums: dict[TokenKey, float] = defaultdict(float)
    counts: dict[TokenKey, int] = defaultdict(int)
    for t in transactions:
        key = (t.collection, t.token_id)
        sums[key] += price_to_float(t.price)
        counts[key] += 1
    return {k: sums[k] / counts[k] for k in sums}


def token_sale_counts(transactions: Iterable[Transaction]) -> dict[TokenKey, int]:
    counts: dict[TokenKey, int] = defaultdict(int)
    for t in transactions:
        counts[(t.collection, t.token_id)] += 1
    return dict(counts)


def rarity_ranks(snapshot: MarketSnapshot) -> dict[TokenKey, int]:
    out = {}
    for slug, traits in snapshot.by_collection("traits").items():
        for score in rarity_rank(traits):
            out[(slug, score.token_id)] = score.rank
    return out


def rarity_quantiles(snapshot: MarketSnapshot) -> dict[TokenKey, float]:
    out = {}
    for slug, traits in snapshot.by_collection("traits").items():
        scores = rarity_rank(traits)
        n = len(scores)
        for s in scores:
            out[(slug, s.token_id)] = s.rank / n
    return out


def distinctiveness_values(snapshot: MarketSnapshot, sample_size: int = DEFAULT_SAMPLE_SIZE, seed: int = 0) -> dict[TokenKey, float]:
    out = {}
    for slug, embs in snapshot.by_collection("embeddings").items():
        center = centroid(embs, sample_size, seed, slug).vector
        matrix = np.vstack([e.vector for e in embs])
        dist = np.linalg.norm(matrix - center, axis=1)
        for e, d in zip(embs, dist):
            out[(slug, e.token_id)] = float(d)
    return out


def predictor_values(snapshot: MarketSnapshot, predictor: Predictor | str, seed: int = 0) -> dict[TokenKey, float]:
    if Predictor(predictor) is Predictor.RARITY_RANK:
        return {k: float(v) for k, v in rarity_ranks(snapshot).items()}
    return distinctiveness_values(snapshot, seed=seed)


def _group(values: Mapping[TokenKey, float]) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = defaultdict(dict)
    for (slug, tok), v in values.items():
        out[slug][tok] = v
    return out


# -- category filters --------------------------------------------------------


def collection_filter(spec: str, snapshot: MarketSnapshot) -> Callable[[str], bool]:
    """Accepts ``all``, ``pfp``, ``non-pfp``, ``with-rarity``, ``without-rarity``,
    a category name, or ``non-<category>``."""
    cats = {c.slug: c.category for c in snapshot.collections}
    with_traits = {t.collection for t in snapshot.traits}
    if spec == "all":
        return lambda slug: True
    if spec == "with-rarity":
        return lambda slug: slug in with_traits
    if spec == "without-rarity":
        return lambda slug: slug not in with_traits
    negate = spec.startswith("non-")
    cat = Category(spec[4:] if negate else spec)
    if negate:
        return lambda slug: cats.get(slug) is not cat
    return lambda slug: cats.get(slug) is cat


# -- census ------------------------------------------------------------------


@dataclass(frozen=True)
class CollectionCorrelation:
    collection: str
    result: CorrelationResult | None
    reason: str = ""


@dataclass(frozen=True)
class CensusRow:
    predictor: Predictor
    category_filter: str
    positive: int
    negative: int
    total: int
    excluded: int

    @property
    def headline_count(self) -> int:
        return self.negative if self.predictor.headline_sign < 0 else self.positive

    @property
    def headline_percentage(self) -> float:
        return 100.0 * self.headline_count / self.total if self.total else 0.0

    def to_json(self) -> dict:
        return {
            "predictor": self.predictor.value,
            "category_filter": self.category_filter,
            "positive": self.positive,
            "negative": self.negative,
            "total": self.total,
            "excluded": self.excluded,
            "headline_percentage": self.headline_percentage,
        }


def correlate_by_collection(
    predictor: Mapping[TokenKey, float],
    response: Mapping[TokenKey, float],
    collections: Iterable[str] | None = None,
    method: Method | str = Method.PEARSON,
    seed: int = 0,
) -> list[CollectionCorrelation]:
    """Correlate predictor against response within each collection, over tokens
    that have both values.  Collections where the correlation is undefined are
    returned with ``result=None`` and a reason."""
    pg, rg = _group(predictor), _group(response)
    slugs = sorted(collections) if collections is not None else sorted(set(pg) | set(rg))
    out = []
    for i, slug in enumerate(slugs):
        p, r = pg.get(slug, {}), rg.get(slug, {})
        toks = sorted(set(p) & set(r))
        try:
            res = correlate([p[t] for t in toks], [r[t] for t in toks], method, seed=seed + i)
        except ValueError as exc:
            out.append(CollectionCorrelation(slug, None, str(exc)))
            continue
        out.append(CollectionCorrelation(slug, res))
    return out


def census_from_correlations(
    rows: Sequence[CollectionCorrelation], predictor: Predictor | str, category_filter: str = "all", alpha: float = 0.05
) -> CensusRow:
    predictor = Predictor(predictor)
    analysed = [r.result for r in rows if r.result is not None]
    pos = sum(1 for r in analysed if r.sign(alpha) > 0)
    neg = sum(1 for r in analysed if r.sign(alpha) < 0)
    return CensusRow(predictor, category_filter, pos, neg, len(analysed), len(rows) - len(analysed))


def correlation_census(
    snapshot: MarketSnapshot,
    predictor: Predictor | str = Predictor.RARITY_RANK,
    category_filter: str = "all",
    alpha: float = 0.05,
    method: Method | str = Method.PEARSON,
    seed: int = 0,
) -> tuple[CensusRow, list[CollectionCorrelation]]:
    """Significant positive/negative predictor-vs-average-price counts over collections."""
    predictor = Predictor(predictor)
    keep = collection_filter(category_filter, snapshot)
    values = predictor_values(snapshot, predictor, seed)
    prices = token_average_prices(snapshot.transactions)
    slugs = [c.slug for c in snapshot.collections if keep(c.slug)]
    rows = correlate_by_collection(values, prices, slugs, method, seed)
    return census_from_correlations(rows, predictor, category_filter, alpha), rows


# -- variance explained ------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    collection: str
    rarity_score: float
    distinctiveness_score: float
    winner: str


@dataclass
class VarianceComparison:
    rows: list[ComparisonRow] = field(default_factory=list)
    excluded: int = 0
    statistic: str = "r_squared"

    def wins(self, name: str) -> int:
        return sum(1 for r in self.rows if r.winner == name)

    @property
    def considered(self) -> int:
        return len(self.rows)

    @property
    def residual(self) -> int:
        """Collections counted as considered but won by neither predictor (exact ties)."""
        return self.considered - self.wins(Predictor.RARITY_RANK.value) - self.wins(Predictor.VISUAL_DISTINCTIVENESS.value)

    def share(self, name: str) -> float:
        return self.wins(name) / self.considered if self.considered else 0.0

    def to_json(self) -> dict:
        r, d = Predictor.RARITY_RANK.value, Predictor.VISUAL_DISTINCTIVENESS.value
        return {
            "statistic": self.statistic,
            "considered": self.considered,
            "excluded": self.excluded,
            "rarity_wins": self.wins(r),
            "distinctiveness_wins": self.wins(d),
            "residual": self.residual,
            "rarity_share": self.share(r),
            "distinctiveness_share": self.share(d),
        }


def _winner(a: float, b: float) -> str:
    if a > b:
        return Predictor.RARITY_RANK.value
    if b > a:
        return Predictor.VISUAL_DISTINCTIVENESS.value
    return "tie"


def compare_predictors(
    rarity: Mapping[TokenKey, float],
    distinct: Mapping[TokenKey, float],
    prices: Mapping[TokenKey, float],
    alpha: float = 0.05,
    spearman_tiebreak: bool = False,
) -> VarianceComparison:
    """Per collection, which predictor explains more price variance.

    The default compares univariate OLS r-squared and drops collections where
    neither r-squared is positive.  With ``spearman_tiebreak`` it instead keeps
    collections where at least one Spearman correlation is significant and
    compares absolute rho.
    """
    rg, dg, pg = _group(rarity), _group(distinct), _group(prices)
    out = VarianceComparison(statistic="abs_spearman" if spearman_tiebreak else "r_squared")
    for slug in sorted(set(rg) & set(dg)):
        toks = sorted(set(rg[slug]) & set(dg[slug]) & set(pg.get(slug, {})))
        y = [pg[slug][t] for t in toks]
        xr = [rg[slug][t] for t in toks]
        xd = [dg[slug][t] for t in toks]
        try:
            if spearman_tiebreak:
                sr, sd = spearman(xr, y), spearman(xd, y)
                if not (sr.significant(alpha) or sd.significant(alpha)):
                    out.excluded += 1
                    continue
                a, b = abs(sr.coefficient), abs(sd.coefficient)
            else:
                a, b = univariate_ols(xr, y).r_squared, univariate_ols(xd, y).r_squared
                if a <= 0 and b <= 0:
                    out.excluded += 1
                    continue
        except ValueError:
            out.excluded += 1
            continue
        out.rows.append(ComparisonRow(slug, a, b, _winner(a, b)))
    return out


def variance_explained_comparison(
    snapshot: MarketSnapshot, alpha: float = 0.05, spearman_tiebreak: bool = False, seed: int = 0
) -> VarianceComparison:
    return compare_predictors(
        predictor_values(snapshot, Predictor.RARITY_RANK),
        predictor_values(snapshot, Predictor.VISUAL_DISTINCTIVENESS, seed),
        token_average_prices(snapshot.transactions),
        alpha,
        spearman_tiebreak,
    )


# -- fixed effects -----------------------------------------------------------


@dataclass(frozen=True)
class FixedEffectFit:
    mode: FixedEffectMode
    slope: float
    intercept: float
    r_squared: float
    p_value: float
    excluded: int
    n: int

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "p_value": self.p_value,
            "excluded": self.excluded,
            "n": self.n,
        }


def normalize_prices(
    prices: Mapping[TokenKey, float], mode: FixedEffectMode | str, min_mean: float = MIN_MEAN_PRICE
) -> tuple[dict[TokenKey, float], int]:
    """Remove each collection's mean price (divide, subtract or keep).

    Collections whose mean is below ``min_mean`` are dropped in every mode so
    the three fits run on the same tokens.  Returns the normalised prices and
    the number of dropped collections.
    """
    mode = FixedEffectMode(mode)
    groups = _group(prices)
    out: dict[TokenKey, float] = {}
    excluded = 0
    for slug in sorted(groups):
        vals = groups[slug]
        mean = math.fsum(vals.values()) / len(vals)
        if mean < min_mean:
            excluded += 1
            continue
        for tok, p in vals.items():
            if mode is FixedEffectMode.MULTIPLICATIVE:
                out[(slug, tok)] = p / mean
            elif mode is FixedEffectMode.ADDITIVE:
                out[(slug, tok)] = p - mean
            else:
                out[(slug, tok)] = p
    return out, excluded


def fixed_effect_fit_prices(
    prices: Mapping[TokenKey, float],
    quantiles: Mapping[TokenKey, float],
    mode: FixedEffectMode | str,
    min_mean: float = MIN_MEAN_PRICE,
) -> FixedEffectFit:
    mode = FixedEffectMode(mode)
    norm, excluded = normalize_prices({k: v for k, v in prices.items() if k in quantiles}, mode, min_mean)
    keys = sorted(norm)
    fit = univariate_ols([quantiles[k] for k in keys], [norm[k] for k in keys])
    return FixedEffectFit(mode, fit.slope, fit.intercept, fit.r_squared, fit.p_value, excluded, fit.n)


def fixed_effect_fit(
    transactions: Iterable[Transaction],
    quantiles: Mapping[TokenKey, float],
    mode: FixedEffectMode | str = FixedEffectMode.MULTIPLICATIVE,
    min_mean: float = MIN_MEAN_PRICE,
) -> FixedEffectFit:
    """Pooled regression of collection-normalised average prices on rarity quantile."""
    return fixed_effect_fit_prices(token_average_prices(transactions), quantiles, mode, min_mean)


# -- bins and censoring ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BinResult:
    counts: np.ndarray
    means: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    order: str

    def rows(self) -> list[dict]:
        return [
            {"bin": i, "count": int(c), "mean_response": float(m), "predictor_low": float(lo), "predictor_high": float(hi)}
            for i, (c, m, lo, hi) in enumerate(zip(self.counts, self.means, self.lower, self.upper))
        ]


def quantile_bin_labels(predictor: Sequence[float], k: int = 20, order: str = "ascending") -> np.ndarray:
    """Positional bin label per point: bin ``floor(i*k/n)`` of the sorted order,
    with a tie group that straddles a boundary placed in its lowest bin."""
    x = np.asarray(predictor, dtype=np.float64)
    n = x.size
    if k < 1:
        raise ValueError("k must be positive")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    if order not in ("ascending", "descending"):
        raise ValueError("order must be ascending or descending")
    key = x if order == "ascending" else -x
    idx = np.argsort(key, kind="stable")
    pos_bin = (np.arange(n) * k) // n
    sorted_key = key[idx]
    # first position of each tie group decides the bin for the whole group
    starts = np.searchsorted(sorted_key, sorted_key, side="left")
    labels = np.empty(n, dtype=np.int64)
    labels[idx] = pos_bin[starts]
    return labels


def quantile_bins(predictor: Sequence[float], response: Sequence[float], k: int = 20, order: str = "ascending") -> BinResult:
    """Mean response per predictor quantile bin.

    For rarity ranks pass ``order="descending"`` so bins run from least to
    most rare.  Empty bins (possible with heavy ties) have NaN means.
    """
    x = np.asarray(predictor, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if x.size != y.size:
        raise ValueError("length mismatch")
    labels = quantile_bin_labels(x, k, order)
    counts = np.bincount(labels, minlength=k)
    sums = np.bincount(labels, weights=y, minlength=k)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    lower = np.full(k, np.nan)
    upper = np.full(k, np.nan)
    for b in range(k):
        sel = x[labels == b]
        if sel.size:
            lower[b], upper[b] = sel.min(), sel.max()
    return BinResult(counts, means, lower, upper, order)


def censor_count(n: int, fraction: float) -> int:
    if not 0 <= fraction < 1:
        raise ValueError("censor_fraction must be in [0, 1)")
    return math.ceil(round(fraction * n, 9))


def censored_correlation(
    predictor: Sequence[float], response: Sequence[float], censor_fraction: float = 0.10, extreme: str = "high"
) -> CorrelationResult:
    """Pearson after dropping the ``ceil(f*n)`` points with the most extreme
    predictor (largest for ``extreme="high"``, smallest for ``"low"``)."""
    x = np.asarray(predictor, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if x.size != y.size:
        raise ValueError("length mismatch")
    drop = censor_count(x.size, censor_fraction)
    if x.size - drop < 3:
        raise ValueError("too few points remain after censoring")
    if extreme not in ("high", "low"):
        raise ValueError("extreme must be high or low")
    key = -x if extreme == "high" else x
    keep = np.sort(np.argsort(key, kind="stable")[drop:])
    return correlate(x[keep], y[keep], Method.PEARSON)


def sales_count_correlation(
    snapshot: MarketSnapshot,
    predictor: Predictor | str = Predictor.RARITY_RANK,
    method: Method | str = Method.PEARSON,
    seed: int = 0,
) -> list[CollectionCorrelation]:
    """Predictor vs number of sales per token; tokens that never sold count 0."""
    values = predictor_values(snapshot, predictor, seed)
    counts = token_sale_counts(snapshot.transactions)
    response = {k: float(counts.get(k, 0)) for k in values}
    return correlate_by_collection(values, response, None, method, seed)
