"""Correlation, regression, binning, census and wash-trade analyses."""

from .correlation import CorrelationResult, Method, OlsResult, correlate, pearson, permutation_pvalue, spearman, t_pvalue, univariate_ols
from .market import (
    CensusRow,
    CollectionCorrelation,
    FixedEffectFit,
    FixedEffectMode,
    Predictor,
    VarianceComparison,
    censored_correlation,
    compare_predictors,
    correlate_by_collection,
    correlation_census,
    fixed_effect_fit,
    fixed_effect_fit_prices,
    quantile_bins,
    rarity_quantiles,
    rarity_ranks,
    sales_count_correlation,
    token_average_prices,
    variance_explained_comparison,
)
from .wash import CaseStudySelection, detect_wash_trades, select_case_studies

__all__ = [
    "CaseStudySelection",
    "CensusRow",
    "CollectionCorrelation",
    "CorrelationResult",
    "FixedEffectFit",
    "FixedEffectMode",
    "Method",
    "OlsResult",
    "Predictor",
    "VarianceComparison",
    "censored_correlation",
    "compare_predictors",
    "correlate",
    "correlate_by_collection",
    "correlation_census",
    "detect_wash_trades",
    "fixed_effect_fit",
    "fixed_effect_fit_prices",
    "pearson",
    "permutation_pvalue",
    "quantile_bins",
    "rarity_quantiles",
    "rarity_ranks",
    "sales_count_correlation",
    "select_case_studies",
    "spearman",
    "t_pvalue",
    "token_average_prices",
    "univariate_ols",
    "variance_explained_comparison",
]
