"""Trait frequencies, information content and dense one-of-one/IC rarity ranks."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import TokenTraits

# IC values are rounded before ranking so that tokens with the same
# trait-probability multiset tie regardless of summation order.
IC_DECIMALS = 9


@dataclass(frozen=True)
class TraitFrequencyTable:
    collection: str
    counts: dict[tuple[str, str], int]
    population: int

    def probability(self, name: str, value: str) -> float:
        return self.counts[(name, value)] / self.population


@dataclass(frozen=True)
class RarityScore:
    token_id: str
    one_of_one_count: int
    information_content: float
    rank: int


def _single_collection(traits: Sequence[TokenTraits]) -> str:
    slugs = {t.collection for t in traits}
    if len(slugs) > 1:
        raise ValueError(f"traits span several collections: {sorted(slugs)[:5]}")
    return slugs.pop() if slugs else ""


def trait_frequencies(traits: Sequence[TokenTraits]) -> TraitFrequencyTable:
    collection = _single_collection(traits)
    counts: Counter[tuple[str, str]] = Counter()
    for token in traits:
        counts.update(token.traits.items())
    population = len({t.token_id for t in traits})
    return TraitFrequencyTable(collection, dict(counts), population)


def information_content(token: TokenTraits, freq: TraitFrequencyTable, base: float = 2.0) -> float:
    """Sum of ``-log(count / population)`` over the token's traits.

    A trait category the token lacks contributes nothing.
    """
    terms = []
    for item in token.traits.items():
        try:
            count = freq.counts[item]
        except KeyError:
            raise KeyError(f"trait {item} of token {token.token_id} not in frequency table") from None
        terms.append(-math.log(count / freq.population, base))
    return math.fsum(sorted(terms))


def one_of_one_count(token: TokenTraits, freq: TraitFrequencyTable) -> int:
    return sum(1 for item in token.traits.items() if freq.counts[item] == 1)


def rarity_rank(traits: Sequence[TokenTraits], base: float = 2.0) -> list[RarityScore]:
    """Dense ranks by (one-of-one count desc, information content desc); 1 = rarest.

    Output order follows the input order.
    """
    if not traits:
        raise ValueError("cannot rank an empty trait table")
    freq = trait_frequencies(traits)
    keyed = []
    for token in traits:
        ic = information_content(token, freq, base)
        keyed.append((one_of_one_count(token, freq), round(ic, IC_DECIMALS), ic))
    distinct = sorted({(o, r) for o, r, _ in keyed}, reverse=True)
    rank_of = {key: i + 1 for i, key in enumerate(distinct)}
    return [
        RarityScore(token.token_id, o, ic, rank_of[(o, r)])
        for token, (o, r, ic) in zip(traits, keyed)
    ]


def rank_quantiles(scores: Iterable[RarityScore]) -> dict[str, float]:
    """Map token_id to rank / population, so small values are rare."""
    scores = list(scores)
    n = len(scores)
    return {s.token_id: s.rank / n for s in scores}
