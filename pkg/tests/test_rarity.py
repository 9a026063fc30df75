from __future__ import annotations

import math

import numpy as np
import pytest

from conspicuous.model import TokenTraits
from conspicuous.rarity import information_content, rank_quantiles, rarity_rank, trait_frequencies

import oracles
from conftest import traits

FIXTURE = [traits("c", "1", A="x", B="u"), traits("c", "2", A="x", B="v"), traits("c", "3", A="y", B="v")]


def test_single_token():
    freq = trait_frequencies([traits("c", "1", Hat="Red")])
    assert freq.counts == {("Hat", "Red"): 1} and freq.population == 1
    assert rarity_rank([traits("c", "1", Hat="Red")])[0].rank == 1


def test_three_token_counts():
    assert trait_frequencies(FIXTURE).counts == {("A", "x"): 2, ("A", "y"): 1, ("B", "u"): 1, ("B", "v"): 2}


def test_mixed_collections_rejected():
    with pytest.raises(ValueError):
        trait_frequencies([traits("a", "1", A="x"), traits("b", "1", A="x")])


def test_information_content_examples():
    half = trait_frequencies([traits("c", "1", A="x"), traits("c", "2", A="y")])
    assert information_content(traits("c", "1", A="x"), half) == pytest.approx(1.0)
    freq = trait_frequencies(FIXTURE)
    assert information_content(traits("c", "9", A="y", B="u"), freq) == pytest.approx(2 * math.log2(3), abs=1e-4)
    assert information_content(traits("c", "9", A="y", B="u"), freq) == pytest.approx(3.1699, abs=1e-4)


def test_supduck_bits():
    probs = [0.06, 0.04, 0.06, 0.10, 0.02, 0.12]
    population = 10_001
    freq_counts = {(f"t{i}", "v"): round(p * population) for i, p in enumerate(probs)}
    from conspicuous.rarity import TraitFrequencyTable

    freq = TraitFrequencyTable("supducks", freq_counts, population)
    ic = information_content(TokenTraits("supducks", "6484", {f"t{i}": "v" for i in range(6)}), freq)
    assert ic == pytest.approx(24.78, abs=0.01)


def test_missing_trait_raises():
    with pytest.raises(KeyError):
        information_content(traits("c", "9", Z="q"), trait_frequencies(FIXTURE))


def test_missing_category_contributes_nothing():
    toks = [traits("c", "1", A="x"), traits("c", "2", A="x", B="u")]
    freq = trait_frequencies(toks)
    assert information_content(toks[0], freq) == pytest.approx(0.0)


def test_three_token_ranks():
    scores = {s.token_id: s for s in rarity_rank(FIXTURE)}
    assert scores["1"].rank == scores["3"].rank == 1
    assert scores["1"].one_of_one_count == 1
    assert scores["1"].information_content == pytest.approx(2.1699, abs=1e-4)
    assert scores["2"].rank == 2


def test_empty_rank_rejected():
    with pytest.raises(ValueError):
        rarity_rank([])


def _random_collection(rng, n, categories=5, vocab=8):
    out = []
    for i in range(n):
        t = {}
        for c in range(categories):
            if rng.random() < 0.9:
                t[f"cat{c}"] = f"v{int(rng.zipf(1.6)) % vocab}"
        out.append(TokenTraits("r", str(i), t))
    return out


def test_thousand_token_oracle():
    toks = _random_collection(np.random.default_rng(3), 1000)
    assert [s.rank for s in rarity_rank(toks)] == oracles.dense_ranks([t.traits for t in toks])


def test_log_base_does_not_change_ranks():
    toks = _random_collection(np.random.default_rng(4), 300)
    assert [s.rank for s in rarity_rank(toks, 2.0)] == [s.rank for s in rarity_rank(toks, math.e)]


def test_rank_quantiles_small_is_rare():
    q = rank_quantiles(rarity_rank(FIXTURE))
    assert q == {"1": 1 / 3, "2": 2 / 3, "3": 1 / 3}
