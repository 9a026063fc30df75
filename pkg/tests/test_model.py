from __future__ import annotations

from dataclasses import replace
from decimal import Decimal

import numpy as np
import pytest

from conspicuous.model import (
    Category,
    MarketSnapshot,
    format_price,
    normalize_address,
    to_price,
    validate_snapshot,
)

from conftest import collection, embedding, holding, sale, traits


def test_empty_snapshot_is_valid():
    assert validate_snapshot(MarketSnapshot()) == []


def test_dangling_holding_reported_once():
    snap = MarketSnapshot(collections=[collection("a")], holdings=[holding(1, "ghost")])
    report = validate_snapshot(snap)
    assert [v.kind for v in report] == ["dangling-reference"]
    assert report[0].table == "holdings" and report[0].locator == 0


def test_dimension_mismatch_found_once():
    snap = MarketSnapshot(
        collections=[collection("a")],
        embeddings=[embedding("a", "1", np.zeros(384)), embedding("a", "2", np.zeros(100))],
    )
    report = validate_snapshot(snap)
    assert [(v.kind, v.locator) for v in report] == [("dimension-mismatch", 1)]


def test_duplicates_and_ranges():
    snap = MarketSnapshot(
        collections=[collection("a"), collection("a"), replace(collection("b"), floor_price=Decimal(-1), total_supply=0)],
        holdings=[holding(1, "a"), holding(1, "a")],
        traits=[traits("a", "1", x="1"), traits("a", "1", x="2"), traits("a", "2", **{"": "v"})],
        transactions=[replace(sale("a", "1", "1"), buyer="")],
        embeddings=[embedding("a", "1", np.full(384, np.nan))],
    )
    kinds = sorted(v.kind for v in validate_snapshot(snap))
    assert kinds.count("duplicate-key") == 3
    assert kinds.count("out-of-range") == 2
    assert kinds.count("empty-field") == 2
    assert kinds.count("non-finite") == 1


def test_validate_is_idempotent_and_pure():
    snap = MarketSnapshot(collections=[collection("a")], holdings=[holding(1, "b")])
    before = (snap.collections, snap.holdings)
    assert validate_snapshot(snap) == validate_snapshot(snap)
    assert (snap.collections, snap.holdings) == before


def test_price_is_wei_exact():
    assert to_price("0.1") + to_price("0.2") == to_price("0.3")
    assert to_price(0.1) == Decimal("0.1")
    assert format_price(to_price("1.500000000000000000")) == "1.5"
    assert to_price("1e-18") == Decimal("0.000000000000000001")


def test_price_rejects_garbage():
    for bad in ("abc", "nan", "inf", True):
        with pytest.raises(ValueError):
            to_price(bad)


def test_address_lowercased():
    assert normalize_address("0xABcD") == "0xabcd"


def test_unknown_category_maps_to_other():
    c = Category.parse("Generative Music")
    assert c is Category.OTHER
