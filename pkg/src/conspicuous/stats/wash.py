"""Wash-trade detection and case-study collection selection."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Iterable

from ..model import MarketSnapshot, Transaction, price_to_float
from .correlation import Method
from .market import Predictor, TokenKey, correlate_by_collection, predictor_values, token_average_prices


def _token_histories(transactions: Iterable[Transaction]) -> dict[TokenKey, list[Transaction]]:
    hist: dict[TokenKey, list[Transaction]] = defaultdict(list)
    for t in transactions:
        hist[(t.collection, t.token_id)].append(t)
    for trades in hist.values():
        trades.sort(key=lambda t: (t.timestamp, t.seller, t.buyer))
    return hist


def _has_wash_run(trades: list[Transaction], window: timedelta, max_wallet_set: int, min_trades: int) -> bool:
    for i in range(len(trades) - min_trades + 1):
        wallets: set[str] = set()
        for j in range(i, len(trades)):
            if trades[j].timestamp - trades[i].timestamp > window:
                break
            wallets.update((trades[j].buyer, trades[j].seller))
            if len(wallets) > max_wallet_set:
                break
            if j - i + 1 >= min_trades:
                return True
    return False


def detect_wash_trades(
    transactions: Iterable[Transaction],
    window: timedelta = timedelta(days=1),
    max_wallet_set: int = 2,
    min_trades: int = 4,
) -> list[TokenKey]:
    """Tokens with a run of at least ``min_trades`` consecutive sales, all within
    ``window`` of the first, whose buyers and sellers number at most
    ``max_wallet_set`` distinct wallets.  Returned sorted."""
    if min_trades < 1:
        raise ValueError("min_trades must be positive")
    hist = _token_histories(transactions)
    return sorted(k for k, trades in hist.items() if _has_wash_run(trades, window, max_wallet_set, min_trades))


@dataclass
class CaseStudySelection:
    by_volume: list[str] = field(default_factory=list)
    significant: list[str] = field(default_factory=list)
    selected: list[str] = field(default_factory=list)
    wash_fraction: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "by_volume": self.by_volume,
            "significant": self.significant,
            "selected": self.selected,
            "wash_fraction": self.wash_fraction,
        }


def collection_volumes(transactions: Iterable[Transaction]) -> dict[str, float]:
    vol: dict[str, float] = defaultdict(float)
    for t in transactions:
        vol[t.collection] += price_to_float(t.price)
    return dict(vol)


def select_case_studies(
    snapshot: MarketSnapshot,
    top: int = 30,
    alpha: float = 0.05,
    max_wash_fraction: float = 0.05,
    window: timedelta = timedelta(days=1),
    seed: int = 0,
) -> CaseStudySelection:
    """Top collections by sale volume, then those with a significant rarity or
    distinctiveness price correlation, then those whose share of wash-traded
    tokens is at most ``max_wash_fraction``.  Each stage is kept for reporting."""
    vol = collection_volumes(snapshot.transactions)
    by_volume = sorted(vol, key=lambda c: (-vol[c], c))[:top]
    prices = token_average_prices(snapshot.transactions)
    sig: set[str] = set()
    for pred in Predictor:
        for row in correlate_by_collection(predictor_values(snapshot, pred, seed), prices, by_volume, Method.PEARSON, seed):
            if row.result is not None and row.result.significant(alpha):
                sig.add(row.collection)
    significant = [c for c in by_volume if c in sig]
    flagged = set(detect_wash_trades(snapshot.transactions, window))
    traded: dict[str, int] = defaultdict(int)
    washed: dict[str, int] = defaultdict(int)
    for key in prices:
        traded[key[0]] += 1
        washed[key[0]] += key in flagged
    fractions = {c: washed[c] / traded[c] for c in significant if traded[c]}
    selected = [c for c in significant if fractions.get(c, 0.0) <= max_wash_fraction]
    return CaseStudySelection(by_volume, significant, selected, fractions)
