"""Shared domain records for market snapshots and snapshot-level validation."""

from __future__ import annotations

import decimal
import enum
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from typing import Any, Iterable, Mapping

import numpy as np

EMBEDDING_DIM = 384
PRICE_PLACES = 18
_PRICE_QUANTUM = Decimal(1).scaleb(-PRICE_PLACES)
_PRICE_CONTEXT = decimal.Context(prec=80, rounding=decimal.ROUND_HALF_EVEN)
_ADDRESS_RE = re.compile(r"^0x[0-9a-f]+$")
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class Category(str, enum.Enum):
    PFP = "pfp"
    ART = "art"
    GAMING = "gaming"
    COLLECTIBLES = "collectibles"
    PHOTOGRAPHY = "photography"
    UNCATEGORIZED = "uncategorized"
    OTHER = "other"

    @classmethod
    def parse(cls, raw: str) -> "Category":
        try:
            return cls(raw.strip().lower())
        except ValueError:
            return cls.OTHER


def to_price(value: Any) -> Decimal:
    """Coerce ``value`` to a wei-granular Decimal.

    Floats go through ``repr`` so ``0.1`` becomes ``Decimal("0.1")`` rather
    than its binary expansion.
    """
    if isinstance(value, bool):
        raise ValueError(f"price must be numeric, got {value!r}")
    try:
        if isinstance(value, Decimal):
            d = value
        elif isinstance(value, float):
            d = Decimal(repr(value))
        else:
            d = Decimal(str(value).strip())
    except decimal.InvalidOperation:
        raise ValueError(f"price is not a decimal: {value!r}") from None
    if not d.is_finite():
        raise ValueError(f"price is not finite: {value!r}")
    return d.quantize(_PRICE_QUANTUM, context=_PRICE_CONTEXT)


def format_price(price: Decimal) -> str:
    text = format(price, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text or "0"


def normalize_address(raw: str) -> str:
    return raw.strip().lower()


def is_address(value: str) -> bool:
    return bool(_ADDRESS_RE.match(value))


def parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True, slots=True)
class Collection:
    slug: str
    floor_price: Decimal
    category: Category
    created_at: datetime
    total_supply: int
    category_raw: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "slug": self.slug,
            "floor_price": format_price(self.floor_price),
            "category": self.category_raw or self.category.value,
            "created_at": format_timestamp(self.created_at),
            "total_supply": self.total_supply,
        }


@dataclass(frozen=True, slots=True)
class Holding:
    wallet: str
    collection: str
    token_id: str


@dataclass(frozen=True, slots=True)
class TokenTraits:
    collection: str
    token_id: str
    traits: Mapping[str, str]

    def __hash__(self) -> int:
        return hash((self.collection, self.token_id, tuple(sorted(self.traits.items()))))

    def to_json(self) -> dict[str, Any]:
        return {"collection": self.collection, "token_id": self.token_id, "traits": dict(self.traits)}


@dataclass(frozen=True, eq=False, slots=True)
class Embedding:
    collection: str
    token_id: str
    vector: np.ndarray

    def __post_init__(self) -> None:
        vec = np.array(self.vector, dtype=np.float64)
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return (
            self.collection == other.collection
            and self.token_id == other.token_id
            and self.vector.shape == other.vector.shape
            and bool(np.array_equal(self.vector, other.vector))
        )

    def __hash__(self) -> int:
        return hash((self.collection, self.token_id, self.vector.tobytes()))

    def to_json(self) -> dict[str, Any]:
        return {
            "collection": self.collection,
            "token_id": self.token_id,
            "vector": [float(v) for v in self.vector],
        }


@dataclass(frozen=True, slots=True)
class Transaction:
    collection: str
    token_id: str
    price: Decimal
    timestamp: datetime
    buyer: str
    seller: str

    def to_json(self) -> dict[str, Any]:
        return {
            "collection": self.collection,
            "token_id": self.token_id,
            "price": format_price(self.price),
            "timestamp": format_timestamp(self.timestamp),
            "buyer": self.buyer,
            "seller": self.seller,
        }


@dataclass(frozen=True)
class Violation:
    kind: str
    table: str
    locator: int | str
    detail: str


@dataclass(frozen=True)
class MarketSnapshot:
    """Immutable container for one market dump.

    ``violations`` and ``rejects`` are diagnostics attached at load time and
    take no part in equality.
    """

    collections: tuple[Collection, ...] = ()
    holdings: tuple[Holding, ...] = ()
    traits: tuple[TokenTraits, ...] = ()
    transactions: tuple[Transaction, ...] = ()
    embeddings: tuple[Embedding, ...] = ()
    snapshot_time: datetime = EPOCH
    violations: tuple[Violation, ...] = field(default=(), compare=False)
    rejects: Mapping[str, tuple[int, ...]] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        for name in ("collections", "holdings", "traits", "transactions", "embeddings", "violations"):
            value = getattr(self, name)
            if not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value))

    def collection_map(self) -> dict[str, Collection]:
        return {c.slug: c for c in self.collections}

    def floor_prices(self) -> dict[str, float]:
        return {c.slug: float(c.floor_price) for c in self.collections}

    def by_collection(self, table: str) -> dict[str, list[Any]]:
        out: dict[str, list[Any]] = {}
        for rec in getattr(self, table):
            out.setdefault(rec.collection, []).append(rec)
        return out

    def counts(self) -> dict[str, int]:
        return {
            "collections": len(self.collections),
            "holdings": len(self.holdings),
            "traits": len(self.traits),
            "transactions": len(self.transactions),
            "embeddings": len(self.embeddings),
        }


def validate_snapshot(snapshot: MarketSnapshot, embedding_dim: int = EMBEDDING_DIM) -> list[Violation]:
    """Scan every table and return all integrity violations (empty when valid)."""
    out: list[Violation] = []
    slugs: set[str] = set()
    for i, c in enumerate(snapshot.collections):
        if not c.slug:
            out.append(Violation("empty-field", "collections", i, "slug is empty"))
        if c.slug in slugs:
            out.append(Violation("duplicate-key", "collections", i, f"slug {c.slug!r} repeated"))
        slugs.add(c.slug)
        if not c.floor_price.is_finite() or c.floor_price < 0:
            out.append(Violation("out-of-range", "collections", i, f"floor_price {c.floor_price}"))
        if c.total_supply < 1:
            out.append(Violation("out-of-range", "collections", i, f"total_supply {c.total_supply}"))

    seen_holdings: set[tuple[str, str, str]] = set()
    for i, h in enumerate(snapshot.holdings):
        if h.collection not in slugs:
            out.append(Violation("dangling-reference", "holdings", i, f"unknown collection {h.collection!r}"))
        if not is_address(h.wallet):
            out.append(Violation("out-of-range", "holdings", i, f"wallet {h.wallet!r} is not a lowercase hex address"))
        key = (h.wallet, h.collection, h.token_id)
        if key in seen_holdings:
            out.append(Violation("duplicate-key", "holdings", i, f"holding {key} repeated"))
        seen_holdings.add(key)

    seen_traits: set[tuple[str, str]] = set()
    for i, t in enumerate(snapshot.traits):
        if t.collection not in slugs:
            out.append(Violation("dangling-reference", "traits", i, f"unknown collection {t.collection!r}"))
        if any(not name for name in t.traits):
            out.append(Violation("empty-field", "traits", i, "empty trait name"))
        key2 = (t.collection, t.token_id)
        if key2 in seen_traits:
            out.append(Violation("duplicate-key", "traits", i, f"traits for {key2} repeated"))
        seen_traits.add(key2)

    for i, tx in enumerate(snapshot.transactions):
        if tx.collection not in slugs:
            out.append(Violation("dangling-reference", "transactions", i, f"unknown collection {tx.collection!r}"))
        if not tx.price.is_finite() or tx.price < 0:
            out.append(Violation("out-of-range", "transactions", i, f"price {tx.price}"))
        if not tx.buyer:
            out.append(Violation("empty-field", "transactions", i, "buyer is empty"))
        if not tx.seller:
            out.append(Violation("empty-field", "transactions", i, "seller is empty"))

    seen_emb: set[tuple[str, str]] = set()
    for i, e in enumerate(snapshot.embeddings):
        if e.collection not in slugs:
            out.append(Violation("dangling-reference", "embeddings", i, f"unknown collection {e.collection!r}"))
        if e.vector.ndim != 1 or e.vector.shape[0] != embedding_dim:
            out.append(
                Violation("dimension-mismatch", "embeddings", i, f"dimension {e.vector.size} != {embedding_dim}")
            )
        elif not np.all(np.isfinite(e.vector)):
            out.append(Violation("non-finite", "embeddings", i, "vector has non-finite components"))
        key3 = (e.collection, e.token_id)
        if key3 in seen_emb:
            out.append(Violation("duplicate-key", "embeddings", i, f"embedding for {key3} repeated"))
        seen_emb.add(key3)
    return out


def derive_snapshot_time(collections: Iterable[Collection], transactions: Iterable[Transaction]) -> datetime:
    latest = EPOCH
    for c in collections:
        latest = max(latest, c.created_at)
    for tx in transactions:
        latest = max(latest, tx.timestamp)
    return latest


def price_to_float(price: Decimal) -> float:
    value = float(price)
    if not math.isfinite(value):
        raise ValueError(f"price {price} does not fit a float")
    return value
