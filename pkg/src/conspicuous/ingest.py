"""Snapshot file formats, streaming parsers, directory loading and HTTP fetching.

Holdings live in ``holdings.csv`` (``wallet,collection,token_id``); every other
kind is JSON Lines.  Embeddings may alternatively be stored as a little-endian
float32 sidecar (``embeddings.bin``) described by ``embeddings.index.jsonl``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, BinaryIO, Callable, Iterator

import numpy as np

from .model import (
    EMBEDDING_DIM,
    Category,
    Collection,
    Embedding,
    Holding,
    MarketSnapshot,
    TokenTraits,
    Transaction,
    derive_snapshot_time,
    format_timestamp,
    is_address,
    normalize_address,
    parse_timestamp,
    to_price,
    validate_snapshot,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_SUPPLY = 1_000_000
DEFAULT_BATCH_SIZE = 10_000
HOLDINGS_HEADER = ["wallet", "collection", "token_id"]


class FileKind(str, enum.Enum):
    COLLECTIONS = "collections"
    HOLDINGS = "holdings"
    TRAITS = "traits"
    TRANSACTIONS = "transactions"
    EMBEDDINGS = "embeddings"

    @property
    def filename(self) -> str:
        return "holdings.csv" if self is FileKind.HOLDINGS else f"{self.value}.jsonl"


KINDS = tuple(FileKind)
EMBEDDING_BIN = "embeddings.bin"
EMBEDDING_INDEX = "embeddings.index.jsonl"
META_FILE = "meta.json"


class IngestError(Exception):
    """Raised when a source cannot be read at all (as opposed to dirty lines)."""


class FetchError(IngestError):
    pass


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str


@dataclass
class RecordBatch:
    records: list[Any]
    rejects: list[Reject]


@dataclass(frozen=True)
class RecordTable:
    kind: FileKind
    records: tuple[Any, ...]
    rejects: tuple[Reject, ...]
    lines: int

    @property
    def reject_count(self) -> int:
        return len(self.rejects)


# -- record constructors -----------------------------------------------------


def _require_str(obj: dict, key: str) -> str:
    value = obj[key]
    if not isinstance(value, str) or not value.strip():
        raise ValueError(f"{key} must be a non-empty string")
    return value.strip()


def collection_from_json(obj: dict) -> Collection:
    raw_category = str(obj.get("category") or "uncategorized")
    category = Category.parse(raw_category)
    supply = obj["total_supply"]
    if isinstance(supply, bool) or not isinstance(supply, int):
        raise ValueError("total_supply must be an integer")
    if supply < 1:
        raise ValueError("total_supply must be positive")
    floor = to_price(obj["floor_price"])
    if floor < 0:
        raise ValueError("floor_price must be non-negative")
    return Collection(
        slug=_require_str(obj, "slug"),
        floor_price=floor,
        category=category,
        created_at=parse_timestamp(obj["created_at"]),
        total_supply=supply,
        category_raw="" if category.value == raw_category else raw_category,
    )


def holding_from_fields(wallet: str, collection: str, token_id: str) -> Holding:
    wallet = normalize_address(wallet)
    if not is_address(wallet):
        raise ValueError(f"wallet {wallet!r} is not a hex address")
    collection = collection.strip()
    token_id = token_id.strip()
    if not collection or not token_id:
        raise ValueError("collection and token_id must be non-empty")
    return Holding(sys.intern(wallet), sys.intern(collection), token_id)


def holding_from_json(obj: dict) -> Holding:
    return holding_from_fields(_require_str(obj, "wallet"), _require_str(obj, "collection"), str(obj["token_id"]))


def traits_from_json(obj: dict) -> TokenTraits:
    traits = obj["traits"]
    if not isinstance(traits, dict):
        raise ValueError("traits must be an object")
    clean = {}
    for k, v in traits.items():
        if not isinstance(k, str) or not k.strip():
            raise ValueError("trait names must be non-empty strings")
        clean[k] = str(v)
    return TokenTraits(_require_str(obj, "collection"), str(obj["token_id"]), clean)


def transaction_from_json(obj: dict) -> Transaction:
    price = to_price(obj["price"])
    if price < 0:
        raise ValueError("price must be non-negative")
    return Transaction(
        collection=_require_str(obj, "collection"),
        token_id=str(obj["token_id"]),
        price=price,
        timestamp=parse_timestamp(obj["timestamp"]),
        buyer=normalize_address(_require_str(obj, "buyer")),
        seller=normalize_address(_require_str(obj, "seller")),
    )


def embedding_from_json(obj: dict) -> Embedding:
    vector = obj["vector"]
    if not isinstance(vector, list) or not vector:
        raise ValueError("vector must be a non-empty array")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vector):
        raise ValueError("vector components must be numbers")
    return Embedding(_require_str(obj, "collection"), str(obj["token_id"]), np.asarray(vector, dtype=np.float64))


_JSON_BUILDERS: dict[FileKind, Callable[[dict], Any]] = {
    FileKind.COLLECTIONS: collection_from_json,
    FileKind.HOLDINGS: holding_from_json,
    FileKind.TRAITS: traits_from_json,
    FileKind.TRANSACTIONS: transaction_from_json,
    FileKind.EMBEDDINGS: embedding_from_json,
}


def record_from_json(kind: FileKind, obj: Any) -> Any:
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    try:
        return _JSON_BUILDERS[kind](obj)
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ArithmeticError) as exc:
        raise ValueError(str(exc)) from None


def record_to_json(kind: FileKind, rec: Any) -> dict[str, Any]:
    if kind is FileKind.HOLDINGS:
        return {"wallet": rec.wallet, "collection": rec.collection, "token_id": rec.token_id}
    return rec.to_json()


# -- streaming parsers -------------------------------------------------------


def _iter_jsonl(kind: FileKind, stream: BinaryIO, batch_size: int) -> Iterator[RecordBatch]:
    batch = RecordBatch([], [])
    for lineno, raw in enumerate(stream, start=1):
        if not raw.strip():
            continue
        try:
            rec = record_from_json(kind, json.loads(raw))
        except (ValueError, UnicodeDecodeError) as exc:
            batch.rejects.append(Reject(lineno, str(exc)))
        else:
            batch.records.append(rec)
        if len(batch.records) >= batch_size:
            yield batch
            batch = RecordBatch([], [])
    if batch.records or batch.rejects:
        yield batch


def _iter_holdings_csv(stream: BinaryIO, batch_size: int) -> Iterator[RecordBatch]:
    text = io.TextIOWrapper(stream, encoding="utf-8", errors="replace", newline="")
    reader = csv.reader(text)
    batch = RecordBatch([], [])
    first = True
    try:
        for row in reader:
            lineno = reader.line_num
            if first:
                first = False
                if [c.strip().lower() for c in row] == HOLDINGS_HEADER:
                    continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                batch.rejects.append(Reject(lineno, f"expected 3 fields, got {len(row)}"))
                continue
            try:
                batch.records.append(holding_from_fields(*row))
            except ValueError as exc:
                batch.rejects.append(Reject(lineno, str(exc)))
            if len(batch.records) >= batch_size:
                yield batch
                batch = RecordBatch([], [])
    finally:
        text.detach()
    if batch.records or batch.rejects:
        yield batch


def iter_record_batches(
    kind: FileKind | str, stream: BinaryIO, batch_size: int = DEFAULT_BATCH_SIZE
) -> Iterator[RecordBatch]:
    """Parse ``stream`` lazily, yielding at most ``batch_size`` records at a time."""
    kind = FileKind(kind)
    if kind is FileKind.HOLDINGS:
        return _iter_holdings_csv(stream, batch_size)
    return _iter_jsonl(kind, stream, batch_size)


def parse_record_stream(kind: FileKind | str, stream: BinaryIO, batch_size: int = DEFAULT_BATCH_SIZE) -> RecordTable:
    kind = FileKind(kind)
    records: list[Any] = []
    rejects: list[Reject] = []
    for batch in iter_record_batches(kind, stream, batch_size):
        records.extend(batch.records)
        rejects.extend(batch.rejects)
    return RecordTable(kind, tuple(records), tuple(rejects), len(records) + len(rejects))


# -- embedding sidecar -------------------------------------------------------


def write_embedding_sidecar(embeddings: tuple[Embedding, ...], directory: Path) -> None:
    with open(directory / EMBEDDING_INDEX, "w", encoding="utf-8") as idx, open(directory / EMBEDDING_BIN, "wb") as out:
        for e in embeddings:
            idx.write(json.dumps({"collection": e.collection, "token_id": e.token_id, "dim": int(e.vector.size)}) + "\n")
            out.write(e.vector.astype("<f4").tobytes())


def read_embedding_sidecar(directory: Path) -> RecordTable:
    records: list[Embedding] = []
    rejects: list[Reject] = []
    with open(directory / EMBEDDING_INDEX, "rb") as idx, open(directory / EMBEDDING_BIN, "rb") as data:
        for lineno, raw in enumerate(idx, start=1):
            if not raw.strip():
                continue
            try:
                entry = json.loads(raw)
                dim = int(entry.get("dim", EMBEDDING_DIM))
            except (ValueError, TypeError) as exc:
                raise IngestError(f"{EMBEDDING_INDEX}:{lineno}: {exc}") from None
            blob = data.read(4 * dim)
            if len(blob) != 4 * dim:
                raise IngestError(f"{EMBEDDING_BIN} truncated at index line {lineno}")
            vec = np.frombuffer(blob, dtype="<f4").astype(np.float64)
            try:
                records.append(Embedding(_require_str(entry, "collection"), str(entry["token_id"]), vec))
            except (KeyError, ValueError) as exc:
                rejects.append(Reject(lineno, str(exc)))
    return RecordTable(FileKind.EMBEDDINGS, tuple(records), tuple(rejects), len(records) + len(rejects))


# -- snapshot assembly -------------------------------------------------------


def apply_supply_filter(tables: dict[FileKind, tuple], max_supply: int | None) -> dict[FileKind, tuple]:
    if max_supply is None:
        return tables
    dropped = {c.slug for c in tables[FileKind.COLLECTIONS] if c.total_supply > max_supply}
    if not dropped:
        return tables
    log.info("supply filter drops %d collection(s) above %d tokens", len(dropped), max_supply)
    out = {FileKind.COLLECTIONS: tuple(c for c in tables[FileKind.COLLECTIONS] if c.slug not in dropped)}
    for kind in KINDS[1:]:
        out[kind] = tuple(r for r in tables.get(kind, ()) if r.collection not in dropped)
    return out


def assemble_snapshot(
    tables: dict[FileKind, tuple],
    max_supply: int | None = DEFAULT_MAX_SUPPLY,
    snapshot_time=None,
    rejects: dict[str, tuple[int, ...]] | None = None,
) -> MarketSnapshot:
    tables = apply_supply_filter({k: tuple(tables.get(k, ())) for k in KINDS}, max_supply)
    if snapshot_time is None:
        snapshot_time = derive_snapshot_time(tables[FileKind.COLLECTIONS], tables[FileKind.TRANSACTIONS])
    snap = MarketSnapshot(
        collections=tables[FileKind.COLLECTIONS],
        holdings=tables[FileKind.HOLDINGS],
        traits=tables[FileKind.TRAITS],
        transactions=tables[FileKind.TRANSACTIONS],
        embeddings=tables[FileKind.EMBEDDINGS],
        snapshot_time=snapshot_time,
        rejects=rejects or {},
    )
    return replace(snap, violations=tuple(validate_snapshot(snap)))


def load_directory(path: str | Path, max_supply: int | None = DEFAULT_MAX_SUPPLY) -> MarketSnapshot:
    root = Path(path)
    if not root.is_dir():
        raise IngestError(f"{root} is not a readable directory")
    if not (root / FileKind.COLLECTIONS.filename).exists():
        raise IngestError(f"{root} has no {FileKind.COLLECTIONS.filename}")
    tables: dict[FileKind, tuple] = {}
    rejects: dict[str, tuple[int, ...]] = {}
    for kind in KINDS:
        if kind is FileKind.EMBEDDINGS and not (root / kind.filename).exists() and (root / EMBEDDING_INDEX).exists():
            table = read_embedding_sidecar(root)
        else:
            file = root / kind.filename
            if not file.exists():
                continue
            try:
                with open(file, "rb") as fh:
                    table = parse_record_stream(kind, fh)
            except OSError as exc:
                raise IngestError(f"cannot read {file}: {exc}") from exc
        if table.rejects:
            log.warning("%s: %d malformed line(s) skipped", kind.filename, table.reject_count)
        tables[kind] = table.records
        rejects[kind.value] = tuple(r.line for r in table.rejects)
    snapshot_time = None
    if (root / META_FILE).exists():
        meta = json.loads((root / META_FILE).read_text(encoding="utf-8"))
        if meta.get("snapshot_time"):
            snapshot_time = parse_timestamp(meta["snapshot_time"])
    return assemble_snapshot(tables, max_supply, snapshot_time, rejects)


def write_snapshot(snapshot: MarketSnapshot, path: str | Path, embedding_format: str = "jsonl") -> Path:
    """Serialize ``snapshot`` into ``path`` using the on-disk directory layout."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for kind in KINDS:
        records = getattr(snapshot, kind.value)
        if kind is FileKind.HOLDINGS:
            with open(root / kind.filename, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(HOLDINGS_HEADER)
                writer.writerows((h.wallet, h.collection, h.token_id) for h in records)
        elif kind is FileKind.EMBEDDINGS and embedding_format == "binary":
            write_embedding_sidecar(records, root)
        else:
            with open(root / kind.filename, "w", encoding="utf-8") as fh:
                for rec in records:
                    fh.write(json.dumps(record_to_json(kind, rec), separators=(",", ":")) + "\n")
    (root / META_FILE).write_text(
        json.dumps({"snapshot_time": format_timestamp(snapshot.snapshot_time)}) + "\n", encoding="utf-8"
    )
    return root


# -- HTTP --------------------------------------------------------------------


@dataclass(frozen=True)
class SnapshotSource:
    kind: str
    location: str
    max_supply_filter: int | None = DEFAULT_MAX_SUPPLY
    page_size: int = 1000

    def __post_init__(self) -> None:
        if self.kind not in ("directory", "http"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not self.location:
            raise ValueError("source location is empty")
        if self.max_supply_filter is not None and self.max_supply_filter < 1:
            raise ValueError("max_supply_filter must be positive")


def load_snapshot(source: SnapshotSource) -> MarketSnapshot:
    if source.kind == "directory":
        return load_directory(source.location, source.max_supply_filter)
    return fetch_snapshot(source.location, source.page_size, max_supply=source.max_supply_filter)


@dataclass
class RetryPolicy:
    max_retries: int = 5
    base_delay: float = 0.2
    max_delay: float = 5.0
    sleep: Callable[[float], None] = field(default=time.sleep)

    def delay(self, attempt: int) -> float:
        return min(self.max_delay, self.base_delay * (2**attempt))


def _get_json(client, url: str, params: dict, retry: RetryPolicy) -> Any:
    import httpx

    attempt = 0
    while True:
        try:
            resp = client.get(url, params=params)
            if resp.status_code >= 500 or resp.status_code == 429:
                raise httpx.HTTPStatusError(f"HTTP {resp.status_code}", request=resp.request, response=resp)
            if resp.status_code == 404:
                return None
            resp.raise_for_status()
            return resp.json()
        except (httpx.TransportError, httpx.HTTPStatusError) as exc:
            status = getattr(getattr(exc, "response", None), "status_code", None)
            if status is not None and 400 <= status < 500 and status != 429:
                raise FetchError(f"GET {url} {params}: {exc}") from exc
            if attempt >= retry.max_retries:
                raise FetchError(f"GET {url} {params} failed after {attempt} retries: {exc}") from exc
            wait = retry.delay(attempt)
            attempt += 1
            log.warning("retry %d for %s %s in %.2fs (%s)", attempt, url, params, wait, exc)
            retry.sleep(wait)
        except ValueError as exc:
            raise FetchError(f"GET {url} {params}: body is not JSON") from exc


def _fetch_kind(client, base: str, kind: FileKind, page_size: int, retry: RetryPolicy) -> tuple:
    records: list[Any] = []
    cursor: int | None = None
    page = 0
    while True:
        params = {"limit": page_size}
        if cursor is not None:
            params["cursor"] = str(cursor)
        body = _get_json(client, f"{base}/{kind.value}", params, retry)
        locator = f"{kind.value} page {page} (cursor={cursor})"
        if body is None:
            if page == 0 and kind is not FileKind.COLLECTIONS:
                return ()
            raise FetchError(f"{locator}: resource not found")
        if not isinstance(body, dict) or not isinstance(body.get("records"), list):
            raise FetchError(f"{locator}: malformed page")
        for i, obj in enumerate(body["records"]):
            try:
                records.append(record_from_json(kind, obj))
            except ValueError as exc:
                raise FetchError(f"{locator}: record {i}: {exc}") from None
        nxt = body.get("next_cursor")
        if not body["records"] or nxt is None:
            return tuple(records)
        try:
            nxt_int = int(nxt)
        except (TypeError, ValueError):
            raise FetchError(f"{locator}: cursor {nxt!r} is not an offset") from None
        if nxt_int <= (cursor or 0):
            raise FetchError(f"{locator}: non-monotone cursor {nxt!r}")
        cursor = nxt_int
        page += 1


def fetch_snapshot(
    base_url: str,
    page_size: int = 1000,
    *,
    client=None,
    retry: RetryPolicy | None = None,
    max_supply: int | None = DEFAULT_MAX_SUPPLY,
) -> MarketSnapshot:
    """Pull all five resources from a paginated endpoint and assemble a snapshot.

    ``client`` is any ``httpx.Client``-compatible object; one is created when
    omitted.  Pages are requested strictly in cursor order.
    """
    import httpx

    if page_size < 1:
        raise ValueError("page_size must be positive")
    retry = retry or RetryPolicy()
    base = base_url.rstrip("/")
    owns = client is None
    if owns:
        client = httpx.Client(timeout=30.0)
    try:
        tables = {kind: _fetch_kind(client, base, kind, page_size, retry) for kind in KINDS}
        meta = _get_json(client, f"{base}/meta", {}, retry)
    finally:
        if owns:
            client.close()
    snapshot_time = None
    if isinstance(meta, dict) and meta.get("snapshot_time"):
        snapshot_time = parse_timestamp(meta["snapshot_time"])
    return assemble_snapshot(tables, max_supply, snapshot_time)

