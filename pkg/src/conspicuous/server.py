"""HTTP endpoint that serves a snapshot using the paginated record protocol.

``GET /{kind}?cursor=<offset>&limit=<n>`` returns
``{"records": [...], "next_cursor": str | null}``; cursors are decimal offsets.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel

from .ingest import KINDS, FileKind, load_directory, record_to_json
from .model import MarketSnapshot, format_timestamp

MAX_PAGE = 10_000


class Page(BaseModel):
    records: list[dict[str, Any]]
    next_cursor: Optional[str] = None


class Meta(BaseModel):
    snapshot_time: str
    counts: dict[str, int]


def create_app(snapshot: MarketSnapshot | str | Path) -> FastAPI:
    if not isinstance(snapshot, MarketSnapshot):
        snapshot = load_directory(snapshot, max_supply=None)
    tables = {kind.value: [record_to_json(kind, r) for r in getattr(snapshot, kind.value)] for kind in KINDS}
    app = FastAPI(title="snapshot records")

    @app.get("/meta", response_model=Meta)
    def meta() -> Meta:
        return Meta(snapshot_time=format_timestamp(snapshot.snapshot_time), counts=snapshot.counts())

    @app.get("/{kind}", response_model=Page)
    def page(kind: str, cursor: int = Query(0, ge=0), limit: int = Query(1000, ge=1, le=MAX_PAGE)) -> Page:
        try:
            FileKind(kind)
        except ValueError:
            raise HTTPException(status_code=404, detail=f"unknown resource {kind!r}") from None
        rows = tables[kind]
        chunk = rows[cursor : cursor + limit]
        end = cursor + len(chunk)
        return Page(records=chunk, next_cursor=str(end) if chunk and end < len(rows) else None)

    return app
