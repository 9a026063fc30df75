"""Analytics for NFT market snapshots: ingestion, trait rarity, visual
distinctiveness, wallet/collection graphs, a numpy GCN, market statistics,
an equilibrium model of conspicuous consumption and synthetic markets with
planted effects."""

from __future__ import annotations

__version__ = "0.1.0"

from .ingest import SnapshotSource, fetch_snapshot, load_directory, load_snapshot, write_snapshot
from .model import MarketSnapshot, validate_snapshot

__all__ = [
    "MarketSnapshot",
    "SnapshotSource",
    "fetch_snapshot",
    "load_directory",
    "load_snapshot",
    "validate_snapshot",
    "write_snapshot",
    "__version__",
]
