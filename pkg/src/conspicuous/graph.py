"""Bipartite wallet/collection ownership graph, wallet metrics, subgraph splits
and copy-on-write edge perturbations."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .model import Holding


class Mode(str, enum.Enum):
    ADD = "add"
    DELETE = "delete"


class Weighting(str, enum.Enum):
    AFFINITY = "affinity"
    WEALTH = "wealth"
    IMPORTANCE = "importance"
    UNIFORM = "uniform"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class OwnershipGraph:
    """Unweighted bipartite graph stored as a wallet x collection incidence matrix.

    Node order is sorted by id, so construction does not depend on the order
    of the input holdings.
    """

    def __init__(self, wallets: Sequence[str], collections: Sequence[str], incidence: sp.csr_matrix):
        self.wallets = tuple(wallets)
        self.collections = tuple(collections)
        self.wallet_index = {w: i for i, w in enumerate(self.wallets)}
        self.collection_index = {c: i for i, c in enumerate(self.collections)}
        inc = sp.csr_matrix(incidence, dtype=np.int8, copy=True)
        inc.sum_duplicates()
        inc.data[:] = 1
        inc.sort_indices()
        for arr in (inc.data, inc.indices, inc.indptr):
            _freeze(arr)
        self._incidence = inc
        self._csc = inc.tocsc()
        self._csc.sort_indices()

    @property
    def n_wallets(self) -> int:
        return len(self.wallets)

    @property
    def n_collections(self) -> int:
        return len(self.collections)

    @property
    def n_edges(self) -> int:
        return int(self._incidence.nnz)

    def incidence(self) -> sp.csr_matrix:
        return self._incidence

    def edges(self) -> set[tuple[int, int]]:
        coo = self._incidence.tocoo()
        return set(zip(coo.row.tolist(), coo.col.tolist()))

    def edge_names(self) -> set[tuple[str, str]]:
        return {(self.wallets[w], self.collections[c]) for w, c in self.edges()}

    def collection_neighbors(self, c: int) -> np.ndarray:
        return self._csc.indices[self._csc.indptr[c] : self._csc.indptr[c + 1]]

    def wallet_neighbors(self, w: int) -> np.ndarray:
        return self._incidence.indices[self._incidence.indptr[w] : self._incidence.indptr[w + 1]]

    def has_edge(self, w: int, c: int) -> bool:
        nb = self.wallet_neighbors(w)
        i = np.searchsorted(nb, c)
        return bool(i < nb.size and nb[i] == c)

    def wallet_degrees(self) -> np.ndarray:
        return np.diff(self._incidence.indptr)

    def collection_degrees(self) -> np.ndarray:
        return np.diff(self._csc.indptr)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update("\n".join(self.wallets).encode())
        h.update(b"\0")
        h.update("\n".join(self.collections).encode())
        for arr in (self._incidence.indptr, self._incidence.indices):
            h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
        return h.hexdigest()

    def summary(self) -> dict[str, int]:
        return {"wallets": self.n_wallets, "collections": self.n_collections, "edges": self.n_edges}

    def induced(self, wallet_ids: np.ndarray, collection_ids: np.ndarray) -> "OwnershipGraph":
        wallet_ids = np.sort(np.asarray(wallet_ids, dtype=np.int64))
        collection_ids = np.sort(np.asarray(collection_ids, dtype=np.int64))
        sub = self._incidence[wallet_ids][:, collection_ids]
        return OwnershipGraph([self.wallets[i] for i in wallet_ids], [self.collections[i] for i in collection_ids], sub)


class GraphOverlay:
    """Edge additions/removals layered over an untouched base graph."""

    def __init__(self, base: OwnershipGraph, added: Iterable[tuple[int, int]] = (), removed: Iterable[tuple[int, int]] = ()):
        self.base = base
        self.added = frozenset(added)
        self.removed = frozenset(removed)
        for w, c in self.added:
            if base.has_edge(w, c):
                raise ValueError(f"edge ({w}, {c}) already present")
        for w, c in self.removed:
            if not base.has_edge(w, c):
                raise ValueError(f"edge ({w}, {c}) not present")
        self.wallets = base.wallets
        self.collections = base.collections
        self.wallet_index = base.wallet_index
        self.collection_index = base.collection_index

    @property
    def n_wallets(self) -> int:
        return self.base.n_wallets

    @property
    def n_collections(self) -> int:
        return self.base.n_collections

    @property
    def n_edges(self) -> int:
        return self.base.n_edges + len(self.added) - len(self.removed)

    def incidence(self) -> sp.csr_matrix:
        if not self.added and not self.removed:
            return self.base.incidence()
        coo = self.base.incidence().tocoo()
        rows, cols = coo.row.astype(np.int64), coo.col.astype(np.int64)
        if self.removed:
            drop = np.array(sorted(self.removed), dtype=np.int64)
            keys = rows * self.n_collections + cols
            keep = ~np.isin(keys, drop[:, 0] * self.n_collections + drop[:, 1])
            rows, cols = rows[keep], cols[keep]
        if self.added:
            add = np.array(sorted(self.added), dtype=np.int64)
            rows, cols = np.concatenate([rows, add[:, 0]]), np.concatenate([cols, add[:, 1]])
        mat = sp.csr_matrix(
            (np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(self.n_wallets, self.n_collections)
        )
        mat.sort_indices()
        return mat

    def edges(self) -> set[tuple[int, int]]:
        return (self.base.edges() - self.removed) | self.added

    def collection_neighbors(self, c: int) -> np.ndarray:
        nb = set(self.base.collection_neighbors(c).tolist())
        nb -= {w for w, cc in self.removed if cc == c}
        nb |= {w for w, cc in self.added if cc == c}
        return np.array(sorted(nb), dtype=np.int64)


def build_ownership_graph(holdings: Iterable[Holding], collections: Iterable[str] = ()) -> OwnershipGraph:
    """One edge per distinct (wallet, collection) pair.

    ``collections`` adds collection nodes that nobody holds.
    """
    pairs = {(h.wallet, h.collection) for h in holdings}
    wallets = sorted({w for w, _ in pairs})
    colls = sorted({c for _, c in pairs} | set(collections))
    wi = {w: i for i, w in enumerate(wallets)}
    ci = {c: i for i, c in enumerate(colls)}
    rows = np.fromiter((wi[w] for w, _ in pairs), dtype=np.int64, count=len(pairs))
    cols = np.fromiter((ci[c] for _, c in pairs), dtype=np.int64, count=len(pairs))
    inc = sp.csr_matrix((np.ones(len(pairs), dtype=np.int8), (rows, cols)), shape=(len(wallets), len(colls)))
    return OwnershipGraph(wallets, colls, inc)


@dataclass(frozen=True, eq=False)
class WalletMetrics:
    wallets: tuple[str, ...]
    wealth: np.ndarray
    affinity: np.ndarray
    importance: np.ndarray
    overlap: np.ndarray  # per collection

    def weights(self, weighting: Weighting | str) -> np.ndarray:
        weighting = Weighting(weighting)
        if weighting is Weighting.UNIFORM:
            return np.ones(len(self.wallets))
        return np.asarray(getattr(self, weighting.value), dtype=np.float64)

    def rows(self) -> Iterable[dict]:
        for w, we, a, im in zip(self.wallets, self.wealth, self.affinity, self.importance):
            yield {"wallet": w, "wealth": float(we), "affinity": int(a), "importance": float(im)}


def compute_wallet_metrics(graph: OwnershipGraph | GraphOverlay, floor_prices: Mapping[str, float]) -> WalletMetrics:
    """Wealth, affinity and importance for every wallet.

    overlap(c) is the number of (wallet, other collection) co-holdings of c,
    i.e. sum over c' != c of |W(c) & W(c')|, which equals the sum of
    (deg(w) - 1) over the holders of c.
    """
    missing = [c for c in graph.collections if c not in floor_prices]
    if missing:
        raise KeyError(f"missing floor price for {missing[:5]}")
    inc = graph.incidence().astype(np.int64)
    floors = np.array([float(floor_prices[c]) for c in graph.collections])
    deg = np.asarray(inc.sum(axis=1)).ravel()
    overlap = inc.T @ (deg - 1)
    affinity = inc @ overlap
    wealth = inc @ floors
    importance = wealth * affinity
    for arr in (wealth, affinity, importance, overlap):
        arr.setflags(write=False)
    return WalletMetrics(graph.wallets, wealth, affinity, importance, overlap)


@dataclass(frozen=True)
class Subgraph:
    graph: OwnershipGraph
    wallet_ids: np.ndarray = field(repr=False)
    collection_ids: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SubgraphSplit:
    subgraphs: list[Subgraph]
    membership: dict[str, list[int]]


def split_subgraphs(
    graph: OwnershipGraph,
    wallet_seed_count: int = 75,
    collection_cap: int = 1500,
    count: int = 50,
    seed: int = 0,
) -> SubgraphSplit:
    """Seed-wallet expansion into ``count`` induced subgraphs.

    Each subgraph samples seed wallets, keeps (at most ``collection_cap`` of)
    the collections they hold, then pulls in every holder of those
    collections.
    """
    if graph.n_wallets == 0:
        raise ValueError("graph has no wallets")
    rng = np.random.default_rng(seed)
    subgraphs: list[Subgraph] = []
    membership: dict[str, list[int]] = {}
    inc = graph.incidence()
    csc = inc.tocsc()
    for k in range(count):
        seeds = rng.choice(graph.n_wallets, size=min(wallet_seed_count, graph.n_wallets), replace=False)
        colls = np.unique(inc[np.sort(seeds)].indices)
        if colls.size > collection_cap:
            colls = np.sort(rng.choice(colls, size=collection_cap, replace=False))
        wallets = np.unique(csc[:, colls].indices)
        sub = graph.induced(wallets, colls)
        subgraphs.append(Subgraph(sub, wallets, colls))
        for c in colls:
            membership.setdefault(graph.collections[c], []).append(k)
    return SubgraphSplit(subgraphs, membership)


@dataclass(frozen=True)
class PerturbationSample:
    collection: str
    mode: Mode
    weighting: Weighting
    edge_count: int
    wallets: tuple[str, ...]
    seed: int | None
    short_sample: bool = False
    uniform_fallback: bool = False


def weighted_sample(weights: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Successive sampling without replacement, probability proportional to weight.

    Uses exponential keys ``log(u) / w``; zero-weight items are only taken
    (uniformly) once the positive-weight items are exhausted.
    """
    weights = np.asarray(weights, dtype=np.float64)
    n = weights.size
    k = min(k, n)
    if k == 0:
        return np.empty(0, dtype=np.int64)
    u = rng.random(n)
    positive = weights > 0
    keys = np.full(n, -np.inf)
    keys[positive] = np.log(u[positive]) / weights[positive]
    order = np.argsort(-keys, kind="stable")
    npos = int(positive.sum())
    if k <= npos:
        return order[:k]
    zeros = np.flatnonzero(~positive)
    extra = rng.choice(zeros, size=k - npos, replace=False)
    return np.concatenate([order[:npos], extra])


def perturb_edges(
    graph: OwnershipGraph,
    collection: str,
    edge_count: int,
    mode: Mode | str,
    weighting: Weighting | str,
    metrics: WalletMetrics | None,
    seed: int | np.random.Generator | None = None,
) -> tuple[PerturbationSample, GraphOverlay]:
    mode, weighting = Mode(mode), Weighting(weighting)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    c = graph.collection_index[collection]
    neighbors = graph.collection_neighbors(c)
    if mode is Mode.DELETE:
        pool = np.asarray(neighbors, dtype=np.int64)
    else:
        mask = np.ones(graph.n_wallets, dtype=bool)
        mask[neighbors] = False
        pool = np.flatnonzero(mask)
    if pool.size == 0 and edge_count > 0:
        raise ValueError(f"no candidate wallets to {mode.value} for {collection!r}")
    if weighting is Weighting.UNIFORM or metrics is None:
        w = np.ones(pool.size)
    else:
        w = metrics.weights(weighting)[pool]
    fallback = bool(pool.size and not np.any(w > 0) and weighting is not Weighting.UNIFORM)
    if fallback:
        w = np.ones(pool.size)
    chosen = pool[weighted_sample(w, edge_count, rng)]
    edges = [(int(wi), c) for wi in chosen]
    overlay = GraphOverlay(graph, added=edges) if mode is Mode.ADD else GraphOverlay(graph, removed=edges)
    sample = PerturbationSample(
        collection=collection,
        mode=mode,
        weighting=weighting,
        edge_count=edge_count,
        wallets=tuple(graph.wallets[i] for i in chosen),
        seed=None if isinstance(seed, np.random.Generator) else seed,
        short_sample=pool.size < edge_count,
        uniform_fallback=fallback,
    )
    return sample, overlay


def remove_bottom_percentile(
    graph: OwnershipGraph, collection: str, percentile: float, metrics: WalletMetrics
) -> GraphOverlay:
    """Drop the collection's edges to holders whose wealth is strictly below the
    ``percentile``-th percentile of its holders' wealth."""
    if not 0 < percentile < 100:
        raise ValueError("percentile must lie in (0, 100)")
    c = graph.collection_index[collection]
    neighbors = graph.collection_neighbors(c)
    if neighbors.size == 0:
        raise ValueError(f"collection {collection!r} has no holders")
    wealth = np.asarray(metrics.wealth)[neighbors]
    cut = np.percentile(wealth, percentile)
    drop = neighbors[wealth < cut]
    return GraphOverlay(graph, removed=[(int(w), c) for w in drop])
