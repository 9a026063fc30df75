"""Synthetic markets with planted bandwagon and snob effects.

Generation order: communities and holder sets, then floor prices from the
holders' affinity mass (bandwagon), then traits and rarity quantiles, then
token prices from the quantiles (snob), then sale histories and embeddings.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping

import numpy as np

from .graph import build_ownership_graph, compute_wallet_metrics
from .model import (
    EMBEDDING_DIM,
    Category,
    Collection,
    Embedding,
    Holding,
    MarketSnapshot,
    TokenTraits,
    Transaction,
    to_price,
)
from .rarity import rarity_rank

START = datetime(2021, 1, 1, tzinfo=timezone.utc)
SNAPSHOT_TIME = datetime(2023, 1, 1, tzinfo=timezone.utc)
TAIL_SCALE = 0.04


@dataclass
class SynthConfig:
    collections: int = 50
    tokens_per_collection: int = 200
    wallets: int = 2000
    communities: int = 4
    community_boost: float = 4.0
    min_holders: int = 10
    popularity_sigma: float = 0.8
    bandwagon_strength: float = 1.0
    floor_noise: float = 0.05
    base_floor: float = 1.0
    price_scale_sigma: float = 0.0
    snob_strength: float = 0.5
    snob_fraction: float = 0.7
    snob_profile: str = "linear"
    additive: bool = False
    price_noise: float = 0.3
    sales_per_token: float = 2.0
    sales_rarity_boost: float = 0.0
    wash_fraction: float = 0.0
    trait_categories: int = 5
    trait_vocabulary: int = 12
    trait_skew: float = 1.2
    with_embeddings: bool = True
    embedding_dim: int = EMBEDDING_DIM
    embedding_spread: float = 1.0
    embedding_separation: float = 3.0
    distinctiveness_boost: float = 1.0
    pfp_fraction: float = 0.4
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("collections", "tokens_per_collection", "wallets", "communities", "trait_categories", "trait_vocabulary", "embedding_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("snob_fraction", "wash_fraction", "pfp_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if self.community_boost < 1:
            raise ValueError("community_boost must be at least 1")
        if self.snob_profile not in ("linear", "tail"):
            raise ValueError("snob_profile must be linear or tail")
        if self.min_holders > self.tokens_per_collection:
            raise ValueError("min_holders exceeds tokens_per_collection")

    @classmethod
    def from_dict(cls, data: Mapping) -> "SynthConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown synth keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class PlantedTruth:
    floor_function: dict
    snob_slopes: dict[str, float]
    snob_profile: str
    additive: bool
    wallet_communities: dict[str, int]
    collection_communities: dict[str, int]
    wash_tokens: list[tuple[str, str]] = field(default_factory=list)

    def to_json(self) -> dict:
        d = asdict(self)
        d["wash_tokens"] = [list(t) for t in self.wash_tokens]
        return d

    @classmethod
    def from_json(cls, data: Mapping) -> "PlantedTruth":
        d = dict(data)
        d["wash_tokens"] = [tuple(t) for t in d.get("wash_tokens", [])]
        return cls(**d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


def _address(seed: int, i: int) -> str:
    return "0x" + hashlib.sha1(f"wallet:{seed}:{i}".encode()).hexdigest()


def snob_multiplier(q: np.ndarray, strength: float, profile: str = "linear") -> np.ndarray:
    """Mean-preserving price multiplier in rarity quantile q (small q = rare).

    ``linear``: 1 + s (mean(q) - q), so the multiplicative fixed-effect slope is -s.
    ``tail``: 1 + s (h(q) - mean(h)) with h = exp(-q / 0.04), a spike at the rarest tokens.
    """
    q = np.asarray(q, dtype=np.float64)
    if profile == "linear":
        return 1.0 + strength * (q.mean() - q)
    h = np.exp(-q / TAIL_SCALE)
    return 1.0 + strength * (h - h.mean())


def _traits(cfg: SynthConfig, rng: np.random.Generator, slug: str) -> list[TokenTraits]:
    n = cfg.tokens_per_collection
    probs = 1.0 / np.arange(1, cfg.trait_vocabulary + 1) ** cfg.trait_skew
    probs /= probs.sum()
    cols = [rng.choice(cfg.trait_vocabulary, size=n, p=probs) for _ in range(cfg.trait_categories)]
    out = []
    for t in range(n):
        traits = {f"trait_{k}": f"v{int(cols[k][t])}" for k in range(cfg.trait_categories)}
        out.append(TokenTraits(slug, str(t), traits))
    return out


def _holders(cfg: SynthConfig, rng, wallet_comm, coll_comm, activity) -> list[np.ndarray]:
    n_tok = cfg.tokens_per_collection
    popularity = rng.lognormal(0.0, cfg.popularity_sigma, size=cfg.collections)
    target = np.clip(np.round(popularity / popularity.mean() * 0.5 * n_tok), cfg.min_holders, min(n_tok, cfg.wallets))
    out = []
    for c in range(cfg.collections):
        w = activity * np.where(wallet_comm == coll_comm[c], cfg.community_boost, 1.0)
        # Efraimidis-Spirakis keys give a weighted sample without replacement
        keys = np.log(rng.random(cfg.wallets)) / w
        out.append(np.sort(np.argsort(-keys, kind="stable")[: int(target[c])]))
    return out


def generate_market(config: SynthConfig | None = None) -> tuple[MarketSnapshot, PlantedTruth]:
    """Deterministic for a fixed config (including seed)."""
    cfg = config or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    n_tok = cfg.tokens_per_collection
    wallets = [_address(cfg.seed, i) for i in range(cfg.wallets)]
    slugs = [f"collection-{i:03d}" for i in range(cfg.collections)]
    wallet_comm = rng.integers(cfg.communities, size=cfg.wallets)
    coll_comm = rng.integers(cfg.communities, size=cfg.collections)
    activity = rng.lognormal(0.0, 0.5, size=cfg.wallets)
    holder_sets = _holders(cfg, rng, wallet_comm, coll_comm, activity)

    # token ownership: every holder gets one token, the rest go to random holders
    holdings: list[Holding] = []
    owner: dict[tuple[str, str], str] = {}
    for c, slug in enumerate(slugs):
        hs = holder_sets[c]
        extra = rng.choice(hs, size=n_tok - hs.size, replace=True)
        owners = rng.permutation(np.concatenate([hs, extra]))
        for t in range(n_tok):
            w = wallets[int(owners[t])]
            owner[(slug, str(t))] = w
            holdings.append(Holding(w, slug, str(t)))

    # bandwagon: floor price from the holders' total affinity
    graph = build_ownership_graph(holdings, slugs)
    metrics = compute_wallet_metrics(graph, {s: 1.0 for s in slugs})
    aff = metrics.affinity
    mass = np.array([aff[graph.collection_neighbors(graph.collection_index[s])].sum() for s in slugs])
    log_mass = np.log1p(mass)
    zscore = (log_mass - log_mass.mean()) / (log_mass.std() or 1.0)
    floor_noise = rng.normal(0.0, cfg.floor_noise, size=cfg.collections)
    floors = cfg.base_floor * np.exp(cfg.bandwagon_strength * zscore + floor_noise)
    scale = np.exp(rng.normal(0.0, cfg.price_scale_sigma, size=cfg.collections)) if cfg.price_scale_sigma > 0 else np.ones(cfg.collections)

    n_snob = int(round(cfg.snob_fraction * cfg.collections))
    snob_set = set(rng.permutation(cfg.collections)[:n_snob].tolist())
    n_pfp = int(round(cfg.pfp_fraction * cfg.collections))
    pfp_set = set(rng.permutation(cfg.collections)[:n_pfp].tolist())
    other_cats = [Category.ART, Category.GAMING, Category.COLLECTIBLES, Category.PHOTOGRAPHY]

    collections, traits_all, txs, embs = [], [], [], []
    snob_slopes: dict[str, float] = {}
    wash_tokens: list[tuple[str, str]] = []
    dim = cfg.embedding_dim
    for c, slug in enumerate(slugs):
        created = START + timedelta(days=int(rng.integers(0, 365)))
        cat = Category.PFP if c in pfp_set else other_cats[int(rng.integers(len(other_cats)))]
        collections.append(Collection(slug, to_price(float(floors[c])), cat, created, n_tok))

        traits = _traits(cfg, rng, slug)
        traits_all.extend(traits)
        ranks = np.array([s.rank for s in rarity_rank(traits)], dtype=np.float64)
        q = ranks / n_tok
        strength = cfg.snob_strength if c in snob_set else 0.0
        snob_slopes[slug] = strength
        mean_price = float(floors[c] * scale[c]) * 2.0
        mult = snob_multiplier(q, strength, cfg.snob_profile)
        if cfg.additive:
            # same shape, but an absolute premium shared by every collection
            value = mean_price + 2.0 * cfg.base_floor * (mult - 1.0)
        else:
            value = mean_price * mult
        value = np.maximum(value, 1e-12)

        lam = cfg.sales_per_token * (1.0 + cfg.sales_rarity_boost * (1.0 - q))
        n_sales = 1 + rng.poisson(np.maximum(lam - 1.0, 0.0))
        sigma = cfg.price_noise
        for t in range(n_tok):
            tok = str(t)
            k = int(n_sales[t])
            prices = value[t] * np.exp(sigma * rng.standard_normal(k) - 0.5 * sigma * sigma)
            chain = [f"0x{0:040x}"] + [wallets[int(i)] for i in rng.integers(cfg.wallets, size=k - 1)] + [owner[(slug, tok)]]
            when = created + timedelta(hours=int(rng.integers(1, 24 * 30)))
            for s in range(k):
                txs.append(Transaction(slug, tok, to_price(float(prices[s])), when, chain[s + 1], chain[s]))
                when += timedelta(hours=int(rng.integers(24, 24 * 60)))
            if cfg.wash_fraction and rng.random() < cfg.wash_fraction:
                a, b = owner[(slug, tok)], wallets[int(rng.integers(cfg.wallets))]
                if a != b:
                    wash_tokens.append((slug, tok))
                    base = float(value[t])
                    for s in range(4):
                        seller, buyer = (a, b) if s % 2 == 0 else (b, a)
                        txs.append(Transaction(slug, tok, to_price(base), when + timedelta(hours=s), buyer, seller))

        if cfg.with_embeddings:
            center = rng.standard_normal(dim) * cfg.embedding_separation / math.sqrt(dim)
            radius = cfg.embedding_spread * (1.0 + cfg.distinctiveness_boost * (1.0 - q))
            noise = rng.standard_normal((n_tok, dim)) / math.sqrt(dim)
            vecs = (center + noise * radius[:, None]).astype(np.float32)
            embs.extend(Embedding(slug, str(t), vecs[t]) for t in range(n_tok))

    truth = PlantedTruth(
        floor_function={
            "form": "base * exp(strength * zscore(log1p(holder_affinity_mass)) + noise)",
            "base": cfg.base_floor,
            "strength": cfg.bandwagon_strength,
            "noise_sd": cfg.floor_noise,
        },
        snob_slopes=snob_slopes,
        snob_profile=cfg.snob_profile,
        additive=cfg.additive,
        wallet_communities={w: int(k) for w, k in zip(wallets, wallet_comm)},
        collection_communities={s: int(k) for s, k in zip(slugs, coll_comm)},
        wash_tokens=sorted(wash_tokens),
    )
    snap = MarketSnapshot(
        collections=tuple(collections),
        holdings=tuple(holdings),
        traits=tuple(traits_all),
        transactions=tuple(txs),
        embeddings=tuple(embs),
        snapshot_time=SNAPSHOT_TIME,
    )
    return snap, truth


def community_edge_rates(snapshot: MarketSnapshot, truth: PlantedTruth) -> tuple[float, float]:
    """Measured (intra-community, inter-community) wallet-collection edge densities."""
    edges = {(h.wallet, h.collection) for h in snapshot.holdings}
    wc = truth.wallet_communities
    cc = truth.collection_communities
    wallet_counts = np.bincount(list(wc.values()), minlength=max(cc.values(), default=0) + 1)
    coll_counts = np.bincount(list(cc.values()), minlength=wallet_counts.size)
    intra_pairs = float(np.dot(wallet_counts, coll_counts[: wallet_counts.size]))
    total_pairs = float(wallet_counts.sum() * coll_counts.sum())
    intra = sum(1 for w, c in edges if wc[w] == cc[c])
    inter = len(edges) - intra
    return intra / intra_pairs, inter / (total_pairs - intra_pairs)
