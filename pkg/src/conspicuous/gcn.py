"""Graph convolutional floor-price-percentile regressor written directly in numpy.

Each layer computes ``act(A_hat @ H @ W + b)`` with ``A_hat`` the
self-looped, symmetrically normalised adjacency of the wallet/collection
graph.  Hidden layers use ReLU, the output layer is linear.  Gradients are
accumulated by hand in reverse order.  Node order within a graph is all
wallets followed by all collections.
"""

from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .graph import (
    GraphOverlay,
    Mode,
    OwnershipGraph,
    SubgraphSplit,
    WalletMetrics,
    Weighting,
    perturb_edges,
    remove_bottom_percentile,
)

log = logging.getLogger(__name__)

HIDDEN = (64, 32, 16)
CHECKPOINT_MAGIC = b"GCNW"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


# -- targets and baseline ----------------------------------------------------


@dataclass(frozen=True)
class PercentileTargets:
    buckets: dict[str, int]
    sorted_prices: tuple[float, ...]

    def values(self, collections: Sequence[str]) -> np.ndarray:
        return np.array([self.buckets[c] for c in collections], dtype=np.float64)


def bucketize_floor_prices(prices: Mapping[str, float]) -> PercentileTargets:
    """Bucket = floor(100 * (#prices strictly below) / n), capped at 99.

    Equal prices share a bucket, so point masses survive.
    """
    if not prices:
        raise ValueError("need at least one price")
    ordered = np.sort(np.array([float(p) for p in prices.values()]))
    n = ordered.size
    buckets = {}
    for slug, p in prices.items():
        below = int(np.searchsorted(ordered, float(p), side="left"))
        buckets[slug] = min(99, (100 * below) // n)
    return PercentileTargets(buckets, tuple(float(p) for p in ordered))


def median_baseline(targets: Sequence[float]) -> tuple[float, float]:
    y = np.asarray(list(targets), dtype=np.float64)
    if y.size == 0:
        raise ValueError("no targets")
    pred = float(np.median(y))
    return pred, float(np.sqrt(np.mean((y - pred) ** 2)))


def rmse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(target)) ** 2)))


# -- graph operators ---------------------------------------------------------


def normalized_adjacency(incidence: sp.spmatrix) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 for the bipartite graph with incidence ``incidence``."""
    b = sp.csr_matrix(incidence, dtype=np.float64)
    n_w, n_c = b.shape
    a = sp.bmat([[None, b], [b.T, None]], format="csr", dtype=np.float64) if b.nnz else sp.csr_matrix((n_w + n_c,) * 2)
    a = a + sp.identity(n_w + n_c, format="csr")
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv = 1.0 / np.sqrt(deg)
    d = sp.diags(inv)
    out = (d @ a @ d).tocsr()
    out.sort_indices()
    return out


def build_features(graph: OwnershipGraph | GraphOverlay, centroids: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
    """Scalar 1 on every node, or collection centroids with zero wallet rows."""
    n_w, n_c = graph.n_wallets, graph.n_collections
    if centroids is None:
        return np.ones((n_w + n_c, 1))
    dim = len(next(iter(centroids.values())))
    x = np.zeros((n_w + n_c, dim))
    for j, slug in enumerate(graph.collections):
        vec = centroids.get(slug)
        if vec is not None:
            x[n_w + j] = vec
    return x


# -- model -------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 2500
    batch_size: int = 4
    learning_rate: float = 1e-3
    seed: int = 0
    splits: tuple[float, float, float] = (0.70, 0.15, 0.15)
    subgraph_count: int = 50
    wallet_seed_count: int = 75
    collection_cap: int = 1500
    use_centroids: bool = False
    eval_every: int = 1

    @classmethod
    def from_dict(cls, data: Mapping) -> "TrainConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        if "splits" in known:
            known["splits"] = tuple(float(x) for x in known["splits"])
        return cls(**known)


@dataclass
class GcnModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: TrainConfig = field(default_factory=TrainConfig)
    best_epoch: int = 0
    target_shift: float = 0.0
    target_scale: float = 1.0

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.weights]

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "GcnModel":
        return GcnModel(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.config,
            self.best_epoch,
            self.target_shift,
            self.target_scale,
        )


def init_model(in_dim: int, seed: int = 0, hidden: Sequence[int] = HIDDEN, config: TrainConfig | None = None) -> GcnModel:
    """Glorot-uniform weights and zero biases."""
    if in_dim < 1:
        raise ValueError("in_dim must be positive")
    rng = np.random.default_rng(seed)
    dims = [in_dim, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return GcnModel(weights, biases, config or TrainConfig(seed=seed))


def forward(model: GcnModel, adj: sp.csr_matrix, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Raw (normalised-scale) outputs and the cache needed by ``backward``."""
    if x.shape[1] != model.in_dim:
        raise ValueError(f"feature dimension {x.shape[1]} != model input {model.in_dim}")
    h = x
    cache = []
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        m = adj @ h
        z = m @ w + b
        cache.append((m, z))
        h = z if i == last else np.maximum(z, 0.0)
    return h[:, 0], cache


def backward(model: GcnModel, adj: sp.csr_matrix, cache: list, dout: np.ndarray) -> list[np.ndarray]:
    """Gradients ordered like ``model.params()`` for upstream gradient ``dout``."""
    grads: list[np.ndarray] = [None] * (2 * len(model.weights))  # type: ignore[list-item]
    dz = dout.reshape(-1, 1)
    for i in range(len(model.weights) - 1, -1, -1):
        m, _ = cache[i]
        grads[2 * i] = m.T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        if i == 0:
            break
        dh = adj @ (dz @ model.weights[i].T)
        dz = dh * (cache[i - 1][1] > 0)
    return grads


def mse_loss_and_grad(
    model: GcnModel, adj: sp.csr_matrix, x: np.ndarray, idx: np.ndarray, y: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Mean squared error over nodes ``idx`` (normalised scale) and its gradient."""
    out, cache = forward(model, adj, x)
    resid = out[idx] - y
    loss = float(np.mean(resid**2))
    dout = np.zeros_like(out)
    np.add.at(dout, idx, 2.0 * resid / idx.size)
    return loss, backward(model, adj, cache, dout)


def gcn_forward(graph: OwnershipGraph | GraphOverlay, features: np.ndarray, model: GcnModel, adj=None) -> np.ndarray:
    """Predictions for every node, in bucket units."""
    adj = normalized_adjacency(graph.incidence()) if adj is None else adj
    out, _ = forward(model, adj, features)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite activations in forward pass")
    return out * model.target_scale + model.target_shift


def collection_predictions(graph, features: np.ndarray, model: GcnModel, adj=None) -> dict[str, float]:
    pred = gcn_forward(graph, features, model, adj)
    off = graph.n_wallets
    return {c: float(pred[off + j]) for j, c in enumerate(graph.collections)}


# -- optimiser ---------------------------------------------------------------


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- training ----------------------------------------------------------------


def assign_splits(collections: Sequence[str], fractions: Sequence[float], seed: int = 0) -> dict[str, str]:
    """Disjoint train/val/test assignment drawn from the global collection list."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or sum(fractions) <= 0:
        raise ValueError("splits must be three non-negative fractions")
    order = sorted(collections)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(order))
    total = float(sum(fractions))
    n_train = int(round(len(order) * fractions[0] / total))
    n_val = int(round(len(order) * fractions[1] / total))
    labels = {}
    for rank, i in enumerate(perm):
        labels[order[i]] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return labels


@dataclass
class _Prepared:
    adj: sp.csr_matrix
    x: np.ndarray
    collections: tuple[str, ...]
    offset: int
    train_idx: np.ndarray
    train_y: np.ndarray


@dataclass
class TrainingLog:
    epochs: list[int] = field(default_factory=list)
    train_mse: list[float] = field(default_factory=list)
    val_rmse: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_rmse: float = float("inf")
    splits: dict[str, str] = field(default_factory=dict)

    def rows(self):
        for e, t, v in zip(self.epochs, self.train_mse, self.val_rmse):
            yield {"epoch": e, "train_mse": t, "val_rmse": v}


def _prepare(split: SubgraphSplit, targets: Mapping[str, float], labels: Mapping[str, str], centroids, shift, scale):
    prepared = []
    for sub in split.subgraphs:
        g = sub.graph
        off = g.n_wallets
        idx, y = [], []
        for j, c in enumerate(g.collections):
            if labels.get(c) == "train" and c in targets:
                idx.append(off + j)
                y.append((targets[c] - shift) / scale)
        prepared.append(
            _Prepared(
                normalized_adjacency(g.incidence()),
                build_features(g, centroids),
                g.collections,
                off,
                np.array(idx, dtype=np.int64),
                np.array(y, dtype=np.float64),
            )
        )
    return prepared


def _split_predictions(model: GcnModel, prepared: list[_Prepared]) -> dict[str, float]:
    """Mean prediction (bucket units) per collection over the subgraphs holding it."""
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for p in prepared:
        out, _ = forward(model, p.adj, p.x)
        out = out * model.target_scale + model.target_shift
        for j, c in enumerate(p.collections):
            sums[c] = sums.get(c, 0.0) + float(out[p.offset + j])
            counts[c] = counts.get(c, 0) + 1
    return {c: sums[c] / counts[c] for c in sums}


def train(
    split: SubgraphSplit,
    targets: Mapping[str, float],
    config: TrainConfig | None = None,
    centroids: Mapping[str, np.ndarray] | None = None,
    labels: Mapping[str, str] | None = None,
) -> tuple[GcnModel, TrainingLog]:
    """Fit on train collections, keep the epoch with the lowest validation RMSE.

    Each optimiser step averages squared error over the labelled train nodes
    of ``config.batch_size`` subgraphs.  Fully deterministic for a fixed seed.
    """
    config = config or TrainConfig()
    labels = dict(labels) if labels is not None else assign_splits(sorted(targets), config.splits, config.seed)
    train_vals = np.array([targets[c] for c, s in labels.items() if s == "train" and c in targets], dtype=np.float64)
    if train_vals.size == 0:
        raise ValueError("no training collections")
    shift = float(train_vals.mean())
    scale = float(train_vals.std()) or 1.0
    in_dim = 1 if centroids is None else len(next(iter(centroids.values())))
    model = init_model(in_dim, config.seed, config=config)
    model.target_shift, model.target_scale = shift, scale
    prepared = _prepare(split, targets, labels, centroids, shift, scale)
    trainable = [p for p in prepared if p.train_idx.size]
    if not trainable:
        raise ValueError("no subgraph contains a training collection")
    val = sorted(c for c, s in labels.items() if s == "val" and c in targets)
    rng = np.random.default_rng(config.seed + 1)
    opt = Adam(model.params(), lr=config.learning_rate)
    best = model.copy()
    tlog = TrainingLog(splits=dict(labels))

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(trainable))
        sq_total, n_total = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [trainable[i] for i in order[start : start + config.batch_size]]
            count = sum(p.train_idx.size for p in batch)
            grads = [np.zeros_like(p) for p in model.params()]
            for p in batch:
                loss, g = mse_loss_and_grad(model, p.adj, p.x, p.train_idx, p.train_y)
                w = p.train_idx.size / count
                for acc, gi in zip(grads, g):
                    acc += w * gi
                sq_total += loss * p.train_idx.size
                n_total += p.train_idx.size
            opt.step(model.params(), grads)
        train_mse = sq_total / n_total * scale**2
        if not np.isfinite(train_mse):
            raise TrainingDiverged(epoch)
        if epoch % config.eval_every and epoch != config.epochs:
            continue
        if val:
            preds = _split_predictions(model, prepared)
            covered = [c for c in val if c in preds]
            score = rmse([preds[c] for c in covered], [targets[c] for c in covered]) if covered else np.sqrt(train_mse)
        else:
            score = float(np.sqrt(train_mse))
        tlog.epochs.append(epoch)
        tlog.train_mse.append(float(train_mse))
        tlog.val_rmse.append(float(score))
        if score < tlog.best_val_rmse:
            tlog.best_val_rmse = float(score)
            tlog.best_epoch = epoch
            best = model.copy()
            best.best_epoch = epoch
    log.info("best validation RMSE %.4f at epoch %d", tlog.best_val_rmse, tlog.best_epoch)
    return best, tlog


def evaluate(model: GcnModel, split: SubgraphSplit, targets: Mapping[str, float], collections: Sequence[str], centroids=None) -> dict[str, float]:
    prepared = _prepare(split, targets, {}, centroids, model.target_shift, model.target_scale)
    preds = _split_predictions(model, prepared)
    covered = [c for c in collections if c in preds]
    if not covered:
        return {"rmse": float("nan"), "n": 0}
    y = np.array([targets[c] for c in covered])
    p = np.array([preds[c] for c in covered])
    return {"rmse": rmse(p, y), "n": len(covered), "predictions": dict(zip(covered, p.tolist()))}


# -- perturbation experiments ------------------------------------------------


@dataclass(frozen=True)
class PerturbationPlan:
    mode: Mode
    weighting: Weighting
    edge_count: int
    collections: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class DeltaExperiment:
    plan: PerturbationPlan
    collections: tuple[str, ...]
    deltas: np.ndarray
    short_samples: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.deltas)) if self.deltas.size else 0.0

    @property
    def fraction_positive(self) -> float:
        return float(np.mean(self.deltas > 0)) if self.deltas.size else 0.0

    @property
    def fraction_negative(self) -> float:
        return float(np.mean(self.deltas < 0)) if self.deltas.size else 0.0

    def summary(self) -> dict:
        lo, hi = bootstrap_mean_ci(self.deltas) if self.deltas.size else (0.0, 0.0)
        return {
            "mode": self.plan.mode.value,
            "weighting": self.plan.weighting.value,
            "edge_count": self.plan.edge_count,
            "samples": int(self.deltas.size),
            "mean_delta": self.mean,
            "fraction_positive": self.fraction_positive,
            "fraction_negative": self.fraction_negative,
            "ci_low": lo,
            "ci_high": hi,
            "short_samples": self.short_samples,
        }


def bootstrap_mean_ci(values: np.ndarray, level: float = 0.95, n_boot: int = 2000, seed: int = 0) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    rng = np.random.default_rng(seed)
    means = values[rng.integers(0, values.size, size=(n_boot, values.size))].mean(axis=1)
    tail = (1 - level) / 2
    return float(np.quantile(means, tail)), float(np.quantile(means, 1 - tail))


def bootstrap_sign_pvalue(values: np.ndarray, n_boot: int = 2000, seed: int = 0) -> float:
    """One-sided bootstrap p-value for the sign of the mean (share of resampled
    means on the other side of zero)."""
    values = np.asarray(values, dtype=np.float64)
    rng = np.random.default_rng(seed)
    means = values[rng.integers(0, values.size, size=(n_boot, values.size))].mean(axis=1)
    if values.mean() < 0:
        return float((np.sum(means >= 0) + 1) / (n_boot + 1))
    return float((np.sum(means <= 0) + 1) / (n_boot + 1))


def predicted_delta_experiment(
    model: GcnModel,
    graph: OwnershipGraph,
    features: np.ndarray,
    plan: PerturbationPlan,
    metrics: WalletMetrics | None,
    sample_count: int,
    seed: int = 0,
) -> DeltaExperiment:
    """Per sample: pick a target collection, perturb its edges, record the
    change in its predicted bucket."""
    pool = list(plan.collections) or list(graph.collections)
    base = gcn_forward(graph, features, model)
    rng = np.random.default_rng(seed)
    deltas = np.zeros(sample_count)
    chosen = []
    short = 0
    for k in range(sample_count):
        slug = pool[int(rng.integers(len(pool)))]
        sample, overlay = perturb_edges(graph, slug, plan.edge_count, plan.mode, plan.weighting, metrics, rng)
        short += sample.short_sample
        j = graph.n_wallets + graph.collection_index[slug]
        pert = gcn_forward(overlay, features, model)
        deltas[k] = pert[j] - base[j]
        chosen.append(slug)
    return DeltaExperiment(plan, tuple(chosen), deltas, short)


def bottom_percentile_experiment(
    model: GcnModel,
    graph: OwnershipGraph,
    features: np.ndarray,
    metrics: WalletMetrics,
    percentiles: Sequence[float] = tuple(range(5, 100, 5)),
    collections: Sequence[str] = (),
    seed: int = 0,
) -> list[dict]:
    """Mean change in each collection's prediction after dropping its poorest
    holders, with a bootstrap sign test per percentile."""
    pool = [c for c in (collections or graph.collections) if graph.collection_neighbors(graph.collection_index[c]).size]
    base = gcn_forward(graph, features, model)
    rows = []
    for p in percentiles:
        deltas = []
        for slug in pool:
            overlay = remove_bottom_percentile(graph, slug, p, metrics)
            j = graph.n_wallets + graph.collection_index[slug]
            deltas.append(gcn_forward(overlay, features, model)[j] - base[j])
        d = np.array(deltas)
        rows.append(
            {
                "percentile": p,
                "collections": len(pool),
                "mean_delta": float(d.mean()),
                "fraction_negative": float(np.mean(d < 0)),
                "p_value": bootstrap_sign_pvalue(d, seed=seed),
            }
        )
    return rows


@dataclass(eq=False)
class GcnRun:
    model: GcnModel
    log: TrainingLog
    evaluation: dict
    experiments: list[dict]
    bottom_percentile: list[dict]


def run_gcn_experiments(
    graph: OwnershipGraph,
    floor_prices: Mapping[str, float],
    config: TrainConfig,
    samples: int = 1000,
    add_edges: int = 100,
    delete_edges: int = 10,
    percentiles: Sequence[float] = tuple(range(5, 100, 5)),
    centroids: Mapping[str, np.ndarray] | None = None,
) -> GcnRun:
    """Train on subgraphs, score test collections against the train-median
    baseline, then run the edge-perturbation and bottom-percentile experiments
    on the full graph."""
    from .graph import compute_wallet_metrics, split_subgraphs

    targets = {k: float(v) for k, v in bucketize_floor_prices(floor_prices).buckets.items()}
    split = split_subgraphs(graph, config.wallet_seed_count, config.collection_cap, config.subgraph_count, config.seed)
    model, tlog = train(split, targets, config, centroids)
    features = build_features(graph, centroids)
    preds = collection_predictions(graph, features, model)
    train_c = [c for c, s in tlog.splits.items() if s == "train"]
    test_c = sorted(c for c, s in tlog.splits.items() if s == "test")
    median = float(np.median([targets[c] for c in train_c]))
    evaluation = {"best_epoch": tlog.best_epoch, "best_val_rmse": tlog.best_val_rmse, "train_median": median, "test_collections": len(test_c)}
    if test_c:
        y = np.array([targets[c] for c in test_c])
        evaluation["test_rmse"] = rmse(np.array([preds[c] for c in test_c]), y)
        evaluation["baseline_rmse"] = rmse(np.full_like(y, median), y)
    metrics = compute_wallet_metrics(graph, floor_prices)
    experiments = []
    plans = [(Mode.ADD, Weighting.AFFINITY, add_edges), (Mode.DELETE, Weighting.WEALTH, delete_edges)]
    for k, (mode, weighting, count) in enumerate(plans):
        if samples > 0 and count > 0:
            exp = predicted_delta_experiment(model, graph, features, PerturbationPlan(mode, weighting, count), metrics, samples, config.seed + k)
            summary = exp.summary()
            summary["sign_p_value"] = bootstrap_sign_pvalue(exp.deltas, seed=config.seed)
            experiments.append(summary)
    bottom = bottom_percentile_experiment(model, graph, features, metrics, percentiles, seed=config.seed) if percentiles else []
    return GcnRun(model, tlog, evaluation, experiments, bottom)


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(model: GcnModel, path: str | Path) -> None:
    """Header (magic, version, metadata JSON, layer shapes) then float64 LE params."""
    meta = json.dumps(
        {
            "config": asdict(model.config),
            "best_epoch": model.best_epoch,
            "target_shift": model.target_shift,
            "target_scale": model.target_scale,
        },
        sort_keys=True,
    ).encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(meta)))
    buf.write(meta)
    buf.write(struct.pack("<I", len(model.weights)))
    for w in model.weights:
        buf.write(struct.pack("<II", *w.shape))
    for p in model.params():
        buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> GcnModel:
    data = Path(path).read_bytes()
    try:
        return _parse_checkpoint(data)
    except (struct.error, KeyError, json.JSONDecodeError) as exc:
        raise ValueError(f"truncated or malformed checkpoint: {exc}") from exc


def _parse_checkpoint(data: bytes) -> GcnModel:
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a GCN checkpoint")
    version, meta_len = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 12
    meta = json.loads(data[pos : pos + meta_len])
    pos += meta_len
    (n_layers,) = struct.unpack_from("<I", data, pos)
    pos += 4
    shapes = []
    for _ in range(n_layers):
        shapes.append(struct.unpack_from("<II", data, pos))
        pos += 8
    weights, biases = [], []
    for r, c in shapes:
        w = np.frombuffer(data, dtype="<f8", count=r * c, offset=pos).reshape(r, c).astype(np.float64)
        pos += 8 * r * c
        b = np.frombuffer(data, dtype="<f8", count=c, offset=pos).astype(np.float64)
        pos += 8 * c
        weights.append(w)
        biases.append(b)
    if pos != len(data):
        raise ValueError("trailing bytes in checkpoint")
    model = GcnModel(weights, biases, TrainConfig.from_dict(meta["config"]), meta["best_epoch"], meta["target_shift"], meta["target_scale"])
    if not all(np.all(np.isfinite(p)) for p in model.params()):
        raise ValueError("checkpoint holds non-finite parameters")
    return model
