"""Config-driven experiment runs and the artifact writers shared with the CLI.

A run executes the requested stages in dependency order.  Every stage gets
its own subdirectory of the output directory and sees earlier stages only
through the manifest (paths plus sha256 content hashes).  The manifest holds
no timestamps or absolute paths, so identical config and seed give an
identical manifest.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import svg
from .model import MarketSnapshot

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

STAGES = ("synth", "ingest", "rarity", "embeddings", "graph", "gcn", "stats", "sim")
REQUIRES = {
    "ingest": (),
    "rarity": ("ingest",),
    "embeddings": ("ingest",),
    "graph": ("ingest",),
    "gcn": ("ingest", "graph"),
    "stats": ("ingest",),
    "sim": (),
    "synth": (),
}
ENV_PREFIX = "CONSPICUOUS__"
MANIFEST_NAME = "manifest.json"
STATS_ANALYSES = ("census", "compare-r2", "fixed-effect", "bins", "censored", "wash", "select-case-studies")

DEFAULTS: dict[str, dict[str, Any]] = {
    "source": {"kind": "directory", "location": "", "max_supply_filter": 1_000_000, "page_size": 1000},
    "synth": {},
    "ingest": {},
    "rarity": {"base": 2.0},
    "embeddings": {"sample_size": 50, "stability_sizes": [5, 10, 20, 50, 100], "stability_trials": 20},
    "graph": {},
    "gcn": {"samples": 1000, "add_edges": 100, "delete_edges": 10, "percentiles": list(range(5, 100, 5))},
    "stats": {
        "analyses": list(STATS_ANALYSES),
        "alpha": 0.05,
        "method": "pearson",
        "category_filters": ["all"],
        "bins": 20,
        "max_bin_plots": 10,
        "censor_fraction": 0.10,
        "top": 30,
        "max_wash_fraction": 0.05,
    },
    "sim": {
        "params": {},
        "z_min": 0.1,
        "z_max": 1.0,
        "agents": 101,
        "probe_kind": "raise",
        "probe_level": 0.0,
        "probe_delta": 1e-3,
    },
}


class ConfigError(ValueError):
    pass


# -- config ------------------------------------------------------------------


@dataclass
class RunConfig:
    stages: list[str] = field(default_factory=list)
    out: str = "run"
    seed: int = 0
    sections: dict[str, dict[str, Any]] = field(default_factory=dict)

    def section(self, name: str) -> dict[str, Any]:
        merged = copy.deepcopy(DEFAULTS.get(name, {}))
        merged.update(self.sections.get(name, {}))
        return merged

    def validate(self) -> None:
        unknown = [s for s in self.stages if s not in STAGES]
        if unknown:
            raise ConfigError(f"unknown stage(s): {', '.join(unknown)}")
        for s in self.stages:
            missing = [r for r in REQUIRES[s] if r not in self.stages]
            if missing:
                raise ConfigError(f"stage {s!r} requires {', '.join(missing)}")
        for name in self.sections:
            if name not in DEFAULTS:
                raise ConfigError(f"unknown config section [{name}]")
        if "ingest" in self.stages and "synth" not in self.stages and not self.section("source")["location"]:
            raise ConfigError("ingest needs [source] location or a synth stage")
        for name in ("gcn", "stats", "sim", "embeddings", "rarity"):
            extra = set(self.sections.get(name, {})) - set(DEFAULTS[name]) - _extra_keys(name)
            if extra:
                raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(extra))}")
        bad = set(self.section("stats")["analyses"]) - set(STATS_ANALYSES)
        if bad:
            raise ConfigError(f"unknown stats analyses: {', '.join(sorted(bad))}")

    def ordered_stages(self) -> list[str]:
        return [s for s in STAGES if s in self.stages]

    def fingerprint(self) -> str:
        """Hash of everything that affects results (the output path does not)."""
        body = {"stages": self.ordered_stages(), "seed": self.seed, "sections": {k: self.section(k) for k in sorted(DEFAULTS)}}
        return hashlib.sha256(json.dumps(body, sort_keys=True, default=str).encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        data = dict(data)
        stages = data.pop("stages", [])
        if isinstance(stages, str):
            stages = [s.strip() for s in stages.split(",") if s.strip()]
        out = str(data.pop("out", "run"))
        seed = int(data.pop("seed", 0))
        sections = {}
        for key, value in data.items():
            if not isinstance(value, Mapping):
                raise ConfigError(f"top-level key {key!r} is not a section")
            sections[key] = dict(value)
        cfg = cls(list(stages), out, seed, sections)
        cfg.validate()
        return cfg


def _extra_keys(name: str) -> set[str]:
    if name == "gcn":
        from .gcn import TrainConfig

        return {f.name for f in fields(TrainConfig)}
    return {"seed"}


def _parse_env_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def apply_env_overrides(data: dict[str, Any], environ: Mapping[str, str] | None = None) -> dict[str, Any]:
    """``CONSPICUOUS__SEED=3`` sets a top-level key, ``CONSPICUOUS__GCN__EPOCHS=10``
    a section key.  Values are parsed as JSON when possible."""
    environ = os.environ if environ is None else environ
    data = copy.deepcopy(data)
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in name[len(ENV_PREFIX) :].split("__") if p]
        if not path:
            continue
        target = data
        for part in path[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"{name}: {part!r} is not a section")
        target[path[-1]] = _parse_env_value(environ[name])
    return data


def load_config(path: str | Path | None, environ: Mapping[str, str] | None = None) -> RunConfig:
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        text = path.read_bytes()
        try:
            data = json.loads(text) if path.suffix.lower() == ".json" else tomllib.loads(text.decode("utf-8"))
        except (ValueError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(apply_env_overrides(data, environ))


# -- artifact writers --------------------------------------------------------


def _cell(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(row[h]) for h in header])
    return path


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_json(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_rarity(snapshot: MarketSnapshot, path: str | Path, collections: Sequence[str] | None = None, base: float = 2.0) -> Path:
    from .rarity import rarity_rank

    groups = snapshot.by_collection("traits")
    slugs = sorted(groups) if collections is None else list(collections)
    rows = []
    for slug in slugs:
        if slug not in groups:
            raise KeyError(f"no traits for collection {slug!r}")
        for s in rarity_rank(groups[slug], base):
            rows.append({"collection": slug, "token_id": s.token_id, "one_of_ones": s.one_of_one_count, "ic_bits": s.information_content, "rank": s.rank})
    return write_csv(path, ["collection", "token_id", "one_of_ones", "ic_bits", "rank"], rows)


def write_distinctiveness(snapshot: MarketSnapshot, path: str | Path, sample_size: int = 50, seed: int = 0) -> Path:
    from .embeddings import centroid, distinctiveness_scores

    groups = snapshot.by_collection("embeddings")
    rows = []
    for i, slug in enumerate(sorted(groups)):
        center = centroid(groups[slug], sample_size, seed + i, slug)
        for s in distinctiveness_scores(groups[slug], center):
            rows.append({"collection": slug, "token_id": s.token_id, "distance": s.distance})
    return write_csv(path, ["collection", "token_id", "distance"], rows)


def write_stability(snapshot: MarketSnapshot, path: str | Path, sizes: Sequence[int], trials: int = 20, seed: int = 0, collection: str | None = None) -> Path | None:
    from .embeddings import stability_curve

    groups = snapshot.by_collection("embeddings")
    if not groups:
        return None
    slug = collection or max(sorted(groups), key=lambda s: len(groups[s]))
    n = len(groups[slug])
    usable = [s for s in sizes if 1 <= s <= n] or [n]
    curve = stability_curve(groups[slug], usable, trials, seed)
    return write_csv(path, ["sample_size", "mean_relative_difference", "median_relative_difference"], curve.as_rows())


def write_edges(graph, path: str | Path) -> Path:
    rows = ({"wallet": w, "collection": c} for w, c in sorted(graph.edge_names()))
    return write_csv(path, ["wallet", "collection"], rows)


def read_edges(path: str | Path) -> list:
    """Edge list back as pseudo-holdings (one per wallet/collection pair)."""
    from .model import Holding

    with open(path, encoding="utf-8", newline="") as fh:
        return [Holding(r["wallet"], r["collection"], "") for r in csv.DictReader(fh)]


def write_metrics(metrics, path: str | Path) -> Path:
    return write_csv(path, ["wallet", "wealth", "affinity", "importance"], metrics.rows())


def bins_svg(result, slug: str) -> str:
    return svg.bar_chart(
        [float(m) for m in result.means],
        title=f"{slug}: mean price by rarity bin",
        xlabel="rarity bin (least to most rare)",
        ylabel="mean sale price",
        labels=[str(i) for i in range(len(result.means))],
    )


def equilibrium_svg(state) -> str:
    return svg.line_chart(
        [float(z) for z in state.population.incomes],
        [float(x) for x in state.x],
        title="equilibrium conspicuous consumption",
        xlabel="income z",
        ylabel="x*(z)",
    )


# -- stages ------------------------------------------------------------------


@dataclass
class StageContext:
    config: RunConfig
    out: Path
    manifest: dict[str, Any]

    def stage_dir(self, name: str) -> Path:
        d = self.out / name
        d.mkdir(parents=True, exist_ok=True)
        return d

    def artifact(self, stage: str, name: str) -> Path:
        """Path of an artifact recorded by an earlier stage, checked against its hash."""
        for entry in self.manifest["stages"]:
            if entry["name"] != stage:
                continue
            for art in entry["artifacts"]:
                if art["path"] == f"{stage}/{name}" or art["path"].startswith(f"{stage}/{name}/"):
                    p = self.out / f"{stage}/{name}"
                    _verify(self.out, entry["artifacts"], f"{stage}/{name}")
                    return p
        raise FileNotFoundError(f"manifest has no artifact {stage}/{name}")

    def snapshot(self) -> MarketSnapshot:
        from .ingest import load_directory

        return load_directory(self.artifact("ingest", "snapshot"), max_supply=None)

    def seed(self, section: str) -> int:
        return int(self.config.section(section).get("seed", self.config.seed))


def _verify(root: Path, artifacts: list[dict], prefix: str) -> None:
    for art in artifacts:
        if art["path"] == prefix or art["path"].startswith(prefix + "/"):
            if sha256_file(root / art["path"]) != art["sha256"]:
                raise RuntimeError(f"artifact {art['path']} changed since it was recorded")


def _stage_synth(ctx: StageContext) -> None:
    from .ingest import write_snapshot
    from .synth import SynthConfig, generate_market

    params = ctx.config.section("synth")
    params.setdefault("seed", ctx.config.seed)
    snapshot, truth = generate_market(SynthConfig.from_dict(params))
    d = ctx.stage_dir("synth")
    write_snapshot(snapshot, d / "snapshot")
    truth.save(d / "truth.json")


def _stage_ingest(ctx: StageContext) -> None:
    from .ingest import SnapshotSource, load_snapshot, write_snapshot

    src = ctx.config.section("source")
    if not src["location"]:
        location, kind = str(ctx.artifact("synth", "snapshot")), "directory"
    else:
        location, kind = src["location"], src["kind"]
    snapshot = load_snapshot(SnapshotSource(kind, location, src["max_supply_filter"], int(src["page_size"])))
    d = ctx.stage_dir("ingest")
    write_snapshot(snapshot, d / "snapshot")
    write_json(
        d / "validation.json",
        {
            "counts": snapshot.counts(),
            "violations": [{"kind": v.kind, "table": v.table, "locator": str(v.locator), "detail": v.detail} for v in snapshot.violations],
            "rejects": {k: list(v) for k, v in sorted(snapshot.rejects.items())},
        },
    )


def _stage_rarity(ctx: StageContext) -> None:
    snap = ctx.snapshot()
    write_rarity(snap, ctx.stage_dir("rarity") / "rarity.csv", base=float(ctx.config.section("rarity")["base"]))


def _stage_embeddings(ctx: StageContext) -> None:
    cfg = ctx.config.section("embeddings")
    snap = ctx.snapshot()
    d = ctx.stage_dir("embeddings")
    seed = ctx.seed("embeddings")
    write_distinctiveness(snap, d / "distinctiveness.csv", int(cfg["sample_size"]), seed)
    write_stability(snap, d / "stability.csv", cfg["stability_sizes"], int(cfg["stability_trials"]), seed)


def _stage_graph(ctx: StageContext) -> None:
    from .graph import build_ownership_graph, compute_wallet_metrics

    snap = ctx.snapshot()
    graph = build_ownership_graph(snap.holdings, [c.slug for c in snap.collections])
    d = ctx.stage_dir("graph")
    write_edges(graph, d / "edges.csv")
    write_metrics(compute_wallet_metrics(graph, snap.floor_prices()), d / "metrics.csv")
    write_json(d / "graph.json", {**graph.summary(), "fingerprint": graph.fingerprint()})


def _stage_gcn(ctx: StageContext) -> None:
    from .gcn import TrainConfig, run_gcn_experiments, save_checkpoint
    from .graph import build_ownership_graph

    cfg = ctx.config.section("gcn")
    train_keys = {f.name for f in fields(TrainConfig)}
    tc = TrainConfig.from_dict({"seed": ctx.config.seed, **{k: v for k, v in cfg.items() if k in train_keys}})
    snap = ctx.snapshot()
    holdings = read_edges(ctx.artifact("graph", "edges.csv"))
    graph = build_ownership_graph(holdings, [c.slug for c in snap.collections])
    d = ctx.stage_dir("gcn")
    result = run_gcn_experiments(
        graph,
        snap.floor_prices(),
        tc,
        samples=int(cfg["samples"]),
        add_edges=int(cfg["add_edges"]),
        delete_edges=int(cfg["delete_edges"]),
        percentiles=[float(p) for p in cfg["percentiles"]],
        centroids=_centroids(snap, tc.seed) if tc.use_centroids else None,
    )
    save_checkpoint(result.model, d / "model.gcnw")
    write_csv(d / "training.csv", ["epoch", "train_mse", "val_rmse"], result.log.rows())
    write_json(d / "evaluation.json", result.evaluation)
    write_json(d / "experiments.json", result.experiments)
    if result.bottom_percentile:
        write_csv(d / "bottom_percentile.csv", ["percentile", "collections", "mean_delta", "fraction_negative", "p_value"], result.bottom_percentile)


def _centroids(snap: MarketSnapshot, seed: int) -> dict[str, np.ndarray]:
    from .embeddings import centroid

    groups = snap.by_collection("embeddings")
    return {slug: centroid(groups[slug], seed=seed + i).vector for i, slug in enumerate(sorted(groups))}


def run_stats(snapshot: MarketSnapshot, out: Path, analyses: Sequence[str], cfg: Mapping[str, Any], seed: int = 0) -> None:
    """Write the requested analyses into ``out`` (CSV + JSON summary each)."""
    from . import stats as S

    alpha, method = float(cfg["alpha"]), cfg["method"]
    out.mkdir(parents=True, exist_ok=True)
    summary: dict[str, Any] = {}
    if "census" in analyses:
        census_rows, detail = [], []
        for predictor in S.Predictor:
            for filt in cfg["category_filters"]:
                row, per = S.correlation_census(snapshot, predictor, filt, alpha, method, seed)
                census_rows.append(row.to_json())
                for r in per:
                    detail.append(
                        {
                            "predictor": predictor.value,
                            "category_filter": filt,
                            "collection": r.collection,
                            "coefficient": r.result.coefficient if r.result else float("nan"),
                            "p_value": r.result.p_value if r.result else float("nan"),
                            "n": r.result.n if r.result else 0,
                            "reason": r.reason,
                        }
                    )
        header = ["predictor", "category_filter", "positive", "negative", "total", "excluded", "headline_percentage"]
        write_csv(out / "census.csv", header, census_rows)
        write_csv(out / "census_collections.csv", ["predictor", "category_filter", "collection", "coefficient", "p_value", "n", "reason"], detail)
        summary["census"] = census_rows
    if "compare-r2" in analyses:
        cmp = S.variance_explained_comparison(snapshot, alpha, spearman_tiebreak=False, seed=seed)
        write_csv(
            out / "compare_r2.csv",
            ["collection", "rarity_score", "distinctiveness_score", "winner"],
            ({"collection": r.collection, "rarity_score": r.rarity_score, "distinctiveness_score": r.distinctiveness_score, "winner": r.winner} for r in cmp.rows),
        )
        summary["compare_r2"] = cmp.to_json()
    if "fixed-effect" in analyses:
        q = S.rarity_quantiles(snapshot)
        fits = [S.fixed_effect_fit(snapshot.transactions, q, mode).to_json() for mode in S.FixedEffectMode]
        write_csv(out / "fixed_effect.csv", ["mode", "slope", "intercept", "r_squared", "p_value", "excluded", "n"], fits)
        summary["fixed_effect"] = fits
    if "bins" in analyses or "censored" in analyses:
        ranks = S.rarity_ranks(snapshot)
        prices = S.token_average_prices(snapshot.transactions)
        groups: dict[str, list] = {}
        for key in sorted(set(ranks) & set(prices)):
            groups.setdefault(key[0], []).append((ranks[key], prices[key]))
    if "bins" in analyses:
        k = int(cfg["bins"])
        rows, plotted = [], 0
        for slug in sorted(groups):
            pairs = groups[slug]
            if len(pairs) < k:
                continue
            res = S.quantile_bins([a for a, _ in pairs], [b for _, b in pairs], k, order="descending")
            rows.extend({"collection": slug, **r} for r in res.rows())
            if plotted < int(cfg["max_bin_plots"]):
                svg.write(_ensure(out / "bins") / f"{_safe(slug)}.svg", bins_svg(res, slug))
                plotted += 1
        write_csv(out / "bins.csv", ["collection", "bin", "count", "mean_response", "predictor_low", "predictor_high"], rows)
        summary["bins"] = {"collections": len({r["collection"] for r in rows}), "k": k}
    if "censored" in analyses:
        frac = float(cfg["censor_fraction"])
        rows = []
        for slug in sorted(groups):
            x = [a for a, _ in groups[slug]]
            y = [b for _, b in groups[slug]]
            try:
                full = S.pearson(x, y)
                # smallest rank = rarest, so the rare tail is the low extreme
                cens = S.censored_correlation(x, y, frac, extreme="low")
            except ValueError:
                continue
            rows.append({"collection": slug, "r_full": full.coefficient, "r_censored": cens.coefficient, "p_full": full.p_value, "p_censored": cens.p_value})
        write_csv(out / "censored.csv", ["collection", "r_full", "r_censored", "p_full", "p_censored"], rows)
        summary["censored"] = {"collections": len(rows), "censor_fraction": frac}
    if "wash" in analyses:
        flagged = S.detect_wash_trades(snapshot.transactions)
        write_csv(out / "wash.csv", ["collection", "token_id"], ({"collection": c, "token_id": t} for c, t in flagged))
        summary["wash"] = {"flagged_tokens": len(flagged)}
    if "select-case-studies" in analyses:
        sel = S.select_case_studies(snapshot, int(cfg["top"]), alpha, float(cfg["max_wash_fraction"]), seed=seed)
        summary["case_studies"] = sel.to_json()
    write_json(out / "summary.json", summary)


def _ensure(d: Path) -> Path:
    d.mkdir(parents=True, exist_ok=True)
    return d


def _safe(slug: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in slug)


def _stage_stats(ctx: StageContext) -> None:
    cfg = ctx.config.section("stats")
    run_stats(ctx.snapshot(), ctx.stage_dir("stats"), cfg["analyses"], cfg, ctx.seed("stats"))


def run_sim(out: Path, cfg: Mapping[str, Any]) -> None:
    from .sim import AgentPopulation, ModelParams, complementarity_probe, equilibrium

    p = ModelParams.from_dict(dict(cfg.get("params", {})))
    pop = AgentPopulation.uniform(float(cfg["z_min"]), float(cfg["z_max"]), int(cfg["agents"]))
    state = equilibrium(pop, p)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "equilibrium.json", state.to_json())
    write_csv(out / "profile.csv", ["income", "weight", "x"], state.rows())
    svg.write(out / "profile.svg", equilibrium_svg(state))
    probe = complementarity_probe(state, cfg["probe_kind"], float(cfg["probe_level"]), float(cfg["probe_delta"]))
    write_json(out / "probe.json", probe.to_json())
    if not state.converged:
        raise RuntimeError(f"equilibrium did not converge (residual {state.residual:.3g})")


def _stage_sim(ctx: StageContext) -> None:
    run_sim(ctx.stage_dir("sim"), ctx.config.section("sim"))


STAGE_FUNCS: dict[str, Callable[[StageContext], None]] = {
    "synth": _stage_synth,
    "ingest": _stage_ingest,
    "rarity": _stage_rarity,
    "embeddings": _stage_embeddings,
    "graph": _stage_graph,
    "gcn": _stage_gcn,
    "stats": _stage_stats,
    "sim": _stage_sim,
}


# -- manifest ----------------------------------------------------------------


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _record(out: Path, stage: str, partial: bool) -> list[dict]:
    d = out / stage
    if not d.exists():
        return []
    arts = []
    for p in sorted(q for q in d.rglob("*") if q.is_file()):
        entry = {"path": p.relative_to(out).as_posix(), "sha256": sha256_file(p), "bytes": p.stat().st_size}
        if partial:
            entry["partial"] = True
        arts.append(entry)
    return arts


def manifest_digest(manifest: Mapping[str, Any]) -> str:
    return hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()


@dataclass
class RunResult:
    status: int
    manifest: dict[str, Any]
    manifest_path: Path | None
    failed_stage: str | None = None
    error: str | None = None

    @property
    def digest(self) -> str:
        return manifest_digest(self.manifest)


def run_pipeline(config: RunConfig, out: str | Path | None = None) -> RunResult:
    """Run the configured stages in dependency order.

    Returns exit status 0 when every stage succeeded; otherwise 1, with the
    failing stage named in the manifest and its partial artifacts flagged.
    """
    config.validate()
    root = Path(out if out is not None else config.out)
    root.mkdir(parents=True, exist_ok=True)
    if not os.access(root, os.W_OK):
        raise ConfigError(f"output directory {root} is not writable")
    manifest: dict[str, Any] = {"config_sha256": config.fingerprint(), "seed": config.seed, "stages": [], "status": "ok"}
    ctx = StageContext(config, root, manifest)
    failed = error = None
    for name in config.ordered_stages():
        log.info("stage %s", name)
        try:
            STAGE_FUNCS[name](ctx)
        except Exception as exc:  # noqa: BLE001 - any stage error aborts the run
            log.error("stage %s failed: %s", name, exc)
            failed, error = name, f"{type(exc).__name__}: {exc}"
            manifest["stages"].append({"name": name, "status": "failed", "error": error, "artifacts": _record(root, name, True)})
            manifest["status"] = "failed"
            manifest["failed_stage"] = name
            break
        manifest["stages"].append({"name": name, "status": "ok", "artifacts": _record(root, name, False)})
    path = write_json(root / MANIFEST_NAME, manifest)
    return RunResult(0 if failed is None else 1, manifest, path, failed, error)
