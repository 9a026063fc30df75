"""Command line entry point: one subcommand per stage plus ``run`` for configs."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import pipeline as P

CONTEXT = {"auto_envvar_prefix": "CONSPICUOUS", "show_default": True, "help_option_names": ["-h", "--help"]}

log = logging.getLogger("conspicuous")


def _out(ctx: click.Context, name: str | None = None) -> Path:
    root = Path(ctx.obj["out"])
    root.mkdir(parents=True, exist_ok=True)
    return root / name if name else root


def _load(path: str, max_supply: int | None = None):
    from .ingest import load_directory

    return load_directory(path, max_supply=max_supply)


def _echo_json(obj) -> None:
    click.echo(json.dumps(P._jsonable(obj), indent=2, sort_keys=True))


def _fail(msg: str) -> None:
    raise click.ClickException(msg)


@click.group(context_settings=CONTEXT)
@click.option("--seed", default=0, type=int, help="Global RNG seed.")
@click.option("--out", default="out", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--threads", default=None, type=click.IntRange(min=1), help="BLAS/OpenMP thread cap (default: library default).")
@click.option("--log-level", default="INFO", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.pass_context
def cli(ctx: click.Context, seed: int, out: str, threads: int | None, log_level: str) -> None:
    """Toolkit for conspicuous-consumption analysis of NFT market snapshots."""
    logging.basicConfig(level=log_level.upper(), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, out=out, threads=threads)
    if threads is not None:
        from threadpoolctl import threadpool_limits

        ctx.with_resource(threadpool_limits(limits=threads))


# -- ingest ------------------------------------------------------------------


def _write_ingested(ctx, snapshot) -> None:
    from .ingest import write_snapshot

    dest = write_snapshot(snapshot, _out(ctx, "snapshot"))
    P.write_json(_out(ctx, "validation.json"), {"counts": snapshot.counts(), "violations": len(snapshot.violations), "rejects": {k: list(v) for k, v in snapshot.rejects.items()}})
    click.echo(f"wrote {dest} {json.dumps(snapshot.counts(), sort_keys=True)}")


@cli.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--max-supply", default=1_000_000, type=int, help="Drop collections with a larger total supply (0 disables).")
@click.pass_context
def ingest(ctx, directory: str, max_supply: int) -> None:
    """Load a snapshot directory and write its normalised copy under --out."""
    _write_ingested(ctx, _load(directory, max_supply or None))


@cli.command()
@click.argument("base_url")
@click.option("--page-size", default=1000, type=click.IntRange(min=1))
@click.option("--max-supply", default=1_000_000, type=int, help="Drop collections with a larger total supply (0 disables).")
@click.pass_context
def fetch(ctx, base_url: str, page_size: int, max_supply: int) -> None:
    """Fetch a snapshot from a paginated HTTP endpoint."""
    from .ingest import FetchError, fetch_snapshot

    try:
        snap = fetch_snapshot(base_url, page_size, max_supply=max_supply or None)
    except FetchError as exc:
        _fail(str(exc))
    _write_ingested(ctx, snap)


@cli.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
def validate(directory: str) -> None:
    """Report schema and referential violations; exits 1 if there are any."""
    snap = _load(directory)
    for v in snap.violations:
        click.echo(f"{v.kind}\t{v.table}\t{v.locator}\t{v.detail}")
    rejected = sum(len(v) for v in snap.rejects.values())
    click.echo(f"{len(snap.violations)} violation(s), {rejected} rejected line(s)", err=True)
    if snap.violations:
        sys.exit(1)


@cli.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(directory: str, host: str, port: int) -> None:
    """Serve a snapshot directory over the paginated HTTP protocol."""
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(directory), host=host, port=port, log_level="warning")


# -- rarity / embeddings -------------------------------------------------------


@cli.group()
def rarity() -> None:
    """Trait rarity ranks."""


@rarity.command("rank")
@click.argument("snapshot", type=click.Path(exists=True, file_okay=False))
@click.option("--collection", "collections", multiple=True, help="Restrict to these slugs (repeatable).")
@click.option("--base", default=2.0, type=float, help="Logarithm base for information content.")
@click.pass_context
def rarity_rank_cmd(ctx, snapshot: str, collections: tuple[str, ...], base: float) -> None:
    """Write rarity.csv: collection,token_id,one_of_ones,ic_bits,rank."""
    try:
        path = P.write_rarity(_load(snapshot), _out(ctx, "rarity.csv"), list(collections) or None, base)
    except KeyError as exc:
        _fail(str(exc))
    click.echo(f"wrote {path}")


@cli.group()
def embeddings() -> None:
    """Centroids, visual distinctiveness and centroid stability."""


@embeddings.command("centroid")
@click.argument("snapshot", type=click.Path(exists=True, file_okay=False))
@click.option("--sample-size", default=50, type=click.IntRange(min=1))
@click.pass_context
def embeddings_centroid(ctx, snapshot: str, sample_size: int) -> None:
    """Write centroids.csv: collection, sample count and the vector."""
    from .embeddings import centroid

    groups = _load(snapshot).by_collection("embeddings")
    rows = []
    for i, slug in enumerate(sorted(groups)):
        c = centroid(groups[slug], sample_size, ctx.obj["seed"] + i, slug)
        rows.append({"collection": slug, "sample_count": c.sample_size, "vector": " ".join(repr(float(v)) for v in c.vector)})
    click.echo(f"wrote {P.write_csv(_out(ctx, 'centroids.csv'), ['collection', 'sample_count', 'vector'], rows)}")


@embeddings.command("distinctiveness")
@click.argument("snapshot", type=click.Path(exists=True, file_okay=False))
@click.option("--sample-size", default=50, type=click.IntRange(min=1))
@click.pass_context
def embeddings_distinctiveness(ctx, snapshot: str, sample_size: int) -> None:
    """Write distinctiveness.csv: collection,token_id,distance."""
    click.echo(f"wrote {P.write_distinctiveness(_load(snapshot), _out(ctx, 'distinctiveness.csv'), sample_size, ctx.obj['seed'])}")


@embeddings.command("stability")
@click.argument("snapshot", type=click.Path(exists=True, file_okay=False))
@click.option("--collection", default=None, help="Collection to analyse (default: the largest).")
@click.option("--sizes", default="5,10,20,50,100", help="Comma-separated centroid sample sizes.")
@click.option("--trials", default=20, type=click.IntRange(min=1))
@click.pass_context
def embeddings_stability(ctx, snapshot: str, collection: str | None, sizes: str, trials: int) -> None:
    """Write stability.csv: relative distance error vs centroid sample size."""
    size_list = [int(s) for s in sizes.split(",") if s.strip()]
    path = P.write_stability(_load(snapshot), _out(ctx, "stability.csv"), size_list, trials, ctx.obj["seed"], collection)
    if path is None:
        _fail("snapshot has no embeddings")
    click.echo(f"wrote {path}")


# -- graph -------------------------------------------------------------------


def _graph(snapshot: str):
    from .graph import build_ownership_graph

    snap = _load(snapshot)
    return snap, build_ownership_graph(snap.holdings, [c.slug for c in snap.collections])


@cli.group()
def graph() -> None:
    """Wallet/collection ownership graph."""


@graph.command("build")
@click.argument("snapshot", type=click.Path(exists=True, file_okay=False))
@click.pass_context
def graph_build(ctx, snapshot: str) -> None:
    """Write edges.csv and a JSON summary."""
    _, g = _graph(snapshot)
    P.write_edges(g, _out(ctx, "edges.csv"))
    summary = {**g.summary(), "fingerprint": g.fingerprint()}
    P.write_json(_out(ctx, "graph.json"), summary)
    _echo_json(summary)


@graph.command("metrics")
@click.argument("snapshot", type=click.Path(exists=True, file_okay=False))
@click.pass_context
def graph_metrics(ctx, snapshot: str) -> None:
    """Write metrics.csv: wallet,wealth,affinity,importance."""
    from .graph import compute_wallet_metrics

    snap, g = _graph(snapshot)
    click.echo(f"wrote {P.write_metrics(compute_wallet_metrics(g, snap.floor_prices()), _out(ctx, 'metrics.csv'))}")


@graph.command("split")
@click.argument("snapshot", type=click.Path(exists=True, file_okay=False))
@click.option("--seeds", "wallet_seed_count", default=75, type=click.IntRange(min=1), help="Seed wallets per subgraph.")
@click.option("--cap", "collection_cap", default=1500, type=click.IntRange(min=1), help="Max collections per subgraph.")
@click.option("--count", default=50, type=click.IntRange(min=1), help="Number of subgraphs.")
@click.pass_context
def graph_split(ctx, snapshot: str, wallet_seed_count: int, collection_cap: int, count: int) -> None:
    """Write subgraphs.csv: subgraph,wallets,collections."""
    from .graph import split_subgraphs

    _, g = _graph(snapshot)
    split = split_subgraphs(g, wallet_seed_count, collection_cap, count, ctx.obj["seed"])
    rows = [{"subgraph": k, "wallets": s.graph.n_wallets, "collections": s.graph.n_collections} for k, s in enumerate(split.subgraphs)]
    click.echo(f"wrote {P.write_csv(_out(ctx, 'subgraphs.csv'), ['subgraph', 'wallets', 'collections'], rows)}")


@graph.command("perturb")
@click.argument("snapshot", type=click.Path(exists=True, file_okay=False))
@click.option("--collection", required=True)
@click.option("--mode", type=click.Choice(["add", "delete"]), default="add")
@click.option("--weighting", type=click.Choice(["uniform", "wealth", "affinity", "importance"]), default="uniform")
@click.option("--edges", "edge_count", default=10, type=click.IntRange(min=0))
@click.pass_context
def graph_perturb(ctx, snapshot: str, collection: str, mode: str, weighting: str, edge_count: int) -> None:
    """Print the wallets a single perturbation sample would touch."""
    from .graph import compute_wallet_metrics, perturb_edges

    snap, g = _graph(snapshot)
    if collection not in g.collection_index:
        _fail(f"unknown collection {collection!r}")
    metrics = compute_wallet_metrics(g, snap.floor_prices())
    try:
        sample, _ = perturb_edges(g, collection, edge_count, mode, weighting, metrics, ctx.obj["seed"])
    except ValueError as exc:
        _fail(str(exc))
    _echo_json({"collection": collection, "mode": mode, "weighting": weighting, "wallets": list(sample.wallets), "short_sample": sample.short_sample, "uniform_fallback": sample.uniform_fallback})


# -- gcn ---------------------------------------------------------------------


def _gcn_config(path: str | None, seed: int) -> tuple["object", dict]:
    from .gcn import TrainConfig

    data: dict = {}
    if path:
        text = Path(path).read_bytes()
        data = json.loads(text) if path.endswith(".json") else P.tomllib.loads(text.decode("utf-8"))
        data = data.get("gcn", data)
    data = {"seed": seed, **data}
    return TrainConfig.from_dict(data), data


@cli.group()
def gcn() -> None:
    """Floor-price-percentile GCN."""


@gcn.command("train")
@click.argument("snapshot", type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="TOML/JSON with epochs, batch_size, splits, seed, ...")
@click.pass_context
def gcn_train(ctx, snapshot: str, config_path: str | None) -> None:
    """Train, write model.gcnw, training.csv and evaluation.json."""
    from .gcn import run_gcn_experiments, save_checkpoint

    tc, _ = _gcn_config(config_path, ctx.obj["seed"])
    snap, g = _graph(snapshot)
    res = run_gcn_experiments(g, snap.floor_prices(), tc, samples=0, percentiles=())
    save_checkpoint(res.model, _out(ctx, "model.gcnw"))
    P.write_csv(_out(ctx, "training.csv"), ["epoch", "train_mse", "val_rmse"], res.log.rows())
    P.write_json(_out(ctx, "evaluation.json"), res.evaluation)
    _echo_json(res.evaluation)


@gcn.command("predict")
@click.argument("snapshot", type=click.Path(exists=True, file_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def gcn_predict(ctx, snapshot: str, model_path: str) -> None:
    """Write predictions.csv: collection,predicted_bucket,target_bucket."""
    from .gcn import build_features, bucketize_floor_prices, collection_predictions, load_checkpoint

    model = load_checkpoint(model_path)
    snap, g = _graph(snapshot)
    if model.in_dim != 1:
        _fail("predict supports scalar-feature models only")
    preds = collection_predictions(g, build_features(g), model)
    targets = bucketize_floor_prices(snap.floor_prices()).buckets
    rows = [{"collection": c, "predicted_bucket": preds[c], "target_bucket": targets.get(c, "")} for c in g.collections]
    click.echo(f"wrote {P.write_csv(_out(ctx, 'predictions.csv'), ['collection', 'predicted_bucket', 'target_bucket'], rows)}")


@gcn.command("perturb-experiment")
@click.argument("snapshot", type=click.Path(exists=True, file_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["add", "delete", "bottom-percentile"]), default="add")
@click.option("--weighting", type=click.Choice(["uniform", "wealth", "affinity", "importance"]), default="affinity")
@click.option("--edges", "edge_count", default=100, type=click.IntRange(min=1))
@click.option("--samples", default=1000, type=click.IntRange(min=1))
@click.pass_context
def gcn_perturb(ctx, snapshot: str, model_path: str, mode: str, weighting: str, edge_count: int, samples: int) -> None:
    """Mean change in predicted bucket under edge perturbations."""
    from .gcn import PerturbationPlan, bottom_percentile_experiment, build_features, load_checkpoint, predicted_delta_experiment
    from .graph import Mode, Weighting, compute_wallet_metrics

    model = load_checkpoint(model_path)
    snap, g = _graph(snapshot)
    feats = build_features(g)
    metrics = compute_wallet_metrics(g, snap.floor_prices())
    if mode == "bottom-percentile":
        rows = bottom_percentile_experiment(model, g, feats, metrics, seed=ctx.obj["seed"])
        P.write_csv(_out(ctx, "bottom_percentile.csv"), ["percentile", "collections", "mean_delta", "fraction_negative", "p_value"], rows)
        _echo_json(rows)
        return
    plan = PerturbationPlan(Mode(mode), Weighting(weighting), edge_count)
    exp = predicted_delta_experiment(model, g, feats, plan, metrics, samples, ctx.obj["seed"])
    P.write_csv(_out(ctx, "deltas.csv"), ["collection", "delta"], ({"collection": c, "delta": d} for c, d in zip(exp.collections, exp.deltas)))
    P.write_json(_out(ctx, "experiment.json"), exp.summary())
    _echo_json(exp.summary())


# -- stats -------------------------------------------------------------------


@cli.command()
@click.argument("analysis", type=click.Choice(P.STATS_ANALYSES))
@click.argument("snapshot", type=click.Path(exists=True, file_okay=False))
@click.option("--alpha", default=0.05, type=float)
@click.option("--method", default="pearson", type=click.Choice(["pearson", "spearman"]))
@click.option("--category-filter", "category_filters", multiple=True, default=("all",), help="all, with-rarity, without-rarity, <category> or non-<category> (repeatable).")
@click.option("--bins", default=20, type=click.IntRange(min=1))
@click.option("--censor-fraction", default=0.10, type=float)
@click.option("--top", default=30, type=click.IntRange(min=1), help="Collections by volume for select-case-studies.")
@click.pass_context
def stats(ctx, analysis: str, snapshot: str, alpha: float, method: str, category_filters, bins: int, censor_fraction: float, top: int) -> None:
    """Market statistics: census, compare-r2, fixed-effect, bins, censored, wash, select-case-studies."""
    cfg = P.DEFAULTS["stats"] | {
        "alpha": alpha,
        "method": method,
        "category_filters": list(category_filters),
        "bins": bins,
        "censor_fraction": censor_fraction,
        "top": top,
    }
    out = _out(ctx)
    P.run_stats(_load(snapshot), out, [analysis], cfg, ctx.obj["seed"])
    click.echo((out / "summary.json").read_text(encoding="utf-8"), nl=False)


# -- sim ---------------------------------------------------------------------


def _sim_cfg(params_path: str | None) -> dict:
    cfg = dict(P.DEFAULTS["sim"])
    if params_path:
        text = Path(params_path).read_bytes()
        data = json.loads(text) if params_path.endswith(".json") else P.tomllib.loads(text.decode("utf-8"))
        data = data.get("sim", data)
        if "params" in data or any(k in data for k in cfg):
            cfg.update(data)
        else:
            cfg["params"] = data
    return cfg


@cli.group()
def sim() -> None:
    """Conspicuous-consumption equilibrium model."""


_params_opt = click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False), help="TOML/JSON of model parameters (alpha, beta, gamma, mu, epsilon, c_a, c_b, c_N).")


@sim.command("equilibrium")
@_params_opt
@click.pass_context
def sim_equilibrium(ctx, params_path: str | None) -> None:
    """Solve the equilibrium; writes equilibrium.json, profile.csv, profile.svg, probe.json."""
    try:
        P.run_sim(_out(ctx), _sim_cfg(params_path))
    except (ValueError, RuntimeError) as exc:
        _fail(str(exc))
    click.echo((_out(ctx, "equilibrium.json")).read_text(encoding="utf-8"), nl=False)


@sim.command("probe")
@_params_opt
@click.option("--kind", type=click.Choice(["raise", "add-mass", "network"]), default="raise")
@click.option("--level", default=0.0, type=float, help="Consumption threshold for the shift.")
@click.option("--delta", default=1e-3, type=float, help="Shift size.")
@click.pass_context
def sim_probe(ctx, params_path: str | None, kind: str, level: float, delta: float) -> None:
    """Best-response change of held-out agents under a population shift."""
    from .sim import AgentPopulation, ModelParams, complementarity_probe, equilibrium

    cfg = _sim_cfg(params_path)
    state = equilibrium(AgentPopulation.uniform(cfg["z_min"], cfg["z_max"], int(cfg["agents"])), ModelParams.from_dict(cfg["params"]))
    report = complementarity_probe(state, kind, level, delta)
    P.write_json(_out(ctx, "probe.json"), report.to_json())
    _echo_json(report.to_json())


@sim.command("check-assumptions")
@_params_opt
@click.option("--points", default=25, type=click.IntRange(min=2), help="Grid points per axis.")
@click.pass_context
def sim_check(ctx, params_path: str | None, points: int) -> None:
    """Evaluate the regularity conditions on a grid; exits 1 if any fails."""
    import numpy as np

    from .sim import ModelParams, assumption_check

    cfg = _sim_cfg(params_path)
    p = ModelParams.from_dict(cfg["params"])
    z = np.linspace(cfg["z_min"], cfg["z_max"], points)
    report = assumption_check(p, z, np.linspace(0, cfg["z_max"], points), np.linspace(0, 2, points))
    P.write_json(_out(ctx, "assumptions.json"), report.to_json())
    for name, ok in report.results.items():
        click.echo(f"{'PASS' if ok else 'FAIL'} {name} ({len(report.violations[name])} violations)")
    if not all(report.results.values()):
        sys.exit(1)


# -- synth / run ---------------------------------------------------------------


@cli.group()
def synth() -> None:
    """Synthetic markets with planted effects."""


@synth.command("generate")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="TOML/JSON of generator settings.")
@click.pass_context
def synth_generate(ctx, config_path: str | None) -> None:
    """Write a snapshot directory and truth.json under --out."""
    from .ingest import write_snapshot
    from .synth import SynthConfig, generate_market

    data: dict = {}
    if config_path:
        text = Path(config_path).read_bytes()
        data = json.loads(text) if config_path.endswith(".json") else P.tomllib.loads(text.decode("utf-8"))
        data = data.get("synth", data)
    try:
        cfg = SynthConfig.from_dict({"seed": ctx.obj["seed"], **data})
    except (TypeError, ValueError) as exc:
        _fail(str(exc))
    snap, truth = generate_market(cfg)
    write_snapshot(snap, _out(ctx, "snapshot"))
    truth.save(_out(ctx, "truth.json"))
    click.echo(f"wrote {_out(ctx)} {json.dumps(snap.counts(), sort_keys=True)}")


@cli.command()
@click.argument("config_path", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--stages", default=None, help="Comma-separated stages overriding the config.")
@click.pass_context
def run(ctx, config_path: str | None, stages: str | None) -> None:
    """Run a full experiment from a TOML/JSON config.

    Stages run in the order synth, ingest, rarity, embeddings, graph, gcn,
    stats, sim.  Keys can be overridden with CONSPICUOUS__SECTION__KEY
    environment variables.  Exit status is nonzero iff a stage failed.
    """
    try:
        cfg = P.load_config(config_path)
        if stages is not None:
            cfg.stages = [s.strip() for s in stages.split(",") if s.strip()]
        src = ctx.parent.get_parameter_source("seed")
        if src is not None and src.name != "DEFAULT":
            cfg.seed = ctx.obj["seed"]
        cfg.validate()
    except P.ConfigError as exc:
        _fail(str(exc))
    out_src = ctx.parent.get_parameter_source("out")
    out = ctx.obj["out"] if out_src is not None and out_src.name != "DEFAULT" else cfg.out
    result = P.run_pipeline(cfg, out)
    click.echo(f"manifest {result.manifest_path} sha256={result.digest}")
    if result.status:
        click.echo(f"stage {result.failed_stage!r} failed: {result.error}", err=True)
        sys.exit(result.status)


def main(argv: list[str] | None = None) -> None:
    cli.main(args=argv, prog_name="conspicuous")


if __name__ == "__main__":
    main()
