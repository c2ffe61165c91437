"""Operator surface: ingest, synth, search, train, eval, report.

Every command logs its fully resolved config (plus hash) into the output
directory. Artifacts carry the config hash and seed so the report command
can refuse to aggregate runs produced under different settings. With a
fixed seed and iteration budgets all outputs are bit-identical across
repeated runs; wall-clock data lives in separate fields.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import dqn, evaluation, metapath as mp, recommender as rec, search_env, synth
from .config import ConfigError, RunConfig
from .hin import GraphLoadError, HinGraph, HinSchema, load_graph
from .util import append_jsonl, derive_rng, read_json, read_jsonl, write_json

log = logging.getLogger("hinrec")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, help="run seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="parallel workers for evaluation")

    parser = argparse.ArgumentParser(prog="hinrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="validate TSVs into a dense-id bundle")
    p.add_argument("--schema", required=True)
    p.add_argument("--nodes", required=True)
    p.add_argument("--edges", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a planted-structure dataset")
    p.add_argument("--profile", default="planted-mam")

    p = sub.add_parser("search", parents=[common], help="search meta-path sets")
    p.add_argument("--dataset", required=True)
    p.add_argument("--strategy", choices=("rms", "greedy", "random"))
    p.add_argument("--iter-limit", type=int, dest="iter_limit")
    p.add_argument("--time-limit", type=float, dest="time_limit")
    p.add_argument("--resume", help="agent checkpoint to restore (rms only)")

    p = sub.add_parser("train", parents=[common], help="train the recommender on found sets")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sets", required=True, help="sets JSON produced by search")

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("validation", "test"), default="test")

    p = sub.add_parser("report", parents=[common], help="aggregate metrics across runs")
    p.add_argument("--run-dir", required=True, dest="run_dir")
    return parser


def _resolve_config(args) -> RunConfig:
    overrides = {}
    for key in ("seed", "out", "jobs", "strategy", "iter_limit", "time_limit", "dataset"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig().with_overrides(overrides)


def _echo_config(cfg: RunConfig, out: Path) -> None:
    write_json(out / "config.json", {**cfg.as_dict(), "config_hash": cfg.config_hash()})


def _load_dataset(dataset_dir: str) -> HinGraph:
    root = Path(dataset_dir)
    bundle = root / "bundle.bin"
    if bundle.exists():
        return HinGraph.load(bundle)
    schema = HinSchema.from_file(root / "schema.txt")
    return load_graph(root / "nodes.tsv", root / "edges.tsv", schema)


def _split_for(graph: HinGraph, cfg: RunConfig) -> evaluation.SplitSet:
    return evaluation.split_leave_one_out(graph.interactions(), derive_rng(cfg.seed, "split"))


def _set_payload(pset: mp.MetaPathSet) -> dict:
    return {
        "form": pset.form,
        "paths": [{"relations": list(p.relation_ids), "label": p.label()} for p in pset],
    }


def _set_from_payload(payload: dict, schema, form: str) -> mp.MetaPathSet:
    paths = tuple(mp.MetaPath.from_relations(schema, p["relations"]) for p in payload["paths"])
    return mp.MetaPathSet(paths, form, schema)


def cmd_ingest(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out)
    try:
        schema = HinSchema.from_file(args.schema)
        graph = load_graph(args.nodes, args.edges, schema)
    except GraphLoadError as exc:
        print(f"ingest failed: {exc}", file=sys.stderr)
        return 2
    out.mkdir(parents=True, exist_ok=True)
    graph.save(out / "bundle.bin")
    write_json(out / "stats.json", {**graph.stats(), "config_hash": cfg.config_hash()})
    _echo_config(cfg, out)
    print(f"ingested {graph.num_nodes} nodes -> {out / 'bundle.bin'}")
    return 0


def cmd_synth(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out)
    manifest = synth.write_dataset(out, args.profile, cfg.seed)
    _echo_config(cfg, out)
    print(f"wrote {manifest['counts']['interactions']} interactions to {out} (planted: {manifest['planted']})")
    return 0


def _probe_budget(cfg: RunConfig) -> search_env.Budget:
    iters = cfg.iter_limit if cfg.iter_limit > 0 else None
    seconds = cfg.time_limit if cfg.time_limit > 0 else None
    if iters is None and seconds is None:
        iters = 200
    return search_env.Budget(iters=iters, seconds=seconds)


def cmd_search(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    graph = _load_dataset(cfg.dataset)
    split = _split_for(graph, cfg)
    schema = graph.schema
    t0 = time.perf_counter()

    if cfg.strategy == "rms":
        run_cfg = cfg
        if cfg.iter_limit > 0:
            episodes = max(1, cfg.iter_limit // (2 * cfg.max_steps))
            run_cfg = cfg.with_overrides({"dqn_episodes": episodes})
        user_set, item_set, probe = rec.dual_agent_search(
            graph, split, run_cfg, cfg.seed, trace_dir=str(out)
        )
        probe_calls = probe.calls
    else:
        probe = evaluation.PerformanceProbe(graph, split, cfg, cfg.seed)
        budget = _probe_budget(cfg)
        half = search_env.Budget(iters=None if budget.iters is None else budget.iters // 2,
                                 seconds=None if budget.seconds is None else budget.seconds / 2)
        found = {}
        for tag, form, other in (
            ("user", mp.USER_SYMMETRIC, mp.ITEM_SYMMETRIC),
            ("item", mp.ITEM_SYMMETRIC, mp.USER_SYMMETRIC),
        ):
            env = search_env.SearchEnv(
                schema, form, probe.pair,
                frozen_other=search_env.initial_set(other, schema),
                max_steps=cfg.max_steps, max_len=cfg.max_path_len,
                trace_path=str(out / "trace.jsonl"), trace_tag=tag,
            )
            rng = derive_rng(cfg.seed, cfg.strategy, tag)
            side_budget = search_env.Budget(iters=half.iters, seconds=half.seconds)
            if cfg.strategy == "random":
                found[tag] = search_env.random_search(env, side_budget, rng)
            else:
                found[tag] = search_env.greedy_search(env, side_budget, cfg.greedy_candidates, rng)
        user_set, item_set = found["user"], found["item"]
        probe_calls = probe.calls

    write_json(
        out / "sets.json",
        {
            "strategy": cfg.strategy,
            "seed": cfg.seed,
            "config_hash": cfg.config_hash(),
            "user_set": _set_payload(user_set),
            "item_set": _set_payload(item_set),
            "probe_calls": probe_calls,
            "elapsed_s": time.perf_counter() - t0,
        },
    )
    _echo_config(cfg, out)
    print(f"{cfg.strategy} found user={user_set.labels()} item={item_set.labels()}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    graph = _load_dataset(cfg.dataset)
    split = _split_for(graph, cfg)
    sets_doc = read_json(args.sets)
    schema = graph.schema
    user_set = _set_from_payload(sets_doc["user_set"], schema, mp.USER_SYMMETRIC)
    item_set = _set_from_payload(sets_doc["item_set"], schema, mp.ITEM_SYMMETRIC)

    train_graph = evaluation.training_graph(graph, split, cfg.leak_guard)
    user_side = rec.build_side(train_graph, user_set, cfg.density_threshold, cfg.self_loops)
    item_side = rec.build_side(train_graph, item_set, cfg.density_threshold, cfg.self_loops)
    mf = rec.mf_pretrain(
        split.train_local(graph),
        train_graph.type_count(schema.user_type),
        train_graph.type_count(schema.item_type),
        cfg.embed_dim,
        cfg.mf_epochs,
        cfg.mf_lr,
        derive_rng(cfg.seed, "mf-init"),
    )
    hrec_cfg = rec.HRecConfig(
        d=cfg.embed_dim, att_hidden=cfg.att_hidden, heads=cfg.heads, dropout=cfg.dropout,
        fanout=cfg.fanout, lr=cfg.rec_lr, batch_size=cfg.rec_batch, epochs=cfg.rec_epochs,
        patience=cfg.patience, density_threshold=cfg.density_threshold, self_loops=cfg.self_loops,
        score_act=cfg.score_act, agg_act=cfg.agg_act, fuse_act=cfg.fuse_act,
    )
    model = rec.HRecModel(
        train_graph, user_side, item_side, hrec_cfg, derive_rng(cfg.seed, "hrec-init"), mf_init=mf
    )

    def evaluator(m, epoch):
        metrics = evaluation.evaluate_model(
            m, split, "validation", ks=(10,), seed=cfg.seed,
            n_negatives=cfg.n_negatives, jobs=cfg.jobs, view_tag=f"val-{epoch}",
        )
        return metrics.ndcg[10]

    result = rec.train(model, split, cfg.seed, evaluator=evaluator)
    history_path = out / "history.jsonl"
    if history_path.exists():
        history_path.unlink()
    for record in result.history:
        append_jsonl(history_path, {**record, "seed": cfg.seed, "config_hash": cfg.config_hash()})
    manifest = {
        "strategy": sets_doc.get("strategy", "manual"),
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "user_set": _set_payload(model.user_side.pset),
        "item_set": _set_payload(model.item_side.pset),
        "best_epoch": result.best_epoch,
        "best_val_ndcg10": result.best_val_ndcg,
    }
    model.save(str(out / "model.ckpt"), extra_header={"seed": cfg.seed, "config_hash": cfg.config_hash()})
    write_json(out / "manifest.json", manifest)
    _echo_config(cfg, out)
    print(f"trained to best val NDCG@10 {result.best_val_ndcg:.4f} (epoch {result.best_epoch})")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    graph = _load_dataset(cfg.dataset)
    split = _split_for(graph, cfg)
    train_graph = evaluation.training_graph(graph, split, cfg.leak_guard)
    model = rec.HRecModel.load(args.checkpoint, train_graph)
    manifest_path = Path(args.checkpoint).parent / "manifest.json"
    strategy = "unknown"
    if manifest_path.exists():
        strategy = read_json(manifest_path).get("strategy", "unknown")
    metrics = evaluation.evaluate_model(
        model, split, args.split, ks=tuple(cfg.eval_ks), seed=cfg.seed,
        n_negatives=cfg.n_negatives, jobs=cfg.jobs,
    )
    metrics_path = out / "metrics.jsonl"
    if metrics_path.exists():
        metrics_path.unlink()
    for record in metrics.as_records(
        phase="eval",
        epoch=None,
        seed=cfg.seed,
        config_hash=cfg.config_hash(),
        strategy=strategy,
        metapath_sets={
            "user": model.user_side.pset.labels(),
            "item": model.item_side.pset.labels(),
        },
    ):
        append_jsonl(metrics_path, record)
    _echo_config(cfg, out)
    for k in sorted(metrics.ks):
        print(f"{args.split} HR@{k}={metrics.hr[k]:.4f} NDCG@{k}={metrics.ndcg[k]:.4f}")
    return 0


def cmd_report(args) -> int:
    cfg = _resolve_config(args)
    run_dir = Path(args.run_dir)
    records = []
    for path in sorted(run_dir.glob("**/metrics.jsonl")):
        records.extend(read_jsonl(path))
    if not records:
        print(f"no metrics.jsonl found under {run_dir}", file=sys.stderr)
        return 1
    hashes = {r["config_hash"] for r in records}
    if len(hashes) > 1:
        print(f"refusing to aggregate mixed config hashes: {sorted(hashes)}", file=sys.stderr)
        return 1
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r["strategy"], r["split"], r["k"], r["metric"]), []).append(r["value"])
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["strategy,split,k,metric,mean,std,n"]
    print(f"{'strategy':<10} {'split':<12} {'k':>3} {'metric':<6} {'mean':>8} {'std':>8} {'n':>3}")
    for key in sorted(groups):
        vals = np.asarray(groups[key])
        mean, std = float(vals.mean()), float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        lines.append(f"{key[0]},{key[1]},{key[2]},{key[3]},{mean:.6f},{std:.6f},{len(vals)}")
        print(f"{key[0]:<10} {key[1]:<12} {key[2]:>3} {key[3]:<6} {mean:>8.4f} {std:>8.4f} {len(vals):>3}")
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "search": cmd_search,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
