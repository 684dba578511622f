"""Command-line entry point: ``python -m multisage <command>``.

Exit codes: 0 on success, 1 on invalid arguments or configuration, 2 when a
file cannot be read or written (or does not follow its format).
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ann import AnnIndex, MedoidCache, bench, build_index, refine_pool
from .config import Config, ConfigError, load_config
from .core import make_rng
from .io import (FormatError, atomic_write_text, iter_actions, read_actions, read_labels, read_pin_store,
                 write_actions, write_labels, write_pin_store)
from .pipeline import OnlineState, ProfileStore, batch_infer, online_update, serving_snapshot
from .retrieval import recommend

log = logging.getLogger("multisage")

EMBEDDINGS = "embeddings.bin"
ACTIONS = "actions.jsonl"
LABELS = "labels.jsonl"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()})


def _setup_logging(mode: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if mode == "json" else logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO)


def _version_text() -> str:
    import numba
    import scipy
    return (f"multisage {__version__} (python {platform.python_version()}, numpy {np.__version__}, "
            f"scipy {scipy.__version__}, numba {numba.__version__})")


def _config(args) -> Config:
    overrides = dict(kv.split("=", 1) for kv in (args.set or []) if "=" in kv)
    bad = [kv for kv in (args.set or []) if "=" not in kv]
    if bad:
        raise ConfigError("--set", f"expected key=value, got {bad[0]!r}")
    for key in ("alpha", "lambda", "e", "budget", "seed"):
        value = getattr(args, key.replace("lambda", "lam"), None)
        if value is not None:
            overrides[key] = str(value)
    return load_config(args.config, overrides)


# -- commands ---------------------------------------------------------------

def cmd_gen(args) -> int:
    from .synth import generate_world
    cfg = _config(args)
    world = generate_world(cfg.world_config())
    out = Path(args.out_dir)
    write_pin_store(out / EMBEDDINGS, world.pins)
    write_actions(out / ACTIONS, world.logs.values())
    write_labels(out / LABELS, world.labels, world.logs, world.interests)
    log.info("wrote %d pins and %d users to %s", len(world.pins), len(world.logs), out)
    return 0


def cmd_batch(args) -> int:
    cfg = _config(args)
    pins = read_pin_store(args.embeddings)
    logs = read_actions(args.actions)
    as_of = dt.date.fromisoformat(args.as_of) if args.as_of else None
    store = batch_infer(logs, pins, cfg.alpha, cfg.lam, as_of, window_days=cfg.window_days, workers=args.threads)
    store.save(args.out)
    log.info("built %d profiles (%d actions skipped)", len(store), store.skipped_actions)
    return 0


def cmd_replay(args) -> int:
    cfg = _config(args)
    pins = read_pin_store(args.embeddings)
    store = ProfileStore.load(args.store)
    state = OnlineState()
    errors = 0
    for user, record in iter_actions(args.events):
        try:
            online_update(state, store, user, record, pins, cfg.alpha, cfg.lam)
        except ValueError as exc:
            errors += 1
            log.error("user %d: %s", user, exc)
    if args.out:
        ProfileStore(serving_snapshot(store, state)).save(args.out)
    print(json.dumps({"updated_users": len(state.profiles), "ignored_events": state.ignored_events,
                      "hard_errors": errors}))
    return 0 if errors == 0 else 1


def cmd_index_build(args) -> int:
    cfg = _config(args)
    pins = read_pin_store(args.embeddings)
    icfg = cfg.index_config()
    pool = refine_pool(pins, icfg) if args.refine else pins.ids
    index = build_index(pins, pool, icfg)
    index.save(args.out)
    log.info("indexed %d of %d pins", len(index), len(pins))
    return 0


def cmd_index_query(args) -> int:
    pins = read_pin_store(args.embeddings)
    index = AnnIndex.load(args.index, pins)
    if args.pin is None:
        raise ConfigError("--pin", "a query pin is required")
    if args.pin not in pins:
        raise ConfigError("--pin", f"unknown pin {args.pin}")
    found = index.query(pins.get(args.pin), args.k, args.beam)
    print(json.dumps({"query": args.pin, "results": [{"pin": p, "distance": d} for p, d in found]}))
    return 0


def cmd_index_bench(args) -> int:
    pins = read_pin_store(args.embeddings)
    index = AnnIndex.load(args.index, pins)
    rng = make_rng(args.seed or 0, 7)
    rows = rng.choice(len(index), size=min(args.queries, len(index)), replace=False)
    queries = index.vectors[rows]
    beams = [int(b) for b in args.beams.split(",")]
    lines = ["query_beam,recall@10,mean_query_us"]
    lines += [f"{b},{r:.4f},{us:.1f}" for b, r, us in bench(index, queries, 10, beams)]
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return 0


def cmd_retrieve(args) -> int:
    cfg = _config(args)
    pins = read_pin_store(args.embeddings)
    store = ProfileStore.load(args.store)
    index = AnnIndex.load(args.index, pins)
    profile = store.get(args.user)
    if profile is None:
        raise ConfigError("--user", f"no profile for user {args.user}")
    # medoids are pins the user acted on; with --actions the whole history is excluded
    seen = set(profile.medoids)
    if args.actions:
        seen.update(r.pin for user, r in iter_actions(args.actions) if user == args.user and r.kind.is_engagement)
    recs = recommend(profile, index, MedoidCache(), cfg.retrieval_config(), make_rng(cfg.seed, 3, args.user),
                     exclude=frozenset(seen))
    print(json.dumps({"user": args.user, **recs.to_json()}))
    return 0


def cmd_eval(args) -> int:
    from .evaluation import (EvalData, core_models, diversity_relevance_sweep, next_action_task, ranking_task,
                             retrieval_task, standard_models)
    cfg = _config(args)
    if args.data_dir:
        data_dir = Path(args.data_dir)
        pins = read_pin_store(data_dir / EMBEDDINGS)
        logs = read_actions(data_dir / ACTIONS)
        interests = read_labels(data_dir / LABELS)[1]
        data = EvalData.from_logs(pins, logs, cfg.split_day, window_days=cfg.window_days, interests=interests)
    else:
        from .synth import generate_world
        world = generate_world(cfg.world_config())
        data = EvalData.from_world(world, cfg.split_day)
    models = core_models(cfg.alpha) if args.models == "core" else standard_models(cfg.alpha)
    index = None
    if args.suite in ("retrieval", "diversity"):
        index = build_index(data.pins, data.pins.ids, cfg.index_config())
    if args.suite == "next-action":
        result = next_action_task(data, seed=cfg.seed, max_positions=cfg.next_action_positions, workers=args.threads)
        report = result.report
        log.info("structural violations: %s", result.structural_violations)
    elif args.suite == "retrieval":
        report = retrieval_task(models, data, index, MedoidCache(), budget=cfg.budget, seed=cfg.seed,
                                workers=args.threads)
    elif args.suite == "ranking":
        report = ranking_task(models, data, seed=cfg.seed, workers=args.threads)
    else:
        report = diversity_relevance_sweep(data.restricted_to_multi_interest(3), index, MedoidCache(),
                                           budget=cfg.budget, seed=cfg.seed, alpha=cfg.alpha, workers=args.threads)
    if args.out_dir:
        out = Path(args.out_dir)
        atomic_write_text(out / f"{args.suite}.md", report.to_markdown())
        atomic_write_text(out / f"{args.suite}.csv", report.to_csv())
    sys.stdout.write(report.to_markdown())
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")

    p = _Parser(prog="multisage", description="Multi-embedding user profiles and candidate retrieval.")
    p.add_argument("--version", action="store_true", help="print build information and exit")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads (default: all cores)")
    p.add_argument("--log", choices=("text", "json"), default="text", help="stderr log format")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic corpus")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("batch", parents=[common], help="build profiles from an action log")
    b.add_argument("--actions", required=True)
    b.add_argument("--embeddings", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--alpha", type=float)
    b.add_argument("--lambda", dest="lam", type=float)
    b.add_argument("--as-of", help="YYYY-MM-DD; defaults to the date of the last action")
    b.set_defaults(func=cmd_batch)

    r = sub.add_parser("replay", parents=[common], help="apply online events on top of a profile store")
    r.add_argument("--events", required=True)
    r.add_argument("--store", required=True)
    r.add_argument("--embeddings", required=True)
    r.add_argument("--out", help="write the resulting serving snapshot here")
    r.add_argument("--alpha", type=float)
    r.add_argument("--lambda", dest="lam", type=float)
    r.set_defaults(func=cmd_replay)

    ix = sub.add_parser("index", help="build, query or benchmark the nearest-neighbour index")
    ixs = ix.add_subparsers(dest="index_command", parser_class=_Parser)
    ib = ixs.add_parser("build", parents=[common])
    ib.add_argument("--embeddings", required=True)
    ib.add_argument("--out", required=True)
    ib.add_argument("--refine", action="store_true", help="apply the quality floor and duplicate removal first")
    ib.add_argument("--seed", type=int)
    ib.set_defaults(func=cmd_index_build)
    iq = ixs.add_parser("query", parents=[common])
    iq.add_argument("--index", required=True)
    iq.add_argument("--embeddings", required=True)
    iq.add_argument("--pin", type=int)
    iq.add_argument("--k", type=int, default=10)
    iq.add_argument("--beam", type=int)
    iq.set_defaults(func=cmd_index_query)
    for name in ("bench",):
        ibn = ixs.add_parser(name, parents=[common])
        _bench_args(ibn)
    top_bench = sub.add_parser("bench", parents=[common], help="same as `index bench`")
    _bench_args(top_bench)

    rt = sub.add_parser("retrieve", parents=[common], help="recommend pins for one user")
    rt.add_argument("--store", required=True)
    rt.add_argument("--index", required=True)
    rt.add_argument("--embeddings", required=True)
    rt.add_argument("--user", type=int, required=True)
    rt.add_argument("--actions", help="action log whose engagements are excluded from the results")
    rt.add_argument("--e", type=int)
    rt.add_argument("--budget", type=int)
    rt.add_argument("--seed", type=int)
    rt.set_defaults(func=cmd_retrieve)

    ev = sub.add_parser("eval", parents=[common], help="run an offline evaluation suite")
    ev.add_argument("--suite", required=True, choices=("next-action", "retrieval", "ranking", "diversity"))
    ev.add_argument("--data-dir", help="evaluate a corpus written by `gen` instead of generating one")
    ev.add_argument("--out-dir", help="write <suite>.md and <suite>.csv here")
    ev.add_argument("--models", choices=("core", "all"), default="all")
    ev.set_defaults(func=cmd_eval)
    return p


def _bench_args(parser) -> None:
    parser.add_argument("--index", required=True)
    parser.add_argument("--embeddings", required=True)
    parser.add_argument("--queries", type=int, default=1000)
    parser.add_argument("--beams", default="10,20,50,100,200")
    parser.add_argument("--out")
    parser.add_argument("--seed", type=int)
    parser.set_defaults(func=cmd_index_bench)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    _setup_logging(args.log)
    if args.version:
        print(_version_text())
        return 0
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return 1
    if args.threads < 1:
        print("multisage: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (FormatError, OSError) as exc:
        print(f"multisage: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"multisage: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
