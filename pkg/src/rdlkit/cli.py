"""Command-line entry point: ``rdlkit <subcommand> ...``.

Every subcommand prints one JSON object to stdout (or writes it to ``--out``
where noted). Failures print ``{"error": {...}}`` and exit with status 2.

Run configs are YAML or JSON files with optional sections ``run`` (trainer
settings), ``task`` (task spec), ``features``, ``inference`` and ``graph``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from contextlib import nullcontext
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError, RDLError
from .features import FeatureConfig, feature_report
from .flatten import flatten_target, flattened_instance
from .graph import build_graph, degree_profile, save_snapshot
from .ingest import (
    RelationalInstance,
    annotate_semantic_types,
    check_referential_integrity,
    load_csv_dataset,
    load_sqlite,
    write_csv_dataset,
)
from .models import load_checkpoint, save_checkpoint
from .sampler import sample_static, sample_temporal
from .schema import InferenceConfig
from .synth import SynthSpec, generate, write_dataset
from .tasks import SPLITS, TaskSpec, prepare_task
from .train import RunConfig, evaluate, train

THREADS_ENV = "RDLKIT_THREADS"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _clean(o):
    """NaN/inf are not JSON; emit them as null."""
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, default=_json_default)


def _read_structured(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)  # JSON is a YAML subset
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_config(path) -> dict:
    cfg = _read_structured(path) if path else {}
    unknown = set(cfg) - {"run", "task", "features", "inference", "graph"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def load_dataset(path, inference: dict | None = None) -> RelationalInstance:
    p = Path(path)
    if p.is_dir():
        inst = load_csv_dataset(p)
    elif p.exists():
        inst = load_sqlite(p)
    else:
        raise ConfigError(f"dataset {path} does not exist")
    return annotate_semantic_types(inst, InferenceConfig.from_dict(inference))


def _task_spec(args, cfg: dict) -> TaskSpec:
    d = dict(cfg.get("task") or {})
    if getattr(args, "task", None):
        d.update(_read_structured(args.task))
    if not d:
        raise ConfigError("no task given (use --task or a 'task' config section)")
    if args.seed is not None:
        d["seed"] = args.seed
        d.setdefault("split", {})
        d["split"] = dict(d["split"], seed=args.seed)
    try:
        return TaskSpec.from_dict(d)
    except TypeError as exc:
        raise ConfigError(f"bad task spec: {exc}") from exc


def _run_config(args, cfg: dict) -> RunConfig:
    d = dict(cfg.get("run") or {})
    if getattr(args, "variant", None):
        d["variant"] = args.variant
    if args.seed is not None:
        d["seed"] = args.seed
    return RunConfig.from_dict(d)


def _emit(obj, out: str | None = None, name: str | None = None) -> None:
    text = dumps(obj)
    if out and name:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text + "\n", encoding="utf-8")
    print(text)


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(args, cfg) -> None:
    inst = load_dataset(args.dataset, cfg.get("inference"))
    report = check_referential_integrity(inst)
    if args.out:
        write_csv_dataset(inst, args.out)
    _emit(
        {
            "tables": inst.row_counts(),
            "schema": inst.schema.to_dict(),
            "integrity": report.to_dict(),
            "warnings": inst.warnings,
        }
    )


def cmd_analyze(args, cfg) -> None:
    inst = load_dataset(args.dataset, cfg.get("inference"))
    fcfg = FeatureConfig.from_dict(cfg.get("features"))
    tt = None
    if args.task or cfg.get("task"):
        inst, tt = prepare_task(inst, _task_spec(args, cfg))
    graph = build_graph(inst, dangling="error" if args.strict else "skip")
    _emit(feature_report(inst, graph, tt, fcfg).to_dict(), args.out, "features.json")


def cmd_graphify(args, cfg) -> None:
    inst = load_dataset(args.dataset, cfg.get("inference"))
    mode = "error" if args.strict else (cfg.get("graph") or {}).get("dangling", "skip")
    graph = build_graph(inst, dangling=mode)
    summary = {
        "node_types": {t: graph.num_nodes[t] for t in graph.node_types},
        "edge_types": {"|".join(et): graph.num_edges(et) for et in graph.edge_types},
        "timed_types": sorted(graph.time),
        "degrees": degree_profile(graph),
        "warnings": graph.warnings,
    }
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        save_snapshot(graph, args.out)
        summary["snapshot"] = str(args.out)
    _emit(summary)


def cmd_make_task(args, cfg) -> None:
    inst = load_dataset(args.dataset, cfg.get("inference"))
    spec = _task_spec(args, cfg)
    modified, tt = prepare_task(inst, spec)
    summary = {
        "task": spec.to_dict(),
        "rows": len(tt),
        "splits": {name: int((tt.split == i).sum()) for i, name in enumerate(SPLITS)},
        "classes": tt.classes,
        "warnings": tt.warnings,
    }
    if args.out:
        out = Path(args.out)
        write_csv_dataset(modified, out / "dataset")
        tt.to_csv(out / "training_table.csv")
    _emit(summary)


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def cmd_sample(args, cfg) -> None:
    inst = load_dataset(args.dataset, cfg.get("inference"))
    graph = build_graph(inst, dangling="error" if args.strict else "skip")
    seeds = _int_list(args.seeds)
    fanout = [None if x.strip() in ("inf", "all") else int(x) for x in args.fanout.split(",") if x.strip()]
    rng_seed = args.seed if args.seed is not None else 0
    if args.times:
        times = [float(x) for x in args.times.split(",")]
        sub = sample_temporal(graph, args.table, seeds, times, fanout, rng_seed, strict=args.strict_time)
    else:
        sub = sample_static(graph, args.table, seeds, fanout, rng_seed)
    _emit(sub.to_dict(), args.out, "sample.json")


def _prepare_for_variant(inst, tt, variant: str, flatten: bool):
    if variant == "tabular_only" and flatten:
        ft = flatten_target(inst, tt.target_table)
        return flattened_instance(inst, ft)
    return inst


def cmd_train(args, cfg) -> None:
    inst = load_dataset(args.dataset, cfg.get("inference"))
    spec = _task_spec(args, cfg)
    run = _run_config(args, cfg)
    modified, tt = prepare_task(inst, spec)
    modified = _prepare_for_variant(modified, tt, run.variant, args.flatten)
    graph = build_graph(modified, dangling="error" if args.strict else "skip")
    report, model, ckpt = train(modified, tt, run, graph)
    out = report.to_dict()
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "model.ckpt").write_bytes(ckpt)
        (d / "report.json").write_text(dumps(out) + "\n", encoding="utf-8")
    _emit(out)


def cmd_evaluate(args, cfg) -> None:
    inst = load_dataset(args.dataset, cfg.get("inference"))
    model, meta = load_checkpoint(args.checkpoint)
    spec = _task_spec(args, cfg)
    run = RunConfig.from_dict(meta.get("run_config") or {})
    modified, tt = prepare_task(inst, spec)
    modified = _prepare_for_variant(modified, tt, model.config.variant, args.flatten)
    graph = build_graph(modified, dangling="error" if args.strict else "skip")
    _emit(evaluate(model, modified, tt, run, graph), args.out, "evaluation.json")


def cmd_synth(args, cfg) -> None:
    d = _read_structured(args.spec) if args.spec else {}
    if args.seed is not None:
        d["seed"] = args.seed
    spec = SynthSpec.from_dict(d)
    inst, ledger = generate(spec)
    if args.out:
        write_dataset(inst, ledger, args.out)
    summary = {k: v for k, v in ledger.items() if k != "signal"}
    summary["signal"] = {k: v for k, v in ledger["signal"].items() if k != "clean_labels"}
    _emit(summary)


COMMANDS = {
    "ingest": cmd_ingest,
    "analyze": cmd_analyze,
    "graphify": cmd_graphify,
    "make-task": cmd_make_task,
    "sample": cmd_sample,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON run config")
    common.add_argument("--out", help="output path (directory for most subcommands)")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--strict", action="store_true", help="dangling foreign keys are errors")
    common.add_argument("--format", choices=["json"], default="json")

    p = argparse.ArgumentParser(prog="rdlkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def with_dataset(name, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("dataset_pos", nargs="?", metavar="DATASET")
        sp.add_argument("--dataset", help="CSV directory (schema.json + tables) or SQLite file")
        return sp

    with_dataset("ingest", "load a dataset, infer types, check integrity")
    sp = with_dataset("analyze", "database characteristics and classification")
    sp.add_argument("--task")
    with_dataset("graphify", "compile to a graph; --out writes a binary snapshot")
    sp = with_dataset("make-task", "build the training table and modified dataset")
    sp.add_argument("--task")
    sp = with_dataset("sample", "dump a sampled subgraph")
    sp.add_argument("--table", required=True)
    sp.add_argument("--seeds", required=True, help="comma-separated row ordinals")
    sp.add_argument("--fanout", default="16,16", help="per-hop caps, 'inf' for no cap")
    sp.add_argument("--times", help="comma-separated seed timestamps (temporal mode)")
    sp.add_argument("--strict-time", action="store_true", help="require tau(u) < seed time")
    for name in ("train", "evaluate"):
        sp = with_dataset(name, f"{name} a model")
        sp.add_argument("--task")
        sp.add_argument("--flatten", action="store_true", help="tabular_only on the join-flattened target")
        if name == "train":
            sp.add_argument("--variant", choices=["linear_sage", "resnet_sage", "tabular_only"])
        else:
            sp.add_argument("--checkpoint", required=True)
    sp = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    sp.add_argument("--spec", help="YAML/JSON synth spec")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "dataset_pos"):
        args.dataset = args.dataset or args.dataset_pos
        if not args.dataset:
            parser.error(f"{args.command}: a dataset is required")
    threads = os.environ.get(THREADS_ENV)
    try:
        if threads:
            from threadpoolctl import threadpool_limits

            ctx: Any = threadpool_limits(limits=int(threads))
        else:
            ctx = nullcontext()
        with ctx:
            cfg = load_config(args.config)
            COMMANDS[args.command](args, cfg)
    except RDLError as exc:
        print(dumps({"error": {"code": exc.code, "type": type(exc).__name__, "message": str(exc)}}))
        return 2
    except (OSError, ValueError, KeyError) as exc:
        code = "io_error" if isinstance(exc, OSError) else "invalid_argument"
        print(dumps({"error": {"code": code, "type": type(exc).__name__, "message": str(exc)}}))
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
