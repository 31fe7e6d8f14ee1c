"""Training loop, model selection over the (fanout, layers) grid, and evaluation.

Every random draw comes from a stream keyed by (seed, purpose, epoch, batch),
so a run is a pure function of its inputs.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import autodiff as ad
from .encoders import EncoderSpec, fit_encoders, precompute_codes, token
from .errors import ConfigError, EmptyTrainSplit
from .graph import HeteroGraph, build_graph
from .ingest import RelationalInstance
from .metrics import auc_roc, macro_f1, r2_clipped
from .models import HeadSpec, ModelConfig, RDLModel, checkpoint_bytes
from .sampler import SampledSubgraph, sample_static, sample_temporal
from .tasks import TEST, TRAIN, VAL, TrainingTable

METRIC_NAMES = {
    "binary_classification": "auc_roc",
    "multiclass_classification": "macro_f1",
    "regression": "r2_clipped",
    "mask_pretrain": "loss_reduction",
}

# stream tags for derived RNGs
_SHUFFLE, _TRAIN_SAMPLE, _EVAL_SAMPLE = 1, 2, 3


@dataclass
class RunConfig:
    variant: str = "linear_sage"
    batch_size: int = 512
    lr: float = 1e-3
    min_epochs: int = 10
    min_steps: int = 1000
    patience: int = 3
    max_extra_epochs: int = 20
    grid_fanouts: tuple[int, ...] = (16, 32, 64)
    grid_layers: tuple[int, ...] = (1, 2, 3, 4)
    d: int = 64
    d0: int = 64
    head_hidden: int = 64
    n_res_blocks: int = 2
    strict_temporal: bool = False
    seed: int = 0

    def __post_init__(self):
        self.grid_fanouts = tuple(int(f) for f in self.grid_fanouts)
        self.grid_layers = tuple(int(x) for x in self.grid_layers)
        if not self.grid_fanouts or not self.grid_layers:
            raise ConfigError("grid must be non-empty")
        positive = ("batch_size", "lr", "d", "d0", "head_hidden")
        if any(getattr(self, k) <= 0 for k in positive) or self.min_epochs < 0 or self.min_steps < 0:
            raise ConfigError("run config values must be positive")
        if self.patience < 1 or self.max_extra_epochs < 0:
            raise ConfigError("patience must be >= 1 and max_extra_epochs >= 0")

    def grid(self) -> list[tuple[int | None, int]]:
        if self.variant == "tabular_only":
            return [(None, 0)]
        return [(f, n) for f in self.grid_fanouts for n in self.grid_layers]

    def model_config(self, fanout: int | None, n_layers: int) -> ModelConfig:
        return ModelConfig(
            variant=self.variant,
            n_layers=max(n_layers, 1),
            d=self.d,
            d0=self.d0,
            head_hidden=self.head_hidden,
            n_res_blocks=self.n_res_blocks,
            fanout=fanout,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid_fanouts"] = list(self.grid_fanouts)
        d["grid_layers"] = list(self.grid_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown run config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RunReport:
    task: str
    variant: str
    metric: str
    val: float
    test: float
    best: dict
    epochs: int
    steps: int
    seed: int
    grid: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    wall_time_s: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time_s")
            for g in d["grid"]:
                g.pop("wall_time_s", None)
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=2)


# --------------------------------------------------------------------------
# task plumbing


@dataclass
class Prepared:
    instance: RelationalInstance
    tt: TrainingTable
    graph: HeteroGraph
    spec: EncoderSpec
    codes: dict
    head: HeadSpec
    labels: np.ndarray  # encoded per training-table row (float for regression/numerical cells)
    columns: list[str] | None  # mask tasks: column per row
    usable: np.ndarray  # rows that take part in training/evaluation


def head_spec_for(tt: TrainingTable, spec: EncoderSpec) -> HeadSpec:
    if tt.kind == "binary_classification":
        return HeadSpec(tt.kind, 1, classes=list(tt.classes))
    if tt.kind == "multiclass_classification":
        return HeadSpec(tt.kind, tt.n_classes, classes=list(tt.classes))
    if tt.kind == "regression":
        y = np.asarray(tt.labels, dtype=np.float64)[tt.split == TRAIN]
        std = float(y.std()) if len(y) else 1.0
        return HeadSpec(tt.kind, 1, label_mean=float(y.mean()) if len(y) else 0.0, label_std=std if std > 0 else 1.0)
    cols = []
    seen = set(tt.target_columns or [])
    for cs in spec.columns(tt.target_table):
        if cs.name not in seen:
            continue
        if cs.kind == "categorical":
            cols.append((cs.name, "categorical", len(cs.vocab) + 1))  # vocab + OOV
        elif cs.kind == "numerical":
            cols.append((cs.name, "numerical", 1))
    return HeadSpec("mask_pretrain", 0, mask_columns=cols)


def encode_labels(tt: TrainingTable, spec: EncoderSpec, head: HeadSpec) -> tuple[np.ndarray, np.ndarray]:
    """(encoded labels, usable-row mask)."""
    n = len(tt)
    if tt.kind != "mask_pretrain":
        return np.asarray(tt.labels, dtype=np.float64), np.ones(n, dtype=bool)
    by_name = {cs.name: cs for cs in spec.columns(tt.target_table)}
    kinds = {c: k for c, k, _ in head.mask_columns}
    y = np.zeros(n)
    ok = np.zeros(n, dtype=bool)
    for i, (c, v) in enumerate(zip(tt.target_columns, tt.labels)):
        if c not in kinds:
            continue
        cs = by_name[c]
        if kinds[c] == "categorical":
            pos = {t: k for k, t in enumerate(cs.vocab)}
            y[i] = pos.get(token(v), len(cs.vocab))
        else:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                continue
            y[i] = (float(v) - cs.mean) / cs.std
        ok[i] = True
    return y, ok


def prepare(instance: RelationalInstance, tt: TrainingTable, cfg: RunConfig, graph: HeteroGraph | None = None) -> Prepared:
    if tt.split is None or not np.any(tt.split == TRAIN):
        raise EmptyTrainSplit("no training rows")
    graph = graph or build_graph(instance)
    spec = fit_encoders(instance, tt, cfg.d0)
    head = head_spec_for(tt, spec)
    labels, usable = encode_labels(tt, spec, head)
    return Prepared(instance, tt, graph, spec, precompute_codes(spec, instance), head, labels,
                    tt.target_columns, usable)


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def sample_batch(prep: Prepared, rows: np.ndarray, mc: ModelConfig, rng_key: list[int], strict: bool) -> SampledSubgraph:
    seeds = prep.tt.entity_index[rows]
    caps = mc.fanout_per_hop
    if prep.tt.timestamps is not None:
        return sample_temporal(prep.graph, prep.tt.target_table, seeds, prep.tt.timestamps[rows], caps,
                               rng_seed=rng_key, strict=strict)
    return sample_static(prep.graph, prep.tt.target_table, seeds, caps, rng_seed=rng_key)


def batch_loss(model: RDLModel, prep: Prepared, rows: np.ndarray, sub: SampledSubgraph) -> tuple[ad.Tensor, ad.Tensor]:
    out = model.forward_task(prep.codes, sub)
    cols = [prep.columns[i] for i in rows] if prep.columns is not None else None
    y = prep.labels[rows]
    if prep.head.kind in ("binary_classification", "multiclass_classification"):
        y = y.astype(np.int64)
    return out, model.loss(out, y, cols)


def predict_rows(model: RDLModel, prep: Prepared, rows: np.ndarray, cfg: RunConfig, tag: int) -> tuple[np.ndarray, float]:
    """Scores for ``rows`` and their mean loss, in fixed batches."""
    scores, loss_sum = [], 0.0
    for b, s in enumerate(range(0, len(rows), cfg.batch_size)):
        r = rows[s : s + cfg.batch_size]
        sub = sample_batch(prep, r, model.config, [cfg.seed, _EVAL_SAMPLE, tag, b], cfg.strict_temporal)
        out, loss = batch_loss(model, prep, r, sub)
        loss_sum += float(loss.data) * len(r)
        if prep.head.kind != "mask_pretrain":
            scores.append(model.predict(out))
    loss = loss_sum / max(len(rows), 1)
    if prep.head.kind == "mask_pretrain":
        return np.zeros(0), loss
    return np.concatenate(scores) if scores else np.zeros(0), loss


def score(prep: Prepared, rows: np.ndarray, scores: np.ndarray, loss: float, reference_loss: float | None) -> float:
    kind = prep.head.kind
    y = prep.labels[rows]
    if kind == "binary_classification":
        if len(np.unique(y)) < 2:
            return float("nan")
        return auc_roc(scores, y.astype(np.int64))
    if kind == "multiclass_classification":
        return macro_f1(scores.argmax(axis=1), y.astype(np.int64), prep.head.n_out)
    if kind == "regression":
        return r2_clipped(scores, y)
    if not reference_loss:
        return 0.0
    return float(min(1.0, max(0.0, 1.0 - loss / reference_loss)))


def split_rows(prep: Prepared, split: int) -> np.ndarray:
    return np.flatnonzero((prep.tt.split == split) & prep.usable)


def _better(a: float, b: float) -> bool:
    if math.isnan(a):
        return False
    return math.isnan(b) or a > b


def train_point(prep: Prepared, cfg: RunConfig, mc: ModelConfig) -> tuple[RDLModel, dict]:
    """Train one grid point; returns the best-validation model and its record."""
    t0 = time.perf_counter()
    model = RDLModel(mc, prep.spec, prep.graph.node_types, prep.graph.edge_types, prep.tt.target_table, prep.head)
    opt = ad.Adam(model.params, lr=cfg.lr)
    train_idx = split_rows(prep, TRAIN)
    val_idx = split_rows(prep, VAL)
    if not len(train_idx):
        raise EmptyTrainSplit("no usable training rows")
    mask_task = prep.head.kind == "mask_pretrain"
    ref_val = predict_rows(model, prep, val_idx, cfg, VAL)[1] if mask_task and len(val_idx) else None
    init_train_loss = predict_rows(model, prep, train_idx, cfg, TRAIN)[1] if mask_task else None

    steps = epochs = 0
    best_val, best_params, best_epoch, stale = float("nan"), None, 0, 0
    extra_epochs = 0
    while True:
        order = train_idx[_rng(cfg.seed, _SHUFFLE, epochs).permutation(len(train_idx))]
        for b, s in enumerate(range(0, len(order), cfg.batch_size)):
            rows = order[s : s + cfg.batch_size]
            sub = sample_batch(prep, rows, mc, [cfg.seed, _TRAIN_SAMPLE, epochs, b], cfg.strict_temporal)
            opt.zero_grad()
            _, loss = batch_loss(model, prep, rows, sub)
            loss.backward()
            opt.step()
            steps += 1
        epochs += 1
        if epochs < cfg.min_epochs or steps < cfg.min_steps:
            continue
        if len(val_idx):
            sc, vl = predict_rows(model, prep, val_idx, cfg, VAL)
            val = score(prep, val_idx, sc, vl, ref_val)
        else:
            val = float("nan")
        if best_params is None or _better(val, best_val):
            best_val, best_epoch, stale = val, epochs, 0
            best_params = {k: p.data.copy() for k, p in model.params.items()}
        else:
            stale += 1
        if stale >= cfg.patience or extra_epochs >= cfg.max_extra_epochs or not len(val_idx):
            break
        extra_epochs += 1
    for k, v in best_params.items():
        model.params[k].data = v
    test_idx = split_rows(prep, TEST)
    if len(test_idx):
        sc, tl = predict_rows(model, prep, test_idx, cfg, TEST)
        ref_test = None
        if mask_task:
            fresh = RDLModel(mc, prep.spec, prep.graph.node_types, prep.graph.edge_types, prep.tt.target_table, prep.head)
            ref_test = predict_rows(fresh, prep, test_idx, cfg, TEST)[1]
        test = score(prep, test_idx, sc, tl, ref_test)
    else:
        test = float("nan")
    record = {
        "fanout": mc.fanout,
        "n_layers": mc.n_layers if mc.variant != "tabular_only" else 0,
        "val": best_val,
        "test": test,
        "epochs": epochs,
        "steps": steps,
        "best_epoch": best_epoch,
        "wall_time_s": time.perf_counter() - t0,
    }
    if mask_task:
        record["initial_train_loss"] = init_train_loss
        record["final_train_loss"] = predict_rows(model, prep, train_idx, cfg, TRAIN)[1]
    return model, record


def train(
    instance: RelationalInstance,
    tt: TrainingTable,
    cfg: RunConfig,
    graph: HeteroGraph | None = None,
) -> tuple[RunReport, RDLModel, bytes]:
    """Train every grid point, keep the best by validation metric.

    Returns the report, the selected model and its checkpoint bytes.
    """
    t0 = time.perf_counter()
    prep = prepare(instance, tt, cfg, graph)
    best = None
    records = []
    for fanout, n_layers in cfg.grid():
        model, rec = train_point(prep, cfg, cfg.model_config(fanout, n_layers))
        records.append(rec)
        if best is None or _better(rec["val"], best[1]["val"]):
            best = (model, rec)
    model, rec = best
    extra = {}
    if tt.kind == "mask_pretrain":
        extra = {k: rec[k] for k in ("initial_train_loss", "final_train_loss")}
    report = RunReport(
        task=tt.kind,
        variant=cfg.variant,
        metric=METRIC_NAMES[tt.kind],
        val=rec["val"],
        test=rec["test"],
        best={"fanout": rec["fanout"], "n_layers": rec["n_layers"]},
        epochs=rec["epochs"],
        steps=rec["steps"],
        seed=cfg.seed,
        grid=records,
        extra=extra,
        wall_time_s=time.perf_counter() - t0,
    )
    meta = {
        "task": {"kind": tt.kind, "target_table": tt.target_table, "classes": tt.classes},
        "run_config": cfg.to_dict(),
        "selected": report.best,
    }
    return report, model, checkpoint_bytes(model, meta)


def evaluate(model: RDLModel, instance: RelationalInstance, tt: TrainingTable, cfg: RunConfig | None = None,
             graph: HeteroGraph | None = None) -> dict[str, Any]:
    """Recompute val/test metrics of a trained model on a prepared task."""
    cfg = cfg or RunConfig(variant=model.config.variant)
    graph = graph or build_graph(instance)
    spec = model.spec
    labels, usable = encode_labels(tt, spec, model.head_spec)
    prep = Prepared(instance, tt, graph, spec, precompute_codes(spec, instance), model.head_spec, labels,
                    tt.target_columns, usable)
    out = {"task": tt.kind, "metric": METRIC_NAMES[tt.kind]}
    for name, split in (("val", VAL), ("test", TEST)):
        rows = split_rows(prep, split)
        if not len(rows):
            out[name] = float("nan")
            continue
        sc, loss = predict_rows(model, prep, rows, cfg, split)
        ref = None
        if tt.kind == "mask_pretrain":
            fresh = RDLModel(model.config, spec, model.node_types, model.edge_types, model.target_table,
                             model.head_spec)
            ref = predict_rows(fresh, prep, rows, cfg, split)[1]
        out[name] = score(prep, rows, sc, loss, ref)
        out[f"{name}_loss"] = loss
    return out

