"""Relational GNN models over sampled subgraphs.

Pipeline per batch: encode each node's columns (stage 1), fuse them into one
d-wide row vector (linear or residual), run L sum-aggregating SAGE layers over
the sampled subgraph, then a 2-layer MLP head on the seed rows. The
``tabular_only`` variant skips the graph and sees the seed rows alone.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import autodiff as ad
from .encoders import ColumnCodes, EncoderSpec, encode_rows, init_encoder_params
from .errors import CheckpointFormatError, LabelOutOfRange
from .graph import EdgeType
from .sampler import SampledSubgraph

VARIANTS = ("linear_sage", "resnet_sage", "tabular_only")
CHECKPOINT_MAGIC = b"RDLCKPT\x00"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    variant: str = "linear_sage"
    n_layers: int = 2
    d: int = 64
    d0: int = 64
    head_hidden: int = 64
    n_res_blocks: int = 2
    fanout: int | None = 16
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant != "tabular_only" and not 1 <= self.n_layers <= 4:
            raise ValueError("n_layers must be in [1, 4]")

    @property
    def fanout_per_hop(self) -> list:
        return [self.fanout] * (0 if self.variant == "tabular_only" else self.n_layers)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class HeadSpec:
    """What the model predicts. ``mask_columns`` entries are (column, kind, n_out)."""

    kind: str
    n_out: int = 1
    classes: list | None = None
    label_mean: float = 0.0
    label_std: float = 1.0
    mask_columns: list[tuple[str, str, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mask_columns"] = [list(m) for m in self.mask_columns]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HeadSpec":
        d = dict(d)
        d["mask_columns"] = [tuple(m) for m in d.get("mask_columns", [])]
        return cls(**d)


def relation_key(et: EdgeType, direction: str) -> str:
    return f"{et[0]}|{et[1]}|{et[2]}|{direction}"


class RDLModel:
    def __init__(
        self,
        config: ModelConfig,
        spec: EncoderSpec,
        node_types: list[str],
        edge_types: list[EdgeType],
        target_table: str,
        head: HeadSpec,
    ):
        self.config = config
        self.spec = spec
        self.node_types = list(node_types)
        self.edge_types = [tuple(e) for e in edge_types]
        self.target_table = target_table
        self.head_spec = head
        self.params: dict[str, ad.Tensor] = {}
        self._init_params()

    # ------------------------------------------------------------------
    # parameters

    def _add(self, name: str, data: np.ndarray) -> None:
        self.params[name] = ad.parameter(data, name)

    def _init_params(self) -> None:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        d, d0 = cfg.d, cfg.d0
        tables = [self.target_table] if cfg.variant == "tabular_only" else self.node_types
        enc_spec = EncoderSpec(self.spec.d0, {t: self.spec.columns(t) for t in tables},
                               self.spec.text_buckets, self.spec.ngram)
        self.params.update(init_encoder_params(enc_spec, rng))
        residual = cfg.variant in ("resnet_sage", "tabular_only")
        for t in tables:
            width = len(self.spec.columns(t)) * d0
            if width:
                self._add(f"fuse/{t}/w", ad.glorot(rng, width, d))
            self._add(f"fuse/{t}/b", np.zeros((1, d)))
            if residual:
                for k in range(cfg.n_res_blocks):
                    self._add(f"fuse/{t}/res{k}/w", ad.glorot(rng, d, d))
                    self._add(f"fuse/{t}/res{k}/b", np.zeros((1, d)))
        if cfg.variant != "tabular_only":
            for layer in range(cfg.n_layers):
                for t in self.node_types:
                    self._add(f"sage{layer}/root/{t}", ad.glorot(rng, d, d))
                for et in self.edge_types:
                    for direction in ("to_parent", "to_child"):
                        self._add(f"sage{layer}/rel/{relation_key(et, direction)}", ad.glorot(rng, d, d))
        h = cfg.head_hidden
        for name, n_out in self._heads():
            self._add(f"head/{name}/w1", ad.glorot(rng, d, h))
            self._add(f"head/{name}/b1", np.zeros((1, h)))
            self._add(f"head/{name}/w2", ad.glorot(rng, h, n_out))
            self._add(f"head/{name}/b2", np.zeros((1, n_out)))

    def _heads(self) -> list[tuple[str, int]]:
        if self.head_spec.kind == "mask_pretrain":
            return [(f"mask:{c}", n) for c, _, n in self.head_spec.mask_columns]
        return [("out", self.head_spec.n_out)]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    # ------------------------------------------------------------------
    # forward pieces

    def fuse_attributes(self, table: str, cols: list[ad.Tensor], m: int) -> ad.Tensor:
        """One d-wide vector per row from its column embeddings."""
        p = self.params
        if cols:
            h = ad.add(ad.matmul(ad.concat(cols, axis=1), p[f"fuse/{table}/w"]), p[f"fuse/{table}/b"])
        else:
            h = ad.matmul(ad.Tensor(np.ones((m, 1))), p[f"fuse/{table}/b"])
        if self.config.variant in ("resnet_sage", "tabular_only"):
            for k in range(self.config.n_res_blocks):
                branch = ad.relu(ad.add(ad.matmul(h, p[f"fuse/{table}/res{k}/w"]), p[f"fuse/{table}/res{k}/b"]))
                h = ad.add(h, branch)
        return h

    def node_embeddings(self, codes: dict[str, list[ColumnCodes]], table: str, ids: np.ndarray) -> ad.Tensor:
        cols = encode_rows(self.spec, codes, self.params, table, ids)
        return self.fuse_attributes(table, cols, len(ids))

    def sage_layer(
        self, sub: SampledSubgraph, h: dict[str, ad.Tensor], layer: int, max_hop: int | None = None
    ) -> dict[str, ad.Tensor]:
        """h_out(v) = relu(h_v W_root + sum over relations of (sum of neighbor h) W_rel).

        With ``max_hop`` only nodes at hop <= max_hop are updated; the rest
        cannot influence the seeds in the remaining layers.
        """
        p = self.params
        out = {}
        for t in self.node_types:
            if t not in h:
                continue
            n = h[t].shape[0] if max_hop is None else sub.within_hops(t, max_hop)
            if n == 0:
                continue
            own = h[t] if n == h[t].shape[0] else ad.gather(h[t], np.arange(n))
            acc = ad.matmul(own, p[f"sage{layer}/root/{t}"])
            for et in self.edge_types:
                e = sub.edges.get(et)
                if e is None or len(e) == 0:
                    continue
                child, _, parent = et
                if t == parent:  # messages from children
                    sel = e[e[:, 1] < n]
                    if len(sel):
                        agg = ad.scatter_add(ad.gather(h[child], sel[:, 0]), sel[:, 1], n)
                        acc = ad.add(acc, ad.matmul(agg, p[f"sage{layer}/rel/{relation_key(et, 'to_parent')}"]))
                if t == child:  # messages from parents
                    sel = e[e[:, 0] < n]
                    if len(sel):
                        agg = ad.scatter_add(ad.gather(h[parent], sel[:, 1]), sel[:, 0], n)
                        acc = ad.add(acc, ad.matmul(agg, p[f"sage{layer}/rel/{relation_key(et, 'to_child')}"]))
            out[t] = ad.relu(acc)
        return out

    def seed_representation(self, codes: dict[str, list[ColumnCodes]], sub: SampledSubgraph) -> ad.Tensor:
        if self.config.variant == "tabular_only":
            return self.node_embeddings(codes, sub.seed_type, sub.seeds)
        h = {t: self.node_embeddings(codes, t, sub.nodes[t]) for t in self.node_types if sub.num_nodes(t)}
        L = self.config.n_layers
        for layer in range(L):
            h = self.sage_layer(sub, h, layer, max_hop=L - 1 - layer)
        return ad.gather(h[sub.seed_type], sub.seed_local)

    def head(self, z: ad.Tensor, name: str = "out") -> ad.Tensor:
        p = self.params
        hid = ad.relu(ad.add(ad.matmul(z, p[f"head/{name}/w1"]), p[f"head/{name}/b1"]))
        return ad.add(ad.matmul(hid, p[f"head/{name}/w2"]), p[f"head/{name}/b2"])

    def forward_task(self, codes: dict[str, list[ColumnCodes]], sub: SampledSubgraph) -> ad.Tensor:
        """Logits (B, n_out) for prediction tasks; the seed representation for mask tasks."""
        z = self.seed_representation(codes, sub)
        if self.head_spec.kind == "mask_pretrain":
            return z
        return self.head(z)

    # ------------------------------------------------------------------
    # losses

    def loss(self, out: ad.Tensor, labels, columns: list[str] | None = None) -> ad.Tensor:
        kind = self.head_spec.kind
        if kind == "binary_classification":
            return ad.sigmoid_binary_cross_entropy(out, labels)
        if kind == "multiclass_classification":
            return ad.softmax_cross_entropy(out, labels)
        if kind == "regression":
            y = (np.asarray(labels, dtype=np.float64) - self.head_spec.label_mean) / self.head_spec.label_std
            return ad.squared_error(out, y.reshape(-1, 1))
        return self.mask_loss(out, labels, columns or [])

    def mask_loss(self, z: ad.Tensor, labels, columns: list[str]) -> ad.Tensor:
        """Mean per-cell loss over masked categorical and numerical cells.

        ``labels`` are already encoded: class index for categorical cells,
        standardized value for numerical ones.
        """
        cols = np.asarray(columns)
        y = np.asarray(labels, dtype=np.float64)
        total = None
        n = 0
        parts = []
        for c, kind, n_out in self.head_spec.mask_columns:
            rows = np.flatnonzero(cols == c)
            if not len(rows):
                continue
            logits = self.head(ad.gather(z, rows), f"mask:{c}")
            if kind == "categorical":
                yc = y[rows].astype(np.int64)
                if yc.min() < 0 or yc.max() >= n_out:
                    raise LabelOutOfRange(f"mask labels for {c} out of range")
                part = ad.softmax_cross_entropy(logits, yc)
            else:
                part = ad.squared_error(logits, y[rows].reshape(-1, 1))
            parts.append((part, len(rows)))
            n += len(rows)
        if n == 0:
            return ad.Tensor(np.array(0.0))
        for part, k in parts:
            term = ad.scale(part, k / n)
            total = term if total is None else ad.add(total, term)
        return total

    def predict(self, out: ad.Tensor) -> np.ndarray:
        """Scores: P(y=1) for binary, class probabilities for multiclass, values for regression."""
        z = out.data
        kind = self.head_spec.kind
        if kind == "binary_classification":
            return 1.0 / (1.0 + np.exp(-z.reshape(-1)))
        if kind == "multiclass_classification":
            e = np.exp(z - z.max(axis=1, keepdims=True))
            return e / e.sum(axis=1, keepdims=True)
        if kind == "regression":
            return z.reshape(-1) * self.head_spec.label_std + self.head_spec.label_mean
        raise ValueError("predict() is not defined for mask tasks")


# --------------------------------------------------------------------------
# checkpoint
#
# Little-endian layout:
#   magic "RDLCKPT\0" | u32 version | u32 header length | header (UTF-8 JSON,
#   sorted keys) | parameter data
# The header holds the model config, encoder spec, head spec, graph schema,
# free-form metadata and the ordered list of (name, shape). Parameter data is
# every tensor's float64 values in that order, row-major.


def _header(model: RDLModel, meta: dict | None) -> dict:
    return {
        "config": model.config.to_dict(),
        "encoder_spec": model.spec.to_dict(),
        "head": model.head_spec.to_dict(),
        "node_types": model.node_types,
        "edge_types": [list(e) for e in model.edge_types],
        "target_table": model.target_table,
        "meta": meta or {},
        "params": [{"name": k, "shape": list(v.data.shape)} for k, v in model.params.items()],
    }


def checkpoint_bytes(model: RDLModel, meta: dict | None = None) -> bytes:
    header = json.dumps(_header(model, meta), sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
    buf.write(header)
    for p in model.params.values():
        buf.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(model: RDLModel, path, meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model, meta))


def load_checkpoint(source) -> tuple[RDLModel, dict[str, Any]]:
    data = source if isinstance(source, (bytes, bytearray)) else open(source, "rb").read()
    data = bytes(data)
    if data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("bad magic")
    if len(data) < 16:
        raise CheckpointFormatError("truncated checkpoint")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError("corrupt header") from exc
    model = RDLModel(
        ModelConfig.from_dict(header["config"]),
        EncoderSpec.from_dict(header["encoder_spec"]),
        header["node_types"],
        [tuple(e) for e in header["edge_types"]],
        header["target_table"],
        HeadSpec.from_dict(header["head"]),
    )
    pos = 16 + hlen
    for entry in header["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        n = int(np.prod(shape)) * 8
        if pos + n > len(data):
            raise CheckpointFormatError("truncated parameter data")
        if name not in model.params or model.params[name].data.shape != shape:
            raise CheckpointFormatError(f"parameter {name} does not match the model")
        model.params[name].data = np.frombuffer(data[pos : pos + n], dtype="<f8").reshape(shape).astype(np.float64)
        pos += n
    if pos != len(data):
        raise CheckpointFormatError("trailing bytes in checkpoint")
    return model, header["meta"]
