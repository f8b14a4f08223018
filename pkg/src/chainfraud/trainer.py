"""Training loop, fraud-positive evaluation metrics, and the ratio sweep.

Gradients accumulate over ``grad_accum`` minibatches (each partial loss
scaled by 1/grad_accum) before a single AdamW step; the learning rate follows
a linear warmup/decay over update steps. Dev metrics run after every epoch
and the best-F1 parameter snapshot is retained. The ratio sweep retrains from
scratch on majority-undersampled account sets from 1:9 to 9:1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import cross_entropy
from .corpusgen import AccountDocument, Vocabulary, split_corpus, tokenize
from .errors import DataError, NumericError
from .fusion import FraudFusionModel
from .graphbuild import AddressIndex, GraphBuildConfig, build_adjacency, normalize
from .graphnet import initial_features
from .optim import SCHEDULES, AdamW
from .txdata import AccountBucket

EVAL_BATCH_SIZE = 64

DEFAULT_RATIOS = tuple((n, 10 - n) for n in range(1, 10))  # (normal, fraud) parts


@dataclass
class TrainConfig:
    lr: float = 8e-6
    weight_decay: float = 0.001
    batch_size: int = 32
    grad_accum: int = 2
    epochs: int = 40
    scheduler: str = "linear_warmup_decay"
    warmup_fraction: float = 0.1
    seed: int = 0
    freeze_gcn: bool = False  # epoch-cached node embeddings, GCN weights fixed

    def __post_init__(self):
        if min(self.lr, self.weight_decay + 1, self.batch_size, self.epochs) <= 0:
            raise ValueError("lr, batch_size, and epochs must be positive")
        if self.grad_accum < 1:
            raise ValueError(f"grad_accum must be >= 1, got {self.grad_accum}")
        if self.scheduler not in SCHEDULES:
            raise ValueError(f"unknown scheduler {self.scheduler!r}; "
                             f"options: {sorted(SCHEDULES)}")


@dataclass
class MetricsReport:
    tp: int
    tn: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    accuracy: float

    @classmethod
    def from_counts(cls, tp: int, tn: int, fp: int, fn: int) -> "MetricsReport":
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        total = tp + tn + fp + fn
        accuracy = (tp + tn) / total if total > 0 else 0.0
        return cls(tp, tn, fp, fn, precision, recall, f1, accuracy)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "recall": self.recall,
            "f1": self.f1, "accuracy": self.accuracy,
        }


@dataclass
class EncodedDataset:
    """Token/node arrays for one document set, aligned row by row."""

    ids: np.ndarray  # (N, L) int64
    type_ids: np.ndarray
    node_ids: np.ndarray  # (N,) row into the graph
    labels: np.ndarray  # (N,) {0,1}
    addresses: list[str]

    def __len__(self) -> int:
        return self.ids.shape[0]

    def take(self, rows) -> "EncodedDataset":
        rows = np.asarray(rows)
        return EncodedDataset(self.ids[rows], self.type_ids[rows], self.node_ids[rows],
                              self.labels[rows], [self.addresses[i] for i in rows])


@dataclass
class GraphContext:
    """Fixed graph-side inputs shared by every forward pass."""

    a_hat: np.ndarray
    h0: np.ndarray
    index: AddressIndex


def build_graph_context(records, buckets: dict[str, AccountBucket],
                        cfg: GraphBuildConfig) -> GraphContext:
    graph = build_adjacency(records, buckets, cfg)
    norm = normalize(graph, cfg)
    h0 = initial_features(buckets, graph.index)
    return GraphContext(norm.a_hat, h0, graph.index)


def encode_documents(docs: list[AccountDocument], vocab: Vocabulary,
                     index: AddressIndex, max_len: int) -> EncodedDataset:
    ids = np.zeros((len(docs), max_len), dtype=np.int64)
    type_ids = np.zeros((len(docs), max_len), dtype=np.int64)
    node_ids = np.zeros(len(docs), dtype=np.int64)
    labels = np.zeros(len(docs), dtype=np.int64)
    for row, doc in enumerate(docs):
        seq = tokenize(doc, vocab, max_len=max_len)
        ids[row] = seq.ids
        type_ids[row] = seq.type_ids
        node_ids[row] = index[doc.address]
        labels[row] = doc.label
    return EncodedDataset(ids, type_ids, node_ids, labels, [d.address for d in docs])


def predict_probs(model: FraudFusionModel, dataset: EncodedDataset, ctx: GraphContext,
                  batch_size: int = EVAL_BATCH_SIZE) -> np.ndarray:
    """Fraud probabilities in dataset order (eval mode, noiseless)."""
    out = np.zeros(len(dataset))
    with ad.no_grad():
        node_embeddings = model.gcn.forward(ctx.h0, ctx.a_hat)
        for start in range(0, len(dataset), batch_size):
            rows = slice(start, min(start + batch_size, len(dataset)))
            probs, _ = model.forward(
                dataset.ids[rows], dataset.type_ids[rows], dataset.node_ids[rows],
                ctx.h0, ctx.a_hat, train=False, node_embeddings=node_embeddings,
            )
            out[rows] = probs.data[:, 1]
    return out


def compute_metrics(labels: np.ndarray, predicted: np.ndarray) -> MetricsReport:
    labels = np.asarray(labels).astype(bool)
    predicted = np.asarray(predicted).astype(bool)
    tp = int((predicted & labels).sum())
    tn = int((~predicted & ~labels).sum())
    fp = int((predicted & ~labels).sum())
    fn = int((~predicted & labels).sum())
    return MetricsReport.from_counts(tp, tn, fp, fn)


def evaluate(model: FraudFusionModel, dataset: EncodedDataset, ctx: GraphContext,
             threshold: float = 0.5) -> MetricsReport:
    """Fraud-positive precision/recall/F1 at the decision threshold."""
    if len(dataset) == 0:
        raise DataError("evaluate: empty document set")
    probs = predict_probs(model, dataset, ctx)
    return compute_metrics(dataset.labels, probs >= threshold)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    lr_last: float
    dev: MetricsReport
    gate_mean: tuple[float, float, float]
    hard_fraction: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "lr_last": self.lr_last,
            "dev": self.dev.to_dict(),
            "gate_mean": list(self.gate_mean),
            "hard_fraction": self.hard_fraction,
        }


@dataclass
class TrainResult:
    history: list[EpochRecord]
    best_epoch: int
    best_f1: float
    best_state: dict[str, np.ndarray]
    updates: int

    def to_dict(self) -> dict:
        return {
            "epochs": [r.to_dict() for r in self.history],
            "best": {"epoch": self.best_epoch, "dev_f1": self.best_f1},
            "updates": self.updates,
        }


def train(model: FraudFusionModel, train_set: EncodedDataset, dev_set: EncodedDataset,
          ctx: GraphContext, cfg: TrainConfig) -> TrainResult:
    """Optimize the model; returns history plus the best-dev-F1 snapshot."""
    if len(train_set) == 0 or len(dev_set) == 0:
        raise DataError("train: empty split")

    seq = np.random.SeedSequence(cfg.seed)
    shuffle_rng, noise_rng = (np.random.default_rng(s) for s in seq.spawn(2))

    params = model.trainable_parameters()
    if cfg.freeze_gcn:
        frozen = {p.name for p in model.gcn.parameters()}
        params = [p for p in params if p.name not in frozen]
    opt = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    schedule = SCHEDULES[cfg.scheduler]

    batches_per_epoch = math.ceil(len(train_set) / cfg.batch_size)
    updates_per_epoch = math.ceil(batches_per_epoch / cfg.grad_accum)
    total_updates = updates_per_epoch * cfg.epochs
    warmup_updates = max(1, int(cfg.warmup_fraction * total_updates))

    history: list[EpochRecord] = []
    best_f1 = -1.0
    best_epoch = -1
    best_state: dict[str, np.ndarray] = {}
    update_idx = 0

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        tau = model.fusion_cfg.tau_at(epoch - 1)
        cached_nodes = None
        if cfg.freeze_gcn:
            with ad.no_grad():
                cached_nodes = ad.Tensor(model.gcn.forward(ctx.h0, ctx.a_hat).data)
        losses = []
        gate_sums = np.zeros(3)
        hard_rows = 0
        seen = 0
        pending = 0

        for start in range(0, len(train_set), cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            batch = train_set.take(rows)
            probs, gate = model.forward(
                batch.ids, batch.type_ids, batch.node_ids, ctx.h0, ctx.a_hat,
                train=True, rng=noise_rng, tau=tau, node_embeddings=cached_nodes,
            )
            loss = cross_entropy(probs, batch.labels)
            if not np.isfinite(loss.item()):
                raise NumericError(
                    f"train: non-finite loss at epoch {epoch}, rows {rows[:8].tolist()}, "
                    f"addresses {batch.addresses[:8]}"
                )
            losses.append(loss.item())
            ad.scale(loss, 1.0 / cfg.grad_accum).backward()

            gate_sums += gate.g.data.sum(axis=0)
            hard_rows += int(((gate.g.data == 0) | (gate.g.data == 1)).all(axis=1).sum())
            seen += len(rows)
            pending += 1
            if pending == cfg.grad_accum or start + cfg.batch_size >= len(train_set):
                opt.lr = cfg.lr * schedule(update_idx, total_updates, warmup_updates)
                opt.step()
                model.zero_grad()
                update_idx += 1
                pending = 0

        dev_metrics = evaluate(model, dev_set, ctx)
        history.append(EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            lr_last=opt.lr,
            dev=dev_metrics,
            gate_mean=tuple(gate_sums / seen),
            hard_fraction=hard_rows / seen,
        ))
        if dev_metrics.f1 > best_f1:
            best_f1 = dev_metrics.f1
            best_epoch = epoch
            best_state = {name: value.copy() for name, value in model.state_dict().items()}

    return TrainResult(history, best_epoch, best_f1, best_state, update_idx)


def undersample(docs: list[AccountDocument], ratio: tuple[int, int],
                rng: np.random.Generator) -> list[AccountDocument]:
    """Drop majority-class accounts to reach the normal:fraud target ratio."""
    normal_parts, fraud_parts = ratio
    normals = [d for d in docs if d.label == 0]
    frauds = [d for d in docs if d.label == 1]
    scale = min(len(normals) / normal_parts, len(frauds) / fraud_parts)
    keep_normal = int(scale * normal_parts)
    keep_fraud = int(scale * fraud_parts)
    if keep_normal < 1 or keep_fraud < 1:
        raise DataError(
            f"ratio {normal_parts}:{fraud_parts}: not enough accounts "
            f"({len(normals)} normal, {len(frauds)} fraud)"
        )
    kept = [normals[i] for i in rng.choice(len(normals), size=keep_normal, replace=False)]
    kept += [frauds[i] for i in rng.choice(len(frauds), size=keep_fraud, replace=False)]
    return kept


@dataclass
class SweepRow:
    ratio: tuple[int, int]
    metrics: MetricsReport

    @property
    def label(self) -> str:
        return f"{self.ratio[0]}:{self.ratio[1]}"


def ratio_sweep(
    docs: list[AccountDocument],
    ctx: GraphContext,
    vocab: Vocabulary,
    model_factory,
    train_cfg: TrainConfig,
    max_len: int,
    ratios: tuple = DEFAULT_RATIOS,
) -> list[SweepRow]:
    """Retrain per class ratio on undersampled accounts; test-set metrics.

    ``model_factory(seed)`` must return a fresh model. The graph context stays
    the full world; only the document set is rebalanced.
    """
    rows = []
    for ratio in ratios:
        rng = np.random.default_rng([train_cfg.seed, ratio[0], ratio[1]])
        kept = undersample(docs, ratio, rng)
        split = split_corpus(kept, seed=train_cfg.seed)
        model = model_factory(train_cfg.seed)
        result = train(
            model,
            encode_documents(split.train, vocab, ctx.index, max_len),
            encode_documents(split.dev, vocab, ctx.index, max_len),
            ctx,
            train_cfg,
        )
        model.load_state_dict(result.best_state)
        test_metrics = evaluate(model, encode_documents(split.test, vocab, ctx.index, max_len), ctx)
        rows.append(SweepRow(ratio, test_metrics))
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    lines = ["ratio,f1,recall,precision"]
    for row in rows:
        m = row.metrics
        lines.append(f"{row.label},{m.f1:.6f},{m.recall:.6f},{m.precision:.6f}")
    return "\n".join(lines) + "\n"
