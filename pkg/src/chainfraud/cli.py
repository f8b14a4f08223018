"""Command-line pipeline: synth -> ingest/build-graph/make-corpus -> train
-> evaluate / sweep-ratio, plus a grad-check verification command.

Stages communicate only through files (transactions CSV/JSONL, graph dump,
TSV corpus, checkpoint), so every step is independently re-runnable. A JSON
config file mirrors the library dataclasses section by section; CLI flags
override file values. Unknown config keys are rejected.

Exit codes: 0 ok, 1 usage/config, 2 data, 3 numeric (including a failed
gradient check). Log verbosity comes from the CHAINFRAUD_LOG environment
variable (debug | info | quiet).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .corpusgen import Vocabulary, read_split, render_corpus, split_corpus, write_tsv
from .encoder import EncoderConfig
from .errors import ChainFraudError, ConfigError, DataError, NumericError
from .fusion import FraudFusionModel, FusionConfig, model_grad_check, write_gate_stats
from .graphbuild import GraphBuildConfig, build_adjacency, normalize, read_graph, write_graph
from .graphnet import N_FEATURES, initial_features
from .synthgen import SynthConfig, generate, to_csv, to_jsonl
from .trainer import (
    DEFAULT_RATIOS,
    GraphContext,
    TrainConfig,
    encode_documents,
    evaluate,
    ratio_sweep,
    sweep_csv,
    train,
)
from .txdata import build_buckets, parse_records

log = logging.getLogger("chainfraud")


@dataclasses.dataclass
class GcnConfig:
    dims: tuple[int, ...] = (64, 64)


@dataclasses.dataclass
class RunConfig:
    """All tunables, section by section; see the library dataclasses."""

    synth: SynthConfig
    graph: GraphBuildConfig
    encoder: EncoderConfig
    fusion: FusionConfig
    gcn: GcnConfig
    train: TrainConfig

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls(SynthConfig(), GraphBuildConfig(), EncoderConfig(),
                   FusionConfig(), GcnConfig(), TrainConfig())

    def to_dict(self) -> dict:
        out = {}
        for section in dataclasses.fields(self):
            value = dataclasses.asdict(getattr(self, section.name))
            if "alpha" in value and isinstance(value["alpha"], dict):
                value["alpha"] = {str(k): v for k, v in value["alpha"].items()}
            out[section.name] = value
        return out


_SECTION_TYPES = {
    "synth": SynthConfig,
    "graph": GraphBuildConfig,
    "encoder": EncoderConfig,
    "fusion": FusionConfig,
    "gcn": GcnConfig,
    "train": TrainConfig,
}


def load_config(path: str | None) -> RunConfig:
    """Defaults overlaid with the JSON config file; unknown keys rejected."""
    cfg = RunConfig.defaults()
    if path is None:
        return cfg
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    for section, values in raw.items():
        if section not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section {section!r}; "
                              f"expected one of {sorted(_SECTION_TYPES)}")
        cls = _SECTION_TYPES[section]
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")
        if section == "graph" and "alpha" in values:
            values["alpha"] = {int(k): float(v) for k, v in values["alpha"].items()}
        if section == "gcn" and "dims" in values:
            values["dims"] = tuple(values["dims"])
        merged = dataclasses.replace(getattr(cfg, section), **values)
        setattr(cfg, section, merged)
    return cfg


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.synth = dataclasses.replace(cfg.synth, seed=args.seed)
        cfg.train = dataclasses.replace(cfg.train, seed=args.seed)
    if getattr(args, "lock_strategy", None) is not None:
        cfg.fusion = dataclasses.replace(cfg.fusion, lock_strategy=args.lock_strategy)
    return cfg


def _log_resolved(cfg: RunConfig) -> None:
    log.info("resolved config: %s", json.dumps(cfg.to_dict(), sort_keys=True))


def _detect_format(path: str) -> str:
    return "jsonl" if str(path).endswith((".jsonl", ".json")) else "csv"


def _load_buckets(path: str, fmt: str | None = None):
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with open(path, "rb") as fh:
        records = parse_records(fh, format=fmt or _detect_format(path))
    return records, build_buckets(records)


def _graph_context_from_file(graph_path: str, buckets, cfg: RunConfig) -> GraphContext:
    graph = read_graph(graph_path)
    missing = set(buckets) - set(graph.index.addresses)
    if missing or len(buckets) != len(graph.index):
        raise DataError("graph index does not match the transaction accounts; "
                        "rebuild the graph from the same transactions file")
    norm = normalize(graph, cfg.graph)
    h0 = initial_features(buckets, graph.index)
    return GraphContext(norm.a_hat, h0, graph.index)


def _build_model(cfg: RunConfig, vocab: Vocabulary) -> FraudFusionModel:
    return FraudFusionModel(
        vocab_size=len(vocab),
        encoder_cfg=cfg.encoder,
        fusion_cfg=cfg.fusion,
        gcn_dims=cfg.gcn.dims,
        n_node_features=N_FEATURES,
        seed=cfg.train.seed,
        pad_id=vocab.pad_id,
    )


def _write_json(payload: dict, path: Path | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------- commands

def cmd_synth(args, cfg: RunConfig) -> int:
    records, labels = generate(cfg.synth)
    out = Path(args.out or Path(args.out_dir) / "transactions.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    serialize = to_jsonl if _detect_format(out) == "jsonl" else to_csv
    out.write_text(serialize(records), encoding="utf-8")
    log.info("wrote %d transactions (%d fraud accounts) to %s",
             len(records), sum(labels.values()), out)
    return 0


def cmd_ingest(args, cfg: RunConfig) -> int:
    records, buckets = _load_buckets(args.input, args.format)
    labels = [b.label for b in buckets.values()]
    sizes = [len(b.records) for b in buckets.values()]
    gaps = [d[2] for b in buckets.values() for d in b.ngram_diffs]
    summary = {
        "records": len(records),
        "accounts": len(buckets),
        "fraud_accounts": sum(labels),
        "normal_accounts": len(labels) - sum(labels),
        "records_per_account": {
            "min": min(sizes), "max": max(sizes),
            "mean": float(np.mean(sizes)),
        } if sizes else {},
        "mean_bigram_gap_seconds": float(np.mean(gaps)) if gaps else 0.0,
    }
    _write_json(summary, Path(args.out) if args.out else None)
    return 0


def cmd_build_graph(args, cfg: RunConfig) -> int:
    records, buckets = _load_buckets(args.input, args.format)
    graph = build_adjacency(records, buckets, cfg.graph)
    out = Path(args.out or Path(args.out_dir) / "graph.bin")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_graph(out, graph)
    log.info("wrote %d-node adjacency to %s", graph.n, out)
    return 0


def cmd_make_corpus(args, cfg: RunConfig) -> int:
    _, buckets = _load_buckets(args.input, args.format)
    docs = render_corpus(buckets, rng_seed=cfg.train.seed)
    split = split_corpus(docs, seed=cfg.train.seed)
    out_dir = Path(args.out_dir)
    write_tsv(split, out_dir)
    log.info("wrote corpus (%d/%d/%d docs) to %s",
             len(split.train), len(split.dev), len(split.test), out_dir)
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    _, buckets = _load_buckets(args.transactions)
    ctx = _graph_context_from_file(args.graph, buckets, cfg)
    split = read_split(args.corpus_dir)
    vocab = Vocabulary.default()
    max_len = cfg.encoder.max_len

    train_set = encode_documents(split.train, vocab, ctx.index, max_len)
    dev_set = encode_documents(split.dev, vocab, ctx.index, max_len)
    model = _build_model(cfg, vocab)
    result = train(model, train_set, dev_set, ctx, cfg.train)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "checkpoint.cfck", result.best_state,
                    meta={"seed": cfg.train.seed, "best_epoch": result.best_epoch})
    payload = {"config": cfg.to_dict(), **result.to_dict()}
    _write_json(payload, out_dir / "metrics.json")
    write_gate_stats(
        [(r.epoch, *r.gate_mean, r.hard_fraction) for r in result.history],
        out_dir / "gate_stats.csv",
    )
    log.info("best dev F1 %.4f at epoch %d; artifacts in %s",
             result.best_f1, result.best_epoch, out_dir)
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    _, buckets = _load_buckets(args.transactions)
    ctx = _graph_context_from_file(args.graph, buckets, cfg)
    split = read_split(args.corpus_dir)
    vocab = Vocabulary.default()
    docs = split[args.split]
    dataset = encode_documents(docs, vocab, ctx.index, cfg.encoder.max_len)

    model = _build_model(cfg, vocab)
    state, _ = load_checkpoint(args.checkpoint)
    model.load_state_dict(state)
    metrics = evaluate(model, dataset, ctx)
    _write_json({"split": args.split, "metrics": metrics.to_dict()},
                Path(args.out) if args.out else None)
    return 0


def cmd_sweep_ratio(args, cfg: RunConfig) -> int:
    records, buckets = _load_buckets(args.transactions)
    from .trainer import build_graph_context

    ctx = build_graph_context(records, buckets, cfg.graph)
    docs = render_corpus(buckets, rng_seed=cfg.train.seed)
    vocab = Vocabulary.default()

    def factory(seed: int) -> FraudFusionModel:
        return _build_model(cfg, vocab)

    rows = ratio_sweep(docs, ctx, vocab, factory, cfg.train, cfg.encoder.max_len,
                       ratios=DEFAULT_RATIOS)
    out = Path(args.out or Path(args.out_dir) / "sweep.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(sweep_csv(rows), encoding="utf-8")
    log.info("wrote %d-row ratio sweep to %s", len(rows), out)
    return 0


def cmd_grad_check(args, cfg: RunConfig) -> int:
    # small self-contained world; d_model 16 keeps the check fast
    encoder_cfg = dataclasses.replace(cfg.encoder, d_model=args.d_model,
                                      d_ff=4 * args.d_model, max_len=32, dropout=0.0)
    run_cfg = RunConfig(cfg.synth, cfg.graph, encoder_cfg, cfg.fusion,
                        GcnConfig(dims=(args.d_model, args.d_model)), cfg.train)

    synth_cfg = SynthConfig(n_normal=8, n_fraud=8, fraud_fanout=3, normal_fanout=2,
                            seed=cfg.train.seed)
    records, _ = generate(synth_cfg)
    buckets = build_buckets(records)
    from .trainer import build_graph_context

    ctx = build_graph_context(records, buckets, cfg.graph)
    vocab = Vocabulary.default()
    docs = render_corpus(buckets, rng_seed=cfg.train.seed)
    dataset = encode_documents(docs[:4], vocab, ctx.index, encoder_cfg.max_len)

    model = _build_model(run_cfg, vocab)
    report = model_grad_check(
        model, dataset.ids, dataset.type_ids, dataset.node_ids, dataset.labels,
        ctx.h0, ctx.a_hat, tol=args.tol, n_coords=args.coords, seed=cfg.train.seed,
    )
    sys.stdout.write(report.summary() + "\n")
    if not report.passed:
        raise NumericError("gradient check failed")
    return 0


# ---------------------------------------------------------------- wiring

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chainfraud", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override all seeds")
        p.add_argument("--out-dir", default=".", help="default output directory")

    p = sub.add_parser("synth", help="generate a synthetic transaction world")
    common(p)
    p.add_argument("--out", help="output transactions CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse + bucket transactions, print summary stats")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"])
    p.add_argument("--out", help="write summary JSON here instead of stdout")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-graph", help="accumulate the weighted adjacency matrix")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"])
    p.add_argument("--out", help="output graph dump path")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("make-corpus", help="render + split the account text corpus")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"])
    p.set_defaults(func=cmd_make_corpus)

    p = sub.add_parser("train", help="train the fusion model")
    common(p)
    p.add_argument("--transactions", required=True)
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--lock-strategy", type=int, choices=[0, 1, 2],
                   help="ablation: force one fusion strategy")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on one split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--transactions", required=True)
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--split", choices=["train", "dev", "test"], default="test")
    p.add_argument("--out", help="write metrics JSON here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-ratio", help="retrain across normal:fraud ratios")
    common(p)
    p.add_argument("--transactions", required=True)
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_sweep_ratio)

    p = sub.add_parser("grad-check", help="finite-difference check of all gradients")
    common(p)
    p.add_argument("--d-model", type=int, default=16)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=32)
    p.set_defaults(func=cmd_grad_check)

    return parser


def _setup_logging() -> None:
    level = os.environ.get("CHAINFRAUD_LOG", "info").lower()
    numeric = {"debug": logging.DEBUG, "info": logging.INFO,
               "quiet": logging.ERROR}.get(level, logging.INFO)
    logging.basicConfig(stream=sys.stderr, level=numeric,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
        _log_resolved(cfg)
        return args.func(args, cfg)
    except ConfigError as exc:
        log.error("config: %s", exc)
        return 1
    except DataError as exc:
        log.error("data: %s", exc)
        return 2
    except NumericError as exc:
        log.error("numeric: %s", exc)
        return 3
    except ChainFraudError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
