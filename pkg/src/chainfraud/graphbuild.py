"""Weighted account-interaction adjacency and its normalized propagation form.

Each transaction contributes ``value * sum_n alpha_n * f(dt_n)`` to the
directed sender->receiver cell, where ``dt_n`` are the transaction's n-gram
time differences in the sender's bucket. ``f`` is identity in ``linear`` mode
(the literal weighting) or ``1/(1+dt)`` in ``inverse`` mode, which makes rapid
bursts carry large weights instead of small ones. The propagation matrix is
the familiar self-looped symmetric normalization ``D^-1/2 (A+I) D^-1/2``.
"""

from __future__ import annotations

import json
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError, UnknownAddressError
from .txdata import AccountBucket

GRAPH_MAGIC = b"CFGR"
_HEADER = struct.Struct("<4sIII")  # magic, n, reserved, reserved (16 bytes)


@dataclass(frozen=True)
class AddressIndex:
    """Deterministic bijection address <-> row index (lexicographic order)."""

    addresses: tuple[str, ...]
    position: dict[str, int]

    @classmethod
    def from_addresses(cls, addresses) -> "AddressIndex":
        ordered = tuple(sorted(set(addresses)))
        return cls(ordered, {a: i for i, a in enumerate(ordered)})

    def __len__(self) -> int:
        return len(self.addresses)

    def __getitem__(self, address: str) -> int:
        try:
            return self.position[address]
        except KeyError:
            raise UnknownAddressError(address) from None


@dataclass
class GraphBuildConfig:
    """Edge-weight coefficients and normalization switches."""

    alpha: dict[int, float] = field(default_factory=lambda: {2: 1.0, 3: 1.0, 4: 1.0, 5: 1.0})
    time_transform: str = "linear"  # or "inverse"
    symmetrize: bool = True

    def __post_init__(self):
        if any(a < 0 for a in self.alpha.values()):
            raise ValueError("alpha coefficients must be non-negative")
        if self.alpha and not any(a > 0 for a in self.alpha.values()):
            raise ValueError("at least one alpha coefficient must be positive")
        if self.time_transform not in ("linear", "inverse"):
            raise ValueError(f"unknown time_transform: {self.time_transform!r}")


@dataclass
class WeightedGraph:
    """Directed weighted adjacency: row = sender, column = receiver."""

    adjacency: np.ndarray  # (n, n) float64, non-negative
    index: AddressIndex

    @property
    def n(self) -> int:
        return len(self.index)


@dataclass
class NormalizedGraph:
    """Self-looped, degree-normalized propagation matrix."""

    a_hat: np.ndarray
    symmetrized: bool


def edge_weight(value: float, diffs: dict[int, int], cfg: GraphBuildConfig) -> float:
    """Weight of one transaction from its value and n-gram time differences."""
    total = 0.0
    for n, dt in diffs.items():
        alpha = cfg.alpha.get(n, 0.0)
        if cfg.time_transform == "linear":
            total += alpha * dt
        else:
            total += alpha / (1.0 + dt)
    return value * total


def build_adjacency(records, buckets: dict[str, AccountBucket],
                    cfg: GraphBuildConfig) -> WeightedGraph:
    """Accumulate per-transaction weights into the directed adjacency matrix.

    Transactions are visited in raw input order; each one's time differences
    are the ones computed for its outgoing copy in the sender's bucket.
    """
    index = AddressIndex.from_addresses(buckets.keys())
    a = np.zeros((len(index), len(index)), dtype=np.float64)

    # sender-bucket diffs per raw record, queued in bucket (time) order so
    # repeated uses of one record object pop in input order
    outgoing: dict[int, deque] = {}
    for bucket in buckets.values():
        if bucket.records and not bucket.ngram_diffs:
            raise DataError(f"bucket {bucket.address!r} has no n-gram diffs; compute them first")
        for record, diffs in zip(bucket.records, bucket.ngram_diffs):
            if record.in_out == 1:
                outgoing.setdefault(id(record.base), deque()).append(diffs)

    for record in records:
        queue = outgoing.get(id(record))
        if not queue:
            raise DataError(f"record at {record.timestamp} from {record.from_address!r} "
                            "is missing from the buckets; rebuild them")
        diffs = queue.popleft()
        i = index[record.from_address]
        j = index[record.to_address]
        a[i, j] += edge_weight(record.value, diffs, cfg)
    return WeightedGraph(a, index)


def normalize(graph: WeightedGraph, cfg: GraphBuildConfig) -> NormalizedGraph:
    """Compute ``D^-1/2 (A+I) D^-1/2``, optionally symmetrizing A first."""
    a = graph.adjacency
    if not np.isfinite(a).all():
        raise NumericError("adjacency contains non-finite entries")
    if cfg.symmetrize:
        a = (a + a.T) / 2.0
    a_tilde = a + np.eye(graph.n)
    deg = a_tilde.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)  # self-loops keep every degree > 0
    a_hat = a_tilde * inv_sqrt[:, None] * inv_sqrt[None, :]
    return NormalizedGraph(a_hat, symmetrized=cfg.symmetrize)


def write_graph(path, graph: WeightedGraph) -> None:
    """Dump the adjacency as row-major float64 with a 16-byte header plus a
    JSON index-map sidecar at ``<path>.index.json``."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GRAPH_MAGIC, graph.n, 0, 0))
        fh.write(np.ascontiguousarray(graph.adjacency, dtype=np.float64).tobytes())
    sidecar = {a: i for i, a in enumerate(graph.index.addresses)}
    with open(path.with_name(path.name + ".index.json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=0)
        fh.write("\n")


def read_graph(path) -> WeightedGraph:
    """Read a graph written by :func:`write_graph`."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated graph file")
    magic, n, _, _ = _HEADER.unpack_from(raw)
    if magic != GRAPH_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    body = np.frombuffer(raw, dtype=np.float64, offset=_HEADER.size)
    if body.size != n * n:
        raise DataError(f"{path}: expected {n * n} matrix entries, found {body.size}")
    sidecar_path = path.with_name(path.name + ".index.json")
    if not sidecar_path.exists():
        raise DataError(f"missing index sidecar: {sidecar_path}")
    mapping = json.loads(sidecar_path.read_text(encoding="utf-8"))
    ordered = sorted(mapping, key=mapping.__getitem__)
    index = AddressIndex(tuple(ordered), {a: i for i, a in enumerate(ordered)})
    if len(index) != n:
        raise DataError(f"{path}: sidecar lists {len(index)} addresses for n={n}")
    return WeightedGraph(body.reshape(n, n).copy(), index)
