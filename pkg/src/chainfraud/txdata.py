"""Raw transaction records, per-account bucketing, and n-gram time differences.

Every raw transaction lands twice: as an outgoing record (in_out=1) in the
sender's bucket and as an incoming record (in_out=0) in the receiver's bucket.
Buckets are time-sorted, and each record gets a map of n-gram time
differences: the gap between its timestamp and the timestamp n-1 positions
earlier in the bucket's merged in/out history (0 when there is not enough
history). Short gaps across several n capture burst behaviour.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

from .errors import DataError, RecordParseError

CSV_HEADER = ("tag", "from_address", "to_address", "value", "timestamp")

DEFAULT_NGRAM_MAX = 5


@dataclass(frozen=True)
class TransactionRecord:
    """One raw transaction row."""

    tag: int
    from_address: str
    to_address: str
    value: float
    timestamp: int


@dataclass(frozen=True)
class DirectedRecord:
    """A transaction as seen from one of its two accounts."""

    base: TransactionRecord
    in_out: int  # 1 = outgoing (account is sender), 0 = incoming

    @property
    def tag(self) -> int:
        return self.base.tag

    @property
    def value(self) -> float:
        return self.base.value

    @property
    def timestamp(self) -> int:
        return self.base.timestamp


@dataclass
class AccountBucket:
    """All records touching one account, sorted ascending by timestamp.

    ``ngram_diffs[i][n]`` is the n-gram time difference of record i; filled by
    :func:`compute_ngram_diffs`. ``label`` is set by :func:`assign_labels`.
    """

    address: str
    records: list[DirectedRecord] = field(default_factory=list)
    ngram_diffs: list[dict[int, int]] = field(default_factory=list)
    label: int = 0


def _parse_fields(row_no: int, raw: dict) -> TransactionRecord:
    for name in CSV_HEADER:
        if name not in raw or raw[name] is None or raw[name] == "":
            raise RecordParseError(row_no, name, "missing field")

    def bail(name, msg):
        raise RecordParseError(row_no, name, msg)

    try:
        tag = int(raw["tag"])
    except (TypeError, ValueError):
        bail("tag", f"not an integer: {raw['tag']!r}")
    if tag not in (0, 1):
        bail("tag", f"must be 0 or 1, got {tag}")

    from_address = str(raw["from_address"])
    to_address = str(raw["to_address"])
    if not from_address:
        bail("from_address", "empty address")
    if not to_address:
        bail("to_address", "empty address")

    try:
        value = float(raw["value"])
    except (TypeError, ValueError):
        bail("value", f"not a number: {raw['value']!r}")
    if not math.isfinite(value):
        bail("value", f"not finite: {value!r}")
    if value < 0:
        bail("value", f"negative value: {value!r}")

    try:
        timestamp = int(raw["timestamp"])
    except (TypeError, ValueError):
        bail("timestamp", f"not an integer: {raw['timestamp']!r}")
    if timestamp < 0:
        bail("timestamp", f"negative timestamp: {timestamp}")

    return TransactionRecord(tag, from_address, to_address, value, timestamp)


def _as_text_stream(source) -> IO[str]:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if hasattr(source, "read"):
        first = source.read(0)
        if isinstance(first, bytes):
            return io.TextIOWrapper(source, encoding="utf-8")
        return source
    raise DataError(f"unsupported record source: {type(source).__name__}")


def parse_records(source, format: str = "csv") -> list[TransactionRecord]:
    """Parse a CSV or JSONL stream into transaction records, preserving order.

    CSV columns are ``tag,from_address,to_address,value,timestamp``; a header
    row matching those names is skipped if present. JSONL rows use the same
    keys. Malformed rows raise :class:`RecordParseError` with the 1-based row
    number and field name.
    """
    stream = _as_text_stream(source)
    records: list[TransactionRecord] = []
    if format == "csv":
        for row_no, line in enumerate(stream, start=1):
            line = line.strip("\n").strip("\r")
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if row_no == 1 and tuple(parts) == CSV_HEADER:
                continue
            if len(parts) != len(CSV_HEADER):
                raise RecordParseError(
                    row_no, "row", f"expected {len(CSV_HEADER)} columns, got {len(parts)}"
                )
            records.append(_parse_fields(row_no, dict(zip(CSV_HEADER, parts))))
    elif format == "jsonl":
        for row_no, line in enumerate(stream, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordParseError(row_no, "row", f"invalid JSON: {exc}") from exc
            if not isinstance(raw, dict):
                raise RecordParseError(row_no, "row", "expected a JSON object")
            records.append(_parse_fields(row_no, raw))
    else:
        raise DataError(f"unknown record format: {format!r} (expected 'csv' or 'jsonl')")
    return records


def bucket_accounts(records: Iterable[TransactionRecord]) -> dict[str, AccountBucket]:
    """Group records by account with direction flags, time-sorted per bucket.

    Each raw record contributes an outgoing copy to its sender's bucket and an
    incoming copy to its receiver's bucket (two copies in the same bucket for
    self-transfers). Ties on timestamp keep original input order.
    """
    buckets: dict[str, AccountBucket] = {}

    def bucket_for(address: str) -> AccountBucket:
        bucket = buckets.get(address)
        if bucket is None:
            bucket = AccountBucket(address=address)
            buckets[address] = bucket
        return bucket

    for record in records:
        bucket_for(record.from_address).records.append(DirectedRecord(record, in_out=1))
        bucket_for(record.to_address).records.append(DirectedRecord(record, in_out=0))

    for bucket in buckets.values():
        bucket.records.sort(key=lambda r: r.timestamp)  # stable: input order breaks ties
    return buckets


def compute_ngram_diffs(bucket: AccountBucket, n_max: int = DEFAULT_NGRAM_MAX) -> AccountBucket:
    """Fill per-record n-gram time differences for n in 2..n_max.

    For record i, the n-gram difference is ``T[i] - T[i-(n-1)]`` over the
    bucket's merged in/out stream, or 0 when fewer than n records precede it.
    """
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    times = [r.timestamp for r in bucket.records]
    if any(a > b for a, b in zip(times, times[1:])):
        raise DataError(f"bucket {bucket.address!r} is not sorted by timestamp")

    diffs: list[dict[int, int]] = []
    for i, t in enumerate(times):
        row = {}
        for n in range(2, n_max + 1):
            j = i - (n - 1)
            row[n] = t - times[j] if j >= 0 else 0
        diffs.append(row)
    bucket.ngram_diffs = diffs
    return bucket


def assign_labels(buckets: dict[str, AccountBucket]) -> dict[str, AccountBucket]:
    """Label an account 1 iff any of its records (either direction) has tag=1."""
    for bucket in buckets.values():
        bucket.label = 1 if any(r.tag == 1 for r in bucket.records) else 0
    return buckets


def build_buckets(
    records: Iterable[TransactionRecord], n_max: int = DEFAULT_NGRAM_MAX
) -> dict[str, AccountBucket]:
    """Bucket, compute n-gram diffs, and label in one pass."""
    buckets = bucket_accounts(records)
    for bucket in buckets.values():
        compute_ngram_diffs(bucket, n_max=n_max)
    return assign_labels(buckets)
