"""Seeded synthetic transaction world with separable fraud/normal behaviour.

Fraud accounts fire short bursts (exponential inter-arrivals around tens of
seconds) fanning out to many counterparties; normal accounts trickle out a
few transactions with day-scale gaps. Counterparties are drawn within the
same class so that tag=1 records (fraud-originated) never land in a normal
account's bucket and pipeline labels match ground truth exactly.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .txdata import CSV_HEADER, TransactionRecord

BASE_TIME = 1_600_000_000  # offsets timestamps away from the diff value range


@dataclass
class SynthConfig:
    n_normal: int = 500
    n_fraud: int = 500
    fraud_interarrival: float = 30.0  # mean seconds between burst transactions
    normal_interarrival: float = 86_400.0
    fraud_fanout: int = 12  # distinct counterparties per account
    normal_fanout: int = 3
    fraud_value_logmu: float = -0.5  # log-normal value parameters per class
    fraud_value_logsigma: float = 1.0
    normal_value_logmu: float = 0.0
    normal_value_logsigma: float = 1.0
    horizon: int = 2_592_000  # start-time window in simulated seconds
    seed: int = 42

    def __post_init__(self):
        if self.n_normal < 1 or self.n_fraud < 1:
            raise ValueError("account counts must be >= 1")
        if self.fraud_interarrival <= 0 or self.normal_interarrival <= 0:
            raise ValueError("inter-arrival means must be positive")
        if self.fraud_fanout < 1 or self.normal_fanout < 1:
            raise ValueError("fan-out degrees must be >= 1")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


def _account_names(prefix: str, count: int) -> list[str]:
    return [f"0x{prefix}{i:05d}" for i in range(count)]


def generate(cfg: SynthConfig) -> tuple[list[TransactionRecord], dict[str, int]]:
    """Generate transactions and ground-truth account labels, deterministically
    per seed. Records are returned sorted by timestamp."""
    rng = np.random.default_rng(cfg.seed)
    normals = _account_names("n", cfg.n_normal)
    frauds = _account_names("f", cfg.n_fraud)

    records: list[TransactionRecord] = []
    for accounts, fanout, interarrival, logmu, logsigma, tag in (
        (normals, cfg.normal_fanout, cfg.normal_interarrival,
         cfg.normal_value_logmu, cfg.normal_value_logsigma, 0),
        (frauds, cfg.fraud_fanout, cfg.fraud_interarrival,
         cfg.fraud_value_logmu, cfg.fraud_value_logsigma, 1),
    ):
        for sender in accounts:
            peers = [a for a in accounts if a != sender] or [sender]
            k = min(fanout, len(peers))
            targets = rng.choice(len(peers), size=k, replace=False)
            start = BASE_TIME + rng.uniform(0.0, cfg.horizon)
            gaps = rng.exponential(interarrival, size=k)
            times = start + np.cumsum(gaps)
            values = rng.lognormal(logmu, logsigma, size=k)
            for t_idx, ts, value in zip(targets, times, values):
                records.append(TransactionRecord(
                    tag=tag,
                    from_address=sender,
                    to_address=peers[int(t_idx)],
                    value=round(float(value), 8),
                    timestamp=int(ts),
                ))

    records.sort(key=lambda r: r.timestamp)
    labels = {a: 0 for a in normals}
    labels.update({a: 1 for a in frauds})
    return records, labels


def to_csv(records: list[TransactionRecord]) -> str:
    """Serialize records in the standard ingestion CSV format (with header)."""
    out = io.StringIO()
    out.write(",".join(CSV_HEADER) + "\n")
    for r in records:
        out.write(f"{r.tag},{r.from_address},{r.to_address},{r.value:.8f},{r.timestamp}\n")
    return out.getvalue()


def to_jsonl(records: list[TransactionRecord]) -> str:
    """Serialize records in the JSONL ingestion format."""
    out = io.StringIO()
    for r in records:
        out.write(json.dumps({
            "tag": r.tag,
            "from_address": r.from_address,
            "to_address": r.to_address,
            "value": round(r.value, 8),
            "timestamp": r.timestamp,
        }, sort_keys=True) + "\n")
    return out.getvalue()
