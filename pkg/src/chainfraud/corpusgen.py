"""Account text corpus: rendering, splitting, tokenization, and TSV files.

Each account becomes one line of text: its records, shuffled by a seeded
per-account permutation, serialized as ``field= value`` pairs. Only the first
serialized record carries the account-level ``tag=`` field; addresses and
timestamps never appear. The tokenizer runs over a small closed vocabulary:
field names stay whole tokens, numbers split digit by digit, punctuation
tokens stand alone.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .txdata import AccountBucket

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"

# closed token set: specials, field names, punctuation, digits
VOCAB_TOKENS = (
    [PAD, UNK, CLS, SEP]
    + ["tag", "Value", "in_out", "ngram2", "ngram3", "ngram4", "ngram5"]
    + ["=", ".", ",", ";"]
    + [str(d) for d in range(10)]
)

TSV_NAMES = {"train": "Train.tsv", "dev": "dev.tsv", "test": "test.tsv"}
META_NAME = "corpus_meta.json"


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    ids: dict[str, int]

    @classmethod
    def default(cls) -> "Vocabulary":
        return cls(tuple(VOCAB_TOKENS), {t: i for i, t in enumerate(VOCAB_TOKENS)})

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self.ids[PAD]


@dataclass(frozen=True)
class AccountDocument:
    address: str
    text: str
    label: int


@dataclass
class CorpusSplit:
    train: list[AccountDocument]
    dev: list[AccountDocument]
    test: list[AccountDocument]
    seed: int

    def __getitem__(self, name: str) -> list[AccountDocument]:
        return getattr(self, name)


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray  # (max_len,) int64
    type_ids: np.ndarray  # all zeros, single segment
    length: int  # non-pad prefix length
    label: int


def _account_rng(seed: int, address: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(address.encode("utf-8"))])


def _render_record(record, diffs: dict[int, int], tag: int | None) -> str:
    parts = []
    if tag is not None:
        parts.append(f"tag= {tag}")
    parts.append(f"Value= {record.value:.8f}")
    parts.append(f"in_out= {record.in_out}")
    for n in sorted(diffs):
        parts.append(f"ngram{n}= {diffs[n]}")
    return ", ".join(parts)


def render_document(bucket: AccountBucket, rng_seed: int) -> AccountDocument:
    """Serialize one bucket to text: seeded shuffle, label on the first record
    only, no addresses or timestamps."""
    if bucket.records and len(bucket.ngram_diffs) != len(bucket.records):
        raise DataError(f"bucket {bucket.address!r}: n-gram diffs not computed")
    if not bucket.records:
        return AccountDocument(bucket.address, "", bucket.label)
    order = _account_rng(rng_seed, bucket.address).permutation(len(bucket.records))
    pieces = []
    for position, i in enumerate(order):
        tag = bucket.label if position == 0 else None
        pieces.append(_render_record(bucket.records[i], bucket.ngram_diffs[i], tag))
    return AccountDocument(bucket.address, "; ".join(pieces), bucket.label)


def render_corpus(buckets: dict[str, AccountBucket], rng_seed: int) -> list[AccountDocument]:
    """Render every bucket, in deterministic (sorted-address) order."""
    return [render_document(buckets[a], rng_seed) for a in sorted(buckets)]


def _split_counts(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    train = round(n * ratios[0])
    dev = round(n * ratios[1])
    dev = min(dev, n - train)
    return train, dev, n - train - dev


def split_corpus(
    docs: list[AccountDocument],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> CorpusSplit:
    """Stratified seeded shuffle-and-partition into train/dev/test."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    if len(docs) < 10:
        raise DataError(f"need at least 10 documents to split, got {len(docs)}")

    rng = np.random.default_rng(seed)
    parts: dict[str, list[AccountDocument]] = {"train": [], "dev": [], "test": []}
    for label in (0, 1):
        group = [d for d in docs if d.label == label]
        group = [group[i] for i in rng.permutation(len(group))]
        n_train, n_dev, _ = _split_counts(len(group), ratios)
        parts["train"].extend(group[:n_train])
        parts["dev"].extend(group[n_train:n_train + n_dev])
        parts["test"].extend(group[n_train + n_dev:])
    for name, part in parts.items():
        parts[name] = [part[i] for i in rng.permutation(len(part))]
    return CorpusSplit(parts["train"], parts["dev"], parts["test"], seed)


_WORD_CHARS = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")
_LETTERS = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")


def text_tokens(text: str) -> list[str]:
    """Split into word / single-digit / single-punctuation tokens.

    Alphanumeric runs containing a letter stay whole (field names like
    ``ngram2``); purely numeric runs split digit by digit.
    """
    tokens: list[str] = []
    run: list[str] = []

    def flush():
        if not run:
            return
        chunk = "".join(run)
        if any(c in _LETTERS for c in chunk):
            tokens.append(chunk)
        else:
            tokens.extend(chunk)
        run.clear()

    for ch in text:
        if ch in _WORD_CHARS:
            run.append(ch)
            continue
        flush()
        if not ch.isspace():
            tokens.append(ch)  # punctuation stands alone
    flush()
    return tokens


def tokenize(doc: AccountDocument, vocab: Vocabulary, max_len: int = 128) -> TokenSequence:
    """Map a document to a padded id sequence wrapped in [CLS] ... [SEP]."""
    body = [vocab.ids.get(t, vocab.ids[UNK]) for t in text_tokens(doc.text)]
    body = body[: max_len - 2]
    ids = [vocab.ids[CLS]] + body + [vocab.ids[SEP]]
    length = len(ids)
    ids = ids + [vocab.pad_id] * (max_len - length)
    return TokenSequence(
        ids=np.asarray(ids, dtype=np.int64),
        type_ids=np.zeros(max_len, dtype=np.int64),
        length=length,
        label=doc.label,
    )


def detokenize(seq: TokenSequence, vocab: Vocabulary) -> str:
    """Space-joined token stream with specials and padding dropped."""
    specials = {vocab.ids[s] for s in (PAD, CLS, SEP)}
    return " ".join(vocab.tokens[i] for i in seq.ids[: seq.length] if i not in specials)


def normalize_text(text: str) -> str:
    """Canonical spacing: the space-joined token stream of the text."""
    return " ".join(text_tokens(text))


def write_tsv(split: CorpusSplit, directory) -> dict[str, Path]:
    """Write Train.tsv / dev.tsv / test.tsv (``label<TAB>text``, no header)
    plus a JSON sidecar carrying the per-row account addresses."""
    import json

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    meta = {"seed": split.seed, "addresses": {}}
    for name, filename in TSV_NAMES.items():
        path = directory / filename
        docs = split[name]
        with open(path, "w", encoding="utf-8") as fh:
            for doc in docs:
                fh.write(f"{doc.label}\t{doc.text}\n")
        meta["addresses"][name] = [doc.address for doc in docs]
        paths[name] = path
    with open(directory / META_NAME, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")
    return paths


def read_tsv(path, addresses: list[str] | None = None, seed: int | None = None) -> list[AccountDocument]:
    """Read one TSV back into documents; optional seeded shuffle after read."""
    path = Path(path)
    docs: list[AccountDocument] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise DataError(f"{path}:{line_no}: expected 2 tab-separated columns, got {len(cols)}")
            label_text, text = cols
            if label_text not in ("0", "1"):
                raise DataError(f"{path}:{line_no}: bad label {label_text!r}")
            address = addresses[line_no - 1] if addresses else ""
            docs.append(AccountDocument(address, text, int(label_text)))
    if addresses is not None and len(addresses) != len(docs):
        raise DataError(f"{path}: {len(docs)} rows but {len(addresses)} addresses in sidecar")
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(docs))
        docs = [docs[i] for i in order]
    return docs


def read_split(directory, seed: int | None = None) -> CorpusSplit:
    """Read all three TSVs plus the address sidecar back into a split."""
    import json

    directory = Path(directory)
    meta_path = directory / META_NAME
    if not meta_path.exists():
        raise DataError(f"missing corpus sidecar: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    parts = {}
    for name, filename in TSV_NAMES.items():
        parts[name] = read_tsv(directory / filename, meta["addresses"][name], seed=seed)
    return CorpusSplit(parts["train"], parts["dev"], parts["test"], meta["seed"])
