"""Rendering accounts as one-line documents and tokenizing them.

Each account's records are shuffled (seeded), serialized without addresses or
timestamps, and only the first record keeps the account-level tag. The
tokenizer runs over a 25-token closed vocabulary: field names stay whole,
numbers split digit by digit.
"""

from chainfraud.corpusgen import (
    Vocabulary,
    detokenize,
    render_corpus,
    split_corpus,
    tokenize,
)
from chainfraud.synthgen import SynthConfig, generate
from chainfraud.txdata import build_buckets

records, _ = generate(SynthConfig(n_normal=8, n_fraud=8, fraud_fanout=3,
                                  normal_fanout=2, seed=2))
buckets = build_buckets(records)
docs = render_corpus(buckets, rng_seed=2)

fraud_doc = next(d for d in docs if d.label == 1)
print(f"account {fraud_doc.address} -> label {fraud_doc.label}")
print("text:", fraud_doc.text[:180], "...")
assert fraud_doc.address not in fraud_doc.text  # addresses never leak

vocab = Vocabulary.default()
print(f"\nvocabulary ({len(vocab)} tokens):", ", ".join(vocab.tokens))

seq = tokenize(fraud_doc, vocab, max_len=32)
print(f"\nfirst 16 token ids: {seq.ids[:16].tolist()}")
print("as tokens:", [vocab.tokens[i] for i in seq.ids[:16]])
print("detokenized:", detokenize(seq, vocab)[:120], "...")

split = split_corpus(docs, seed=2)
print(f"\nstratified split: {len(split.train)} train / {len(split.dev)} dev / "
      f"{len(split.test)} test")
print("train fraud fraction:",
      sum(d.label for d in split.train) / len(split.train))
