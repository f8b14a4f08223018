"""Graph branch: per-account input features and stacked graph convolutions.

Node features are simple behavioural aggregates (degrees, value totals, mean
n-gram gaps, record count), log1p-compressed and standardized per column.
Each convolution multiplies by the normalized propagation matrix, applies the
layer weights, and runs ReLU; two layers aggregate two-hop structure.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import ShapeError, UnknownAddressError
from .graphbuild import AddressIndex
from .txdata import AccountBucket

N_FEATURES = 9


def initial_features(buckets: dict[str, AccountBucket], index: AddressIndex,
                     standardize: bool = True) -> np.ndarray:
    """(n, 9) standardized node features aligned with the address index.

    Columns: log1p of in-degree, out-degree, incoming value, outgoing value,
    mean 2..5-gram time gaps, and record count. Constant columns stay 0.
    """
    raw = np.zeros((len(index), N_FEATURES))
    for address, bucket in buckets.items():
        row = raw[index[address]]
        n_in = sum(1 for r in bucket.records if r.in_out == 0)
        n_out = len(bucket.records) - n_in
        value_in = sum(r.value for r in bucket.records if r.in_out == 0)
        value_out = sum(r.value for r in bucket.records if r.in_out == 1)
        row[0] = np.log1p(n_in)
        row[1] = np.log1p(n_out)
        row[2] = np.log1p(value_in)
        row[3] = np.log1p(value_out)
        for k, n in enumerate((2, 3, 4, 5)):
            gaps = [d[n] for d in bucket.ngram_diffs]
            row[4 + k] = np.log1p(np.mean(gaps)) if gaps else 0.0
        row[8] = np.log1p(len(bucket.records))

    if not standardize:
        return raw
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    out = np.zeros_like(raw)
    nonconst = std > 0
    out[:, nonconst] = (raw[:, nonconst] - mean[nonconst]) / std[nonconst]
    return out


class GcnStack:
    """Stacked graph convolutions over a fixed propagation matrix."""

    def __init__(self, d_in: int, dims: tuple[int, ...], rng: np.random.Generator,
                 prefix: str = "gcn", final_linear: bool = False):
        self.dims = tuple(dims)
        self.final_linear = final_linear
        self.weights: list[Parameter] = []
        previous = d_in
        for i, d in enumerate(self.dims):
            self.weights.append(Parameter(ad.glorot_uniform((previous, d), rng),
                                          f"{prefix}.layer{i}.w"))
            previous = d

    @property
    def d_out(self) -> int:
        return self.dims[-1]

    def parameters(self) -> list[Parameter]:
        return list(self.weights)

    def forward(self, h0, a_hat) -> Tensor:
        """(n, d_in) features -> (n, d_out) node embeddings."""
        h = ad.as_tensor(h0)
        a_hat = ad.as_tensor(a_hat)
        if h.shape[0] != a_hat.shape[0]:
            raise ShapeError(f"gcn: features for {h.shape[0]} nodes but "
                             f"propagation matrix is {a_hat.shape}")
        for i, w in enumerate(self.weights):
            h = ad.matmul(ad.matmul(a_hat, h), w)
            if i < len(self.weights) - 1 or not self.final_linear:
                h = ad.relu(h)
        return h


def node_embedding(address: str, embeddings, index: AddressIndex) -> np.ndarray:
    """Row lookup by address; unknown addresses raise, never silently zero."""
    if address not in index.position:
        raise UnknownAddressError(address)
    data = embeddings.data if isinstance(embeddings, Tensor) else np.asarray(embeddings)
    return data[index[address]]
