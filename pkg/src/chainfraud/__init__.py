"""Graph + text fusion pipeline for blockchain fraud-account detection.

From raw transaction records through temporal n-gram features, a weighted
account graph, and a one-line-per-account text corpus, into a GCN +
transformer dual-branch classifier joined by a Gumbel-softmax gated fusion
mechanism. Numpy end to end, including the reverse-mode autodiff core.
"""

from .corpusgen import AccountDocument, CorpusSplit, TokenSequence, Vocabulary
from .encoder import EncoderConfig
from .fusion import FraudFusionModel, FusionConfig, GateOutput
from .graphbuild import AddressIndex, GraphBuildConfig, NormalizedGraph, WeightedGraph
from .synthgen import SynthConfig
from .trainer import GraphContext, MetricsReport, TrainConfig
from .txdata import AccountBucket, DirectedRecord, TransactionRecord

__version__ = "0.1.0"

__all__ = [
    "AccountBucket",
    "AccountDocument",
    "AddressIndex",
    "CorpusSplit",
    "DirectedRecord",
    "EncoderConfig",
    "FraudFusionModel",
    "FusionConfig",
    "GateOutput",
    "GraphBuildConfig",
    "GraphContext",
    "MetricsReport",
    "NormalizedGraph",
    "SynthConfig",
    "TokenSequence",
    "TrainConfig",
    "TransactionRecord",
    "Vocabulary",
    "WeightedGraph",
    "__version__",
]
