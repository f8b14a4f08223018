"""Gated dynamic fusion of the text and graph branches, plus the classifier.

Per account, a two-layer gating network scores three strategies from the
concatenated pooled token embedding and the context-enhanced node embedding:
(1) token embeddings alone, (2) the enhanced node embedding broadcast to all
positions, (3) their convex blend under a learnable alpha. The scores pass
through a Gumbel-softmax (temperature tau, noise off at eval); hard mode
snaps to a one-hot choice in the forward pass while gradients follow the
soft relaxation (straight-through). The fused sequence goes through the
transformer encoder and a softmax classifier head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .encoder import (
    EmbeddingTables,
    EncoderConfig,
    TransformerEncoder,
    attention_mask,
    embed_tokens,
    masked_mean,
    pool,
)
from .errors import ShapeError
from .gradcheck import GradCheckReport, grad_check
from .graphnet import GcnStack

GUMBEL_EPS = 1e-20


@dataclass
class FusionConfig:
    d_gate: int = 32
    tau: float = 1.0
    hard: bool = False
    alpha_init: float = 0.5
    lock_strategy: int | None = None  # 0/1/2 forces one strategy (ablations)
    anneal_tau: bool = False  # tau_e = max(0.5, tau * 0.995**epoch)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.lock_strategy is not None and self.lock_strategy not in (0, 1, 2):
            raise ValueError(f"lock_strategy must be 0, 1, or 2, got {self.lock_strategy}")

    def tau_at(self, epoch: int) -> float:
        if not self.anneal_tau:
            return self.tau
        return max(0.5, self.tau * 0.995 ** epoch)


@dataclass
class GateOutput:
    """Per-account fusion weights on the 3-simplex (one-hot when hard)."""

    g: Tensor  # (B, 3)
    selected: np.ndarray | None  # argmax indices when hard/locked, else None


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(shape)
    return -np.log(-np.log(u + GUMBEL_EPS) + GUMBEL_EPS)


class GatingNetwork:
    """Two affine layers with ReLU between: (B, 2d) -> (B, 3) logits."""

    def __init__(self, d_model: int, d_gate: int, rng: np.random.Generator,
                 prefix: str = "gate"):
        self.w1 = Parameter(ad.glorot_uniform((2 * d_model, d_gate), rng), f"{prefix}.w1")
        self.b1 = Parameter(np.zeros(d_gate), f"{prefix}.b1")
        self.w2 = Parameter(ad.glorot_uniform((d_gate, 3), rng), f"{prefix}.w2")
        self.b2 = Parameter(np.zeros(3), f"{prefix}.b2")

    def parameters(self) -> list[Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, x: Tensor) -> Tensor:
        hidden = ad.relu(ad.add(ad.matmul(x, self.w1), self.b1))
        return ad.add(ad.matmul(hidden, self.w2), self.b2)


def gate_weights(logits: Tensor, tau: float, hard: bool = False,
                 noise: np.ndarray | None = None) -> GateOutput:
    """Gumbel-softmax over strategy logits.

    ``noise`` is the pre-sampled Gumbel draw (pass None for noiseless eval).
    Hard mode outputs the one-hot argmax while backpropagating through the
    soft weights.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if logits.ndim != 2 or logits.shape[1] != 3:
        raise ShapeError(f"gate_weights: expected (B, 3) logits, got {logits.shape}")
    perturbed = ad.add(logits, Tensor(noise)) if noise is not None else logits
    soft = ad.softmax(ad.scale(perturbed, 1.0 / tau), axis=-1)
    if not hard:
        return GateOutput(soft, None)
    selected = soft.data.argmax(axis=-1)
    one_hot = np.zeros_like(soft.data)
    one_hot[np.arange(len(selected)), selected] = 1.0
    # forward takes the hard choice; the correction term is constant so the
    # gradient flows through `soft` unchanged (straight-through)
    hard_g = ad.add(soft, Tensor(one_hot - soft.data))
    return GateOutput(hard_g, selected)


def locked_gate(batch: int, strategy: int) -> GateOutput:
    g = np.zeros((batch, 3))
    g[:, strategy] = 1.0
    return GateOutput(Tensor(g), np.full(batch, strategy))


def write_gate_stats(rows, path) -> None:
    """Per-epoch gate usage CSV: epoch, mean weight per strategy, fraction of
    exactly one-hot gates. ``rows`` = (epoch, g1, g2, g3, hard_fraction)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_g1,mean_g2,mean_g3,hard_fraction\n")
        for epoch, g1, g2, g3, hard in rows:
            fh.write(f"{epoch},{g1:.6f},{g2:.6f},{g3:.6f},{hard:.6f}\n")


def gcn_enhanced(node_vecs: Tensor, token_embeds: Tensor, mask: np.ndarray,
                 proj_w: Parameter, proj_b: Parameter) -> Tensor:
    """Project [node embedding, pooled token context] to model width."""
    pooled = masked_mean(token_embeds, mask)
    joined = ad.concat([node_vecs, pooled], axis=1)
    return ad.add(ad.matmul(joined, proj_w), proj_b)


def dynamic_fuse(token_embeds: Tensor, e_gcn: Tensor, g: Tensor, alpha: Tensor) -> Tensor:
    """Per-position combination of the three strategies.

    fused_i = g1*E_i + g2*G + g3*(a*E_i + (1-a)*G), with G broadcast across
    positions and alpha clamped to [0, 1] so strategy 3 stays a convex blend.
    """
    if token_embeds.ndim != 3 or e_gcn.ndim != 2:
        raise ShapeError(f"dynamic_fuse: got embeddings {token_embeds.shape} "
                         f"and node vectors {e_gcn.shape}")
    if token_embeds.shape[2] != e_gcn.shape[1] or token_embeds.shape[0] != e_gcn.shape[0]:
        raise ShapeError(f"dynamic_fuse: mismatched shapes {token_embeds.shape} "
                         f"vs {e_gcn.shape}")
    batch = token_embeds.shape[0]
    g1 = ad.reshape(ad.take_index(g, 0, axis=1), (batch, 1, 1))
    g2 = ad.reshape(ad.take_index(g, 1, axis=1), (batch, 1, 1))
    g3 = ad.reshape(ad.take_index(g, 2, axis=1), (batch, 1, 1))
    broadcast = ad.reshape(e_gcn, (batch, 1, e_gcn.shape[1]))

    a = ad.clamp(alpha, 0.0, 1.0)
    blend = ad.add(ad.mul(a, token_embeds), ad.mul(ad.sub(1.0, a), broadcast))
    return ad.add(
        ad.add(ad.mul(g1, token_embeds), ad.mul(g2, broadcast)),
        ad.mul(g3, blend),
    )


def classify(pooled: Tensor, w: Parameter, b: Parameter) -> Tensor:
    """(B, d) -> (B, 2) class probabilities; fraud probability is column 1."""
    return ad.softmax(ad.add(ad.matmul(pooled, w), b), axis=-1)


class FraudFusionModel:
    """Full pipeline: embeddings, graph convolution, gated fusion, encoder,
    classifier. One instance per training worker."""

    def __init__(
        self,
        vocab_size: int,
        encoder_cfg: EncoderConfig,
        fusion_cfg: FusionConfig,
        gcn_dims: tuple[int, ...] = (64, 64),
        n_node_features: int = 9,
        seed: int = 0,
        pad_id: int = 0,
    ):
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        self.encoder_cfg = encoder_cfg
        self.fusion_cfg = fusion_cfg
        self.pad_id = pad_id
        d = encoder_cfg.d_model

        self.tables = EmbeddingTables(vocab_size, encoder_cfg, rng)
        self.gcn = GcnStack(n_node_features, gcn_dims, rng)
        self.proj_w = Parameter(ad.glorot_uniform((self.gcn.d_out + d, d), rng), "proj.w")
        self.proj_b = Parameter(np.zeros(d), "proj.b")
        self.gate = GatingNetwork(d, fusion_cfg.d_gate, rng)
        self.alpha = Parameter(np.asarray(fusion_cfg.alpha_init), "fusion.alpha")
        self.encoder = TransformerEncoder(encoder_cfg, rng)
        self.cls_w = Parameter(ad.glorot_uniform((d, 2), rng), "classifier.w")
        self.cls_b = Parameter(np.zeros(2), "classifier.b")

    def parameters(self) -> list[Parameter]:
        params = (
            self.tables.parameters()
            + self.gcn.parameters()
            + [self.proj_w, self.proj_b]
            + self.gate.parameters()
            + [self.alpha]
            + self.encoder.parameters()
            + [self.cls_w, self.cls_b]
        )
        names = [p.name for p in params]
        assert len(set(names)) == len(names), "duplicate parameter names"
        return params

    def trainable_parameters(self) -> list[Parameter]:
        """Parameters the loss can reach; excludes the gating network when a
        strategy is locked (its logits are bypassed entirely)."""
        if self.fusion_cfg.lock_strategy is None:
            return self.parameters()
        skip = {p.name for p in self.gate.parameters()}
        return [p for p in self.parameters() if p.name not in skip]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in state:
                raise KeyError(f"checkpoint missing parameter {p.name}")
            if tuple(state[p.name].shape) != tuple(p.data.shape):
                raise ShapeError(f"{p.name}: checkpoint shape {state[p.name].shape} "
                                 f"!= model shape {p.data.shape}")
            p.data = np.array(state[p.name], dtype=np.float64)

    def forward(
        self,
        ids: np.ndarray,
        type_ids: np.ndarray,
        node_ids: np.ndarray,
        h0: np.ndarray,
        a_hat: np.ndarray,
        train: bool = False,
        rng: np.random.Generator | None = None,
        gumbel_noise: np.ndarray | None = None,
        tau: float | None = None,
        node_embeddings: Tensor | None = None,
    ) -> tuple[Tensor, GateOutput]:
        """Batched forward pass. Returns class probabilities and the gate.

        ``gumbel_noise`` overrides sampling (fixed noise for gradient checks);
        eval mode uses zero noise. ``node_embeddings`` short-circuits the GCN
        forward when a frozen copy is supplied.
        """
        cfg = self.fusion_cfg
        mask = attention_mask(ids, self.pad_id)
        embeds = embed_tokens(ids, type_ids, self.tables)

        if node_embeddings is None:
            node_embeddings = self.gcn.forward(h0, a_hat)
        node_vecs = ad.embedding_lookup(node_embeddings, np.asarray(node_ids))

        enhanced = gcn_enhanced(node_vecs, embeds, mask, self.proj_w, self.proj_b)
        pooled_text = masked_mean(embeds, mask)

        if cfg.lock_strategy is not None:
            gate = locked_gate(ids.shape[0], cfg.lock_strategy)
        else:
            logits = self.gate.forward(ad.concat([pooled_text, enhanced], axis=1))
            noise = gumbel_noise
            if noise is None and train:
                if rng is None:
                    raise ValueError("training forward needs an rng for gumbel noise")
                noise = sample_gumbel(logits.shape, rng)
            gate = gate_weights(logits, tau if tau is not None else cfg.tau,
                                hard=cfg.hard, noise=noise)

        fused = dynamic_fuse(embeds, enhanced, gate.g, self.alpha)
        hidden = self.encoder.forward(fused, mask, train=train, rng=rng)
        pooled = pool(hidden, mask, self.encoder_cfg.pool)
        probs = classify(pooled, self.cls_w, self.cls_b)
        return probs, gate


def model_grad_check(
    model: FraudFusionModel,
    ids: np.ndarray,
    type_ids: np.ndarray,
    node_ids: np.ndarray,
    labels: np.ndarray,
    h0: np.ndarray,
    a_hat: np.ndarray,
    tol: float = 1e-4,
    n_coords: int = 32,
    seed: int = 0,
) -> GradCheckReport:
    """End-to-end gradient check: soft gate, fixed Gumbel noise, dropout off."""
    rng = np.random.default_rng(seed)
    noise = sample_gumbel((ids.shape[0], 3), rng)
    saved_hard, saved_lock = model.fusion_cfg.hard, model.fusion_cfg.lock_strategy
    model.fusion_cfg.hard = False
    model.fusion_cfg.lock_strategy = None
    try:
        def loss():
            probs, _ = model.forward(ids, type_ids, node_ids, h0, a_hat,
                                     train=False, gumbel_noise=noise)
            return ad.cross_entropy(probs, labels)

        return grad_check(loss, model.parameters(), n_coords=n_coords, tol=tol, seed=seed)
    finally:
        model.fusion_cfg.hard, model.fusion_cfg.lock_strategy = saved_hard, saved_lock
