import math

import numpy as np
import pytest

from chainfraud import autodiff as ad
from chainfraud.autodiff import Parameter, Tensor
from chainfraud.encoder import EncoderConfig
from chainfraud.errors import ShapeError
from chainfraud.fusion import (
    FraudFusionModel,
    FusionConfig,
    GatingNetwork,
    classify,
    dynamic_fuse,
    gate_weights,
    gcn_enhanced,
    locked_gate,
    model_grad_check,
    sample_gumbel,
)

from oracles import brute_fuse

TINY_ENC = EncoderConfig(d_model=8, n_layers=1, n_heads=2, d_ff=16, max_len=6, dropout=0.0)


def tiny_model(seed=0, **fusion_kw):
    return FraudFusionModel(
        vocab_size=12,
        encoder_cfg=TINY_ENC,
        fusion_cfg=FusionConfig(d_gate=8, **fusion_kw),
        gcn_dims=(6, 8),
        n_node_features=4,
        seed=seed,
        pad_id=0,
    )


def tiny_batch(seed=0, batch=3, n_nodes=5):
    rng = np.random.default_rng(seed)
    ids = rng.integers(1, 12, size=(batch, TINY_ENC.max_len))
    ids[:, -2:] = 0  # padding
    type_ids = np.zeros_like(ids)
    node_ids = rng.integers(0, n_nodes, size=batch)
    labels = rng.integers(0, 2, size=batch)
    h0 = rng.normal(size=(n_nodes, 4))
    a = rng.uniform(0, 1, size=(n_nodes, n_nodes))
    a_hat = (a + a.T) / 2 + np.eye(n_nodes)
    a_hat /= a_hat.sum(axis=1, keepdims=True)
    return ids, type_ids, node_ids, labels, h0, a_hat


class TestGateWeights:
    def test_equal_logits_uniform(self):
        for tau in (0.1, 1.0, 10.0):
            out = gate_weights(Tensor(np.zeros((4, 3))), tau=tau)
            np.testing.assert_allclose(out.g.data, 1.0 / 3.0, atol=1e-12)

    def test_dominant_logit_sharp_at_low_tau(self):
        out = gate_weights(Tensor(np.array([[10.0, 0.0, 0.0]])), tau=0.1)
        assert out.g.data[0, 0] > 0.999999

    def test_simplex_and_hard_one_hot(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            logits = Tensor(rng.normal(size=(5, 3)) * rng.uniform(0.1, 10))
            tau = float(rng.uniform(0.05, 5.0))
            noise = sample_gumbel((5, 3), rng)
            soft = gate_weights(logits, tau=tau, noise=noise)
            np.testing.assert_allclose(soft.g.data.sum(axis=1), 1.0, atol=1e-12)
            hard = gate_weights(logits, tau=tau, hard=True, noise=noise)
            assert ((hard.g.data == 0) | (hard.g.data == 1)).all()
            np.testing.assert_array_equal(hard.g.data.sum(axis=1), 1.0)
            np.testing.assert_array_equal(hard.g.data.argmax(axis=1), hard.selected)

    def test_argmax_invariant_to_tau_and_shift(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(6, 3))
        base = gate_weights(Tensor(logits), tau=1.0).g.data.argmax(axis=1)
        for tau in (0.01, 0.3, 2.0, 50.0):
            assert (gate_weights(Tensor(logits), tau=tau).g.data.argmax(axis=1) == base).all()
        shifted = gate_weights(Tensor(logits + 7.5), tau=1.0).g.data.argmax(axis=1)
        assert (shifted == base).all()

    def test_tau_monotone_sharpening(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            logits = Tensor(rng.normal(size=(1, 3)) * 3)
            taus = [4.0, 2.0, 1.0, 0.5, 0.25, 0.1]
            peaks = [gate_weights(logits, tau=t).g.data.max() for t in taus]
            assert all(a <= b + 1e-15 for a, b in zip(peaks, peaks[1:]))

    def test_straight_through_gradients_match_soft_path(self):
        # downstream linear functional: d(loss)/d(logits) must be identical
        # through the hard gate and through the soft gate
        rng = np.random.default_rng(3)
        base = rng.normal(size=(4, 3))
        noise = sample_gumbel((4, 3), rng)
        w = rng.normal(size=(4, 3))

        def grad_of(hard):
            logits = Tensor(base.copy(), requires_grad=True)
            out = gate_weights(logits, tau=0.7, hard=hard, noise=noise)
            ad.sum_(ad.mul(out.g, Tensor(w))).backward()
            return logits.grad

        np.testing.assert_array_equal(grad_of(True), grad_of(False))

    def test_straight_through_matches_finite_differences_of_soft(self):
        rng = np.random.default_rng(4)
        base = rng.normal(size=(2, 3))
        noise = sample_gumbel((2, 3), rng)
        w = rng.normal(size=(2, 3))

        logits = Tensor(base.copy(), requires_grad=True)
        out = gate_weights(logits, tau=1.3, hard=True, noise=noise)
        ad.sum_(ad.mul(out.g, Tensor(w))).backward()

        h = 1e-6
        fd = np.zeros_like(base)
        for i in range(base.shape[0]):
            for j in range(3):
                up, down = base.copy(), base.copy()
                up[i, j] += h
                down[i, j] -= h
                f_up = (gate_weights(Tensor(up), tau=1.3, noise=noise).g.data * w).sum()
                f_down = (gate_weights(Tensor(down), tau=1.3, noise=noise).g.data * w).sum()
                fd[i, j] = (f_up - f_down) / (2 * h)
        np.testing.assert_allclose(logits.grad, fd, atol=1e-8)

    def test_validation(self):
        with pytest.raises(ValueError):
            gate_weights(Tensor(np.zeros((1, 3))), tau=0.0)
        with pytest.raises(ShapeError):
            gate_weights(Tensor(np.zeros((1, 4))), tau=1.0)


class TestGcnEnhanced:
    def make_proj(self, d_out, d_model, mode="zero"):
        w = Parameter(np.zeros((d_out + d_model, d_model)), "proj.w")
        b = Parameter(np.zeros(d_model), "proj.b")
        if mode == "node_block":
            w.data[:d_out, :] = np.eye(d_out, d_model)
        return w, b

    def test_zero_inputs_zero_output(self):
        w, b = self.make_proj(4, 4)
        out = gcn_enhanced(Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 3, 4))),
                           np.ones((2, 3)), w, b)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_node_block_recovers_node_vector(self):
        rng = np.random.default_rng(5)
        node = rng.normal(size=(2, 4))
        w, b = self.make_proj(4, 4, mode="node_block")
        out = gcn_enhanced(Tensor(node), Tensor(np.zeros((2, 3, 4))), np.ones((2, 3)), w, b)
        np.testing.assert_allclose(out.data, node, atol=1e-15)
        doubled = gcn_enhanced(Tensor(2 * node), Tensor(np.zeros((2, 3, 4))),
                               np.ones((2, 3)), w, b)
        np.testing.assert_allclose(doubled.data, 2 * out.data, atol=1e-15)

    def test_all_masked_rejected(self):
        w, b = self.make_proj(4, 4)
        with pytest.raises(ShapeError):
            gcn_enhanced(Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 3, 4))),
                         np.zeros((1, 3)), w, b)


class TestDynamicFuse:
    def test_pass_through_strategies(self):
        rng = np.random.default_rng(6)
        e = rng.normal(size=(2, 4, 3))
        gcn = rng.normal(size=(2, 3))
        alpha = Tensor(np.asarray(0.5))

        g1 = dynamic_fuse(Tensor(e), Tensor(gcn), locked_gate(2, 0).g, alpha)
        np.testing.assert_array_equal(g1.data, e)

        g2 = dynamic_fuse(Tensor(e), Tensor(gcn), locked_gate(2, 1).g, alpha)
        for i in range(4):
            np.testing.assert_array_equal(g2.data[:, i, :], gcn)

        g3 = dynamic_fuse(Tensor(e), Tensor(gcn), locked_gate(2, 2).g, alpha)
        np.testing.assert_allclose(g3.data, 0.5 * e + 0.5 * gcn[:, None, :], atol=1e-15)

    def test_matches_brute_force_reference(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            e = rng.normal(size=(1, 5, 4))
            gcn = rng.normal(size=(1, 4))
            g = rng.dirichlet(np.ones(3))
            alpha = float(rng.uniform(0, 1))
            out = dynamic_fuse(Tensor(e), Tensor(gcn), Tensor(g[None, :]),
                               Tensor(np.asarray(alpha)))
            expected = brute_fuse(e[0], gcn[0], g, alpha)
            np.testing.assert_allclose(out.data[0], expected, atol=1e-12)

    def test_alpha_clamped_to_unit_interval(self):
        e = np.ones((1, 2, 2))
        gcn = np.zeros((1, 2))
        out = dynamic_fuse(Tensor(e), Tensor(gcn), locked_gate(1, 2).g,
                           Tensor(np.asarray(1.7)))
        np.testing.assert_array_equal(out.data, e)  # clamp(1.7) = 1 -> pure text

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            dynamic_fuse(Tensor(np.zeros((1, 2, 3))), Tensor(np.zeros((1, 4))),
                         locked_gate(1, 0).g, Tensor(np.asarray(0.5)))


class TestClassify:
    def test_zero_weights_uniform(self):
        w = Parameter(np.zeros((4, 2)), "w")
        b = Parameter(np.zeros(2), "b")
        out = classify(Tensor(np.random.default_rng(8).normal(size=(3, 4))), w, b)
        np.testing.assert_allclose(out.data, 0.5, atol=1e-15)

    def test_bias_log_three(self):
        w = Parameter(np.zeros((4, 2)), "w")
        b = Parameter(np.array([0.0, math.log(3.0)]), "b")
        out = classify(Tensor(np.zeros((1, 4))), w, b)
        np.testing.assert_allclose(out.data, [[0.25, 0.75]], atol=1e-12)

    def test_logit_shift_invariance(self):
        rng = np.random.default_rng(9)
        w = Parameter(rng.normal(size=(4, 2)), "w")
        x = Tensor(rng.normal(size=(3, 4)))
        b0 = Parameter(np.array([1.0, -2.0]), "b")
        b1 = Parameter(np.array([1.0 + 5.0, -2.0 + 5.0]), "b")
        np.testing.assert_allclose(classify(x, w, b0).data, classify(x, w, b1).data, atol=1e-12)


class TestModelForward:
    def test_locked_text_strategy_matches_text_only_path(self):
        from chainfraud import autodiff as ad
        from chainfraud.encoder import attention_mask, embed_tokens, pool

        model = tiny_model(seed=1, lock_strategy=0)
        ids, type_ids, node_ids, _, h0, a_hat = tiny_batch(seed=2)
        with ad.no_grad():
            probs, gate = model.forward(ids, type_ids, node_ids, h0, a_hat)

            mask = attention_mask(ids, model.pad_id)
            embeds = embed_tokens(ids, type_ids, model.tables)
            hidden = model.encoder.forward(embeds, mask)
            pooled = pool(hidden, mask, "cls")
            expected = classify(pooled, model.cls_w, model.cls_b)

        np.testing.assert_array_equal(probs.data, expected.data)
        assert (gate.selected == 0).all()

    def test_eval_mode_deterministic(self):
        model = tiny_model(seed=3)
        ids, type_ids, node_ids, _, h0, a_hat = tiny_batch(seed=4)
        with ad.no_grad():
            a, _ = model.forward(ids, type_ids, node_ids, h0, a_hat)
            b, _ = model.forward(ids, type_ids, node_ids, h0, a_hat)
        np.testing.assert_array_equal(a.data, b.data)

    def test_graph_strategy_ignores_token_identity_given_fixed_pooled_stats(self):
        # with the gate locked to the graph strategy and the word table zeroed,
        # predictions depend on the node, not on which ids appear
        model = tiny_model(seed=5, lock_strategy=1)
        model.tables.word.data[:] = 0.0
        ids, type_ids, node_ids, _, h0, a_hat = tiny_batch(seed=6)
        with ad.no_grad():
            base, _ = model.forward(ids, type_ids, node_ids, h0, a_hat)
            swapped = ids.copy()
            swapped[:, 1:4] = swapped[:, [2, 3, 1]]  # permute non-pad ids
            alt, _ = model.forward(swapped, type_ids, node_ids, h0, a_hat)
        np.testing.assert_allclose(alt.data, base.data, atol=1e-12)

    def test_trainable_parameters_drop_gate_when_locked(self):
        model = tiny_model(seed=7, lock_strategy=1)
        names = {p.name for p in model.trainable_parameters()}
        assert not any(n.startswith("gate.") for n in names)
        assert "fusion.alpha" in names

    def test_state_dict_round_trip(self):
        model = tiny_model(seed=8)
        clone = tiny_model(seed=9)
        clone.load_state_dict(model.state_dict())
        ids, type_ids, node_ids, _, h0, a_hat = tiny_batch(seed=10)
        with ad.no_grad():
            a, _ = model.forward(ids, type_ids, node_ids, h0, a_hat)
            b, _ = clone.forward(ids, type_ids, node_ids, h0, a_hat)
        np.testing.assert_array_equal(a.data, b.data)

    def test_end_to_end_grad_check(self):
        model = tiny_model(seed=11)
        ids, type_ids, node_ids, labels, h0, a_hat = tiny_batch(seed=12)
        report = model_grad_check(model, ids, type_ids, node_ids, labels, h0, a_hat,
                                  tol=1e-4, n_coords=4, seed=13)
        assert report.passed, report.summary()
        # alpha and the gating network are among the checked parameters
        checked = {p.name for p in model.parameters()}
        assert "fusion.alpha" in checked and "gate.w1" in checked


def test_gating_network_output_width():
    net = GatingNetwork(d_model=8, d_gate=4, rng=np.random.default_rng(14))
    out = net.forward(Tensor(np.random.default_rng(15).normal(size=(5, 16))))
    assert out.shape == (5, 3)


def test_fusion_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(tau=0.0)
    with pytest.raises(ValueError):
        FusionConfig(lock_strategy=5)
    cfg = FusionConfig(anneal_tau=True, tau=1.0)
    assert cfg.tau_at(0) == 1.0
    assert cfg.tau_at(1000) == 0.5
