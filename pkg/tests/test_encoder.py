import numpy as np
import pytest

from chainfraud import autodiff as ad
from chainfraud.autodiff import Tensor
from chainfraud.encoder import (
    EmbeddingTables,
    EncoderConfig,
    TransformerEncoder,
    attention_mask,
    embed_tokens,
    masked_mean,
    pool,
)
from chainfraud.errors import ShapeError
from chainfraud.gradcheck import grad_check

SMALL = EncoderConfig(d_model=8, n_layers=2, n_heads=2, d_ff=16, max_len=6, dropout=0.0)


def make_tables(cfg=SMALL, vocab=10, seed=0):
    return EmbeddingTables(vocab, cfg, np.random.default_rng(seed))


class TestEmbedTokens:
    def test_zero_tables_give_zero(self):
        tables = make_tables()
        for p in tables.parameters():
            p.data[:] = 0.0
        ids = np.zeros((2, SMALL.max_len), dtype=np.int64)
        out = embed_tokens(ids, np.zeros_like(ids), tables)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_position_only_is_id_independent(self):
        tables = make_tables(seed=1)
        tables.word.data[:] = 0.0
        tables.token_type.data[:] = 0.0
        rng = np.random.default_rng(2)
        ids_a = rng.integers(0, 10, size=(3, SMALL.max_len))
        ids_b = rng.permutation(ids_a.reshape(-1)).reshape(ids_a.shape)
        types = np.zeros_like(ids_a)
        np.testing.assert_array_equal(
            embed_tokens(ids_a, types, tables).data,
            embed_tokens(ids_b, types, tables).data,
        )

    def test_first_row_is_sum_of_table_rows(self):
        tables = make_tables(seed=3)
        cls_id = 2
        ids = np.full((1, SMALL.max_len), 0, dtype=np.int64)
        ids[0, 0] = cls_id
        out = embed_tokens(ids, np.zeros_like(ids), tables)
        expected = (tables.word.data[cls_id] + tables.position.data[0]
                    + tables.token_type.data[0])
        np.testing.assert_allclose(out.data[0, 0], expected, atol=0)

    def test_out_of_range_id(self):
        tables = make_tables()
        ids = np.full((1, SMALL.max_len), 99, dtype=np.int64)
        with pytest.raises(ShapeError):
            embed_tokens(ids, np.zeros_like(ids), tables)

    def test_wrong_length(self):
        tables = make_tables()
        with pytest.raises(ShapeError):
            embed_tokens(np.zeros((1, 3), dtype=np.int64), np.zeros((1, 3), dtype=np.int64), tables)


class TestTransformerEncoder:
    def run(self, x, mask, cfg=SMALL, seed=0):
        return TransformerEncoder(cfg, np.random.default_rng(seed)).forward(Tensor(x), mask)

    def test_single_unmasked_position_matches_singleton_run(self):
        # with only position 0 unmasked, attention reduces to a softmax over a
        # singleton, so row 0 must equal running the block on that row alone
        rng = np.random.default_rng(4)
        enc = TransformerEncoder(SMALL, np.random.default_rng(5))
        x = rng.normal(size=(1, SMALL.max_len, SMALL.d_model))
        mask = np.zeros((1, SMALL.max_len))
        mask[0, 0] = 1.0
        full = enc.forward(Tensor(x), mask)
        alone = enc.forward(Tensor(x[:, :1, :]), np.ones((1, 1)))
        np.testing.assert_allclose(full.data[0, 0], alone.data[0, 0], atol=1e-12)

    def test_masked_positions_never_leak(self):
        rng = np.random.default_rng(6)
        enc = TransformerEncoder(SMALL, np.random.default_rng(7))
        x = rng.normal(size=(2, SMALL.max_len, SMALL.d_model))
        mask = np.ones((2, SMALL.max_len))
        mask[:, 3:] = 0.0
        base = enc.forward(Tensor(x), mask)
        perturbed = x.copy()
        perturbed[:, 3:, :] += rng.normal(size=(2, SMALL.max_len - 3, SMALL.d_model)) * 100
        shifted = enc.forward(Tensor(perturbed), mask)
        np.testing.assert_allclose(shifted.data[:, :3, :], base.data[:, :3, :], atol=1e-10)

    def test_permutation_equivariance(self):
        # positions enter only through the input rows, so permuting rows and
        # mask together permutes the outputs
        rng = np.random.default_rng(8)
        enc = TransformerEncoder(SMALL, np.random.default_rng(9))
        x = rng.normal(size=(1, SMALL.max_len, SMALL.d_model))
        mask = np.array([[1, 1, 1, 1, 0, 0]], dtype=float)
        perm = np.array([2, 0, 3, 1, 5, 4])
        base = enc.forward(Tensor(x), mask)
        permuted = enc.forward(Tensor(x[:, perm, :]), mask[:, perm])
        np.testing.assert_allclose(permuted.data[:, :, :], base.data[:, perm, :], atol=1e-12)

    def test_shape_validation(self):
        enc = TransformerEncoder(SMALL, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            enc.forward(Tensor(np.zeros((1, 6, 5))), np.ones((1, 6)))

    def test_dropout_requires_rng_and_changes_output(self):
        cfg = EncoderConfig(d_model=8, n_layers=1, n_heads=2, d_ff=16, max_len=4, dropout=0.5)
        enc = TransformerEncoder(cfg, np.random.default_rng(1))
        x = Tensor(np.random.default_rng(2).normal(size=(1, 4, 8)))
        mask = np.ones((1, 4))
        with pytest.raises(ValueError):
            enc.forward(x, mask, train=True)
        a = enc.forward(x, mask, train=True, rng=np.random.default_rng(3))
        b = enc.forward(x, mask, train=False)
        assert np.abs(a.data - b.data).max() > 1e-6

    def test_gradients_against_finite_differences(self):
        rng = np.random.default_rng(10)
        cfg = EncoderConfig(d_model=4, n_layers=1, n_heads=2, d_ff=8, max_len=3, dropout=0.0)
        enc = TransformerEncoder(cfg, np.random.default_rng(11))
        x = Tensor(rng.normal(size=(2, 3, 4)))
        mask = np.array([[1, 1, 0], [1, 1, 1]], dtype=float)
        w = rng.normal(size=(2, 3, 4))

        def loss():
            return ad.sum_(ad.mul(enc.forward(x, mask), Tensor(w)))

        report = grad_check(loss, enc.parameters(), tol=1e-4, n_coords=8, seed=12)
        assert report.passed, report.summary()


class TestPooling:
    def test_cls_row_returned(self):
        rng = np.random.default_rng(13)
        h = rng.normal(size=(3, 5, 4))
        out = pool(Tensor(h), np.ones((3, 5)), "cls")
        np.testing.assert_array_equal(out.data, h[:, 0, :])

    def test_pad_rows_do_not_move_pooled_output(self):
        rng = np.random.default_rng(14)
        enc = TransformerEncoder(SMALL, np.random.default_rng(15))
        x = rng.normal(size=(1, SMALL.max_len, SMALL.d_model))
        mask = np.array([[1, 1, 0, 0, 0, 0]], dtype=float)
        pooled = pool(enc.forward(Tensor(x), mask), mask, "cls")
        x2 = x.copy()
        x2[0, 2:] += 50.0
        pooled2 = pool(enc.forward(Tensor(x2), mask), mask, "cls")
        np.testing.assert_allclose(pooled.data, pooled2.data, atol=1e-10)

    def test_masked_mean(self):
        h = np.arange(24.0).reshape(2, 3, 4)
        mask = np.array([[1, 1, 0], [1, 0, 0]], dtype=float)
        out = masked_mean(Tensor(h), mask)
        np.testing.assert_allclose(out.data[0], h[0, :2].mean(axis=0))
        np.testing.assert_allclose(out.data[1], h[1, 0])

    def test_all_masked_sequence_rejected(self):
        with pytest.raises(ShapeError):
            masked_mean(Tensor(np.ones((1, 3, 2))), np.zeros((1, 3)))

    def test_degenerate_one_dim_model(self):
        cfg = EncoderConfig(d_model=1, n_layers=1, n_heads=1, d_ff=2, max_len=3, dropout=0.0)
        enc = TransformerEncoder(cfg, np.random.default_rng(16))
        out = enc.forward(Tensor(np.zeros((2, 3, 1))), np.ones((2, 3)))
        pooled = pool(out, np.ones((2, 3)), "cls")
        assert pooled.shape == (2, 1)


def test_attention_mask_from_ids():
    ids = np.array([[2, 5, 0, 0], [2, 3, 3, 0]])
    np.testing.assert_array_equal(attention_mask(ids, pad_id=0),
                                  [[1, 1, 0, 0], [1, 1, 1, 0]])


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(d_model=10, n_heads=4)
    with pytest.raises(ValueError):
        EncoderConfig(pool="max")
