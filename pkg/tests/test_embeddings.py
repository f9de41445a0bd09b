import numpy as np
import pytest

from mmner.corpus import Sentence, Vocab, build_vocab
from mmner.embeddings import (
    PAD_INDEX,
    UNK_INDEX,
    EmbeddingFormatError,
    EmbeddingTable,
    InputAssembly,
    assemble_window,
    assembly_backward,
    load_pretrained,
    random_table,
)

VOCAB = Vocab.from_itos(["<unk>", "<pad>", "a", "b"])


class TestTable:
    def test_random_table(self):
        table = random_table(6, 4, np.random.default_rng(0), scale=0.1)
        assert table.vectors.shape == (6, 4)
        np.testing.assert_array_equal(table.vectors[PAD_INDEX], 0.0)
        assert np.abs(table.vectors).max() <= 0.1
        assert table.trainable

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            EmbeddingTable(3, np.zeros((4, 2)))
        with pytest.raises(ValueError):
            EmbeddingTable(3, np.zeros((1, 3)))


class TestLoadPretrained:
    def test_documented_fixture(self):
        table = load_pretrained("2 3\na 1 0 0\nb 0 1 0", VOCAB, 3, np.random.default_rng(0))
        np.testing.assert_array_equal(table.vectors[VOCAB.index("a")], [1.0, 0.0, 0.0])
        np.testing.assert_array_equal(table.vectors[VOCAB.index("b")], [0.0, 1.0, 0.0])
        np.testing.assert_array_equal(table.vectors[UNK_INDEX], [0.5, 0.5, 0.0])

    def test_empty_file_keeps_fallback(self):
        rng = np.random.default_rng(3)
        table = load_pretrained("", VOCAB, 3, rng)
        np.testing.assert_array_equal(table.vectors[UNK_INDEX], 0.0)
        np.testing.assert_array_equal(table.vectors[PAD_INDEX], 0.0)
        # vocab rows keep the random fallback, which is nonzero almost surely
        assert np.abs(table.vectors[2:]).max() > 0

    def test_missing_word_keeps_fallback(self):
        reference = random_table(len(VOCAB), 3, np.random.default_rng(9))
        table = load_pretrained("a 1 0 0", VOCAB, 3, np.random.default_rng(9))
        np.testing.assert_array_equal(table.vectors[VOCAB.index("b")],
                                      reference.vectors[VOCAB.index("b")])
        np.testing.assert_array_equal(table.vectors[VOCAB.index("a")], [1.0, 0.0, 0.0])

    def test_words_outside_vocab_feed_the_mean(self):
        table = load_pretrained("zzz 2 2 2\na 0 0 0", VOCAB, 3, np.random.default_rng(0))
        np.testing.assert_array_equal(table.vectors[UNK_INDEX], [1.0, 1.0, 1.0])

    def test_dimension_mismatch_names_line(self):
        with pytest.raises(EmbeddingFormatError, match="line 2"):
            load_pretrained("a 1 0 0\nb 1 0", VOCAB, 3, np.random.default_rng(0))

    def test_non_numeric(self):
        with pytest.raises(EmbeddingFormatError, match="line 1"):
            load_pretrained("a 1 oops 0", VOCAB, 3, np.random.default_rng(0))

    def test_no_header_file(self):
        # first line is a regular vector line, not a header
        table = load_pretrained("a 1 0 0\nb 0 1 0", VOCAB, 3, np.random.default_rng(0))
        np.testing.assert_array_equal(table.vectors[VOCAB.index("a")], [1.0, 0.0, 0.0])


def encoded_sentence(token_ids, features=None):
    n = len(token_ids)
    return Sentence(
        tokens=["t"] * n,
        features=features if features is not None else [[] for _ in range(n)],
        token_ids=list(token_ids),
    )


class TestAssembly:
    def test_window_one_is_identity(self):
        table = random_table(5, 3, np.random.default_rng(0))
        assembly = InputAssembly(1, table, [], [])
        sent = encoded_sentence([2, 4])
        out = assemble_window(sent, assembly)
        np.testing.assert_array_equal(out, table.vectors[[2, 4]])

    def test_window_three_pads_flanks(self):
        table = random_table(5, 2, np.random.default_rng(1))
        assembly = InputAssembly(3, table, [], [])
        out = assemble_window(encoded_sentence([3]), assembly)
        expected = np.concatenate(
            [table.vectors[PAD_INDEX], table.vectors[3], table.vectors[PAD_INDEX]]
        )
        np.testing.assert_array_equal(out[0], expected)
        assert out.shape == (1, assembly.width) == (1, 6)

    def test_feature_slots_share_tables(self):
        rng = np.random.default_rng(2)
        token = random_table(4, 2, rng)
        feat = random_table(6, 3, rng)
        assembly = InputAssembly(1, token, [feat], [0, 0])
        sent = encoded_sentence([2, 3], features=[[4, 5], [5, 2]])
        out = assemble_window(sent, assembly)
        assert out.shape == (2, 2 + 3 + 3)
        np.testing.assert_array_equal(out[0, 2:5], feat.vectors[4])
        np.testing.assert_array_equal(out[0, 5:8], feat.vectors[5])
        np.testing.assert_array_equal(out[1, 5:8], feat.vectors[2])

    def test_width_is_constant(self):
        rng = np.random.default_rng(3)
        assembly = InputAssembly(3, random_table(7, 4, rng), [random_table(5, 2, rng)], [0])
        for n in (1, 2, 5):
            sent = encoded_sentence([2] * n, features=[[3]] * n)
            assert assemble_window(sent, assembly).shape == (n, assembly.width)

    def test_even_window_rejected(self):
        with pytest.raises(ValueError):
            InputAssembly(2, random_table(4, 2, np.random.default_rng(0)), [], [])


class TestAssemblyBackward:
    def test_scatter_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        token = random_table(6, 3, rng)
        feat = random_table(5, 2, rng)
        assembly = InputAssembly(3, token, [feat], [0, 0])
        sent = encoded_sentence([2, 2, 4], features=[[2, 3], [3, 3], [4, 2]])
        d_inputs = rng.normal(size=(3, assembly.width))

        d_tok, (d_feat,) = assembly_backward(d_inputs, sent, assembly)

        eps = 1e-6
        objective = lambda: float((assemble_window(sent, assembly) * d_inputs).sum())
        for table, grad in ((token.vectors, d_tok), (feat.vectors, d_feat)):
            for idx in np.ndindex(table.shape):
                orig = table[idx]
                table[idx] = orig + eps
                up = objective()
                table[idx] = orig - eps
                down = objective()
                table[idx] = orig
                np.testing.assert_allclose(grad[idx], (up - down) / (2 * eps), atol=1e-6)

    def test_repeated_ids_accumulate(self):
        token = random_table(4, 1, np.random.default_rng(5))
        assembly = InputAssembly(1, token, [], [])
        sent = encoded_sentence([2, 2])
        d_tok, _ = assembly_backward(np.ones((2, 1)), sent, assembly)
        assert d_tok[2, 0] == 2.0
