from pathlib import Path

import pytest

from pairdisc.errors import DataError
from pairdisc.testing import write_pairs_tsv, write_phrases_tsv
from pairdisc.text import (START, STOP, UNK, Vocabulary, apply_split, batches, build_vocab, load_pairs,
                           load_phrases, load_split, make_splits, read_pair_rows, tokenize, write_split)


@pytest.mark.parametrize(
    "text, expected",
    [
        ("Is college really worth it?", ["is", "college", "really", "worth", "it", "?"]),
        ("", []),
        ("CPEC?  CPEC", ["cpec", "?", "cpec"]),
        ("don't stop", ["don", "'", "t", "stop"]),
    ],
)
def test_tokenize(text, expected):
    assert tokenize(text) == expected


class TestVocabulary:
    def test_reserved_ids_come_first(self):
        vocab = build_vocab(["a a b"])
        assert (START, STOP, UNK) == (0, 1, 2)
        assert vocab.word_to_id["a"] == 3
        assert vocab.word_to_id["b"] == 4

    def test_min_count_maps_rare_words_to_unk(self):
        vocab = build_vocab(["a a b"], min_count=2)
        assert "b" not in vocab
        assert vocab.encode(["a", "b"]) == [3, UNK]

    def test_ties_break_lexicographically(self):
        assert build_vocab(["z y x"]).words()[3:] == ["x", "y", "z"]
        assert build_vocab(["b a c b"]).words()[3:] == ["b", "a", "c"]

    def test_max_size_truncates(self):
        assert len(build_vocab(["a a b c"], max_size=1)) == 4

    def test_empty_corpus_is_an_error(self):
        with pytest.raises(DataError):
            build_vocab([])

    def test_encode_decode_round_trip_and_truncation(self):
        vocab = build_vocab([["what", "is", "this", "?"]])
        ids = vocab.encode(["what", "is", "this", "?"])
        assert vocab.decode(ids) == ["what", "is", "this", "?"]
        assert vocab.decode([START] + ids + [STOP]) == ["what", "is", "this", "?"]
        assert len(vocab.encode(["what"] * 50, t_max=30)) == 30

    def test_rebuilding_from_words_is_identical(self):
        vocab = build_vocab(["the cat sat on the mat"])
        assert Vocabulary(vocab.words()).word_to_id == vocab.word_to_id


class TestPairFiles:
    def test_keeps_only_duplicate_rows_in_order(self, tmp_path: Path):
        path = write_pairs_tsv(tmp_path / "pairs.tsv",
                               [(["a", "b"], ["b", "a"]), (["c"], ["d"]), (["e"], ["f"])],
                               flags=[1, 0, 1])
        assert read_pair_rows(path) == [(["a", "b"], ["b", "a"]), (["e"], ["f"])]

    def test_header_is_optional(self, tmp_path: Path):
        path = write_pairs_tsv(tmp_path / "pairs.tsv", [(["a"], ["b"])], header=False)
        assert len(read_pair_rows(path)) == 1

    def test_missing_flag_column(self, tmp_path: Path):
        path = tmp_path / "pairs.tsv"
        path.write_text("how are you\thow do you do\n", encoding="utf-8")
        with pytest.raises(DataError, match="missing is_duplicate"):
            read_pair_rows(path)

    def test_malformed_row_names_the_line(self, tmp_path: Path):
        path = tmp_path / "pairs.tsv"
        path.write_text("a\tb\t1\na\tb\tc\td\n", encoding="utf-8")
        with pytest.raises(DataError, match=":2:"):
            read_pair_rows(path)

    def test_non_numeric_flag_after_the_first_line(self, tmp_path: Path):
        path = tmp_path / "pairs.tsv"
        path.write_text("a\tb\t1\na\tb\tyes\n", encoding="utf-8")
        with pytest.raises(DataError, match="is_duplicate"):
            read_pair_rows(path)

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(DataError, match="not found"):
            read_pair_rows(tmp_path / "nope.tsv")

    def test_load_pairs_encodes_with_vocab(self, tmp_path: Path):
        path = write_pairs_tsv(tmp_path / "pairs.tsv", [(["a", "b"], ["b", "zzz"])])
        vocab = build_vocab(["a b"])
        [pair] = load_pairs(path, vocab)
        assert pair.source == [vocab.word_to_id["a"], vocab.word_to_id["b"]]
        assert pair.target == [vocab.word_to_id["b"], UNK]


def test_load_phrases_and_label_range(tmp_path: Path):
    path = write_phrases_tsv(tmp_path / "phrases.tsv", [("a good film", 4), ("bad", 0)])
    vocab = build_vocab(["a good film bad"])
    phrases = load_phrases(path, vocab)
    assert [p.label for p in phrases] == [4, 0]
    bad = tmp_path / "bad.tsv"
    bad.write_text("1\tfine\t7\n", encoding="utf-8")
    with pytest.raises(DataError, match="outside"):
        load_phrases(bad, vocab)


class TestBatches:
    def test_even_split_is_a_disjoint_cover(self):
        out = batches(list(range(10)), 5, seed=0)
        assert len(out) == 2
        assert sorted(out[0] + out[1]) == list(range(10))

    def test_short_final_batch_dropped_with_global_loss(self):
        out = batches(list(range(11)), 5, seed=0, global_loss=True)
        assert [len(b) for b in out] == [5, 5]
        out = batches(list(range(11)), 5, seed=0, global_loss=False)
        assert [len(b) for b in out] == [5, 5, 1]

    def test_deterministic_per_seed_and_epoch(self):
        data = list(range(20))
        assert batches(data, 4, seed=3, epoch=2) == batches(data, 4, seed=3, epoch=2)
        assert batches(data, 4, seed=3, epoch=2) != batches(data, 4, seed=3, epoch=3)

    def test_batch_of_one_needs_local_only_training(self):
        with pytest.raises(ValueError):
            batches([1, 2, 3], 1, seed=0, global_loss=True)
        assert len(batches([1, 2, 3], 1, seed=0, global_loss=False)) == 3


class TestSplits:
    def test_splits_are_disjoint_and_seeded(self):
        a, b = make_splits(100, [30, 20], seed=5)
        assert len(a) == 30 and len(b) == 20
        assert not set(a) & set(b)
        assert make_splits(100, [30, 20], seed=5) == [a, b]

    def test_too_large(self):
        with pytest.raises(DataError):
            make_splits(10, [6, 5], seed=0)

    def test_write_load_and_apply(self, tmp_path: Path):
        path = tmp_path / "train.idx"
        write_split(path, [2, 0])
        assert load_split(path) == [2, 0]
        assert apply_split(["a", "b", "c"], load_split(path)) == ["c", "a"]
        with pytest.raises(DataError):
            apply_split(["a"], [3])
