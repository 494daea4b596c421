"""Tokenization, vocabulary, dataset readers and deterministic batching."""
import csv
import logging
import re
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from .errors import DataError

logger = logging.getLogger(__name__)

START, STOP, UNK = 0, 1, 2
RESERVED = ("<start>", "<stop>", "<unk>")
DEFAULT_T_MAX = 30

_TOKEN = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> List[str]:
    """Lowercase, split punctuation into separate tokens, drop whitespace."""
    return _TOKEN.findall(text.lower())


class Vocabulary:
    """Word <-> id map with START=0, STOP=1, UNK=2 reserved."""

    def __init__(self, words: Sequence[str]):
        words = list(words)
        if tuple(words[:3]) != RESERVED:
            words = list(RESERVED) + [w for w in words if w not in RESERVED]
        self.id_to_word: List[str] = words
        self.word_to_id: Dict[str, int] = {w: i for i, w in enumerate(words)}
        if len(self.word_to_id) != len(words):
            raise DataError("vocabulary words must be unique")

    def __len__(self) -> int:
        return len(self.id_to_word)

    def __contains__(self, word: str) -> bool:
        return word in self.word_to_id

    def encode(self, tokens: Iterable[str], t_max: Optional[int] = DEFAULT_T_MAX) -> List[int]:
        ids = [self.word_to_id.get(tok, UNK) for tok in tokens]
        return ids[:t_max] if t_max else ids

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.id_to_word[i] for i in ids if i not in (START, STOP)]

    def words(self) -> List[str]:
        return list(self.id_to_word)


def build_vocab(corpus: Iterable[Union[str, Sequence[str]]], min_count: int = 1, max_size: Optional[int] = None) -> Vocabulary:
    """Build a vocabulary from training-split text only.

    Words with ``count >= min_count`` are ranked by (count desc, word asc) and
    the first ``max_size`` kept; everything else encodes to UNK.

    Args:
        corpus: Raw sentences (tokenized here) or already tokenized sentences.
        min_count: Minimum occurrences for a word to be kept.
        max_size: Cap on non-reserved words, or None for no cap.

    Returns:
        A vocabulary whose first three ids are START, STOP and UNK.

    Raises:
        DataError: If ``corpus`` yields nothing.
    """
    counts: Counter = Counter()
    seen = False
    for item in corpus:
        seen = True
        tokens = tokenize(item) if isinstance(item, str) else item
        counts.update(t for t in tokens if t not in RESERVED)
    if not seen:
        raise DataError("cannot build a vocabulary from an empty corpus")
    ranked = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    if max_size is not None:
        ranked = ranked[:max_size]
    return Vocabulary(list(RESERVED) + ranked)


class ParaphrasePair(BaseModel):
    """A source question X and its paraphrase Y as token ids (no START/STOP)."""

    source: List[int] = Field(description="Token ids of the source sentence")
    target: List[int] = Field(description="Token ids of the paraphrase")

    @field_validator("source", "target")
    @classmethod
    def validate_non_empty(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("token sequences must be non-empty")
        return v


class LabeledPhrase(BaseModel):
    """A phrase with its fine-grained sentiment label."""

    tokens: List[int]
    label: int

    @field_validator("label")
    @classmethod
    def validate_label(cls, v: int) -> int:
        if not 0 <= v <= 4:
            raise ValueError("label must be in 0..4")
        return v


SENTIMENT_LABELS = ("very negative", "negative", "neutral", "positive", "very positive")


def _read_tsv(path: Union[str, Path]) -> Iterator[Tuple[int, List[str]]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle, delimiter="\t", quoting=csv.QUOTE_NONE)
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            yield lineno, row


def _is_int(field: str) -> bool:
    try:
        int(field.strip())
    except ValueError:
        return False
    return True


def read_pair_rows(path: Union[str, Path]) -> List[Tuple[List[str], List[str]]]:
    """Read tokenized duplicate question pairs (flag 1) from a TSV file, in file order.

    A non-numeric flag on line 1 marks a header. Pairs with an empty side are
    skipped with a warning.

    Args:
        path: TSV with ``question1, question2, is_duplicate`` columns.

    Returns:
        ``(source_tokens, target_tokens)`` for every duplicate row.

    Raises:
        DataError: On a missing file, a wrong column count or a bad flag.
    """
    rows: List[Tuple[List[str], List[str]]] = []
    for lineno, row in _read_tsv(path):
        if len(row) == 2:
            raise DataError(f"{path}:{lineno}: missing is_duplicate column")
        if len(row) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated columns, got {len(row)}")
        q1, q2, flag = row
        if not _is_int(flag):
            if lineno == 1:
                continue  # header
            raise DataError(f"{path}:{lineno}: is_duplicate must be 0 or 1, got {flag!r}")
        if int(flag) != 1:
            continue
        src, tgt = tokenize(q1), tokenize(q2)
        if not src or not tgt:
            logger.warning("%s:%d: skipping pair with an empty question", path, lineno)
            continue
        rows.append((src, tgt))
    return rows


def load_pairs(path: Union[str, Path], vocab: Vocabulary, t_max: int = DEFAULT_T_MAX,
               split: Optional[Sequence[int]] = None) -> List[ParaphrasePair]:
    """Read duplicate pairs and encode them with ``vocab``.

    Args:
        path: Pairs TSV, as for :func:`read_pair_rows`.
        vocab: Vocabulary used for encoding; unknown words become UNK.
        t_max: Truncation length for both sides.
        split: Optional indices into the duplicate rows, in the order given.

    Returns:
        The encoded pairs.

    Raises:
        DataError: On unreadable input or a split index past the last row.
    """
    rows = read_pair_rows(path)
    if split is not None:
        rows = apply_split(rows, split)
    return [ParaphrasePair(source=vocab.encode(s, t_max), target=vocab.encode(t, t_max)) for s, t in rows]


def read_phrase_rows(path: Union[str, Path]) -> List[Tuple[str, List[str], int]]:
    """Read ``phrase_id, phrase, label`` rows; returns (id, tokens, label)."""
    rows = []
    for lineno, row in _read_tsv(path):
        if len(row) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated columns, got {len(row)}")
        phrase_id, phrase, label = row
        if not _is_int(label):
            if lineno == 1:
                continue
            raise DataError(f"{path}:{lineno}: label must be an integer, got {label!r}")
        label_id = int(label)
        if not 0 <= label_id <= 4:
            raise DataError(f"{path}:{lineno}: label {label_id} outside 0..4")
        tokens = tokenize(phrase)
        if not tokens:
            logger.warning("%s:%d: skipping empty phrase", path, lineno)
            continue
        rows.append((phrase_id, tokens, label_id))
    return rows


def load_phrases(path: Union[str, Path], vocab: Vocabulary, t_max: int = DEFAULT_T_MAX) -> List[LabeledPhrase]:
    return [LabeledPhrase(tokens=vocab.encode(toks, t_max), label=label)
            for _, toks, label in read_phrase_rows(path)]


def make_splits(n: int, sizes: Sequence[int], seed: int) -> List[List[int]]:
    """Disjoint seeded index lists of the requested sizes drawn from ``range(n)``.

    Args:
        n: Number of rows to draw from.
        sizes: Requested size of each split.
        seed: Permutation seed; equal seeds give equal splits.

    Returns:
        One sorted index list per entry of ``sizes``.

    Raises:
        DataError: If the sizes add up to more than ``n``.
    """
    if sum(sizes) > n:
        raise DataError(f"split sizes {list(sizes)} exceed {n} rows")
    order = np.random.default_rng(seed).permutation(n)
    splits, start = [], 0
    for size in sizes:
        splits.append(sorted(int(i) for i in order[start:start + size]))
        start += size
    return splits


def write_split(path: Union[str, Path], indices: Iterable[int]) -> None:
    """Write one row index per line."""
    Path(path).write_text("".join(f"{i}\n" for i in indices), encoding="utf-8")


def load_split(path: Union[str, Path]) -> List[int]:
    """Read a split file written by :func:`write_split`.

    Args:
        path: File with one integer row index per line; blank lines are ignored.

    Returns:
        The indices in file order.

    Raises:
        DataError: If the file is missing or a line is not an integer.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"split file not found: {path}")
    indices = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if not _is_int(line):
            raise DataError(f"{path}:{lineno}: not an integer row index: {line!r}")
        indices.append(int(line))
    return indices


def apply_split(rows: Sequence, indices: Sequence[int]) -> list:
    """Select ``rows[i]`` for each index, raising DataError when one is out of range."""
    try:
        return [rows[i] for i in indices]
    except IndexError:
        raise DataError(f"split index out of range for {len(rows)} rows") from None


def batches(pairs: Sequence, batch_size: int, seed: int, epoch: int = 0,
            global_loss: bool = True) -> List[list]:
    """Shuffle ``pairs`` with a (seed, epoch) generator and cut them into batches.

    With the global loss enabled the short final batch is dropped, since the
    hinge loss depends on batch composition and needs at least two examples.

    Args:
        pairs: Items to batch.
        batch_size: Items per batch.
        seed: Run seed.
        epoch: Epoch number; each epoch gets its own permutation.
        global_loss: Whether the in-batch hinge loss is active.

    Returns:
        The batches, each a list of items from ``pairs``.

    Raises:
        ValueError: If ``batch_size`` is below 1, or below 2 with the global loss.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if global_loss and batch_size < 2:
        raise ValueError("batch_size must be >= 2 when the global loss is enabled")
    order = np.random.default_rng([seed, epoch]).permutation(len(pairs))
    out = []
    for start in range(0, len(order), batch_size):
        chunk = order[start:start + batch_size]
        if len(chunk) < batch_size and global_loss:
            break
        out.append([pairs[i] for i in chunk])
    return out
