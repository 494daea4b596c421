"""Builders for tests: toy corpora, tiny models, random batches and files on disk."""
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import build_store, random_pairs
from .models import ModelDims, RmsPropConfig, TrainConfig
from .params import ParameterStore
from .text import ParaphrasePair, Vocabulary, build_vocab

TOPICS = [
    "python", "guitar", "french", "chess", "swimming", "cooking", "physics", "painting",
    "piano", "german", "calculus", "photography", "running", "spanish", "poetry", "yoga",
    "drawing", "economics", "history", "chemistry",
]

TOY_TEMPLATES = [
    ("how do i learn {t} ?", "what is the best way to learn {t} ?"),
    ("how can i get better at {t} ?", "how do i improve my {t} ?"),
]

SUBJECTS = ["i", "you", "we", "people", "students"]
VERBS = ["learn", "study", "practice", "teach", "understand"]
ADVERBS = ["quickly", "well", "at home", "for free", "online"]


def toy_rows(count: int = 20) -> List[Tuple[List[str], List[str]]]:
    """Deterministic tokenized paraphrase pairs with distinct sources."""
    rows = []
    for i in range(count):
        src, tgt = TOY_TEMPLATES[i % len(TOY_TEMPLATES)]
        topic = TOPICS[i % len(TOPICS)]
        rows.append((src.format(t=topic).split(), tgt.format(t=topic).split()))
    return rows


def synthetic_rows(count: int, seed: int) -> List[Tuple[List[str], List[str]]]:
    """Seeded template corpus whose paraphrases reorder and reword the source."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(count):
        s = SUBJECTS[rng.integers(len(SUBJECTS))]
        v = VERBS[rng.integers(len(VERBS))]
        t = TOPICS[rng.integers(len(TOPICS))]
        a = ADVERBS[rng.integers(len(ADVERBS))]
        src = f"how can {s} {v} {t} {a} ?".split()
        tgt = f"what is the way for {s} to {v} {t} {a} ?".split()
        rows.append((src, tgt))
    return rows


def encode_rows(rows: Sequence[Tuple[Sequence[str], Sequence[str]]], vocab: Vocabulary,
                t_max: int = 30) -> List[ParaphrasePair]:
    return [ParaphrasePair(source=vocab.encode(s, t_max), target=vocab.encode(t, t_max)) for s, t in rows]


def vocab_for(rows: Sequence[Tuple[Sequence[str], Sequence[str]]]) -> Vocabulary:
    return build_vocab([s for s, _ in rows] + [t for _, t in rows])


def tiny_config(variant: str = "EDD-LG-shared", vocab_size: int = 20, embed_dim: int = 8,
                hidden_dim: int = 8, t_max: int = 5, batch_size: int = 3, epochs: int = 1,
                seed: int = 0, learning_rate: float = 0.0008, **overrides) -> TrainConfig:
    dims = ModelDims(vocab_size=vocab_size, embed_dim=embed_dim, hidden_dim=hidden_dim, t_max=t_max)
    return TrainConfig(
        variant=variant, batch_size=batch_size, epochs=epochs, seed=seed, dims=dims,
        rmsprop=RmsPropConfig(learning_rate=learning_rate), **overrides,
    )


def tiny_store(config: Optional[TrainConfig] = None) -> ParameterStore:
    config = config or tiny_config()
    return build_store(config.dims, config.seed, shared=config.shared)


def random_batch(config: Optional[TrainConfig] = None, seed: int = 1) -> List[ParaphrasePair]:
    config = config or tiny_config()
    return random_pairs(config.batch_size, config.dims.vocab_size, config.dims.t_max, seed)


def write_pairs_tsv(path: Path, rows: Sequence[Tuple[Sequence[str], Sequence[str]]],
                    flags: Optional[Sequence[int]] = None, header: bool = True) -> Path:
    lines = ["question1\tquestion2\tis_duplicate"] if header else []
    for i, (src, tgt) in enumerate(rows):
        flag = 1 if flags is None else flags[i]
        lines.append(f"{' '.join(src)}\t{' '.join(tgt)}\t{flag}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_config(path: Path, values: Dict[str, object]) -> Path:
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()), encoding="utf-8")
    return path


def write_phrases_tsv(path: Path, phrases: Sequence[Tuple[str, int]]) -> Path:
    lines = ["phrase_id\tphrase\tlabel"]
    lines += [f"{i}\t{text}\t{label}" for i, (text, label) in enumerate(phrases)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def separable_blobs(per_class: int = 40, dim: int = 8, classes: int = 5, seed: int = 0
                    ) -> Tuple[np.ndarray, np.ndarray]:
    """Tight Gaussian clusters around orthogonal centers, one per class (needs dim >= classes)."""
    if dim < classes:
        raise ValueError("dim must be >= classes")
    rng = np.random.default_rng(seed)
    centers = 6.0 * np.eye(classes, dim)
    X = np.vstack([centers[k] + 0.3 * rng.normal(size=(per_class, dim)) for k in range(classes)])
    y = np.repeat(np.arange(classes), per_class)
    return X, y
