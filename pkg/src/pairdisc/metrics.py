"""Corpus generation metrics (BLEU, ROUGE-n, METEOR-style, TER) and the Nemenyi test.

All metrics take pre-tokenized sentences and a single reference per hypothesis.
METEOR here aligns exact matches, then suffix-stripped stems; there is no
synonym stage, so scores are not comparable to WordNet METEOR.
"""
import math
from collections import Counter, deque
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import DataError
from .models import MetricReport

Sentence = Sequence[str]


def _check_lengths(hypotheses: Sequence, references: Sequence) -> None:
    if len(hypotheses) != len(references):
        raise DataError(f"{len(hypotheses)} hypotheses but {len(references)} references")


def ngrams(tokens: Sentence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def ngram_matches(hypothesis: Sentence, reference: Sentence, n: int) -> Tuple[int, int, int]:
    """(clipped matches, hypothesis n-gram count, reference n-gram count)."""
    hyp, ref = ngrams(hypothesis, n), ngrams(reference, n)
    clipped = sum(min(count, ref[gram]) for gram, count in hyp.items())
    return clipped, sum(hyp.values()), sum(ref.values())


def modified_precisions(hypotheses: Sequence[Sentence], references: Sequence[Sentence],
                        max_n: int = 4) -> List[Tuple[int, int]]:
    """Corpus (clipped matches, total hypothesis n-grams) for n = 1..max_n."""
    _check_lengths(hypotheses, references)
    totals = [[0, 0] for _ in range(max_n)]
    for hyp, ref in zip(hypotheses, references):
        for n in range(1, max_n + 1):
            match, count, _ = ngram_matches(hyp, ref, n)
            totals[n - 1][0] += match
            totals[n - 1][1] += count
    return [tuple(t) for t in totals]


def bleu(hypotheses: Sequence[Sentence], references: Sequence[Sentence], max_n: int = 4,
         smoothing: bool = False) -> List[float]:
    """Corpus BLEU-1 .. BLEU-max_n.

    BLEU-k = BP * exp(mean(log p_1..p_k)), BP = exp(1 - r/c) when c < r.
    Without smoothing any zero precision gives 0; with smoothing, orders n > 1
    use (matches + 1) / (total + 1).
    """
    precisions = modified_precisions(hypotheses, references, max_n)
    hyp_len = sum(len(h) for h in hypotheses)
    ref_len = sum(len(r) for r in references)
    if hyp_len == 0:
        return [0.0] * max_n
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)

    logs: List[float] = []
    scores: List[float] = []
    for n, (match, total) in enumerate(precisions, start=1):
        if smoothing and n > 1:
            match, total = match + 1, total + 1
        if match == 0 or total == 0:
            logs.append(float("-inf"))
        else:
            logs.append(math.log(match / total))
        if any(v == float("-inf") for v in logs):
            scores.append(0.0)
        else:
            scores.append(bp * math.exp(sum(logs) / n))
    return scores


def rouge_n(hypotheses: Sequence[Sentence], references: Sequence[Sentence], n: int = 2) -> float:
    """Corpus n-gram recall: clipped matches over reference n-grams."""
    _check_lengths(hypotheses, references)
    matches = ref_total = 0
    for hyp, ref in zip(hypotheses, references):
        match, _, ref_count = ngram_matches(hyp, ref, n)
        matches += match
        ref_total += ref_count
    return matches / ref_total if ref_total else 0.0


def stem(word: str) -> str:
    """Suffix stripper for the METEOR stem stage (ing, ed, es, s)."""
    for suffix, min_len in (("ing", 5), ("ed", 4), ("es", 4)):
        if word.endswith(suffix) and len(word) >= min_len:
            return word[: -len(suffix)]
    if word.endswith("s") and not word.endswith("ss") and len(word) >= 3:
        return word[:-1]
    return word


def _align(hypothesis: Sentence, reference: Sentence) -> List[Tuple[int, int]]:
    """Exact stage then stem stage; each hypothesis token takes the reference
    position that extends the previous match when possible, otherwise the first free one."""
    used = [False] * len(reference)
    pairs: Dict[int, int] = {}
    for key in (lambda w: w, stem):
        hyp_keys = [key(w) for w in hypothesis]
        ref_keys = [key(w) for w in reference]
        for i, hk in enumerate(hyp_keys):
            if i in pairs:
                continue
            prev = pairs.get(i - 1)
            candidates = [j for j, rk in enumerate(ref_keys) if not used[j] and rk == hk]
            if not candidates:
                continue
            j = prev + 1 if prev is not None and prev + 1 in candidates else candidates[0]
            pairs[i] = j
            used[j] = True
    return sorted(pairs.items())


def meteor_lite(hypothesis: Sentence, reference: Sentence) -> float:
    """F-mean 10PR/(R+9P) times (1 - 0.5*(chunks/matches)^3)."""
    alignment = _align(hypothesis, reference)
    m = len(alignment)
    if m == 0:
        return 0.0
    precision = m / len(hypothesis)
    recall = m / len(reference)
    fmean = 10.0 * precision * recall / (recall + 9.0 * precision)
    chunks = 1
    for (i0, j0), (i1, j1) in zip(alignment, alignment[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    penalty = 0.5 * (chunks / m) ** 3
    return fmean * (1.0 - penalty)


def corpus_meteor(hypotheses: Sequence[Sentence], references: Sequence[Sentence]) -> float:
    _check_lengths(hypotheses, references)
    if not hypotheses:
        return 0.0
    return float(np.mean([meteor_lite(h, r) for h, r in zip(hypotheses, references)]))


def edit_distance(a: Sentence, b: Sentence) -> int:
    """Word-level Levenshtein distance."""
    prev = list(range(len(b) + 1))
    for i, wa in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, wb in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (wa != wb))
        prev = cur
    return prev[-1]


class CachedEditDistance:
    """Levenshtein distance to a fixed reference, reusing DP rows of shared prefixes.

    Rows are kept in a trie keyed by hypothesis words, so shifted variants of
    one hypothesis only recompute the rows after their common prefix.
    """

    def __init__(self, reference: Sentence):
        self.reference = tuple(reference)
        self._root: Dict[str, list] = {}
        self._first_row = tuple(range(len(self.reference) + 1))

    def __call__(self, hypothesis: Sentence) -> int:
        node, row, start = self._root, self._first_row, 0
        for word in hypothesis:
            entry = node.get(word)
            if entry is None:
                break
            node, row = entry
            start += 1
        for word in hypothesis[start:]:
            row = self._next_row(row, word)
            entry = [{}, row]
            node[word] = entry
            node = entry[0]
        return row[-1]

    def _next_row(self, prev: Tuple[int, ...], word: str) -> Tuple[int, ...]:
        cur = [prev[0] + 1]
        for j, ref_word in enumerate(self.reference, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (word != ref_word)))
        return tuple(cur)


def _shifts(words: Tuple[str, ...]):
    """Every sequence reachable by moving one contiguous block elsewhere."""
    n = len(words)
    for start in range(n):
        for end in range(start + 1, n + 1):
            block = words[start:end]
            rest = words[:start] + words[end:]
            for pos in range(len(rest) + 1):
                if pos == start:
                    continue
                yield rest[:pos] + block + rest[pos:]


def _matched_shifts(words: Tuple[str, ...], reference: Tuple[str, ...]):
    """Shifts of blocks that also occur in the reference, moved to the reference position.

    For each (hypothesis start, reference start) with equal words and different
    positions, the block is the longest common run from there.
    """
    seen = set()
    for i in range(len(words)):
        for j in range(len(reference)):
            if i == j or words[i] != reference[j]:
                continue
            length = 1
            while i + length < len(words) and j + length < len(reference) \
                    and words[i + length] == reference[j + length]:
                length += 1
            rest = words[:i] + words[i + length:]
            pos = min(j, len(rest))
            shifted = rest[:pos] + words[i:i + length] + rest[pos:]
            if shifted != words and shifted not in seen:
                seen.add(shifted)
                yield shifted


def _exhaustive_shift_edits(hypothesis: Tuple[str, ...], reference: Sentence) -> int:
    distance = CachedEditDistance(reference)
    best = distance(hypothesis)
    seen = {hypothesis: 0}
    queue = deque([hypothesis])
    while queue:
        current = queue.popleft()
        depth = seen[current]
        if depth + 1 >= best:
            continue
        for nxt in _shifts(current):
            if nxt in seen:
                continue
            seen[nxt] = depth + 1
            best = min(best, depth + 1 + distance(nxt))
            queue.append(nxt)
    return best


def _greedy_shift_edits(hypothesis: Tuple[str, ...], reference: Sentence) -> int:
    ref = tuple(reference)
    distance_to_ref = CachedEditDistance(ref)
    current = hypothesis
    distance = distance_to_ref(current)
    shifts = 0
    while True:
        best_next, best_distance = None, distance
        for candidate in _matched_shifts(current, ref):
            d = distance_to_ref(candidate)
            if d < best_distance:
                best_next, best_distance = candidate, d
        # a shift costs one edit, so it must save more than one
        if best_next is None or best_distance + 1 >= distance:
            return shifts + distance
        current, distance = best_next, best_distance
        shifts += 1


def ter_edits(hypothesis: Sentence, reference: Sentence, exact_shift_limit: int = 6) -> int:
    """Minimum edits (insert, delete, substitute, block shift) found by the shift search.

    Hypotheses up to ``exact_shift_limit`` words are searched breadth-first over
    all shift sequences. Longer ones use greedy best-shift-first search that
    only moves blocks matching the reference to their reference position.
    """
    hyp = tuple(hypothesis)
    if len(hyp) <= exact_shift_limit:
        return _exhaustive_shift_edits(hyp, reference)
    return _greedy_shift_edits(hyp, reference)


def ter(hypothesis: Sentence, reference: Sentence, exact_shift_limit: int = 6) -> float:
    if not reference:
        raise DataError("TER is undefined for an empty reference")
    return ter_edits(hypothesis, reference, exact_shift_limit) / len(reference)


def corpus_ter(hypotheses: Sequence[Sentence], references: Sequence[Sentence], exact_shift_limit: int = 6) -> float:
    _check_lengths(hypotheses, references)
    ref_len = sum(len(r) for r in references)
    if ref_len == 0:
        raise DataError("TER is undefined for empty references")
    edits = sum(ter_edits(h, r, exact_shift_limit) for h, r in zip(hypotheses, references))
    return edits / ref_len


def corpus_report(hypotheses: Sequence[Sentence], references: Sequence[Sentence],
                  rouge_order: int = 2, smoothing: bool = False) -> MetricReport:
    scores = bleu(hypotheses, references, 4, smoothing)
    return MetricReport(
        bleu1=scores[0], bleu2=scores[1], bleu3=scores[2], bleu4=scores[3],
        rouge_n=rouge_n(hypotheses, references, rouge_order), rouge_order=rouge_order,
        meteor=corpus_meteor(hypotheses, references),
        ter=corpus_ter(hypotheses, references),
        sentences=len(hypotheses), smoothing=smoothing,
    )


# Two-tailed Nemenyi critical values q_alpha (studentized range / sqrt(2)), k = 2..20.
NEMENYI_Q = {
    0.10: [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920, 2.978,
           3.030, 3.077, 3.120, 3.159, 3.196, 3.230, 3.261, 3.291, 3.319],
    0.05: [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219,
           3.268, 3.313, 3.354, 3.391, 3.426, 3.458, 3.489, 3.517, 3.544],
    0.01: [2.576, 2.913, 3.113, 3.255, 3.364, 3.452, 3.526, 3.590, 3.646, 3.696,
           3.741, 3.781, 3.818, 3.853, 3.884, 3.914, 3.941, 3.967, 3.992],
}


def nemenyi_q(k: int, alpha: float = 0.05) -> float:
    if alpha not in NEMENYI_Q:
        raise ValueError(f"no Nemenyi table for alpha={alpha}; have {sorted(NEMENYI_Q)}")
    if not 2 <= k <= 20:
        raise ValueError(f"Nemenyi table covers 2..20 methods, got k={k}")
    return NEMENYI_Q[alpha][k - 2]


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    """Critical difference q_alpha(k) * sqrt(k(k+1) / (6n))."""
    if n < 1:
        raise ValueError("need at least one dataset")
    return nemenyi_q(k, alpha) * math.sqrt(k * (k + 1) / (6.0 * n))


def friedman_ranks(scores: np.ndarray, higher_is_better: bool = True) -> Tuple[np.ndarray, float]:
    """Average ranks per method (rank 1 = best, ties averaged) and the Friedman p-value.

    ``scores`` is [datasets x methods]. The p-value is NaN when fewer than
    three methods or two datasets are given.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ValueError("scores must be a [datasets x methods] matrix with at least two methods")
    oriented = -scores if higher_is_better else scores
    ranks = np.vstack([stats.rankdata(row) for row in oriented])
    avg = ranks.mean(axis=0)
    p_value = float("nan")
    if scores.shape[1] >= 3 and scores.shape[0] >= 2:
        p_value = float(stats.friedmanchisquare(*scores.T).pvalue)
    return avg, p_value


def nemenyi_compare(names: Sequence[str], avg_ranks: Sequence[float], cd: float) -> List[Dict[str, object]]:
    """Pairwise verdicts: methods whose average ranks differ by less than ``cd`` are not significantly different."""
    out = []
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            diff = abs(avg_ranks[i] - avg_ranks[j])
            out.append({"pair": (names[i], names[j]), "rank_diff": float(diff), "significant": diff >= cd})
    return out
