"""Vocabulary, unigram negative-sampling table, and frequency subsampling.

Token ids are dense and ordered by descending corpus frequency, ties broken
by first occurrence, which keeps the most frequent tokens at the low ids the
rest of the pipeline assumes (contiguous master ranges, table layout).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

DEFAULT_TABLE_EXPONENT = 0.75

# The classic tool uses a fixed 1e8-slot table. We keep that as the ceiling
# and scale the table with the vocabulary (100 slots per retained token) so
# small corpora do not pay hundreds of megabytes for empty resolution.
MAX_TABLE_SIZE = 100_000_000
SLOTS_PER_TOKEN = 100


class EmptyVocabularyError(ValueError):
    """Raised when no token survives the min_count threshold."""


@dataclass
class Vocabulary:
    """Retained tokens with dense ids by descending frequency.

    Attributes
    ----------
    tokens : list of token strings, position is the token id.
    counts : int64 array of corpus frequencies, indexed by id.
    min_count : threshold the tokens were filtered with.
    """

    tokens: list[str]
    counts: np.ndarray
    min_count: int
    token_to_id: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if not self.token_to_id:
            self.token_to_id = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def total_words(self) -> int:
        """Total retained occurrences (sum of counts)."""
        return int(self.counts.sum())

    def id_of(self, token: str) -> int | None:
        return self.token_to_id.get(token)


def build_vocabulary(tokens: Iterable[str], min_count: int = 5) -> Vocabulary:
    """Count tokens and keep those seen at least min_count times.

    Ids are assigned by descending frequency; equal frequencies keep their
    first-occurrence order. Raises EmptyVocabularyError when nothing is
    retained (empty input included).
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts = Counter(tokens)
    # Counter preserves insertion order, so enumerate gives first occurrence.
    retained = [
        (tok, cnt, pos)
        for pos, (tok, cnt) in enumerate(counts.items())
        if cnt >= min_count
    ]
    if not retained:
        raise EmptyVocabularyError(
            f"no token appears at least {min_count} times; vocabulary is empty"
        )
    retained.sort(key=lambda item: (-item[1], item[2]))
    toks = [tok for tok, _, _ in retained]
    freqs = np.array([cnt for _, cnt, _ in retained], dtype=np.int64)
    return Vocabulary(tokens=toks, counts=freqs, min_count=min_count)


@dataclass
class NegativeTable:
    """Unigram-power table for drawing negative samples.

    slots[i] holds a token id; drawing a uniform slot draws tokens with
    probability proportional to count**exponent.
    """

    slots: np.ndarray
    exponent: float

    def __len__(self) -> int:
        return len(self.slots)


def default_table_size(vocab_size: int) -> int:
    return min(MAX_TABLE_SIZE, SLOTS_PER_TOKEN * vocab_size)


def build_negative_table(
    vocab: Vocabulary,
    exponent: float = DEFAULT_TABLE_EXPONENT,
    table_size: int | None = None,
) -> NegativeTable:
    """Apportion table slots by count**exponent shares.

    Slots are laid out by cumulative share with floor rounding, so the last
    token absorbs the global remainder. Two repair passes keep the layout
    honest in degenerate cases: every token gets at least one slot whenever
    the table is big enough, and a token never ends up with more slots than
    a strictly more frequent one.
    """
    n = len(vocab)
    if table_size is None:
        table_size = default_table_size(n)
    if table_size < 1:
        raise ValueError(f"table_size must be >= 1, got {table_size}")

    weights = vocab.counts.astype(np.float64) ** exponent
    shares = np.cumsum(weights / weights.sum())
    bounds = np.floor(shares * table_size).astype(np.int64)
    bounds[-1] = table_size
    sizes = np.diff(np.concatenate(([0], bounds)))

    sizes = _repair_monotonicity(sizes, vocab.counts)
    if table_size >= n:
        sizes = _repair_min_one(sizes)
        # The donor step above can dip a frequent token below a rare near-tie
        # (it takes from the first argmax), so restore the ordering. Inputs
        # here are all >= 1, which keeps every cap >= 1: no zeros come back.
        sizes = _repair_monotonicity(sizes, vocab.counts)

    slots = np.repeat(np.arange(n, dtype=np.int32), sizes)
    return NegativeTable(slots=slots, exponent=exponent)


def _repair_monotonicity(sizes: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Cap each token's slots at the minimum of strictly higher frequencies.

    Floor rounding of cumulative boundaries can hand a rare token one slot
    more than a frequent near-tie. Surplus moves to token 0, which is safe
    because no token is strictly more frequent than it.
    """
    sizes = sizes.copy()
    surplus = 0
    cap = None
    i = 0
    n = len(sizes)
    while i < n:
        j = i
        while j < n and counts[j] == counts[i]:
            j += 1
        if cap is not None:
            for k in range(i, j):
                if sizes[k] > cap:
                    surplus += sizes[k] - cap
                    sizes[k] = cap
        group_min = int(sizes[i:j].min())
        cap = group_min if cap is None else min(cap, group_min)
        i = j
    sizes[0] += surplus
    return sizes


def _repair_min_one(sizes: np.ndarray) -> np.ndarray:
    """Give empty tokens one slot each, funded by the largest holders."""
    sizes = sizes.copy()
    deficit = int((sizes == 0).sum())
    if deficit == 0:
        return sizes
    sizes[sizes == 0] = 1
    while deficit > 0:
        donor = int(sizes.argmax())
        take = min(deficit, int(sizes[donor]) - 1)
        if take <= 0:
            raise ValueError("table too small to give every token a slot")
        sizes[donor] -= take
        deficit -= take
    return sizes


def discard_probability(count: int, total_words: int, threshold: float) -> float:
    """Probability that an occurrence of a token is dropped before training.

    With frequency fraction f = count / total_words and threshold t, the keep
    probability is sqrt(t/f) + t/f and the discard probability its clamped
    complement. A threshold of 0 disables subsampling entirely.
    """
    if threshold <= 0.0:
        return 0.0
    f = count / total_words
    keep = (threshold / f) ** 0.5 + threshold / f
    return max(0.0, 1.0 - keep)


def discard_probabilities(vocab: Vocabulary, threshold: float) -> np.ndarray:
    """Vector of discard probabilities indexed by token id."""
    if threshold <= 0.0:
        return np.zeros(len(vocab), dtype=np.float64)
    f = vocab.counts.astype(np.float64) / float(vocab.total_words)
    keep = np.sqrt(threshold / f) + threshold / f
    return np.maximum(0.0, 1.0 - keep)


def should_subsample(
    vocab: Vocabulary, token_id: int, threshold: float, draw: float
) -> bool:
    """Decide whether one occurrence is discarded, given a uniform draw."""
    if threshold <= 0.0:
        return False
    p = discard_probability(int(vocab.counts[token_id]), vocab.total_words, threshold)
    return draw < p


def write_vocabulary(vocab: Vocabulary, path: str) -> None:
    """Tab-separated token/count lines in descending count order."""
    with open(path, "w", encoding="utf-8") as fh:
        for token, count in zip(vocab.tokens, vocab.counts):
            fh.write(f"{token}\t{int(count)}\n")


def read_vocabulary(path: str, min_count: int = 1) -> Vocabulary:
    """Load a token/count file written by write_vocabulary."""
    tokens: list[str] = []
    counts: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            token, sep, raw = line.partition("\t")
            if not sep or not token:
                raise ValueError(f"{path}:{lineno}: expected token<TAB>count")
            try:
                count = int(raw)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad count {raw!r}") from exc
            if count >= min_count:
                tokens.append(token)
                counts.append(count)
    if not tokens:
        raise EmptyVocabularyError(f"{path}: no tokens at min_count={min_count}")
    return Vocabulary(
        tokens=tokens,
        counts=np.asarray(counts, dtype=np.int64),
        min_count=min_count,
    )
