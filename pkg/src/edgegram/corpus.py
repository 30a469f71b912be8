"""Work lists, corpus ingestion, partitioning, and random-walk generation.

A work list is the unit the cluster simulation distributes: the retained
token occurrences of a corpus in order, plus the sentence boundaries that
windows must not cross. Text corpora are cut into fixed 10k-token sentence
blocks; walk corpora keep one walk per line.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .rng import walk_seed
from .vocab import Vocabulary

SENTENCE_BLOCK = 10_000


@dataclass
class WorkList:
    """Retained occurrences (token ids, in corpus order) with sentence offsets.

    offsets has one more entry than there are sentences; sentence j spans
    tokens[offsets[j]:offsets[j + 1]]. offsets[0] is 0 and offsets[-1] is
    len(tokens).
    """

    tokens: np.ndarray
    offsets: np.ndarray

    def __post_init__(self) -> None:
        self.tokens = np.ascontiguousarray(self.tokens, dtype=np.int32)
        self.offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        if len(self.offsets) == 0 or self.offsets[0] != 0:
            raise ValueError("offsets must start at 0")
        if self.offsets[-1] != len(self.tokens):
            raise ValueError("offsets must end at len(tokens)")
        if np.any(np.diff(self.offsets) < 0):
            raise ValueError("offsets must be non-decreasing")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def num_sentences(self) -> int:
        return len(self.offsets) - 1

    def sentences(self) -> Iterator[np.ndarray]:
        for j in range(self.num_sentences):
            yield self.tokens[self.offsets[j] : self.offsets[j + 1]]


def empty_worklist() -> WorkList:
    return WorkList(np.zeros(0, np.int32), np.zeros(1, np.int64))


def worklist_from_tokens(
    tokens: Iterable[str], vocab: Vocabulary, block: int = SENTENCE_BLOCK
) -> WorkList:
    """Build a block-sentence work list from a token stream.

    Tokens missing from the vocabulary are dropped; every `block` retained
    tokens start a new sentence.
    """
    lookup = vocab.token_to_id
    ids = [tid for tok in tokens if (tid := lookup.get(tok)) is not None]
    arr = np.asarray(ids, dtype=np.int32)
    n = len(arr)
    bounds = list(range(0, n, block)) + [n] if n else [0, 0]
    offsets = np.unique(np.asarray(bounds, dtype=np.int64))
    if n == 0:
        offsets = np.zeros(1, np.int64)
    return WorkList(arr, offsets)


def worklist_from_lines(
    lines: Iterable[Iterable[str]], vocab: Vocabulary
) -> WorkList:
    """Build a line-sentence work list (one sentence per input line).

    Lines with no retained token contribute no sentence.
    """
    lookup = vocab.token_to_id
    ids: list[int] = []
    offsets = [0]
    for line in lines:
        kept = [tid for tok in line if (tid := lookup.get(tok)) is not None]
        if kept:
            ids.extend(kept)
            offsets.append(len(ids))
    return WorkList(np.asarray(ids, dtype=np.int32), np.asarray(offsets, dtype=np.int64))


def read_tokens(path: str) -> Iterator[str]:
    """Stream whitespace-separated tokens from a UTF-8 text file."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            yield from line.split()


def read_token_lines(path: str) -> Iterator[list[str]]:
    """Stream lines of whitespace-separated tokens from a UTF-8 text file."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            toks = line.split()
            if toks:
                yield toks


def split_sizes(total: int, parts: int) -> list[int]:
    """Contiguous equal split sizes: earlier parts absorb the remainder."""
    if parts < 1:
        raise ValueError(f"parts must be >= 1, got {parts}")
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def partition_worklist(worklist: WorkList, parts: int) -> list[WorkList]:
    """Split a work list into contiguous chunks whose sizes differ by <= 1.

    Sentence boundaries are carried into each chunk and clipped at the cut
    points, so a sentence spanning a cut becomes two shorter sentences. The
    concatenation of all chunks reproduces the original occurrence sequence.
    """
    sizes = split_sizes(len(worklist), parts)
    cuts = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    chunks = []
    for i in range(parts):
        lo, hi = int(cuts[i]), int(cuts[i + 1])
        inner = worklist.offsets[(worklist.offsets > lo) & (worklist.offsets < hi)]
        offsets = np.concatenate(([lo], inner, [hi])) - lo
        offsets = np.unique(offsets)
        if hi == lo:
            offsets = np.zeros(1, np.int64)
        chunks.append(WorkList(worklist.tokens[lo:hi].copy(), offsets))
    return chunks


class EdgeListError(ValueError):
    """Raised for malformed edge-list lines, with the line number."""


def load_edge_list(path: str, undirected: bool = True) -> dict[int, np.ndarray]:
    """Parse an edge list into an adjacency map.

    Each line holds two integer vertex ids; lines starting with '#' and
    blank lines are skipped. With undirected=True (the default) each edge is
    mirrored. Neighbor arrays are sorted and deduplicated; vertices that
    only ever appear as destinations still get (empty) adjacency entries.
    """
    neighbors: dict[int, set[int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 2:
                raise EdgeListError(
                    f"{path}:{lineno}: expected 'src dst', got {text!r}"
                )
            try:
                src, dst = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise EdgeListError(
                    f"{path}:{lineno}: non-integer vertex id in {text!r}"
                ) from exc
            neighbors.setdefault(src, set()).add(dst)
            neighbors.setdefault(dst, set())
            if undirected:
                neighbors[dst].add(src)
    return {
        v: np.asarray(sorted(adj), dtype=np.int64)
        for v, adj in sorted(neighbors.items())
    }


def generate_walks(
    graph: dict[int, np.ndarray],
    walks_per_node: int,
    walk_length: int,
    seed: int,
) -> Iterator[list[int]]:
    """Yield uniform random walks, walks_per_node passes over all vertices.

    Each walk holds at most walk_length vertices and stops early at a vertex
    with no neighbors, so an isolated vertex yields length-1 walks.
    """
    if walks_per_node < 1 or walk_length < 1:
        raise ValueError("walks_per_node and walk_length must be >= 1")
    rng = np.random.default_rng(walk_seed(seed))
    vertices = sorted(graph)
    for _ in range(walks_per_node):
        for start in vertices:
            walk = [start]
            current = start
            while len(walk) < walk_length:
                adj = graph[current]
                if len(adj) == 0:
                    break
                current = int(adj[rng.integers(len(adj))])
                walk.append(current)
            yield walk


def write_walks(walks: Iterable[list[int]], path: str) -> int:
    """Write one walk per line as decimal tokens; returns the line count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for walk in walks:
            fh.write(" ".join(str(v) for v in walk))
            fh.write("\n")
            count += 1
    return count
