"""Node ownership and the seeded sample stream.

Masters are contiguous, near-equal node-id ranges, one per host; every
other host that touches a node holds a mirror proxy. The sample stream for
a round is fully determined by (slice, params, seed), which is what lets
inspection run before computation and see exactly the rows computation
will touch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import kernel
from .corpus import WorkList, split_sizes
from .model import ModelParams, Sample
from .rng import Lcg
from .vocab import NegativeTable, Vocabulary, discard_probabilities


@dataclass(frozen=True)
class MasterMap:
    """Contiguous master ranges: host h owns nodes [bounds[h], bounds[h+1])."""

    num_nodes: int
    num_hosts: int
    bounds: np.ndarray

    def host_of(self, node: int) -> int:
        """Owning host in O(1) range arithmetic."""
        if not (0 <= node < self.num_nodes):
            raise ValueError(f"node {node} out of range [0, {self.num_nodes})")
        base, extra = divmod(self.num_nodes, self.num_hosts)
        wide = (base + 1) * extra
        if node < wide:
            return node // (base + 1)
        if base == 0:
            raise AssertionError("unreachable: node beyond populated ranges")
        return extra + (node - wide) // base

    def range_of(self, host: int) -> tuple[int, int]:
        return int(self.bounds[host]), int(self.bounds[host + 1])

    def owns(self, host: int, node) -> np.ndarray | bool:
        lo, hi = self.range_of(host)
        return (node >= lo) & (node < hi)


def assign_masters(num_nodes: int, num_hosts: int) -> MasterMap:
    """Split node ids into contiguous near-equal ranges.

    Sizes differ by at most one, earlier hosts absorb the remainder; with
    more hosts than nodes the trailing hosts own empty ranges.
    """
    if num_hosts < 1:
        raise ValueError(f"num_hosts must be >= 1, got {num_hosts}")
    sizes = split_sizes(num_nodes, num_hosts)
    bounds = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    return MasterMap(num_nodes=num_nodes, num_hosts=num_hosts, bounds=bounds)


@dataclass
class MirrorSet:
    """Rows a host needs besides its masters, per access label.

    e_nodes are nodes the host reads as edge sources, t_nodes as
    destinations. With label_specific=False the two sets are the same
    union set (the coarse protocols ship both rows per node).
    """

    e_nodes: np.ndarray
    t_nodes: np.ndarray
    label_specific: bool


@dataclass(frozen=True)
class CenterWork:
    """Everything one kept center occurrence generates.

    occurrence is the index within the round slice (subsample-discarded
    occurrences keep their index; they simply produce no CenterWork).
    groups pairs each window target with its drawn negatives.
    """

    occurrence: int
    center: int
    groups: tuple[tuple[int, tuple[int, ...]], ...]


def stream_center_work(
    worklist: WorkList,
    params: ModelParams,
    seed: int,
    vocab: Vocabulary,
    table: NegativeTable,
) -> Iterator[CenterWork]:
    """Replay one round slice's sample stream at the group level.

    Per sentence, each occurrence first takes its subsampling decision in
    corpus order (no draw is consumed when the threshold is 0); each kept
    center then draws its effective window size, and every window target is
    followed by its negative draws. A negative colliding with the positive
    destination is re-drawn, at most 8 attempts, then the slot is skipped.

    This generator, kernel.run_round and kernel.run_inspection must consume
    the LCG identically; tests hold them together.
    """
    rng = Lcg(seed)
    discard = discard_probabilities(vocab, params.subsample_threshold)
    use_sub = params.subsample_threshold > 0.0
    slots = table.slots
    tsize = len(slots)
    for j in range(worklist.num_sentences):
        lo = int(worklist.offsets[j])
        hi = int(worklist.offsets[j + 1])
        kept: list[tuple[int, int]] = []
        for p in range(lo, hi):
            w = int(worklist.tokens[p])
            if use_sub and rng.uniform() < discard[w]:
                continue
            kept.append((p, w))
        nk = len(kept)
        for ci in range(nk):
            pos, center = kept[ci]
            weff = rng.window_size(params.window)
            lo_t = max(0, ci - weff)
            hi_t = min(nk - 1, ci + weff)
            groups = []
            for tj in range(lo_t, hi_t + 1):
                if tj == ci:
                    continue
                target = kept[tj][1]
                negs = []
                for _slot in range(params.negatives):
                    for _attempt in range(kernel.NEGATIVE_ATTEMPTS):
                        cand = int(slots[rng.table_index(tsize)])
                        if cand != target:
                            negs.append(cand)
                            break
                groups.append((target, tuple(negs)))
            if groups:
                yield CenterWork(
                    occurrence=pos, center=center, groups=tuple(groups)
                )


def stream_round_edges(
    worklist: WorkList,
    params: ModelParams,
    seed: int,
    vocab: Vocabulary,
    table: NegativeTable,
) -> Iterator[Sample]:
    """Flatten the stream to ordered samples: each positive, then its
    negatives, centers in slice order."""
    for work in stream_center_work(worklist, params, seed, vocab, table):
        for target, negs in work.groups:
            yield Sample(source=work.center, destination=target, label=1)
            for neg in negs:
                yield Sample(source=work.center, destination=neg, label=0)


def inspect_round(
    worklist: WorkList,
    params: ModelParams,
    seed: int,
    vocab: Vocabulary,
    table: NegativeTable,
    masters: MasterMap,
    host: int,
    label_specific: bool,
) -> MirrorSet:
    """Derive the mirror rows one host needs for one round.

    Replays the round's stream without touching any model state and
    collects accessed nodes per label, minus the host's own masters. With
    label_specific=False both sets collapse to their union.
    """
    e_seen = np.zeros(len(vocab), dtype=np.bool_)
    t_seen = np.zeros(len(vocab), dtype=np.bool_)
    kernel.run_inspection(
        worklist.tokens,
        worklist.offsets,
        discard_probabilities(vocab, params.subsample_threshold),
        params.subsample_threshold > 0.0,
        table.slots,
        params.window,
        params.negatives,
        np.uint64(seed),
        e_seen,
        t_seen,
    )
    lo, hi = masters.range_of(host)
    e_seen[lo:hi] = False
    t_seen[lo:hi] = False
    if not label_specific:
        union = e_seen | t_seen
        nodes = np.flatnonzero(union).astype(np.int64)
        return MirrorSet(e_nodes=nodes, t_nodes=nodes.copy(), label_specific=False)
    return MirrorSet(
        e_nodes=np.flatnonzero(e_seen).astype(np.int64),
        t_nodes=np.flatnonzero(t_seen).astype(np.int64),
        label_specific=True,
    )


def stream_samples_list(
    worklist: WorkList,
    params: ModelParams,
    seed: int,
    vocab: Vocabulary,
    table: NegativeTable,
) -> list[Sample]:
    """Materialized stream, convenience for tests and small tools."""
    return list(stream_round_edges(worklist, params, seed, vocab, table))
