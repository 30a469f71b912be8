"""Bulk-synchronous row exchange between simulated hosts.

After each compute round, every mirror's accumulated change travels to the
owning host as a delta (round-end minus round-start value, widened to
float64), the owner combines the deltas it received with its own and adds
the result to the canonical row, and fresh values flow back out. Four
protocols trade volume for bookkeeping:

  rmn  replicate everything, ship every mirror row and every master row
       each round; unchanged rows are redundant traffic.
  rmo  replicate everything, but ship only bitmap-flagged rows during
       reduce and only globally-updated rows during broadcast (ids ride
       along with each sparse row).
  pmb  pull what the next round's inspection says the host will touch;
       node-level sets, both labels shipped per mirrored node. Node ids
       are paid once, during the mirror-list exchange.
  pmo  like pmb but label-specific: embedding rows go only where a node is
       read as a source, training rows only where it is a destination.

All four protocols feed the combiner identical delta lists (a flag bit
rides with rmn's dense rows at no accounted cost), so with a fixed
combiner they produce identical models; only the traffic differs.

Accounted bytes per message: vectors * dim * 4 + ids * 8 + 16 for the
header. A message is one (sender, receiver, phase, label) bundle that
carries at least one vector or id.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .combiner import ZERO_NORM_EPS, gc_pair_rows
from .topology import MasterMap, MirrorSet

HEADER_BYTES = 16
ID_BYTES = 8
VALUE_BYTES = 4

ORTHOGONAL_CUTOFF = 0.9


class SyncScheme(str, enum.Enum):
    RMN = "rmn"
    RMO = "rmo"
    PMB = "pmb"
    PMO = "pmo"

    @property
    def replicated(self) -> bool:
        return self in (SyncScheme.RMN, SyncScheme.RMO)

    @property
    def pull(self) -> bool:
        return not self.replicated

    @property
    def label_specific(self) -> bool:
        return self is SyncScheme.PMO


class CombineRule(str, enum.Enum):
    GC = "gc"
    AVG = "avg"


class ProtocolError(AssertionError):
    """A row was routed to a host that must not receive it."""


@dataclass
class VolumeMeter:
    """Communication accounting, in vectors, ids and bytes."""

    dim: int
    reduce_vectors: int = 0
    broadcast_vectors: int = 0
    id_count: int = 0
    bytes: int = 0

    def reduce_message(self, vectors: int, ids: int) -> None:
        if vectors == 0 and ids == 0:
            return
        self.reduce_vectors += vectors
        self._account(vectors, ids)

    def broadcast_message(self, vectors: int, ids: int) -> None:
        if vectors == 0 and ids == 0:
            return
        self.broadcast_vectors += vectors
        self._account(vectors, ids)

    def id_message(self, ids: int) -> None:
        if ids == 0:
            return
        self._account(0, ids)

    def _account(self, vectors: int, ids: int) -> None:
        self.id_count += ids
        self.bytes += vectors * self.dim * VALUE_BYTES + ids * ID_BYTES + HEADER_BYTES

    def counters(self) -> tuple[int, int, int, int]:
        return (self.reduce_vectors, self.broadcast_vectors, self.id_count, self.bytes)


@dataclass
class HostState:
    """One simulated host: full-size row arrays plus round-local tracking.

    Pull protocols logically hold only master plus mirror rows; the arrays
    are still full-size for simplicity and the access discipline is
    enforced by inspection tests, not by storage.
    """

    index: int
    e: np.ndarray
    t: np.ndarray
    e_bit: np.ndarray
    t_bit: np.ndarray
    e_snap: np.ndarray
    t_snap: np.ndarray
    mirror: MirrorSet | None = None

    @classmethod
    def create(cls, index: int, e: np.ndarray, t: np.ndarray) -> "HostState":
        num, dim = e.shape
        return cls(
            index=index,
            e=e,
            t=t,
            e_bit=np.zeros(num, dtype=np.bool_),
            t_bit=np.zeros(num, dtype=np.bool_),
            e_snap=np.zeros((num, dim), dtype=np.float32),
            t_snap=np.zeros((num, dim), dtype=np.float32),
        )

    def arrays(self, label: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(current, snapshot, bitmap) for one label."""
        if label == "e":
            return self.e, self.e_snap, self.e_bit
        if label == "t":
            return self.t, self.t_snap, self.t_bit
        raise ValueError(f"unknown label {label!r}")

    def reset_round(self) -> None:
        self.e_bit[:] = False
        self.t_bit[:] = False

    def flagged_in(self, label: str, lo: int, hi: int) -> np.ndarray:
        _, _, bit = self.arrays(label)
        rows = np.flatnonzero(bit[lo:hi]).astype(np.int64)
        return rows + lo

    def delta_for(self, label: str, rows: np.ndarray) -> np.ndarray:
        cur, snap, _ = self.arrays(label)
        return cur[rows].astype(np.float64) - snap[rows].astype(np.float64)


@dataclass
class ReduceResult:
    """Combine statistics and the per-label globally-updated flags."""

    updated: dict[str, np.ndarray]
    combined_rows: int = 0
    multi_rows: int = 0
    orthogonal_rows: int = 0
    orthogonality_sum: float = 0.0
    zero_norm_fallbacks: int = 0

    @property
    def mean_orthogonality(self) -> float:
        if self.multi_rows == 0:
            return float("nan")
        return self.orthogonality_sum / self.multi_rows

    @property
    def frac_orthogonal(self) -> float:
        if self.multi_rows == 0:
            return float("nan")
        return self.orthogonal_rows / self.multi_rows


def reduce_phase(
    hosts: list[HostState],
    masters: MasterMap,
    rule: CombineRule,
    scheme: SyncScheme,
    meter: VolumeMeter,
) -> ReduceResult:
    """Ship mirror deltas to their masters and combine them.

    For every master row the owner builds the delta list [own delta if
    flagged] + [flagged remote deltas in ascending host id order], combines
    it with the configured rule, and adds the result to the row's
    round-start value. The gradient-combining fold runs regardless of the
    rule so the orthogonality trend is always observable.
    """
    num_nodes = masters.num_nodes
    result = ReduceResult(
        updated={
            "e": np.zeros(num_nodes, dtype=np.bool_),
            "t": np.zeros(num_nodes, dtype=np.bool_),
        }
    )
    for label in ("e", "t"):
        for owner in hosts:
            lo, hi = masters.range_of(owner.index)
            if hi == lo:
                continue
            contributions: list[tuple[int, np.ndarray]] = []
            order = [owner.index] + [
                h.index for h in hosts if h.index != owner.index
            ]
            for sender_idx in sorted(order[1:]):
                sender = hosts[sender_idx]
                rows = sender.flagged_in(label, lo, hi)
                if scheme is SyncScheme.RMN:
                    meter.reduce_message(hi - lo, 0)
                elif scheme is SyncScheme.RMO:
                    meter.reduce_message(len(rows), len(rows))
                else:
                    meter.reduce_message(len(rows), 0)
                if len(rows):
                    contributions.append((sender_idx, rows))
            local_rows = owner.flagged_in(label, lo, hi)
            ordered = ([(owner.index, local_rows)] if len(local_rows) else []) + [
                (idx, rows) for idx, rows in sorted(contributions)
            ]
            if not ordered:
                continue
            _combine_rows(hosts, owner, label, ordered, rule, result, lo, hi)
    return result


def _combine_rows(
    hosts: list[HostState],
    owner: HostState,
    label: str,
    ordered: list[tuple[int, np.ndarray]],
    rule: CombineRule,
    result: ReduceResult,
    lo: int,
    hi: int,
) -> None:
    union = np.unique(np.concatenate([rows for _, rows in ordered]))
    if union[0] < lo or union[-1] >= hi:
        raise ProtocolError(
            f"delta rows outside master range [{lo}, {hi}) reached host {owner.index}"
        )
    n_rows = len(union)
    dim = owner.e.shape[1]
    acc = np.zeros((n_rows, dim), dtype=np.float64)
    started = np.zeros(n_rows, dtype=np.bool_)
    fallbacks = np.zeros(n_rows, dtype=np.bool_)
    count = np.zeros(n_rows, dtype=np.int64)
    norm_sq_sum = np.zeros(n_rows, dtype=np.float64)
    if rule is CombineRule.AVG:
        total = np.zeros((n_rows, dim), dtype=np.float64)

    for sender_idx, rows in ordered:
        delta = hosts[sender_idx].delta_for(label, rows)
        idx = np.searchsorted(union, rows)
        fresh = ~started[idx]
        fresh_idx = idx[fresh]
        acc[fresh_idx] = delta[fresh]
        started[idx] = True
        follow = ~fresh
        if follow.any():
            follow_idx = idx[follow]
            mask = np.ones(len(follow_idx), dtype=np.bool_)
            fb = np.zeros(len(follow_idx), dtype=np.bool_)
            acc[follow_idx] = gc_pair_rows(acc[follow_idx], delta[follow], mask, fb)
            fallbacks[follow_idx] |= fb
        count[idx] += 1
        norm_sq_sum[idx] += np.einsum("ij,ij->i", delta, delta)
        if rule is CombineRule.AVG:
            total[idx] += delta

    combined = acc if rule is CombineRule.GC else total / count[:, None]

    cur, snap, bit = owner.arrays(label)
    local_flag = bit[union]
    base = np.where(
        local_flag[:, None], snap[union].astype(np.float64), cur[union].astype(np.float64)
    )
    cur[union] = (base + combined).astype(np.float32)

    result.updated[label][union] = True
    result.combined_rows += n_rows
    multi = count >= 2
    if multi.any():
        acc_norm = np.einsum("ij,ij->i", acc[multi], acc[multi])
        denom = norm_sq_sum[multi]
        orth = np.where(denom > 0.0, acc_norm / np.where(denom > 0.0, denom, 1.0), 1.0)
        result.multi_rows += int(multi.sum())
        result.orthogonality_sum += float(orth.sum())
        result.orthogonal_rows += int((orth > ORTHOGONAL_CUTOFF).sum())
    result.zero_norm_fallbacks += int(fallbacks.sum())


def replicate_broadcast(
    hosts: list[HostState],
    masters: MasterMap,
    scheme: SyncScheme,
    updated: dict[str, np.ndarray],
    meter: VolumeMeter,
) -> None:
    """Send canonical master rows back to every replica.

    rmn ships every master row each round; rmo only the rows some host
    updated, paying one id per row.
    """
    if not scheme.replicated:
        raise ValueError(f"replicate_broadcast called with {scheme}")
    for label in ("e", "t"):
        for owner in hosts:
            lo, hi = masters.range_of(owner.index)
            if hi == lo:
                continue
            if scheme is SyncScheme.RMN:
                rows = np.arange(lo, hi, dtype=np.int64)
                ids = 0
            else:
                rows = np.flatnonzero(updated[label][lo:hi]).astype(np.int64) + lo
                ids = len(rows)
            cur, _, _ = owner.arrays(label)
            values = cur[rows].copy()
            for receiver in hosts:
                if receiver.index == owner.index:
                    continue
                meter.broadcast_message(len(rows), ids)
                if len(rows):
                    rcur, _, _ = receiver.arrays(label)
                    rcur[rows] = values


def exchange_mirror_lists(
    hosts: list[HostState],
    masters: MasterMap,
    meter: VolumeMeter,
) -> dict[int, dict[int, dict[str, np.ndarray]]]:
    """Tell each owner which rows each host will mirror this round.

    Returns subscriptions[owner][host][label] = sorted node ids. Ids are
    the only payload; label-agnostic sets (pmb) pay each node once,
    label-specific sets (pmo) pay per (label, node) entry.
    """
    subscriptions: dict[int, dict[int, dict[str, np.ndarray]]] = {
        h.index: {} for h in hosts
    }
    for host in hosts:
        mirror = host.mirror
        if mirror is None:
            raise ValueError(f"host {host.index} has no mirror set to exchange")
        owners_e = _group_by_owner(mirror.e_nodes, masters)
        owners_t = _group_by_owner(mirror.t_nodes, masters)
        for owner_idx in sorted(set(owners_e) | set(owners_t)):
            e_rows = owners_e.get(owner_idx, np.empty(0, np.int64))
            t_rows = owners_t.get(owner_idx, np.empty(0, np.int64))
            if owner_idx == host.index:
                raise ProtocolError(
                    f"host {host.index} lists its own master rows as mirrors"
                )
            subscriptions[owner_idx][host.index] = {"e": e_rows, "t": t_rows}
            if mirror.label_specific:
                meter.id_message(len(e_rows) + len(t_rows))
            else:
                meter.id_message(len(e_rows))
    return subscriptions


def _group_by_owner(nodes: np.ndarray, masters: MasterMap) -> dict[int, np.ndarray]:
    if len(nodes) == 0:
        return {}
    owner_of = np.searchsorted(masters.bounds, nodes, side="right") - 1
    return {
        int(o): nodes[owner_of == o].astype(np.int64) for o in np.unique(owner_of)
    }


def pull_broadcast(
    hosts: list[HostState],
    masters: MasterMap,
    subscriptions: dict[int, dict[int, dict[str, np.ndarray]]],
    meter: VolumeMeter,
) -> None:
    """Send current master values for every subscribed row.

    Runs at the start of a round, right after inspection: the pull
    protocols broadcast all subscribed rows regardless of update status,
    which is what makes stale mirrors impossible without update tracking.
    """
    for owner in hosts:
        subs = subscriptions.get(owner.index, {})
        lo, hi = masters.range_of(owner.index)
        for receiver_idx, per_label in sorted(subs.items()):
            receiver = hosts[receiver_idx]
            for label in ("e", "t"):
                rows = per_label[label]
                if len(rows) == 0:
                    continue
                if rows[0] < lo or rows[-1] >= hi:
                    raise ProtocolError(
                        f"host {receiver_idx} subscribed rows outside host "
                        f"{owner.index} master range"
                    )
                cur, _, _ = owner.arrays(label)
                values = cur[rows].copy()
                rcur, _, _ = receiver.arrays(label)
                rcur[rows] = values
                meter.broadcast_message(len(rows), 0)
