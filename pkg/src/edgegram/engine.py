"""Per-host training drivers and the bulk-synchronous run loop.

Every host runs the same loop: for each epoch, for each synchronization
round, stream the round's slice of the work list, apply edge updates, then
synchronize through the configured protocol. One process simulates all
hosts; phases execute host by host between logical barriers, which keeps
the semantics of the distributed schedule while staying deterministic.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import kernel
from .corpus import WorkList, partition_worklist
from .model import Model, ModelParams, init_model, make_schedule
from .rng import derive_seed, round_seed
from .sync import (
    CombineRule,
    HostState,
    SyncScheme,
    VolumeMeter,
    exchange_mirror_lists,
    pull_broadcast,
    reduce_phase,
    replicate_broadcast,
)
from .topology import MasterMap, assign_masters, inspect_round, stream_center_work
from .vocab import (
    NegativeTable,
    Vocabulary,
    build_negative_table,
    discard_probabilities,
)

# Measured sweet spots for synchronization frequency by host count; other
# host counts scale at 1.5 rounds per host, rounded half up.
SYNC_ROUNDS_TABLE = {1: 1, 2: 3, 4: 6, 8: 12, 16: 24, 32: 48}

DETERMINISTIC = "deterministic"
RACY = "racy"

LOSS_SAMPLE_EVERY = 100


def auto_sync_rounds(hosts: int) -> int:
    if hosts < 1:
        raise ValueError(f"hosts must be >= 1, got {hosts}")
    if hosts in SYNC_ROUNDS_TABLE:
        return SYNC_ROUNDS_TABLE[hosts]
    return max(1, int(1.5 * hosts + 0.5))


@dataclass
class RunConfig:
    """Everything a training run needs besides the corpus artifacts."""

    params: ModelParams = field(default_factory=ModelParams)
    hosts: int = 1
    sync_rounds: int | None = None
    scheme: SyncScheme = SyncScheme.PMO
    combiner: CombineRule = CombineRule.GC
    compute_mode: str = DETERMINISTIC
    threads_per_host: int = 1
    seed: int = 1
    loss_sample_every: int = LOSS_SAMPLE_EVERY

    def validate(self) -> None:
        self.params.validate()
        self.scheme = SyncScheme(self.scheme)
        self.combiner = CombineRule(self.combiner)
        if self.hosts < 1:
            raise ValueError(f"hosts must be >= 1, got {self.hosts}")
        if self.sync_rounds is not None and self.sync_rounds < 1:
            raise ValueError(f"sync_rounds must be >= 1, got {self.sync_rounds}")
        if self.compute_mode not in (DETERMINISTIC, RACY):
            raise ValueError(f"unknown compute_mode {self.compute_mode!r}")
        if self.threads_per_host < 1:
            raise ValueError(
                f"threads_per_host must be >= 1, got {self.threads_per_host}"
            )
        if self.compute_mode == DETERMINISTIC and self.threads_per_host != 1:
            raise ValueError(
                "deterministic mode runs one worker per host; "
                "use compute_mode='racy' for threads_per_host > 1"
            )
        if self.loss_sample_every < 1:
            raise ValueError("loss_sample_every must be >= 1")

    def resolved_rounds(self) -> int:
        return self.sync_rounds if self.sync_rounds else auto_sync_rounds(self.hosts)


@dataclass
class RoundRecord:
    """One metrics row per (epoch, round)."""

    epoch: int
    round: int
    scheme: str
    combiner: str
    inspect_s: float
    compute_s: float
    comm_s: float
    loss_mean: float
    loss_samples: int
    mean_orthogonality: float
    frac_orthogonal: float
    combined_rows: int
    zero_norm_fallbacks: int
    reduce_vectors: int
    broadcast_vectors: int
    id_count: int
    bytes: int


METRICS_COLUMNS = [f.name for f in RoundRecord.__dataclass_fields__.values()]


@dataclass
class RunMetrics:
    """All per-round records of a run, exportable as a versioned CSV."""

    records: list[RoundRecord] = field(default_factory=list)

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("#v1\n")
            fh.write(",".join(METRICS_COLUMNS) + "\n")
            for rec in self.records:
                cells = []
                for name in METRICS_COLUMNS:
                    value = getattr(rec, name)
                    if isinstance(value, float):
                        cells.append(f"{value:.9g}")
                    else:
                        cells.append(str(value))
                fh.write(",".join(cells) + "\n")

    def epoch_mean_orthogonality(self, epoch: int) -> float:
        vals = [
            r.mean_orthogonality
            for r in self.records
            if r.epoch == epoch and not np.isnan(r.mean_orthogonality)
        ]
        return float(np.mean(vals)) if vals else float("nan")


def write_manifest(path: str, entries: dict[str, object]) -> None:
    """Flat key=value run manifest; values stringified, one per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}: malformed manifest line {line!r}")
            entries[key] = value
    return entries


def snapshot_model(hosts: list[HostState], masters: MasterMap, dim: int) -> Model:
    """Assemble the canonical model from every owner's master rows."""
    num = masters.num_nodes
    e = np.zeros((num, dim), dtype=np.float32)
    t = np.zeros((num, dim), dtype=np.float32)
    for host in hosts:
        lo, hi = masters.range_of(host.index)
        e[lo:hi] = host.e[lo:hi]
        t[lo:hi] = host.t[lo:hi]
    return Model(e, t)


def run(
    vocab: Vocabulary,
    worklist: WorkList,
    config: RunConfig,
    table: NegativeTable | None = None,
    log=None,
) -> tuple[Model, RunMetrics]:
    """Train under the configured simulated cluster; returns the canonical
    model assembled from master rows plus the per-round metrics."""
    config.validate()
    params = config.params
    if table is None:
        table = build_negative_table(vocab)
    num_hosts = config.hosts
    rounds = config.resolved_rounds()
    masters = assign_masters(len(vocab), num_hosts)

    host_slices = partition_worklist(worklist, num_hosts)
    round_slices = [partition_worklist(sl, rounds) for sl in host_slices]
    round_occ = [
        sum(len(round_slices[h][s]) for h in range(num_hosts))
        for s in range(rounds)
    ]
    prefix_occ = np.concatenate(([0], np.cumsum(round_occ))).astype(np.int64)
    total_occ = len(worklist)

    sched = make_schedule(params, total_occ)
    total_plus1 = float(sched.total_updates + 1)

    model0 = init_model(len(vocab), params.dim, config.seed)
    hosts = [
        HostState.create(i, model0.embedding.copy(), model0.training.copy())
        for i in range(num_hosts)
    ]
    del model0

    discard = discard_probabilities(vocab, params.subsample_threshold)
    use_sub = params.subsample_threshold > 0.0
    meter = VolumeMeter(dim=params.dim)
    metrics = RunMetrics()

    for epoch in range(params.epochs):
        for s in range(rounds):
            volume_before = meter.counters()
            inspect_s = 0.0
            comm_s = 0.0
            compute_s = 0.0

            if config.scheme.pull:
                for host in hosts:
                    t0 = time.perf_counter()
                    host.mirror = inspect_round(
                        round_slices[host.index][s],
                        params,
                        round_seed(config.seed, host.index, epoch, s),
                        vocab,
                        table,
                        masters,
                        host.index,
                        config.scheme.label_specific,
                    )
                    inspect_s = max(inspect_s, time.perf_counter() - t0)
                t0 = time.perf_counter()
                subscriptions = exchange_mirror_lists(hosts, masters, meter)
                pull_broadcast(hosts, masters, subscriptions, meter)
                comm_s += time.perf_counter() - t0

            base = epoch * total_occ + int(prefix_occ[s])
            loss_sum = 0.0
            loss_count = 0.0
            for host in hosts:
                host.reset_round()
                t0 = time.perf_counter()
                ls, lc = _compute_round(
                    host,
                    round_slices[host.index][s],
                    params,
                    round_seed(config.seed, host.index, epoch, s),
                    discard,
                    use_sub,
                    table,
                    sched.alpha0,
                    sched.floor,
                    total_plus1,
                    base,
                    num_hosts,
                    config,
                )
                compute_s = max(compute_s, time.perf_counter() - t0)
                loss_sum += ls
                loss_count += lc

            t0 = time.perf_counter()
            reduced = reduce_phase(hosts, masters, config.combiner, config.scheme, meter)
            if config.scheme.replicated:
                replicate_broadcast(hosts, masters, config.scheme, reduced.updated, meter)
            comm_s += time.perf_counter() - t0

            dv = np.subtract(meter.counters(), volume_before)
            metrics.records.append(
                RoundRecord(
                    epoch=epoch,
                    round=s,
                    scheme=config.scheme.value,
                    combiner=config.combiner.value,
                    inspect_s=inspect_s,
                    compute_s=compute_s,
                    comm_s=comm_s,
                    loss_mean=(loss_sum / loss_count) if loss_count else float("nan"),
                    loss_samples=int(loss_count),
                    mean_orthogonality=reduced.mean_orthogonality,
                    frac_orthogonal=reduced.frac_orthogonal,
                    combined_rows=reduced.combined_rows,
                    zero_norm_fallbacks=reduced.zero_norm_fallbacks,
                    reduce_vectors=int(dv[0]),
                    broadcast_vectors=int(dv[1]),
                    id_count=int(dv[2]),
                    bytes=int(dv[3]),
                )
            )
            if log is not None:
                log(metrics.records[-1])

    return snapshot_model(hosts, masters, params.dim), metrics


def _compute_round(
    host: HostState,
    worklist: WorkList,
    params: ModelParams,
    seed: int,
    discard: np.ndarray,
    use_sub: bool,
    table: NegativeTable,
    alpha0: float,
    alpha_floor: float,
    total_plus1: float,
    base: int,
    stride: int,
    config: RunConfig,
) -> tuple[float, float]:
    """Apply one host's round slice; returns (loss_sum, loss_count)."""
    if config.compute_mode == DETERMINISTIC or config.threads_per_host == 1:
        loss_stats = np.zeros(2, dtype=np.float64)
        counter = np.zeros(1, dtype=np.int64)
        kernel.run_round(
            worklist.tokens,
            worklist.offsets,
            host.e,
            host.t,
            host.e_bit,
            host.t_bit,
            host.e_snap,
            host.t_snap,
            discard,
            use_sub,
            table.slots,
            params.window,
            params.negatives,
            np.uint64(seed),
            alpha0,
            alpha_floor,
            total_plus1,
            np.int64(base),
            np.int64(stride),
            True,
            config.loss_sample_every,
            loss_stats,
            counter,
        )
        return float(loss_stats[0]), float(loss_stats[1])

    # Racy mode: threads share the host's arrays without locks, Hogwild
    # style. Each thread streams its own contiguous sub-slice with its own
    # seed; row snapshots may interleave, so deltas are approximate.
    parts = partition_worklist(worklist, config.threads_per_host)
    offsets = np.concatenate(([0], np.cumsum([len(p) for p in parts])))
    stats = [np.zeros(2, dtype=np.float64) for _ in parts]
    counters = [np.zeros(1, dtype=np.int64) for _ in parts]

    def work(ti: int) -> None:
        kernel.run_round(
            parts[ti].tokens,
            parts[ti].offsets,
            host.e,
            host.t,
            host.e_bit,
            host.t_bit,
            host.e_snap,
            host.t_snap,
            discard,
            use_sub,
            table.slots,
            params.window,
            params.negatives,
            np.uint64(derive_seed(seed, 9, ti)),
            alpha0,
            alpha_floor,
            total_plus1,
            np.int64(base + int(offsets[ti]) * stride),
            np.int64(stride),
            True,
            config.loss_sample_every,
            stats[ti],
            counters[ti],
        )

    with ThreadPoolExecutor(max_workers=config.threads_per_host) as pool:
        list(pool.map(work, range(config.threads_per_host)))
    return (
        float(sum(s[0] for s in stats)),
        float(sum(s[1] for s in stats)),
    )


def sequential_reference(
    vocab: Vocabulary,
    worklist: WorkList,
    params: ModelParams,
    seed: int,
    table: NegativeTable | None = None,
) -> Model:
    """Plain sequential SGD over the same seeded sample stream.

    No hosts, no partitioning, no synchronization: a flat loop over the
    stream the single-host engine would generate, applying each center's
    groups in order. The engine at one host and one round must match this
    loop bit for bit; the acceptance suite holds them together.
    """
    params.validate()
    if table is None:
        table = build_negative_table(vocab)
    model = init_model(len(vocab), params.dim, seed)
    sched = make_schedule(params, len(worklist))
    total_plus1 = float(sched.total_updates + 1)
    total_occ = len(worklist)
    negs_buf = np.empty(max(params.negatives, 1), dtype=np.int64)
    no_loss = np.zeros(2, dtype=np.float64)
    no_count = np.zeros(1, dtype=np.int64)
    empty_bit = np.empty(0, dtype=np.bool_)
    empty_snap = np.empty((0, 0), dtype=np.float32)
    for epoch in range(params.epochs):
        stream = stream_center_work(
            worklist, params, round_seed(seed, 0, epoch, 0), vocab, table
        )
        for work in stream:
            processed = np.float64(epoch * total_occ + work.occurrence)
            alpha = sched.alpha0 * (1.0 - processed / total_plus1)
            if alpha < sched.floor:
                alpha = sched.floor
            for target, negs in work.groups:
                n = len(negs)
                negs_buf[:n] = negs
                kernel.apply_group(
                    model.embedding,
                    model.training,
                    work.center,
                    target,
                    negs_buf,
                    n,
                    float(alpha),
                    False,
                    empty_bit,
                    empty_bit,
                    empty_snap,
                    empty_snap,
                    0,
                    no_loss,
                    no_count,
                )
    return model


def iter_schemes(names: Iterable[str]) -> list[SyncScheme]:
    return [SyncScheme(name) for name in names]
