import numpy as np
import pytest

from edgegram.combiner import gc_fold
from edgegram.sync import (
    CombineRule,
    HostState,
    ProtocolError,
    SyncScheme,
    VolumeMeter,
    exchange_mirror_lists,
    pull_broadcast,
    reduce_phase,
    replicate_broadcast,
)
from edgegram.topology import MirrorSet, assign_masters

DIM = 4


def make_hosts(num, vocab=8, seed=0, zeros=False):
    if zeros:
        e = np.zeros((vocab, DIM), dtype=np.float32)
        t = np.zeros((vocab, DIM), dtype=np.float32)
    else:
        rng = np.random.default_rng(seed)
        e = rng.normal(size=(vocab, DIM)).astype(np.float32)
        t = rng.normal(size=(vocab, DIM)).astype(np.float32)
    return [HostState.create(i, e.copy(), t.copy()) for i in range(num)]


def touch(host, label, row, delta):
    """Snapshot row, apply delta, flag it, the way the kernel would."""
    cur, snap, bit = host.arrays(label)
    if not bit[row]:
        snap[row] = cur[row]
        bit[row] = True
    cur[row] += np.asarray(delta, dtype=np.float32)


def test_scheme_flags():
    assert SyncScheme.RMN.replicated and not SyncScheme.RMN.pull
    assert SyncScheme.RMO.replicated and not SyncScheme.RMO.label_specific
    assert SyncScheme.PMB.pull and not SyncScheme.PMB.label_specific
    assert SyncScheme.PMO.pull and SyncScheme.PMO.label_specific


def test_volume_meter_accounting():
    m = VolumeMeter(dim=10)
    m.reduce_message(3, 2)
    m.broadcast_message(1, 0)
    m.id_message(5)
    vec_r, vec_b, ids, total = m.counters()
    assert vec_r == 3
    assert vec_b == 1
    assert ids == 7
    # 4 vectors * 10 dims * 4 bytes + 7 ids * 8 bytes + 3 headers * 16 bytes
    assert total == 160 + 56 + 48


def test_singleton_reduce_restores_exact_value():
    """One flagged row on one host: the master lands exactly on the
    host's current value, no drift through the f64 delta path."""
    masters = assign_masters(8, 2)
    for rule in (CombineRule.GC, CombineRule.AVG):
        hosts = make_hosts(2)
        target = hosts[1].e[2].copy() + np.float32(0.25)
        touch(hosts[1], "e", 2, [0.25] * DIM)
        meter = VolumeMeter(dim=DIM)
        reduce_phase(hosts, masters, rule, SyncScheme.RMO, meter)
        assert np.array_equal(hosts[0].e[2], target)


def test_reduce_combines_with_gc_fold():
    """Owner-first then ascending host order, accumulator projected off
    each incoming delta. Random initial rows, deltas read back from host
    state so float32 rounding cancels exactly."""
    masters = assign_masters(8, 3)
    hosts = make_hosts(3)
    row = np.array([1], dtype=np.int64)
    touch(hosts[0], "t", 1, [1.0, 0.0, 0.0, 0.0])
    touch(hosts[1], "t", 1, [1.0, 1.0, 0.0, 0.0])
    touch(hosts[2], "t", 1, [0.0, 2.0, 0.0, 0.0])
    deltas = [h.delta_for("t", row)[0] for h in hosts]
    base = hosts[0].t_snap[1].astype(np.float64)
    meter = VolumeMeter(dim=DIM)
    result = reduce_phase(hosts, masters, CombineRule.GC, SyncScheme.PMO, meter)
    expected = (base + gc_fold(deltas)[0]).astype(np.float32)
    assert np.array_equal(hosts[0].t[1], expected)
    assert result.combined_rows == 1
    assert result.multi_rows == 1


def test_reduce_avg_rule():
    masters = assign_masters(8, 2)
    hosts = make_hosts(2)
    row = np.array([0], dtype=np.int64)
    touch(hosts[0], "e", 0, [1.0, 1.0, 1.0, 1.0])
    touch(hosts[1], "e", 0, [3.0, 3.0, 3.0, 3.0])
    deltas = [h.delta_for("e", row)[0] for h in hosts]
    base = hosts[0].e_snap[0].astype(np.float64)
    meter = VolumeMeter(dim=DIM)
    reduce_phase(hosts, masters, CombineRule.AVG, SyncScheme.PMO, meter)
    expected = (base + (deltas[0] + deltas[1]) / 2.0).astype(np.float32)
    assert np.array_equal(hosts[0].e[0], expected)


def test_reduce_orthogonality_stats():
    masters = assign_masters(4, 2)
    hosts = make_hosts(2, vocab=4, zeros=True)
    touch(hosts[0], "e", 0, [1.0, 0.0, 0.0, 0.0])
    touch(hosts[1], "e", 0, [0.0, 1.0, 0.0, 0.0])
    touch(hosts[0], "e", 1, [1.0, 0.0, 0.0, 0.0])
    touch(hosts[1], "e", 1, [1.0, 0.0, 0.0, 0.0])
    meter = VolumeMeter(dim=DIM)
    result = reduce_phase(hosts, masters, CombineRule.GC, SyncScheme.PMO, meter)
    # row 0 combines orthogonal deltas (O = 1), row 1 identical ones (O = 1/2)
    assert result.multi_rows == 2
    assert result.orthogonal_rows == 1
    assert result.mean_orthogonality == pytest.approx(0.75, abs=1e-9)
    assert result.frac_orthogonal == pytest.approx(0.5, abs=1e-12)


def test_mean_orthogonality_nan_without_multi_rows():
    masters = assign_masters(4, 1)
    hosts = make_hosts(1, vocab=4)
    touch(hosts[0], "e", 1, [1.0, 0.0, 0.0, 0.0])
    meter = VolumeMeter(dim=DIM)
    result = reduce_phase(hosts, masters, CombineRule.GC, SyncScheme.PMO, meter)
    assert np.isnan(result.mean_orthogonality)
    assert np.isnan(result.frac_orthogonal)
    assert result.combined_rows == 1


def test_pull_rejects_rows_outside_owner_range():
    masters = assign_masters(8, 2)
    hosts = make_hosts(2)
    # hand-built subscription claiming host 0 owns row 5, which it does not
    subs = {
        0: {1: {"e": np.array([5], dtype=np.int64), "t": np.zeros(0, np.int64)}},
        1: {},
    }
    meter = VolumeMeter(dim=DIM)
    with pytest.raises(ProtocolError):
        pull_broadcast(hosts, masters, subs, meter)


def test_rmn_reduce_ships_dense_ranges():
    masters = assign_masters(8, 2)
    hosts = make_hosts(2)
    meter = VolumeMeter(dim=DIM)
    reduce_phase(hosts, masters, CombineRule.GC, SyncScheme.RMN, meter)
    vec_r, _, ids, _ = meter.counters()
    # each host ships the other owner's whole range for both labels,
    # flagged or not: 2 hosts * 4 rows * 2 labels
    assert vec_r == 16
    assert ids == 0


def test_rmo_reduce_ships_only_flagged():
    masters = assign_masters(8, 2)
    hosts = make_hosts(2)
    touch(hosts[1], "e", 0, [1.0, 0.0, 0.0, 0.0])
    touch(hosts[1], "t", 5, [1.0, 0.0, 0.0, 0.0])
    meter = VolumeMeter(dim=DIM)
    reduce_phase(hosts, masters, CombineRule.GC, SyncScheme.RMO, meter)
    vec_r, _, ids, _ = meter.counters()
    assert vec_r == 1
    assert ids == 1


def test_replicate_broadcast_syncs_replicas():
    masters = assign_masters(8, 2)
    for scheme in (SyncScheme.RMN, SyncScheme.RMO):
        hosts = make_hosts(2)
        touch(hosts[1], "e", 1, [2.0, 0.0, 0.0, 0.0])
        meter = VolumeMeter(dim=DIM)
        result = reduce_phase(hosts, masters, CombineRule.GC, scheme, meter)
        replicate_broadcast(hosts, masters, scheme, result.updated, meter)
        assert np.array_equal(hosts[1].e, hosts[0].e)
        assert np.array_equal(hosts[1].t, hosts[0].t)


def test_replicate_broadcast_volume_rmn_vs_rmo():
    masters = assign_masters(8, 2)
    hosts = make_hosts(2)
    touch(hosts[0], "e", 5, [1.0, 0.0, 0.0, 0.0])
    meter_n = VolumeMeter(dim=DIM)
    result = reduce_phase(hosts, masters, CombineRule.GC, SyncScheme.RMN, meter_n)
    replicate_broadcast(hosts, masters, SyncScheme.RMN, result.updated, meter_n)
    # dense: every master row of both labels to the other host
    assert meter_n.counters()[1] == 16

    hosts = make_hosts(2)
    touch(hosts[0], "e", 5, [1.0, 0.0, 0.0, 0.0])
    meter_o = VolumeMeter(dim=DIM)
    result = reduce_phase(hosts, masters, CombineRule.GC, SyncScheme.RMO, meter_o)
    replicate_broadcast(hosts, masters, SyncScheme.RMO, result.updated, meter_o)
    assert meter_o.counters()[1] == 1


def test_exchange_rejects_owned_mirrors():
    masters = assign_masters(8, 2)
    hosts = make_hosts(2)
    hosts[0].mirror = MirrorSet(
        e_nodes=np.array([0], dtype=np.int64),
        t_nodes=np.zeros(0, dtype=np.int64),
        label_specific=True,
    )
    meter = VolumeMeter(dim=DIM)
    with pytest.raises(ProtocolError):
        exchange_mirror_lists(hosts, masters, meter)


def test_pull_delivers_owner_values():
    masters = assign_masters(8, 2)
    hosts = make_hosts(2)
    hosts[0].e[2] = 99.0
    hosts[0].t[3] = -7.0
    hosts[1].mirror = MirrorSet(
        e_nodes=np.array([2], dtype=np.int64),
        t_nodes=np.array([3], dtype=np.int64),
        label_specific=True,
    )
    hosts[0].mirror = MirrorSet(
        e_nodes=np.zeros(0, dtype=np.int64),
        t_nodes=np.zeros(0, dtype=np.int64),
        label_specific=True,
    )
    meter = VolumeMeter(dim=DIM)
    subs = exchange_mirror_lists(hosts, masters, meter)
    pull_broadcast(hosts, masters, subs, meter)
    assert np.array_equal(hosts[1].e[2], hosts[0].e[2])
    assert np.array_equal(hosts[1].t[3], hosts[0].t[3])
    _, vec_b, ids, _ = meter.counters()
    assert vec_b == 2
    assert ids == 2


def test_exchange_id_volume_pmb_union_vs_pmo():
    masters = assign_masters(8, 2)

    def mirrors(label_specific):
        hosts = make_hosts(2)
        same = np.array([2], dtype=np.int64)
        hosts[1].mirror = MirrorSet(e_nodes=same, t_nodes=same.copy(), label_specific=label_specific)
        hosts[0].mirror = MirrorSet(
            e_nodes=np.zeros(0, dtype=np.int64),
            t_nodes=np.zeros(0, dtype=np.int64),
            label_specific=label_specific,
        )
        meter = VolumeMeter(dim=DIM)
        exchange_mirror_lists(hosts, masters, meter)
        return meter.counters()[2]

    # the same node mirrored under both labels costs one id in the union
    # exchange (pmb) and two in the per-label exchange (pmo)
    assert mirrors(False) == 1
    assert mirrors(True) == 2
