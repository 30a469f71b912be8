"""End-to-end acceptance checks.

One test per numbered criterion; each reports a single verdict line in the
terminal summary (see conftest). The desk-scale parity runs share one
session-scoped fixture so the corpus is trained once per configuration.
"""

import math
import os
import subprocess
import time

import numpy as np
import pytest

import edgegram as eg
import synthdata
from conftest import record_acceptance
from edgegram.combiner import gc_fold, gc_pair_rows, orthogonality
from edgegram.corpus import read_tokens, worklist_from_tokens
from edgegram.engine import RunConfig, sequential_reference
from edgegram.model import Model, ModelParams, Sample, edge_gradient
from edgegram.sync import CombineRule, SyncScheme

CACHE_DIR = os.path.join(os.path.dirname(__file__), ".cache")


def verdict(number: int, description: str, ok: bool, detail: str = "") -> None:
    record_acceptance(number, description, bool(ok))
    assert ok, f"criterion {number} failed: {detail or description}"


def test_criterion_01_projection_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    count = 100_000
    failures = []
    for dim in (2, 8, 200):
        g1 = rng.normal(size=(count, dim)) * 10.0 ** rng.uniform(-2, 2, (count, 1))
        g2 = rng.normal(size=(count, dim)) * 10.0 ** rng.uniform(-2, 2, (count, 1))
        mask = np.ones(count, dtype=np.bool_)
        fallback = np.zeros(count, dtype=np.bool_)
        combined = gc_pair_rows(g1, g2, mask, fallback)
        proj = combined - g2
        n1 = np.linalg.norm(g1, axis=1)
        n2 = np.linalg.norm(g2, axis=1)
        keeps_sign = np.einsum("ij,ij->i", g1, proj) >= -1e-9
        shrinks = np.linalg.norm(proj, axis=1) <= n1 + 1e-9
        ortho = np.abs(np.einsum("ij,ij->i", g2, proj)) <= 1e-6 * n1 * n2
        for name, okvec in (("sign", keeps_sign), ("norm", shrinks), ("ortho", ortho)):
            if not okvec.all():
                failures.append(f"dim {dim}: {name} fails {int((~okvec).sum())} pairs")
        if fallback.any():
            failures.append(f"dim {dim}: unexpected zero-norm fallback")
    elapsed = time.perf_counter() - t0
    if elapsed >= 10.0:
        failures.append(f"took {elapsed:.1f}s")
    verdict(
        1,
        "projected gradient keeps sign, shrinks, and is orthogonal "
        "(3x100k random pairs, dims 2/8/200)",
        not failures,
        "; ".join(failures),
    )


def test_criterion_02_fold_norm_bound():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = -np.inf
    for _ in range(10_000):
        k = int(rng.integers(1, 33))
        grads = list(rng.normal(size=(k, 8)))
        combined, _ = gc_fold(grads)
        excess = float(np.dot(combined, combined)) - sum(
            float(np.dot(g, g)) for g in grads
        )
        worst = max(worst, excess)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 10.0
    verdict(
        2,
        "combined norm stays within the summed squared norms (10k folds, k<=32)",
        ok,
        f"worst excess {worst:.3g}, {elapsed:.1f}s",
    )


def test_criterion_03_orthogonality_endpoints():
    rng = np.random.default_rng(303)
    failures = []
    for dim in (2, 8, 64):
        for _ in range(50):
            g = rng.normal(size=dim)
            if abs(orthogonality(g, g) - 0.5) > 1e-9:
                failures.append(f"identical pair dim {dim}")
            a = rng.normal(size=dim)
            b = rng.normal(size=dim)
            b = b - (np.dot(a, b) / np.dot(a, a)) * a
            if abs(orthogonality(a, b) - 1.0) > 1e-9:
                failures.append(f"orthogonal pair dim {dim}")
        for k in (2, 3, 5, 8, 16):
            g = rng.normal(size=dim)
            _, stats = gc_fold([g] * k)
            if abs(stats.orthogonality - 1.0 / k) > 1e-9:
                failures.append(f"k={k} fold dim {dim}")
    verdict(
        3,
        "orthogonality metric endpoints: 0.5 identical, 1.0 orthogonal, 1/k repeated",
        not failures,
        "; ".join(failures[:5]),
    )


def test_criterion_04_gradients_match_finite_differences():
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    dim = 8
    h = 1e-6
    worst = 0.0
    for trial in range(1000):
        e = rng.normal(scale=0.5, size=(2, dim)).astype(np.float32)
        t = rng.normal(scale=0.5, size=(2, dim)).astype(np.float32)
        label = trial % 2
        grad_e, grad_t = edge_gradient(Model(e, t), Sample(0, 1, label))

        def loss_at(e_row, t_row):
            p = 1.0 / (1.0 + math.exp(-float(np.dot(e_row, t_row))))
            return -math.log(max(1.0 - abs(label - p), 1e-12))

        e64 = e[0].astype(np.float64)
        t64 = t[1].astype(np.float64)
        for j in range(dim):
            bump = np.zeros(dim)
            bump[j] = h
            fd_e = (loss_at(e64 + bump, t64) - loss_at(e64 - bump, t64)) / (2 * h)
            fd_t = (loss_at(e64, t64 + bump) - loss_at(e64, t64 - bump)) / (2 * h)
            scale = max(1.0, abs(fd_e), abs(fd_t))
            worst = max(
                worst, abs(grad_e[j] - fd_e) / scale, abs(grad_t[j] - fd_t) / scale
            )
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-5 and elapsed < 30.0
    verdict(
        4,
        "analytic edge gradients match central differences (1000 samples)",
        ok,
        f"worst relative error {worst:.3g}, {elapsed:.1f}s",
    )


def test_criterion_05_sequential_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(550)
    tokens = [f"t{i}" for i in rng.integers(0, 500, size=100_000)]
    vocab = eg.build_vocabulary(tokens, min_count=1)
    worklist = worklist_from_tokens(tokens, vocab)
    table = eg.build_negative_table(vocab)
    params = ModelParams(
        dim=32, window=5, negatives=5, alpha=0.025, subsample_threshold=1e-4, epochs=1
    )
    cfg = RunConfig(params=params, hosts=1, sync_rounds=1, seed=1234)
    model, _ = eg.run(vocab, worklist, cfg, table)
    ref = sequential_reference(vocab, worklist, params, seed=1234, table=table)
    same_e = np.array_equal(model.embedding, ref.embedding)
    same_t = np.array_equal(model.training, ref.training)
    elapsed = time.perf_counter() - t0
    ok = same_e and same_t and elapsed < 60.0
    verdict(
        5,
        "one host, one round is bit-identical to the sequential loop (100k tokens, dim 32)",
        ok,
        f"embedding equal {same_e}, training equal {same_t}, {elapsed:.1f}s",
    )


def test_criterion_06_scheme_equivalence_and_volume():
    rng = np.random.default_rng(660)
    tokens = [f"t{i}" for i in rng.integers(0, 60, size=4000)]
    vocab = eg.build_vocabulary(tokens, min_count=1)
    worklist = worklist_from_tokens(tokens, vocab)
    table = eg.build_negative_table(vocab)
    params = ModelParams(
        dim=16, window=3, negatives=4, alpha=0.05, subsample_threshold=0.0, epochs=2
    )
    models = {}
    metrics = {}
    for scheme in SyncScheme:
        cfg = RunConfig(
            params=params,
            hosts=4,
            sync_rounds=3,
            scheme=scheme,
            combiner=CombineRule.AVG,
            seed=31,
        )
        models[scheme], metrics[scheme] = eg.run(vocab, worklist, cfg, table)

    failures = []
    base = models[SyncScheme.RMN]
    for scheme, model in models.items():
        diff = max(
            float(np.max(np.abs(model.embedding - base.embedding))),
            float(np.max(np.abs(model.training - base.training))),
        )
        if diff > 1e-5:
            failures.append(f"{scheme.value} differs by {diff:.3g}")

    per_round = {
        s: {(r.epoch, r.round): r for r in metrics[s].records} for s in SyncScheme
    }
    for key, rmn_rec in per_round[SyncScheme.RMN].items():
        rmo_rec = per_round[SyncScheme.RMO][key]
        if (
            rmo_rec.reduce_vectors + rmo_rec.broadcast_vectors
            > rmn_rec.reduce_vectors + rmn_rec.broadcast_vectors
        ):
            failures.append(f"rmo volume above rmn in round {key}")
    for key, pmb_rec in per_round[SyncScheme.PMB].items():
        pmo_rec = per_round[SyncScheme.PMO][key]
        if pmo_rec.broadcast_vectors > pmb_rec.broadcast_vectors:
            failures.append(f"pmo broadcast above pmb in round {key}")

    verdict(
        6,
        "four sync schemes agree within 1e-5 and obey per-round volume ordering",
        not failures,
        "; ".join(failures[:5]),
    )


def test_criterion_07_convex_convergence_and_divergence():
    rng = np.random.default_rng(123)
    X = rng.normal(size=(20, 4))
    w_star = rng.normal(size=4)
    y = X @ w_star
    order = rng.integers(0, 20, size=(10_000, 8))
    alpha = 0.05
    w = np.zeros(4)
    steps = None
    for step in range(10_000):
        grads = [(float(X[j] @ w - y[j])) * X[j] for j in order[step]]
        w = w - alpha * gc_fold(grads)[0]
        if float(np.linalg.norm(w - w_star)) <= 1e-3:
            steps = step + 1
            break
    converged = steps is not None

    g = rng.normal(size=6)
    fold_step = alpha * gc_fold([g] * 8)[0]
    identical_exact = np.array_equal(fold_step, alpha * g)

    # quadratic loss 0.5 * w^2 at the sequential stability limit: one
    # gradient per step converges, eight summed copies explode
    alpha_limit = 1.9
    w_combined = np.array([1.0])
    w_summed = np.array([1.0])
    for _ in range(100):
        w_combined = w_combined - alpha_limit * gc_fold([w_combined.copy()] * 8)[0]
        w_summed = w_summed - alpha_limit * 8 * w_summed
    combined_ok = abs(float(w_combined[0])) < 1e-3
    summed_diverges = abs(float(w_summed[0])) > 1e10

    ok = converged and identical_exact and combined_ok and summed_diverges
    verdict(
        7,
        "combined least-squares steps converge; identical folds step exactly "
        "once; summed steps diverge at the stability limit",
        ok,
        f"converged={converged} (steps {steps}), identical_exact={identical_exact}, "
        f"combined |w|={abs(float(w_combined[0])):.3g}, "
        f"summed |w|={abs(float(w_summed[0])):.3g}",
    )


@pytest.fixture(scope="session")
def parity_runs():
    t0 = time.perf_counter()
    corpus, questions_path = synthdata.ensure_dataset(CACHE_DIR)
    vocab = eg.build_vocabulary(read_tokens(corpus), min_count=5)
    worklist = worklist_from_tokens(read_tokens(corpus), vocab)
    table = eg.build_negative_table(vocab)
    questions = eg.load_questions(questions_path)
    params = ModelParams(
        dim=100,
        window=3,
        negatives=15,
        alpha=0.025,
        subsample_threshold=5e-5,
        epochs=5,
    )

    def go(hosts, rounds, combiner):
        cfg = RunConfig(
            params=params,
            hosts=hosts,
            sync_rounds=rounds,
            combiner=combiner,
            seed=77,
        )
        model, metrics = eg.run(vocab, worklist, cfg, table)
        return eg.score(model, vocab, questions), metrics

    runs = {
        "sequential": go(1, 1, CombineRule.GC),
        "combined": go(8, 12, CombineRule.GC),
        "averaged": go(8, 12, CombineRule.AVG),
        "few_rounds": go(8, 3, CombineRule.GC),
    }
    return runs, params.epochs, time.perf_counter() - t0


def test_criterion_08_desk_scale_parity(parity_runs):
    runs, epochs, elapsed = parity_runs
    seq = runs["sequential"][0].total
    combined = runs["combined"][0].total
    averaged = runs["averaged"][0].total
    metrics = runs["combined"][1]
    o_first = metrics.epoch_mean_orthogonality(0)
    o_last = metrics.epoch_mean_orthogonality(epochs - 1)

    parity = abs(combined - seq) <= 2.0
    avg_below = averaged < combined
    o_rising = o_last >= o_first
    in_budget = elapsed <= 3600.0
    ok = parity and avg_below and o_rising and in_budget
    verdict(
        8,
        "8 hosts x 12 rounds lands within 2 points of sequential accuracy; "
        "averaging scores below; orthogonality rises across epochs",
        ok,
        f"seq {seq:.2f} vs combined {combined:.2f} (|diff| "
        f"{abs(combined - seq):.2f}), averaged {averaged:.2f}, "
        f"orthogonality {o_first:.4f}->{o_last:.4f}, {elapsed:.0f}s",
    )


def test_criterion_09_sync_round_sensitivity(parity_runs):
    runs, _, _ = parity_runs
    many = runs["combined"][0].total
    few = runs["few_rounds"][0].total
    verdict(
        9,
        "12 sync rounds score at least as well as 3 on the same seeds",
        many >= few,
        f"S=12 {many:.2f} vs S=3 {few:.2f}",
    )


def test_criterion_10_walks_end_to_end(tmp_path):
    graph = tmp_path / "ring.txt"
    graph.write_text("\n".join(f"{i} {(i + 1) % 10}" for i in range(10)) + "\n")

    outs = []
    for name in ("walks1.txt", "walks2.txt"):
        out = tmp_path / name
        proc = subprocess.run(
            ["edgegram", "walks", "--graph", str(graph), "--walks", "10",
             "--length", "40", "--seed", "6", "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_text())
    lines = outs[0].splitlines()
    right_shape = len(lines) == 100 and all(
        1 <= len(line.split()) <= 40 for line in lines
    )
    deterministic = outs[0] == outs[1]

    emb = tmp_path / "verts.txt"
    train = subprocess.run(
        ["edgegram", "train", "--corpus", str(tmp_path / "walks1.txt"),
         "--sentences", "line", "--min-count", "1", "--dim", "16",
         "--window", "3", "--negatives", "4", "--epochs", "2",
         "--threshold", "0", "--hosts", "2", "--seed", "8",
         "--out", str(emb), "--no-figures"],
        capture_output=True, text=True,
    )
    trained = train.returncode == 0 and emb.exists()

    ok = right_shape and deterministic and trained
    verdict(
        10,
        "10-node walk corpus has 100 bounded lines, is seed-deterministic, "
        "and trains end to end",
        ok,
        f"shape={right_shape} deterministic={deterministic} "
        f"train rc={train.returncode} stderr tail: {train.stderr[-200:]}",
    )
