"""Numba kernels for the hot paths: streaming, SGD updates, inspection.

The sample stream (subsampling decisions, window draws, negative draws) is
generated twice in several places: once to inspect which rows a round will
touch and once to apply updates. Both replays, plus the pure-Python
generator in topology.py, advance the same 64-bit LCG with the same
extraction rules, so they see bit-identical streams. Keep the three in
lockstep when changing anything here.

Model math runs in float32 like the reference tool, with the sigmoid and
the loss evaluated exactly in float64.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LCG_MULT = np.uint64(25214903917)
LCG_INC = np.uint64(11)
SHIFT16 = np.uint64(16)
MASK16 = np.uint64(0xFFFF)

NEGATIVE_ATTEMPTS = 8
LOSS_CLAMP = 1e-12


@njit(cache=True, inline="always")
def _lcg(state):
    return state * LCG_MULT + LCG_INC


@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0.0:
        z = np.exp(-x)
        return 1.0 / (1.0 + z)
    z = np.exp(x)
    return z / (1.0 + z)


@njit(cache=True)
def apply_group(
    e,
    t,
    src,
    dst,
    negs,
    nneg,
    alpha,
    track,
    e_bit,
    t_bit,
    e_snap,
    t_snap,
    loss_every,
    loss_stats,
    counter,
):
    """One positive pair plus its negatives, sharing the source row.

    Training rows are updated immediately per sample; the source embedding
    accumulates its update across the group and applies it at the end, the
    way the reference tool orders these writes. With track set, rows get
    copied into the snapshot arrays before their first write of the round
    and flagged in the bitmaps. loss_stats[0:2] accumulate (sum, count) of
    the loss over every loss_every-th sample; counter[0] counts samples.
    """
    dim = e.shape[1]
    acc = np.zeros(dim, np.float32)
    for i in range(-1, nneg):
        if i < 0:
            row = dst
            label = 1.0
        else:
            row = negs[i]
            label = 0.0
        x = np.float32(0.0)
        for j in range(dim):
            x += e[src, j] * t[row, j]
        sig = _sigmoid(np.float64(x))
        if loss_every > 0:
            counter[0] += 1
            if counter[0] % loss_every == 0:
                miss = 1.0 - np.abs(label - sig)
                if miss < LOSS_CLAMP:
                    miss = LOSS_CLAMP
                loss_stats[0] += -np.log(miss)
                loss_stats[1] += 1.0
        g = np.float32(alpha * (label - sig))
        if track and not t_bit[row]:
            for j in range(dim):
                t_snap[row, j] = t[row, j]
            t_bit[row] = True
        for j in range(dim):
            tv = t[row, j]
            acc[j] += g * tv
            t[row, j] = tv + g * e[src, j]
    if track and not e_bit[src]:
        for j in range(dim):
            e_snap[src, j] = e[src, j]
        e_bit[src] = True
    for j in range(dim):
        e[src, j] = e[src, j] + acc[j]


@njit(cache=True, nogil=True)
def run_round(
    tokens,
    offsets,
    e,
    t,
    e_bit,
    t_bit,
    e_snap,
    t_snap,
    discard,
    use_sub,
    neg_table,
    window,
    k,
    seed,
    alpha0,
    alpha_floor,
    total_updates_plus1,
    base,
    stride,
    track,
    loss_every,
    loss_stats,
    counter,
):
    """Stream one round slice and apply every group update in place.

    base and stride position this slice in the global learning-rate
    schedule: the estimate for occurrence p of the slice is base + p*stride,
    with stride equal to the host count (hosts advance in lockstep between
    barriers, so local progress times hosts approximates global progress).
    """
    state = seed
    n = len(tokens)
    kept = np.empty(n, np.int32)
    keptpos = np.empty(n, np.int64)
    negs = np.empty(max(k, 1), np.int64)
    tsize = np.uint64(len(neg_table))
    uwindow = np.uint64(window)
    for s in range(len(offsets) - 1):
        lo = offsets[s]
        hi = offsets[s + 1]
        nk = 0
        for p in range(lo, hi):
            w = tokens[p]
            if use_sub:
                state = _lcg(state)
                draw = np.float64(state & MASK16) / 65536.0
                if draw < discard[w]:
                    continue
            kept[nk] = w
            keptpos[nk] = p
            nk += 1
        for ci in range(nk):
            center = np.int64(kept[ci])
            state = _lcg(state)
            weff = window - np.int64(state % uwindow)
            lo_t = ci - weff
            if lo_t < 0:
                lo_t = 0
            hi_t = ci + weff
            if hi_t > nk - 1:
                hi_t = nk - 1
            processed = np.float64(base + keptpos[ci] * stride)
            alpha = alpha0 * (1.0 - processed / total_updates_plus1)
            if alpha < alpha_floor:
                alpha = alpha_floor
            for tj in range(lo_t, hi_t + 1):
                if tj == ci:
                    continue
                target = np.int64(kept[tj])
                nneg = 0
                for _slot in range(k):
                    cand = np.int64(-1)
                    for _attempt in range(NEGATIVE_ATTEMPTS):
                        state = _lcg(state)
                        draw_id = np.int64(
                            neg_table[np.int64((state >> SHIFT16) % tsize)]
                        )
                        if draw_id != target:
                            cand = draw_id
                            break
                    if cand >= 0:
                        negs[nneg] = cand
                        nneg += 1
                apply_group(
                    e,
                    t,
                    center,
                    target,
                    negs,
                    nneg,
                    alpha,
                    track,
                    e_bit,
                    t_bit,
                    e_snap,
                    t_snap,
                    loss_every,
                    loss_stats,
                    counter,
                )


@njit(cache=True, nogil=True)
def run_inspection(
    tokens,
    offsets,
    discard,
    use_sub,
    neg_table,
    window,
    k,
    seed,
    e_seen,
    t_seen,
):
    """Replay a round's stream without a model, marking accessed rows.

    Consumes the LCG exactly like run_round so that the later compute pass
    touches precisely the rows marked here: sources in e_seen, positive and
    negative destinations in t_seen.
    """
    state = seed
    n = len(tokens)
    kept = np.empty(n, np.int32)
    tsize = np.uint64(len(neg_table))
    uwindow = np.uint64(window)
    for s in range(len(offsets) - 1):
        lo = offsets[s]
        hi = offsets[s + 1]
        nk = 0
        for p in range(lo, hi):
            w = tokens[p]
            if use_sub:
                state = _lcg(state)
                draw = np.float64(state & MASK16) / 65536.0
                if draw < discard[w]:
                    continue
            kept[nk] = w
            nk += 1
        for ci in range(nk):
            center = np.int64(kept[ci])
            state = _lcg(state)
            weff = window - np.int64(state % uwindow)
            lo_t = ci - weff
            if lo_t < 0:
                lo_t = 0
            hi_t = ci + weff
            if hi_t > nk - 1:
                hi_t = nk - 1
            if hi_t > lo_t:
                e_seen[center] = True
            for tj in range(lo_t, hi_t + 1):
                if tj == ci:
                    continue
                target = np.int64(kept[tj])
                t_seen[target] = True
                for _slot in range(k):
                    for _attempt in range(NEGATIVE_ATTEMPTS):
                        state = _lcg(state)
                        draw_id = np.int64(
                            neg_table[np.int64((state >> SHIFT16) % tsize)]
                        )
                        if draw_id != target:
                            t_seen[draw_id] = True
                            break


@njit(cache=True)
def materialize_stream(
    tokens,
    offsets,
    discard,
    use_sub,
    neg_table,
    window,
    k,
    seed,
    out_occ,
    out_src,
    out_dst,
    out_label,
):
    """Fill sample arrays from one round's stream; test support.

    Returns the sample count, or -1 if the output arrays are too small.
    """
    state = seed
    n = len(tokens)
    cap = len(out_src)
    kept = np.empty(n, np.int32)
    keptpos = np.empty(n, np.int64)
    tsize = np.uint64(len(neg_table))
    uwindow = np.uint64(window)
    count = 0
    for s in range(len(offsets) - 1):
        lo = offsets[s]
        hi = offsets[s + 1]
        nk = 0
        for p in range(lo, hi):
            w = tokens[p]
            if use_sub:
                state = _lcg(state)
                draw = np.float64(state & MASK16) / 65536.0
                if draw < discard[w]:
                    continue
            kept[nk] = w
            keptpos[nk] = p
            nk += 1
        for ci in range(nk):
            center = np.int64(kept[ci])
            state = _lcg(state)
            weff = window - np.int64(state % uwindow)
            lo_t = ci - weff
            if lo_t < 0:
                lo_t = 0
            hi_t = ci + weff
            if hi_t > nk - 1:
                hi_t = nk - 1
            for tj in range(lo_t, hi_t + 1):
                if tj == ci:
                    continue
                target = np.int64(kept[tj])
                if count >= cap:
                    return -1
                out_occ[count] = keptpos[ci]
                out_src[count] = center
                out_dst[count] = target
                out_label[count] = 1
                count += 1
                for _slot in range(k):
                    for _attempt in range(NEGATIVE_ATTEMPTS):
                        state = _lcg(state)
                        draw_id = np.int64(
                            neg_table[np.int64((state >> SHIFT16) % tsize)]
                        )
                        if draw_id != target:
                            if count >= cap:
                                return -1
                            out_occ[count] = keptpos[ci]
                            out_src[count] = center
                            out_dst[count] = draw_id
                            out_label[count] = 0
                            count += 1
                            break
    return count
