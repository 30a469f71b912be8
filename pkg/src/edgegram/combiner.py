"""Gradient combining: merge per-host gradients without shrinking the step.

Averaging gradients from H hosts divides the effective step by H, which
costs convergence; summing them risks divergence when the gradients agree.
The combiner keeps the second gradient intact and adds only the component
of the first that is orthogonal to it:

    combine(g1, g2) = g2 + (g1 - (g2.g1 / |g2|^2) g2)

Folding left over k gradients keeps the running result in the projected
role and each incoming gradient in the preserved role. Identical gradients
therefore collapse to a single step, orthogonal ones add up fully.

All math here is float64; the model stores float32 but deltas are widened
before combining.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Below this squared norm the preserved gradient cannot define a direction;
# the pair falls back to a plain sum (g2 is then ~zero anyway).
ZERO_NORM_EPS = 1e-30


@dataclass
class CombineStats:
    """Bookkeeping from one fold: how many gradients went in, how orthogonal
    they were, and how often the zero-denominator fallback fired."""

    combined_count: int
    orthogonality: float
    zero_norm_fallbacks: int = 0


def _as_f64(g: np.ndarray) -> np.ndarray:
    arr = np.asarray(g, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"gradient must be one-dimensional, got shape {arr.shape}")
    return arr


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def project_orthogonal(g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """Component of g1 orthogonal to g2.

    Returns g1 unchanged when g2 is numerically zero (squared norm below
    ZERO_NORM_EPS), since there is no direction to project out.
    """
    g1 = _as_f64(g1)
    g2 = _as_f64(g2)
    _check_dims(g1, g2)
    n2 = float(np.dot(g2, g2))
    if n2 < ZERO_NORM_EPS:
        return g1.copy()
    return g1 - (float(np.dot(g2, g1)) / n2) * g2


def gc_pair(g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """Combine two gradients: g2 plus the part of g1 orthogonal to g2.

    Falls back to g1 + g2 when g2 is numerically zero.
    """
    g1 = _as_f64(g1)
    g2 = _as_f64(g2)
    _check_dims(g1, g2)
    n2 = float(np.dot(g2, g2))
    if n2 < ZERO_NORM_EPS:
        return g1 + g2
    return g2 + g1 - (float(np.dot(g2, g1)) / n2) * g2


def gc_fold(
    gradients: Sequence[np.ndarray], swap_roles: bool = False
) -> tuple[np.ndarray, CombineStats]:
    """Left-fold gc_pair over a gradient list.

    The accumulator sits in the projected (g1) slot and each incoming
    gradient in the preserved (g2) slot, so the most recent gradient always
    survives intact. swap_roles=True flips the two slots at every step; it
    exists for comparing the orders, not for production use.

    Returns the combined gradient and fold statistics. The orthogonality
    score is |combined|^2 / sum |g_i|^2, which is 1/k for k identical
    gradients and 1 for mutually orthogonal ones. An all-zero input reports
    orthogonality 1.0 by convention.
    """
    if len(gradients) == 0:
        raise ValueError("cannot fold an empty gradient list")
    gs = [_as_f64(g) for g in gradients]
    for g in gs[1:]:
        _check_dims(gs[0], g)

    acc = gs[0].copy()
    fallbacks = 0
    for g in gs[1:]:
        preserved = acc if swap_roles else g
        projected = g if swap_roles else acc
        n2 = float(np.dot(preserved, preserved))
        if n2 < ZERO_NORM_EPS:
            acc = projected + preserved
            fallbacks += 1
        else:
            acc = preserved + projected - (
                float(np.dot(preserved, projected)) / n2
            ) * preserved

    total = float(sum(float(np.dot(g, g)) for g in gs))
    orth = 1.0 if total == 0.0 else float(np.dot(acc, acc)) / total
    return acc, CombineStats(
        combined_count=len(gs), orthogonality=orth, zero_norm_fallbacks=fallbacks
    )


def average(gradients: Sequence[np.ndarray]) -> np.ndarray:
    """Arithmetic mean of a gradient list (the baseline the combiner beats)."""
    if len(gradients) == 0:
        raise ValueError("cannot average an empty gradient list")
    gs = [_as_f64(g) for g in gradients]
    for g in gs[1:]:
        _check_dims(gs[0], g)
    return np.mean(np.stack(gs), axis=0)


def orthogonality(g1: np.ndarray, g2: np.ndarray) -> float:
    """How orthogonal a pair is: |gc_pair(g1, g2)|^2 / (|g1|^2 + |g2|^2).

    0.5 for identical gradients, 1.0 for orthogonal ones. Two zero
    gradients score 1.0 by convention.
    """
    g1 = _as_f64(g1)
    g2 = _as_f64(g2)
    _check_dims(g1, g2)
    total = float(np.dot(g1, g1)) + float(np.dot(g2, g2))
    if total == 0.0:
        return 1.0
    combined = gc_pair(g1, g2)
    return float(np.dot(combined, combined)) / total


def gc_pair_rows(
    acc: np.ndarray, g: np.ndarray, mask: np.ndarray, fallback_out: np.ndarray
) -> np.ndarray:
    """Row-wise gc_pair for the synchronization reducer.

    acc and g are (rows, dim) float64; rows where mask is False keep acc
    unchanged. fallback_out is a bool row vector that gets set where the
    zero-denominator fallback fired. The per-row math matches gc_pair
    exactly; a property test holds the two together.
    """
    n2 = np.einsum("ij,ij->i", g, g)
    dot = np.einsum("ij,ij->i", g, acc)
    degenerate = n2 < ZERO_NORM_EPS
    safe_n2 = np.where(degenerate, 1.0, n2)
    coef = np.where(degenerate, 0.0, dot / safe_n2)
    combined = g + acc - coef[:, None] * g
    out = np.where(mask[:, None], combined, acc)
    fallback_out |= mask & degenerate
    return out
