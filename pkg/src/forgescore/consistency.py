"""Appearance-consistency scoring over per-frame embedding streams.

The score blends two terms: the mean cosine similarity of consecutive
frames, and the mean within-window similarity over non-overlapping
blocks of `window` frames (a trailing block is kept only if it still
has at least two frames).  The anomaly score is 1 minus the mean
consistency across streams, so all three anomaly types share the
higher-is-worse orientation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class ConsistencyReport:
    consecutive_term: float
    window_term: float
    s_score: float
    per_stream: dict[str, float] = field(default_factory=dict)


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, clamped to [-1, 1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError(f"vector shapes differ: {a.shape} vs {b.shape}")
    na2 = float(np.dot(a, a))
    nb2 = float(np.dot(b, b))
    if na2 == 0.0 or nb2 == 0.0:
        raise DataError("cosine of zero-norm vector")
    c = float(np.dot(a, b)) / math.sqrt(na2 * nb2)
    return min(1.0, max(-1.0, c))


def _mean_consecutive(seq: np.ndarray) -> float:
    return float(
        np.mean([cosine_sim(seq[i - 1], seq[i]) for i in range(1, len(seq))])
    )


def appearance_consistency(
    seq: np.ndarray, window: int = 5, alpha: float = 0.5, beta: float = 0.5
) -> ConsistencyReport:
    """Consistency report for one [T,D] embedding stream."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] < 2:
        raise DataError(f"embedding stream must be [T>=2, D], got {seq.shape}")
    if window < 2:
        raise DataError(f"window must be >= 2, got {window}")
    t = seq.shape[0]
    consecutive = _mean_consecutive(seq)
    window_scores = []
    for start in range(0, t, window):
        block = seq[start : start + window]
        if len(block) >= 2:
            window_scores.append(_mean_consecutive(block))
    window_term = float(np.mean(window_scores))
    s_score = alpha * consecutive + beta * window_term
    return ConsistencyReport(
        consecutive_term=consecutive, window_term=window_term, s_score=s_score
    )


def appearance_report(
    streams: dict[str, np.ndarray],
    window: int = 5,
    alpha: float = 0.5,
    beta: float = 0.5,
) -> ConsistencyReport:
    """Combined report over named streams; terms are stream averages."""
    if not streams:
        raise DataError("no embedding streams supplied")
    reports = {
        name: appearance_consistency(seq, window, alpha, beta)
        for name, seq in streams.items()
    }
    per_stream = {name: r.s_score for name, r in reports.items()}
    return ConsistencyReport(
        consecutive_term=float(np.mean([r.consecutive_term for r in reports.values()])),
        window_term=float(np.mean([r.window_term for r in reports.values()])),
        s_score=float(np.mean([r.s_score for r in reports.values()])),
        per_stream=per_stream,
    )


def appearance_anomaly_score(
    clip_seq: np.ndarray | None,
    dino_seq: np.ndarray | None,
    window: int = 5,
) -> float:
    """1 - mean(s_score over streams); higher means more anomalous.

    A missing stream degrades to the single available one with a warning.
    """
    streams = {}
    if clip_seq is not None:
        streams["clip"] = clip_seq
    if dino_seq is not None:
        streams["dino"] = dino_seq
    if not streams:
        raise DataError("appearance scoring needs at least one embedding stream")
    if len(streams) == 1:
        only = next(iter(streams))
        warnings.warn(
            f"only the {only!r} stream present; scoring single-stream",
            stacklevel=2,
        )
    return 1.0 - appearance_report(streams, window=window).s_score
