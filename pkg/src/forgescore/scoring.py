"""Per-video anomaly scoring: pulls a video's artifacts and produces the
three anomaly scores.  Scoring is pure per video, so cohorts can be
scored by a worker pool; results are always merged in video_id order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .consistency import appearance_anomaly_score
from .errors import DataError
from .labeling import AnomalyScores
from .tensorio import VideoManifest, load_embeddings
from .warp import motion_anomaly_score, spatial_anomaly_score, warping_error

REQUIRED_KEYS = ("frames", "frame_flow", "depth", "depth_flow")


def check_cohort_artifacts(manifests: list[VideoManifest]) -> None:
    """Fail fast, naming every video that cannot be scored and why."""
    problems: dict[str, list[str]] = {}
    for key in REQUIRED_KEYS:
        missing = [m.video_id for m in manifests if key not in m.artifacts]
        if missing:
            problems[key] = missing
    no_emb = [
        m.video_id
        for m in manifests
        if "clip_emb" not in m.artifacts and "dino_emb" not in m.artifacts
    ]
    if no_emb:
        problems["clip_emb/dino_emb"] = no_emb
    if problems:
        lines = [
            f"videos lacking {key}: {', '.join(ids)}"
            for key, ids in sorted(problems.items())
        ]
        raise DataError("cohort cannot be scored; " + "; ".join(lines))


def score_video(m: VideoManifest) -> AnomalyScores:
    clip = (
        load_embeddings(m, "clip_emb") if "clip_emb" in m.artifacts else None
    )
    dino = (
        load_embeddings(m, "dino_emb") if "dino_emb" in m.artifacts else None
    )
    return AnomalyScores(
        spatial=spatial_anomaly_score(m),
        appearance=appearance_anomaly_score(clip, dino),
        motion=motion_anomaly_score(m),
    )


def score_arrays(
    frames: np.ndarray,
    frame_flow: np.ndarray,
    depth: np.ndarray,
    depth_flow: np.ndarray,
    clip: np.ndarray | None,
    dino: np.ndarray | None,
) -> AnomalyScores:
    """Score already-loaded (possibly perturbed) artifact arrays."""
    lo, hi = float(depth.min()), float(depth.max())
    depth = (depth - lo) / (hi - lo) if hi > lo else np.zeros_like(depth)
    return AnomalyScores(
        spatial=warping_error(depth, depth_flow).total,
        appearance=appearance_anomaly_score(clip, dino),
        motion=warping_error(np.clip(frames, 0.0, 1.0), frame_flow).total,
    )


def _score_one(m: VideoManifest) -> tuple[str, AnomalyScores]:
    return m.video_id, score_video(m)


def score_cohort(
    manifests: list[VideoManifest], workers: int = 1
) -> dict[str, AnomalyScores]:
    """Score every video; deterministic output order by video_id."""
    check_cohort_artifacts(manifests)
    ordered = sorted(manifests, key=lambda m: m.video_id)
    if workers <= 1:
        pairs = [_score_one(m) for m in ordered]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(_score_one, ordered))
    return dict(sorted(pairs))
