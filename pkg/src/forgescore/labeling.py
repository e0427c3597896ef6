"""Cohort ranking, pseudo-labels, confidence weights and dataset splits.

Ranking is per anomaly type over the cohort's fake videos, descending by
score with rank 1 the most anomalous; ties break by ascending video_id.
A video's label is the type with the numerically smallest rank, with the
fixed tie priority spatial > appearance > motion.  Within each labeled
class the videos are re-ranked by that class's own score; the top 20%
go to human review before entering the validation set, and every sample
carries the confidence weight ln(e + rank/class_size) used by the
trainer.  Real videos are unranked and get weight 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import DataError


class ForgeryLabel(IntEnum):
    SPATIAL = 0
    APPEARANCE = 1
    MOTION = 2
    REAL = 3


ANOMALY_TYPES = ("spatial", "appearance", "motion")
TYPE_TO_LABEL = {
    "spatial": ForgeryLabel.SPATIAL,
    "appearance": ForgeryLabel.APPEARANCE,
    "motion": ForgeryLabel.MOTION,
}
VAL_FRACTION = 0.2


@dataclass(frozen=True)
class AnomalyScores:
    spatial: float
    appearance: float
    motion: float

    def __post_init__(self):
        for name in ANOMALY_TYPES:
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DataError(f"{name} score is not finite: {v}")

    def by_type(self, kind: str) -> float:
        return getattr(self, kind)


@dataclass(frozen=True)
class RankTable:
    """Per-type rank maps: video_id -> rank in 1..n, 1 = most anomalous."""

    spatial: dict[str, int]
    appearance: dict[str, int]
    motion: dict[str, int]

    def by_type(self, kind: str) -> dict[str, int]:
        return getattr(self, kind)

    def ranks_for(self, video_id: str) -> dict[str, int]:
        return {kind: self.by_type(kind)[video_id] for kind in ANOMALY_TYPES}


@dataclass(frozen=True)
class LabeledVideo:
    video_id: str
    scores: AnomalyScores
    ranks: dict[str, int]
    label: ForgeryLabel
    within_class_rank: int
    normalized_rank: float
    confidence: float
    review_state: str = "auto"  # auto | accepted | reassigned | rejected
    reassigned_to: ForgeryLabel | None = None

    def effective_label(self) -> ForgeryLabel:
        if self.review_state == "reassigned" and self.reassigned_to is not None:
            return self.reassigned_to
        return self.label


@dataclass(frozen=True)
class SplitManifest:
    cohort_id: str
    train: list[str]
    val: list[str]
    pending_review: list[str]
    seed: int
    created_at: str | None = None

    def to_json_dict(self) -> dict:
        doc = {
            "cohort_id": self.cohort_id,
            "train": list(self.train),
            "val": list(self.val),
            "pending_review": list(self.pending_review),
            "seed": self.seed,
        }
        if self.created_at is not None:
            doc["created_at"] = self.created_at
        return doc

    def write(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"
        )


def load_split_manifest(path: str | Path) -> SplitManifest:
    doc = json.loads(Path(path).read_text())
    return SplitManifest(
        cohort_id=doc["cohort_id"],
        train=list(doc["train"]),
        val=list(doc["val"]),
        pending_review=list(doc["pending_review"]),
        seed=int(doc["seed"]),
        created_at=doc.get("created_at"),
    )


def substream(seed: int, name: str) -> np.random.Generator:
    """Named, reproducible child stream of the run seed."""
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=tuple(name.encode()))
    )


def _rank_one_type(scores: dict[str, float]) -> dict[str, int]:
    # descending score, ties by ascending video_id
    order = sorted(scores, key=lambda vid: (-scores[vid], vid))
    return {vid: i + 1 for i, vid in enumerate(order)}


def rank_cohort(scores: dict[str, AnomalyScores]) -> RankTable:
    """Rank every fake video per anomaly type, descending by score."""
    if not scores:
        raise DataError("cannot rank an empty cohort")
    per_type = {
        kind: _rank_one_type({vid: s.by_type(kind) for vid, s in scores.items()})
        for kind in ANOMALY_TYPES
    }
    return RankTable(**per_type)


def assign_labels(ranks: RankTable) -> dict[str, ForgeryLabel]:
    """Label = anomaly type with the smallest rank; ties prefer spatial,
    then appearance, then motion."""
    labels = {}
    for vid in ranks.spatial:
        best = min(ANOMALY_TYPES, key=lambda kind: ranks.by_type(kind)[vid])
        labels[vid] = TYPE_TO_LABEL[best]
    return labels


def confidence_weights(
    class_scores: dict[str, float], orientation: str = "verbatim"
) -> dict[str, tuple[int, float, float]]:
    """Within-class rank, normalized rank and weight for one fake class.

    Ranks re-sort the class by its own anomaly score, descending. The
    normalized rank is rank/n and the weight ln(e + rank/n), so weights
    lie in (1, ln(e+1)].  orientation="inverted" flips the normalized
    rank to (n - rank + 1)/n for experiments; "verbatim" is the default.
    """
    if orientation not in ("verbatim", "inverted"):
        raise DataError(f"unknown confidence orientation {orientation!r}")
    n = len(class_scores)
    if n == 0:
        return {}
    ranks = _rank_one_type(class_scores)
    out = {}
    for vid, r in ranks.items():
        if not 1 <= r <= n:
            raise DataError(f"rank {r} outside [1, {n}]")
        r_hat = r / n if orientation == "verbatim" else (n - r + 1) / n
        out[vid] = (r, r_hat, math.log(math.e + r_hat))
    return out


def build_labeled_cohort(
    fake_scores: dict[str, AnomalyScores],
    real_ids: list[str] | None = None,
    orientation: str = "verbatim",
) -> dict[str, LabeledVideo]:
    """Full labeling pass: ranks, labels, within-class confidence.

    Real videos get label REAL, no ranks, and unit confidence.
    """
    labeled: dict[str, LabeledVideo] = {}
    if fake_scores:
        table = rank_cohort(fake_scores)
        labels = assign_labels(table)
        for kind, label in TYPE_TO_LABEL.items():
            members = {
                vid: fake_scores[vid].by_type(kind)
                for vid, lab in labels.items()
                if lab == label
            }
            for vid, (r, r_hat, alpha) in confidence_weights(
                members, orientation
            ).items():
                labeled[vid] = LabeledVideo(
                    video_id=vid,
                    scores=fake_scores[vid],
                    ranks=table.ranks_for(vid),
                    label=label,
                    within_class_rank=r,
                    normalized_rank=r_hat,
                    confidence=alpha,
                )
    for vid in real_ids or []:
        if vid in labeled:
            raise DataError(f"video {vid!r} is both fake-scored and real")
        labeled[vid] = LabeledVideo(
            video_id=vid,
            scores=AnomalyScores(0.0, 0.0, 0.0),
            ranks={},
            label=ForgeryLabel.REAL,
            within_class_rank=0,
            normalized_rank=0.0,
            confidence=1.0,
        )
    return labeled


def apply_verdict(video: LabeledVideo, verdict: str, reassign_to: int | None = None) -> LabeledVideo:
    """Return the video with a review verdict applied."""
    if verdict == "accept":
        return replace(video, review_state="accepted", reassigned_to=None)
    if verdict == "reject":
        return replace(video, review_state="rejected", reassigned_to=None)
    if verdict == "reassign":
        if reassign_to is None or not 0 <= int(reassign_to) <= 3:
            raise DataError(f"reassign verdict needs a label in 0..3, got {reassign_to}")
        return replace(
            video,
            review_state="reassigned",
            reassigned_to=ForgeryLabel(int(reassign_to)),
        )
    raise DataError(f"unknown verdict {verdict!r}")


def review_quota(class_size: int, fraction: float = VAL_FRACTION) -> int:
    """Head count sent to review for one class: ceil(fraction * n)."""
    return math.ceil(fraction * class_size)


def pending_by_class(
    labeled: dict[str, LabeledVideo], fraction: float = VAL_FRACTION
) -> dict[ForgeryLabel, list[str]]:
    """Most-anomalous head of each fake class, ordered by within-class rank."""
    pending: dict[ForgeryLabel, list[str]] = {}
    for label in (ForgeryLabel.SPATIAL, ForgeryLabel.APPEARANCE, ForgeryLabel.MOTION):
        members = sorted(
            (v for v in labeled.values() if v.label == label),
            key=lambda v: v.within_class_rank,
        )
        k = review_quota(len(members), fraction)
        pending[label] = [v.video_id for v in members[:k]]
    return pending


def split_cohort(
    labeled: dict[str, LabeledVideo],
    cohort_id: str,
    seed: int,
    verdicts: dict[str, tuple[str, int | None]] | None = None,
    fraction: float = VAL_FRACTION,
    created_at: str | None = None,
) -> SplitManifest:
    """Partition a labeled cohort into train / val / pending_review.

    Fake classes send their ceil(20%) most anomalous members to review;
    reviewed members move to val (accept/reassign) or drop (reject),
    unreviewed ones stay pending.  Real videos are split by a seeded
    uniform 20% sample.  Deterministic for a given seed and verdict set.
    """
    if not labeled:
        raise DataError("cannot split an empty cohort")
    verdicts = verdicts or {}
    reviewed = dict(labeled)
    for vid, (verdict, reassign_to) in verdicts.items():
        if vid not in reviewed:
            raise DataError(f"verdict for unknown video {vid!r}")
        reviewed[vid] = apply_verdict(reviewed[vid], verdict, reassign_to)

    train: list[str] = []
    val: list[str] = []
    pending: list[str] = []
    head = pending_by_class(labeled, fraction)
    for label, head_ids in head.items():
        members = sorted(
            (v for v in labeled.values() if v.label == label),
            key=lambda v: v.within_class_rank,
        )
        head_set = set(head_ids)
        for v in members:
            state = reviewed[v.video_id].review_state
            if v.video_id in head_set:
                if state in ("accepted", "reassigned"):
                    val.append(v.video_id)
                elif state == "rejected":
                    continue
                else:
                    pending.append(v.video_id)
            else:
                if state == "rejected":
                    continue
                train.append(v.video_id)

    real_ids = sorted(
        v.video_id for v in labeled.values() if v.label == ForgeryLabel.REAL
    )
    if real_ids:
        k = review_quota(len(real_ids), fraction)
        rng = substream(seed, "split")
        picks = rng.permutation(len(real_ids))[:k]
        val_real = {real_ids[i] for i in picks}
        for vid in real_ids:
            state = reviewed[vid].review_state
            if state == "rejected":
                continue
            (val if vid in val_real else train).append(vid)

    # partition check: train + val + pending + rejected covers the
    # cohort exactly once
    placed = train + val + pending
    rejected = [
        vid for vid in labeled if reviewed[vid].review_state == "rejected"
    ]
    if sorted(placed + rejected) != sorted(labeled):
        raise DataError("split does not partition the cohort")

    return SplitManifest(
        cohort_id=cohort_id,
        train=sorted(train),
        val=sorted(val),
        pending_review=sorted(pending),
        seed=seed,
        created_at=created_at,
    )


# JSON persistence for labeled cohorts (the `label` CLI output)


def labeled_to_json_dict(labeled: dict[str, LabeledVideo], cohort_id: str) -> dict:
    videos = {}
    for vid, v in sorted(labeled.items()):
        videos[vid] = {
            "scores": {
                "spatial": v.scores.spatial,
                "appearance": v.scores.appearance,
                "motion": v.scores.motion,
            },
            "ranks": v.ranks,
            "label": int(v.label),
            "within_class_rank": v.within_class_rank,
            "normalized_rank": v.normalized_rank,
            "confidence": v.confidence,
            "review_state": v.review_state,
        }
        if v.reassigned_to is not None:
            videos[vid]["reassigned_to"] = int(v.reassigned_to)
    return {"cohort_id": cohort_id, "videos": videos}


def labeled_from_json_dict(doc: dict) -> tuple[str, dict[str, LabeledVideo]]:
    labeled = {}
    for vid, entry in doc["videos"].items():
        labeled[vid] = LabeledVideo(
            video_id=vid,
            scores=AnomalyScores(**entry["scores"]),
            ranks={k: int(r) for k, r in entry["ranks"].items()},
            label=ForgeryLabel(entry["label"]),
            within_class_rank=int(entry["within_class_rank"]),
            normalized_rank=float(entry["normalized_rank"]),
            confidence=float(entry["confidence"]),
            review_state=entry.get("review_state", "auto"),
            reassigned_to=(
                ForgeryLabel(entry["reassigned_to"])
                if "reassigned_to" in entry
                else None
            ),
        )
    return doc["cohort_id"], labeled


def save_labeled(labeled: dict[str, LabeledVideo], cohort_id: str, path: str | Path):
    Path(path).write_text(
        json.dumps(labeled_to_json_dict(labeled, cohort_id), indent=2, sort_keys=True)
        + "\n"
    )


def load_labeled(path: str | Path) -> tuple[str, dict[str, LabeledVideo]]:
    return labeled_from_json_dict(json.loads(Path(path).read_text()))
