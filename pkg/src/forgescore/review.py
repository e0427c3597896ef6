"""Human review service: a ranked queue per anomaly class, an
append-only JSON-lines verdict journal, and split finalization.

State is always the left fold of the journal over the prepared split,
so a crash or restart replays to exactly the in-memory state.  Repeated
identical verdict bodies are deduplicated (no new journal event); a
different verdict for the same video supersedes the earlier one.
Writes are serialized through one lock and fsynced before the reply.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DataError
from .labeling import (
    ForgeryLabel,
    LabeledVideo,
    SplitManifest,
    pending_by_class,
    split_cohort,
)
from .tensorio import VideoManifest, load_frames
from .warp import bilinear_resize

VERDICTS = ("accept", "reassign", "reject")
THUMB_SIZE = 64


class UnknownVideoError(DataError):
    pass


class NotPendingError(DataError):
    pass


class InvalidVerdictError(DataError):
    pass


class PendingRemainError(DataError):
    pass


@dataclass(frozen=True)
class ReviewEvent:
    seq: int
    timestamp: str
    video_id: str
    verdict: str
    reviewer: str
    reassign_to: int | None = None

    def to_json_dict(self) -> dict:
        doc = {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "video_id": self.video_id,
            "verdict": self.verdict,
            "reviewer": self.reviewer,
        }
        if self.reassign_to is not None:
            doc["reassign_to"] = self.reassign_to
        return doc

    @staticmethod
    def from_json_dict(doc: dict) -> "ReviewEvent":
        return ReviewEvent(
            seq=int(doc["seq"]),
            timestamp=str(doc["timestamp"]),
            video_id=str(doc["video_id"]),
            verdict=str(doc["verdict"]),
            reviewer=str(doc["reviewer"]),
            reassign_to=doc.get("reassign_to"),
        )


class ReviewJournal:
    """Append-only JSON-lines event log, fsynced per append."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, event: ReviewEvent) -> None:
        line = json.dumps(event.to_json_dict(), sort_keys=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def load(self) -> list[ReviewEvent]:
        if not self.path.exists():
            return []
        events = []
        for ln, line in enumerate(self.path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                events.append(ReviewEvent.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"{self.path}:{ln}: bad journal line ({exc})")
        return events


def validate_verdict(verdict: str, reassign_to: int | None) -> None:
    if verdict not in VERDICTS:
        raise InvalidVerdictError(
            f"verdict must be one of {VERDICTS}, got {verdict!r}"
        )
    if verdict == "reassign":
        if not (isinstance(reassign_to, int) and 0 <= reassign_to <= 3):
            raise InvalidVerdictError(
                f"reassign needs a label code in 0..3, got {reassign_to!r}"
            )
    elif reassign_to is not None:
        raise InvalidVerdictError(f"{verdict} does not take a reassign label")


def fold_events(
    events: list[ReviewEvent], pending_ids: set[str]
) -> dict[str, ReviewEvent]:
    """Effective verdict per video: later events supersede earlier ones."""
    effective: dict[str, ReviewEvent] = {}
    last_seq = 0
    for ev in events:
        if ev.seq <= last_seq:
            raise DataError(f"journal seq not strictly increasing at {ev.seq}")
        last_seq = ev.seq
        if ev.video_id not in pending_ids:
            raise DataError(
                f"journal refers to video {ev.video_id!r} outside the review set"
            )
        validate_verdict(ev.verdict, ev.reassign_to)
        effective[ev.video_id] = ev
    return effective


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class ReviewSession:
    """In-memory review state over a prepared split, backed by a journal."""

    def __init__(
        self,
        cohort_id: str,
        labeled: dict[str, LabeledVideo],
        seed: int,
        journal: ReviewJournal,
        manifests: dict[str, VideoManifest] | None = None,
    ):
        self.cohort_id = cohort_id
        self.labeled = labeled
        self.seed = seed
        self.journal = journal
        self.manifests = manifests or {}
        self.pending = pending_by_class(labeled)
        self._pending_ids = {vid for ids in self.pending.values() for vid in ids}
        events = journal.load()
        self.effective = fold_events(events, self._pending_ids)
        self._max_seq = max((ev.seq for ev in events), default=0)
        self._lock = threading.Lock()

    # reads --------------------------------------------------------------

    def queue(self, class_code: int, limit: int | None = None) -> list[dict]:
        try:
            label = ForgeryLabel(class_code)
        except ValueError:
            raise DataError(f"bad class code {class_code}")
        if label == ForgeryLabel.REAL:
            raise DataError("real videos are not reviewed")
        with self._lock:
            items = [vid for vid in self.pending[label] if vid not in self.effective]
        if limit is not None:
            items = items[: max(limit, 0)]
        out = []
        for vid in items:
            v = self.labeled[vid]
            out.append(
                {
                    "video_id": vid,
                    "label": int(v.label),
                    "scores": {
                        "spatial": v.scores.spatial,
                        "appearance": v.scores.appearance,
                        "motion": v.scores.motion,
                    },
                    "ranks": v.ranks,
                    "within_class_rank": v.within_class_rank,
                    "confidence": v.confidence,
                    "thumb_frames": self._thumb_frames(vid),
                }
            )
        return out

    def _thumb_frames(self, vid: str) -> list[int]:
        m = self.manifests.get(vid)
        if m is None or "frames" not in m.artifacts:
            return []
        t = int(load_frames(m).shape[0])
        return sorted({0, t // 2, t - 1})

    def progress(self) -> dict:
        with self._lock:
            per_class = {}
            for label, ids in self.pending.items():
                reviewed = sum(1 for vid in ids if vid in self.effective)
                per_class[str(int(label))] = {
                    "class_name": label.name.lower(),
                    "total": len(ids),
                    "reviewed": reviewed,
                    "pending": len(ids) - reviewed,
                }
            verdicts = {
                vid: ev.verdict for vid, ev in sorted(self.effective.items())
            }
        return {
            "cohort_id": self.cohort_id,
            "classes": per_class,
            "pending_total": sum(c["pending"] for c in per_class.values()),
            "verdicts": verdicts,
        }

    # mutation -------------------------------------------------------------

    def review(
        self,
        video_id: str,
        verdict: str,
        reviewer: str,
        reassign_to: int | None = None,
    ) -> dict:
        validate_verdict(verdict, reassign_to)
        if video_id not in self.labeled:
            raise UnknownVideoError(f"unknown video {video_id!r}")
        if video_id not in self._pending_ids:
            raise NotPendingError(f"video {video_id!r} is not in the review set")
        with self._lock:
            prev = self.effective.get(video_id)
            duplicate = (
                prev is not None
                and prev.verdict == verdict
                and prev.reassign_to == reassign_to
                and prev.reviewer == reviewer
            )
            if not duplicate:
                event = ReviewEvent(
                    seq=self._max_seq + 1,
                    timestamp=_now_iso(),
                    video_id=video_id,
                    verdict=verdict,
                    reviewer=reviewer,
                    reassign_to=reassign_to,
                )
                self.journal.append(event)
                self._max_seq = event.seq
                self.effective[video_id] = event
        return self.progress()

    def review_verdicts(self) -> dict[str, tuple[str, int | None]]:
        with self._lock:
            return {
                vid: (ev.verdict, ev.reassign_to)
                for vid, ev in self.effective.items()
            }

    def finalize(self, force: bool = False) -> SplitManifest:
        with self._lock:
            remaining = self._pending_ids - set(self.effective)
        if remaining and not force:
            raise PendingRemainError(f"{len(remaining)} videos still pending review")
        return split_cohort(
            self.labeled,
            self.cohort_id,
            self.seed,
            verdicts=self.review_verdicts(),
            created_at=_now_iso(),
        )

    def finalized_labels(self) -> dict[str, int]:
        """Effective label per video after verdicts; rejected excluded."""
        out = {}
        verdicts = self.review_verdicts()
        for vid, v in self.labeled.items():
            verdict = verdicts.get(vid)
            if verdict is None or verdict[0] == "accept":
                out[vid] = int(v.label)
            elif verdict[0] == "reassign":
                out[vid] = int(verdict[1])
            # rejected: excluded
        return out

    # thumbnails -------------------------------------------------------------

    def thumbnail(self, video_id: str, frame: int) -> dict:
        m = self.manifests.get(video_id)
        if m is None:
            raise UnknownVideoError(f"unknown video {video_id!r}")
        frames = load_frames(m)
        if not 0 <= frame < frames.shape[0]:
            raise UnknownVideoError(f"video {video_id!r} has no frame {frame}")
        img = frames[frame]
        gray = img.mean(axis=2) if img.shape[2] > 1 else img[:, :, 0]
        small = bilinear_resize(gray, THUMB_SIZE, THUMB_SIZE)
        pixels = np.floor(small * 255.0 + 0.5)  # round half up
        pixels = np.clip(pixels, 0, 255).astype(np.int64)
        return {
            "video_id": video_id,
            "frame": frame,
            "width": THUMB_SIZE,
            "height": THUMB_SIZE,
            "pixels": pixels.reshape(-1).tolist(),
        }


def create_app(
    session: ReviewSession | None,
    ui_dir: str | Path | None = None,
    out_dir: str | Path | None = None,
):
    """HTTP wiring over a ReviewSession.

    With session=None every API call answers 409 until a split is
    prepared.  Finalized manifests are also written under out_dir when
    given.
    """
    from fastapi import Body, FastAPI, Query
    from fastapi.responses import JSONResponse

    app = FastAPI(title="forgescore review service")

    def fail(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": message})

    @app.get("/api/queue")
    def api_queue(
        class_code: int = Query(default=-1, alias="class"),
        limit: int | None = None,
    ):
        if session is None:
            return fail(409, "no prepared split")
        if class_code not in (0, 1, 2):
            return fail(400, f"class must be 0, 1 or 2, got {class_code}")
        return {"class": class_code, "items": session.queue(class_code, limit)}

    @app.post("/api/review")
    def api_review(body: dict = Body(...)):
        if session is None:
            return fail(409, "no prepared split")
        video_id = body.get("video_id")
        verdict = body.get("verdict")
        reviewer = body.get("reviewer")
        reassign_to = body.get("reassign_to")
        if not isinstance(video_id, str) or not isinstance(verdict, str):
            return fail(422, "body needs string video_id and verdict")
        if not isinstance(reviewer, str) or not reviewer:
            return fail(422, "body needs a non-empty reviewer string")
        try:
            state = session.review(video_id, verdict, reviewer, reassign_to)
        except InvalidVerdictError as exc:
            return fail(422, str(exc))
        except UnknownVideoError as exc:
            return fail(404, str(exc))
        except NotPendingError as exc:
            return fail(409, str(exc))
        return state

    @app.get("/api/progress")
    def api_progress():
        if session is None:
            return fail(409, "no prepared split")
        return session.progress()

    @app.post("/api/finalize")
    def api_finalize(body: dict | None = Body(default=None)):
        if session is None:
            return fail(409, "no prepared split")
        force = bool(body.get("force")) if isinstance(body, dict) else False
        try:
            manifest = session.finalize(force=force)
        except PendingRemainError as exc:
            return fail(409, str(exc))
        labels = session.finalized_labels()
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            manifest.write(out / "split_final.json")
            (out / "labels_final.json").write_text(
                json.dumps(labels, indent=2, sort_keys=True) + "\n"
            )
        return {"manifest": manifest.to_json_dict(), "labels": labels}

    @app.get("/api/thumb/{video_id}/{frame}")
    def api_thumb(video_id: str, frame: int):
        if session is None:
            return fail(409, "no prepared split")
        try:
            return session.thumbnail(video_id, frame)
        except UnknownVideoError as exc:
            return fail(404, str(exc))

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
