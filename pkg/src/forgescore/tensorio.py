"""Tensor containers, the FVT1 on-disk format, and cohort manifests.

Tensors are plain float64 numpy arrays, row-major.  The byte format is
fixed and platform independent:

    magic  b"FVT1"
    rank   u32 little-endian
    dims   rank x u32 little-endian
    data   row-major float64 little-endian

Every value must be finite; NaN/Inf in a file is a read error.
Manifests are JSON documents binding a video's artifact files together;
a cohort is a directory of manifests, one video each.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"FVT1"
MAX_RANK = 32
MAX_ELEMENTS = 1 << 28  # 2 GiB of float64 per tensor

ARTIFACT_KEYS = (
    "frames",
    "depth",
    "frame_flow",
    "depth_flow",
    "clip_emb",
    "dino_emb",
    "tokens",
    "depth_feat",
)


class TensorIOError(DataError):
    code = "tensor-io"


class BadMagicError(TensorIOError):
    code = "bad-magic"


class TruncatedPayloadError(TensorIOError):
    code = "truncated-payload"


class DimOverflowError(TensorIOError):
    code = "dim-overflow"


class NonFiniteValueError(TensorIOError):
    code = "non-finite"


class TrailingBytesError(TensorIOError):
    code = "trailing-bytes"


class ManifestError(DataError):
    """Schema violation, duplicate id or dangling path in a manifest."""


class MissingArtifactError(DataError):
    def __init__(self, video_id: str, key: str):
        super().__init__(f"video {video_id!r} has no {key!r} artifact")
        self.video_id = video_id
        self.key = key


def write_tensor(t: np.ndarray, path: str | Path) -> None:
    """Write a float64 array in FVT1 format. Round trips bit-exactly."""
    if np.asarray(t).ndim == 0:
        raise DimOverflowError("tensor rank must be >= 1")
    arr = np.ascontiguousarray(t, dtype=np.float64)
    if arr.ndim > MAX_RANK:
        raise DimOverflowError(f"rank {arr.ndim} exceeds {MAX_RANK}")
    if any(d < 1 for d in arr.shape):
        raise DimOverflowError(f"every dim must be >= 1, got {arr.shape}")
    if arr.size > MAX_ELEMENTS:
        raise DimOverflowError(f"{arr.size} elements exceeds {MAX_ELEMENTS}")
    if not np.isfinite(arr).all():
        raise NonFiniteValueError("tensor contains NaN or Inf")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    """Read an FVT1 file back into a float64 array."""
    blob = Path(path).read_bytes()
    if len(blob) < 4:
        raise TruncatedPayloadError(f"{path}: file shorter than magic")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 8:
        raise TruncatedPayloadError(f"{path}: missing rank")
    (rank,) = struct.unpack_from("<I", blob, 4)
    if rank < 1 or rank > MAX_RANK:
        raise DimOverflowError(f"{path}: rank {rank} outside [1, {MAX_RANK}]")
    header_end = 8 + 4 * rank
    if len(blob) < header_end:
        raise TruncatedPayloadError(f"{path}: truncated dim list")
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    if any(d < 1 for d in dims):
        raise DimOverflowError(f"{path}: zero dim in {dims}")
    count = math.prod(dims)
    if count > MAX_ELEMENTS:
        raise DimOverflowError(f"{path}: {count} elements exceeds {MAX_ELEMENTS}")
    expected = header_end + 8 * count
    if len(blob) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(blob) - header_end} bytes, "
            f"expected {8 * count}"
        )
    if len(blob) > expected:
        raise TrailingBytesError(f"{path}: {len(blob) - expected} trailing bytes")
    arr = np.frombuffer(blob, dtype="<f8", count=count, offset=header_end)
    arr = arr.astype(np.float64).reshape(dims)
    if not np.isfinite(arr).all():
        raise NonFiniteValueError(f"{path}: non-finite value in payload")
    return arr


@dataclass(frozen=True)
class VideoManifest:
    """One video's identity plus paths to its ingested artifacts."""

    video_id: str
    cohort_id: str
    is_real: bool
    artifacts: dict[str, Path] = field(default_factory=dict)
    planted_label: int | None = None

    def artifact_path(self, key: str) -> Path:
        if key not in self.artifacts:
            raise MissingArtifactError(self.video_id, key)
        return self.artifacts[key]

    def load(self, key: str) -> np.ndarray:
        return read_tensor(self.artifact_path(key))

    def to_json_dict(self) -> dict:
        doc = {
            "video_id": self.video_id,
            "cohort_id": self.cohort_id,
            "is_real": self.is_real,
            "artifacts": {k: str(p) for k, p in sorted(self.artifacts.items())},
        }
        if self.planted_label is not None:
            doc["planted_label"] = self.planted_label
        return doc


def _require(doc: dict, key: str, typ: type, path: Path):
    if key not in doc:
        raise ManifestError(f"{path}: missing required field {key!r}")
    if not isinstance(doc[key], typ):
        raise ManifestError(f"{path}: field {key!r} must be {typ.__name__}")
    return doc[key]


def load_manifest(path: str | Path) -> VideoManifest:
    """Parse and validate one manifest file.

    Artifact paths are resolved relative to the manifest's directory and
    must exist.  Every video needs at least a "frames" artifact.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    video_id = _require(doc, "video_id", str, path)
    cohort_id = _require(doc, "cohort_id", str, path)
    is_real = _require(doc, "is_real", bool, path)
    raw_artifacts = _require(doc, "artifacts", dict, path)
    artifacts: dict[str, Path] = {}
    for key, rel in raw_artifacts.items():
        if key not in ARTIFACT_KEYS:
            raise ManifestError(
                f"{path}: unknown artifact key {key!r} for video {video_id!r}"
            )
        if not isinstance(rel, str):
            raise ManifestError(f"{path}: artifact {key!r} must be a path string")
        resolved = (path.parent / rel).resolve()
        if not resolved.is_file():
            raise ManifestError(
                f"video {video_id!r}: artifact {key!r} points at missing "
                f"file {resolved}"
            )
        artifacts[key] = resolved
    if "frames" not in artifacts:
        raise ManifestError(f"video {video_id!r}: required artifact 'frames' missing")
    planted = doc.get("planted_label")
    if planted is not None and (not isinstance(planted, int) or not 0 <= planted <= 3):
        raise ManifestError(
            f"video {video_id!r}: planted_label must be an int in 0..3"
        )
    return VideoManifest(
        video_id=video_id,
        cohort_id=cohort_id,
        is_real=is_real,
        artifacts=artifacts,
        planted_label=planted,
    )


def load_cohort(directory: str | Path) -> list[VideoManifest]:
    """Load every manifest under a cohort directory, sorted by video_id.

    Looks in `directory/manifests/` when present, else `directory` itself.
    """
    directory = Path(directory)
    root = directory / "manifests"
    if not root.is_dir():
        root = directory
    files = sorted(root.glob("*.json"))
    if not files:
        raise ManifestError(f"no manifest files under {root}")
    manifests = [load_manifest(f) for f in files]
    manifests.sort(key=lambda m: m.video_id)
    ids = [m.video_id for m in manifests]
    for i in range(1, len(ids)):
        if ids[i] == ids[i - 1]:
            raise ManifestError(f"duplicate video_id {ids[i]!r} in cohort {root}")
    cohort_ids = {m.cohort_id for m in manifests}
    if len(cohort_ids) > 1:
        raise ManifestError(f"mixed cohort_ids in {root}: {sorted(cohort_ids)}")
    return manifests


# artifact-specific loaders: validate the per-type invariants at ingestion


def load_frames(m: VideoManifest) -> np.ndarray:
    """[T,H,W,C] frames, C in {1,3}, values clamped to [0,1], T >= 2."""
    arr = m.load("frames")
    if arr.ndim != 4 or arr.shape[3] not in (1, 3):
        raise DataError(
            f"video {m.video_id!r}: frames must be [T,H,W,C] with C in "
            f"{{1,3}}, got {arr.shape}"
        )
    if arr.shape[0] < 2:
        raise DataError(f"video {m.video_id!r}: need at least 2 frames")
    return np.clip(arr, 0.0, 1.0)


def load_depth(m: VideoManifest) -> np.ndarray:
    """[T,H,W] depth, linearly normalized per video to [0,1], T >= 2."""
    arr = m.load("depth")
    if arr.ndim != 3:
        raise DataError(
            f"video {m.video_id!r}: depth must be [T,H,W], got {arr.shape}"
        )
    if arr.shape[0] < 2:
        raise DataError(f"video {m.video_id!r}: need at least 2 depth frames")
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        return (arr - lo) / (hi - lo)
    return np.zeros_like(arr)


def load_flow(m: VideoManifest, key: str) -> np.ndarray:
    """[T-1,H,W,2] backward-correspondence flow in pixels."""
    arr = m.load(key)
    if arr.ndim != 4 or arr.shape[3] != 2:
        raise DataError(
            f"video {m.video_id!r}: {key} must be [T-1,H,W,2], got {arr.shape}"
        )
    return arr


def load_embeddings(m: VideoManifest, key: str) -> np.ndarray:
    """[T,D] per-frame embeddings, every row nonzero, T >= 2."""
    arr = m.load(key)
    if arr.ndim != 2:
        raise DataError(
            f"video {m.video_id!r}: {key} must be [T,D], got {arr.shape}"
        )
    if arr.shape[0] < 2:
        raise DataError(f"video {m.video_id!r}: {key} needs T >= 2")
    norms = np.linalg.norm(arr, axis=1)
    if (norms == 0).any():
        raise DataError(f"video {m.video_id!r}: zero-norm row in {key}")
    return arr


def load_tokens(m: VideoManifest) -> np.ndarray:
    """[T,L,C] token features, token 0 is CLS, L >= 2."""
    arr = m.load("tokens")
    if arr.ndim != 3 or arr.shape[1] < 2:
        raise DataError(
            f"video {m.video_id!r}: tokens must be [T,L,C] with L >= 2, "
            f"got {arr.shape}"
        )
    return arr


def load_depth_feat(m: VideoManifest) -> np.ndarray:
    """Depth branch feature map, rank >= 2, channels on axis 1."""
    arr = m.load("depth_feat")
    if arr.ndim < 2:
        raise DataError(
            f"video {m.video_id!r}: depth_feat needs rank >= 2, got {arr.shape}"
        )
    return arr
