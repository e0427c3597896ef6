"""Deterministic synthetic cohorts with planted anomaly types.

Real videos are band-limited sinusoid patterns drifting under a smooth,
exactly-known velocity; their flow artifacts are that velocity, so the
warping error is only bilinear interpolation noise.  Each fake class
perturbs exactly one signal:

  spatial     depth frames gain per-frame discontinuity bursts while the
              depth flow stays smooth, inflating the depth warping error
  appearance  embeddings rotate with an extra per-frame angular rate, so
              consecutive cosines drop
  motion      frame flow is corrupted by random vectors on a fraction of
              pixels while the frames stay smooth

Token features and the depth feature map get a class-dependent mean
shift of the same magnitude, which is what makes the fusion classifier
learnable.  Strength 0 degenerates every class to the real recipe.

Perturbation response: fixture structure is band-limited (components
below ``FRAME_BAND[1]`` cycles/pixel, class evidence at an effective
``FEATURE_BAND_FREQ``), so a Gaussian blur of width sigma multiplies the
evidence by the analytic transfer factor exp(-2 pi^2 sigma^2 nu^2) and a
resize by ratio r scales it by r.  ``perturbation_attenuation`` exposes
that factor to the robustness harness, which shrinks features toward
their cohort mean instead of re-running any backbone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .evalsuite import Perturbation
from .tensorio import VideoManifest, write_tensor

CLASS_ORDER = ("spatial", "appearance", "motion", "real")
CLASS_CODES = {"spatial": 0, "appearance": 1, "motion": 2, "real": 3}

FRAME_BAND = (0.04, 0.10)   # spatial frequency band of fixture patterns
FEATURE_BAND_FREQ = 0.08    # effective frequency of class evidence
BASE_EMB_RATE = 0.02        # radians per frame for the real recipe
DEFAULT_STRENGTHS = {"spatial": 1.0, "appearance": 0.5, "motion": 2.0}


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    counts: dict[str, int] = field(
        default_factory=lambda: {name: 5 for name in CLASS_ORDER}
    )
    frames: int = 12
    height: int = 32
    width: int = 32
    emb_dim: int = 16
    token_count: int = 5
    token_dim: int = 16
    depth_channels: int = 32
    depth_feat_grid: int = 6
    strengths: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_STRENGTHS)
    )

    def __post_init__(self):
        total = sum(self.counts.get(name, 0) for name in CLASS_ORDER)
        if total <= 0:
            raise DataError("spec generates zero videos")
        for name, n in self.counts.items():
            if name not in CLASS_ORDER:
                raise DataError(f"unknown class {name!r}")
            if n < 0:
                raise DataError(f"negative count for {name!r}")
        for name, s in self.strengths.items():
            if name not in DEFAULT_STRENGTHS:
                raise DataError(f"unknown strength key {name!r}")
            if s < 0:
                raise DataError(f"negative strength for {name!r}")
        if self.frames < 2:
            raise DataError("need at least 2 frames")

    def strength(self, name: str) -> float:
        return self.strengths.get(name, 0.0)

    def cohort_id(self) -> str:
        return f"synth-{self.seed}"


def _video_rng(spec: SynthSpec, class_name: str, idx: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(spec.seed, spawn_key=(CLASS_CODES[class_name], idx))
    )


def _class_directions(spec: SynthSpec, dim: int, tag: int) -> np.ndarray:
    """Four orthonormal class-evidence directions, fixed per cohort."""
    if dim < len(CLASS_ORDER):
        raise DataError(f"feature dim {dim} too small for 4 class directions")
    rng = np.random.default_rng(
        np.random.SeedSequence(spec.seed, spawn_key=(1000 + tag,))
    )
    basis, _ = np.linalg.qr(rng.standard_normal((dim, len(CLASS_ORDER))))
    return basis.T


def _drifting_pattern(rng, t, h, w, channels, n_components=4):
    """Band-limited pattern translating under a smooth velocity.

    Returns (frames [T,H,W,C] in [0,1], flows [T-1,H,W,2]); the flows
    are the exact backward correspondences of the translation.
    """
    freqs = rng.uniform(FRAME_BAND[0], FRAME_BAND[1], (n_components, 2))
    freqs *= rng.choice([-1.0, 1.0], size=(n_components, 2))
    # equalize each component's gradient (amp * freq) so the warp
    # baseline, dominated by edge-clamp mismatch, concentrates across
    # videos instead of varying with the frequency draw
    mags = np.sqrt((freqs**2).sum(axis=1))
    amps = 1.0 / mags
    amps *= 0.35 / amps.sum()
    phases = rng.uniform(0.0, 2 * math.pi, n_components)
    chan_phases = rng.uniform(0.0, 2 * math.pi, channels)
    # fixed speed envelope: every video sweeps the same velocity range
    # (sign and phase vary), so the warp baseline from interpolation and
    # border clamping concentrates tightly across videos
    vel_base = 0.75 * rng.choice([-1.0, 1.0], 2)
    wobble_amp = np.array([0.75, 0.75])
    wobble_phase = rng.uniform(0.0, 2 * math.pi, 2)

    steps = np.arange(t - 1, dtype=np.float64)
    vels = np.stack(
        [
            vel_base[k]
            + wobble_amp[k] * np.sin(2 * math.pi * steps / max(t - 1, 1) + wobble_phase[k])
            for k in range(2)
        ],
        axis=1,
    )  # [T-1, 2] (dx, dy) per consecutive pair
    pos = np.zeros((t, 2))
    pos[1:] = np.cumsum(vels, axis=0)

    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    frames = np.empty((t, h, w, channels))
    for ti in range(t):
        base = np.zeros((h, w, n_components))
        for i in range(n_components):
            base[:, :, i] = 2 * math.pi * (
                freqs[i, 0] * (xs + pos[ti, 0]) + freqs[i, 1] * (ys + pos[ti, 1])
            ) + phases[i]
        for ci in range(channels):
            frames[ti, :, :, ci] = 0.5 + np.sum(
                amps * np.sin(base + chan_phases[ci]), axis=2
            )
    np.clip(frames, 0.0, 1.0, out=frames)
    flows = np.broadcast_to(
        vels[:, None, None, :], (t - 1, h, w, 2)
    ).copy()
    return frames, flows


def _apply_depth_bursts(depth: np.ndarray, rng, strength: float) -> np.ndarray:
    """Per-frame rectangular depth discontinuities; frame 0 stays clean."""
    t, h, w = depth.shape
    out = depth.copy()
    for ti in range(1, t):
        n_bursts = 1 + int(rng.random() < 0.5)
        for _ in range(n_bursts):
            bh = int(rng.integers(max(h // 6, 2), max(h // 3, 3)))
            bw = int(rng.integers(max(w // 6, 2), max(w // 3, 3)))
            y0 = int(rng.integers(0, h - bh + 1))
            x0 = int(rng.integers(0, w - bw + 1))
            amp = strength * rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0])
            out[ti, y0 : y0 + bh, x0 : x0 + bw] += amp
    return out


def _normalize_unit_range(seq: np.ndarray) -> np.ndarray:
    lo, hi = float(seq.min()), float(seq.max())
    if hi > lo:
        return (seq - lo) / (hi - lo)
    return np.zeros_like(seq)


def _corrupt_flow(flows: np.ndarray, rng, strength: float, fraction=0.3):
    """Random displacement vectors of the given magnitude on a pixel subset."""
    out = flows.copy()
    t, h, w, _ = flows.shape
    for ti in range(t):
        mask = rng.random((h, w)) < fraction
        ang = rng.uniform(0.0, 2 * math.pi, (h, w))
        out[ti, :, :, 0] += mask * strength * np.cos(ang)
        out[ti, :, :, 1] += mask * strength * np.sin(ang)
    return out


def _embedding_stream(rng, t, dim, extra_rate: float) -> np.ndarray:
    """Unit vectors rotating in a random 2-plane plus tiny isotropic noise."""
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(dim)
    v -= (v @ u) * u
    v /= np.linalg.norm(v)
    rates = BASE_EMB_RATE + extra_rate + rng.normal(0.0, 0.005, t - 1)
    theta = np.concatenate([[rng.uniform(0.0, 2 * math.pi)], rates]).cumsum()
    stream = np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v
    stream += 0.005 * rng.standard_normal((t, dim))
    return stream


def generate(spec: SynthSpec, out_dir: str | Path) -> list[VideoManifest]:
    """Write a full cohort (manifests plus artifacts) and return the
    manifests sorted by video_id.  Byte-identical for a given spec."""
    out_dir = Path(out_dir)
    manifest_dir = out_dir / "manifests"
    artifact_dir = out_dir / "artifacts"
    manifest_dir.mkdir(parents=True, exist_ok=True)
    artifact_dir.mkdir(parents=True, exist_ok=True)

    token_dirs = _class_directions(spec, spec.token_dim, tag=0)
    depth_dirs = _class_directions(spec, spec.depth_channels, tag=1)

    manifests = []
    for class_name in CLASS_ORDER:
        code = CLASS_CODES[class_name]
        for idx in range(spec.counts.get(class_name, 0)):
            rng = _video_rng(spec, class_name, idx)
            vid = f"{class_name}-{idx:03d}"
            strength = (
                0.0 if class_name == "real" else spec.strength(class_name)
            )

            frames, frame_flow = _drifting_pattern(
                rng, spec.frames, spec.height, spec.width, channels=3
            )
            if class_name == "motion":
                frame_flow = _corrupt_flow(frame_flow, rng, strength)

            depth, depth_flow = _drifting_pattern(
                rng, spec.frames, spec.height, spec.width, channels=1
            )
            depth = depth[:, :, :, 0]
            if class_name == "spatial":
                depth = _apply_depth_bursts(depth, rng, strength)
            depth = _normalize_unit_range(depth)

            emb_rate = strength if class_name == "appearance" else 0.0
            clip_emb = _embedding_stream(rng, spec.frames, spec.emb_dim, emb_rate)
            dino_emb = _embedding_stream(rng, spec.frames, spec.emb_dim, emb_rate)

            token_shift = strength * token_dirs[code]
            tokens = token_shift + 0.25 * rng.standard_normal(
                (spec.frames, spec.token_count, spec.token_dim)
            )
            feat_shift = strength * depth_dirs[code]
            depth_feat = feat_shift[None, :, None, None] + 0.25 * rng.standard_normal(
                (2, spec.depth_channels, spec.depth_feat_grid, spec.depth_feat_grid)
            )

            artifacts = {
                "frames": frames,
                "depth": depth,
                "frame_flow": frame_flow,
                "depth_flow": depth_flow,
                "clip_emb": clip_emb,
                "dino_emb": dino_emb,
                "tokens": tokens,
                "depth_feat": depth_feat,
            }
            rel_paths = {}
            for key, arr in artifacts.items():
                fname = f"{vid}_{key}.fvt"
                write_tensor(arr, artifact_dir / fname)
                rel_paths[key] = f"../artifacts/{fname}"

            doc = {
                "video_id": vid,
                "cohort_id": spec.cohort_id(),
                "is_real": class_name == "real",
                "artifacts": rel_paths,
                "planted_label": code,
            }
            (manifest_dir / f"{vid}.json").write_text(
                json.dumps(doc, indent=2, sort_keys=True) + "\n"
            )
            manifests.append(
                VideoManifest(
                    video_id=vid,
                    cohort_id=spec.cohort_id(),
                    is_real=class_name == "real",
                    artifacts={
                        k: (artifact_dir / f"{vid}_{k}.fvt").resolve()
                        for k in artifacts
                    },
                    planted_label=code,
                )
            )
    manifests.sort(key=lambda m: m.video_id)
    return manifests


def perturbation_attenuation(p: Perturbation) -> float:
    """Analytic attenuation of fixture class evidence under a perturbation.

    Blur uses the Gaussian transfer function at the documented evidence
    frequency; resize scales linearly with the ratio; mixed multiplies.
    """
    if p.is_identity():
        return 1.0
    factor = 1.0
    if p.kind in ("blur", "mixed"):
        factor *= math.exp(
            -2.0 * math.pi**2 * p.sigma**2 * FEATURE_BAND_FREQ**2
        )
    if p.kind in ("resize", "mixed"):
        factor *= p.ratio
    return factor


def attenuate_toward(arr: np.ndarray, center: np.ndarray, factor: float) -> np.ndarray:
    """Shrink features toward a reference by the attenuation factor."""
    if factor == 1.0:
        return arr
    return center + factor * (arr - center)
