"""Multi-class and binary-mapped metrics plus the robustness harness.

AUC is the rank statistic (Mann-Whitney) with ties counting one half;
multi-class AUC is the macro average of one-vs-rest AUCs over classes
present in the labels.  The binary mapping collapses the three anomaly
classes to "fake" (1) and keeps real as 0, with p_fake the sum of the
anomaly-class probabilities.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

N_CLASSES = 4


@dataclass(frozen=True)
class EvalReport:
    acc: float
    macro_ovr_auc: float
    confusion: list[list[int]]
    f1_per_class: list[float]
    binary_acc: float
    binary_auc: float
    n_samples: int

    def to_json_dict(self) -> dict:
        return {
            "acc": self.acc,
            "macro_ovr_auc": self.macro_ovr_auc,
            "confusion": self.confusion,
            "f1_per_class": self.f1_per_class,
            "binary_acc": self.binary_acc,
            "binary_auc": self.binary_auc,
            "n_samples": self.n_samples,
        }

    def write_confusion_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["true\\pred"] + [str(c) for c in range(N_CLASSES)])
            for c, row in enumerate(self.confusion):
                writer.writerow([str(c)] + [str(v) for v in row])


def _check_labels(labels) -> np.ndarray:
    arr = np.asarray(labels, dtype=np.int64)
    if arr.size == 0:
        raise DataError("empty label array")
    if arr.min() < 0 or arr.max() >= N_CLASSES:
        raise DataError(f"labels must lie in 0..{N_CLASSES - 1}")
    return arr


def accuracy(preds, labels) -> float:
    p = _check_labels(preds)
    y = _check_labels(labels)
    if p.shape != y.shape:
        raise DataError("prediction/label length mismatch")
    return float((p == y).mean())


def confusion(preds, labels) -> list[list[int]]:
    """4x4 count matrix, rows = true class, columns = predicted."""
    p = _check_labels(preds)
    y = _check_labels(labels)
    if p.shape != y.shape:
        raise DataError("prediction/label length mismatch")
    mat = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(mat, (y, p), 1)
    return mat.tolist()


def f1_per_class(conf: list[list[int]]) -> list[float]:
    mat = np.asarray(conf, dtype=np.float64)
    out = []
    for c in range(N_CLASSES):
        tp = mat[c, c]
        fp = mat[:, c].sum() - tp
        fn = mat[c, :].sum() - tp
        denom = 2 * tp + fp + fn
        out.append(float(2 * tp / denom) if denom > 0 else 0.0)
    return out


def _tie_average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing their average rank."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def binary_auc(scores, positives) -> float:
    """ROC-AUC of scores against a boolean positive mask."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs at least one positive and one negative")
    ranks = _tie_average_ranks(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def macro_ovr_auc(probabilities: np.ndarray, labels) -> float:
    """Macro one-vs-rest AUC over classes present in the labels.

    Classes with no positives or no negatives are skipped with a warning.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    y = _check_labels(labels)
    if probs.ndim != 2 or probs.shape[1] != N_CLASSES or probs.shape[0] != len(y):
        raise DataError(f"probabilities must be [N,{N_CLASSES}], got {probs.shape}")
    rowsum = probs.sum(axis=1)
    if np.any(np.abs(rowsum - 1.0) > 1e-6):
        raise DataError("probability rows must sum to 1 within 1e-6")
    aucs = []
    for c in range(N_CLASSES):
        pos = y == c
        n_pos = int(pos.sum())
        if n_pos == 0:
            continue
        if n_pos == len(y):
            warnings.warn(f"class {c} has no negatives; skipped", stacklevel=2)
            continue
        aucs.append(binary_auc(probs[:, c], pos))
    if not aucs:
        raise DataError("no class had both positives and negatives")
    return float(np.mean(aucs))


def binary_map(values) -> np.ndarray:
    """Collapse 4-class codes to fake=1 (codes 0..2) / real=0 (code 3)."""
    arr = _check_labels(values)
    return (arr != 3).astype(np.int64)


def binary_prob_fake(probabilities: np.ndarray) -> np.ndarray:
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != N_CLASSES:
        raise DataError(f"probabilities must be [N,{N_CLASSES}], got {probs.shape}")
    return probs[:, :3].sum(axis=1)


def evaluate(probabilities: np.ndarray, labels) -> EvalReport:
    """Full report from softmax probabilities and true labels."""
    probs = np.asarray(probabilities, dtype=np.float64)
    y = _check_labels(labels)
    preds = probs.argmax(axis=1)
    conf = confusion(preds, y)
    bin_y = binary_map(y)
    bin_p = binary_map(preds)
    p_fake = binary_prob_fake(probs)
    if len(set(bin_y.tolist())) == 2:
        b_auc = binary_auc(p_fake, bin_y == 1)
    else:
        warnings.warn("binary AUC undefined: one class absent", stacklevel=2)
        b_auc = float("nan")
    return EvalReport(
        acc=accuracy(preds, y),
        macro_ovr_auc=macro_ovr_auc(probs, y),
        confusion=conf,
        f1_per_class=f1_per_class(conf),
        binary_acc=float((bin_p == bin_y).mean()),
        binary_auc=b_auc,
        n_samples=len(y),
    )


@dataclass(frozen=True)
class Perturbation:
    """Post-processing perturbation applied before re-scoring."""

    kind: str  # blur | resize | mixed | none
    sigma: float = 3.0
    ratio: float = 0.7

    @staticmethod
    def parse(text: str) -> "Perturbation":
        if text in ("none", "identity"):
            return Perturbation(kind="none")
        if text == "mixed":
            return Perturbation(kind="mixed")
        if ":" in text:
            kind, _, value = text.partition(":")
            if kind == "blur":
                return Perturbation(kind="blur", sigma=float(value))
            if kind == "resize":
                return Perturbation(kind="resize", ratio=float(value))
        raise DataError(
            f"unknown perturbation {text!r} (want blur:S, resize:R or mixed)"
        )

    def is_identity(self) -> bool:
        return self.kind == "none" or (self.kind == "resize" and self.ratio == 1.0)

    def describe(self) -> str:
        if self.kind == "blur":
            return f"blur:{self.sigma:g}"
        if self.kind == "resize":
            return f"resize:{self.ratio:g}"
        return self.kind

    def apply_image(self, image: np.ndarray) -> np.ndarray:
        from .warp import gaussian_blur, resize

        if self.is_identity():
            return image
        out = image
        if self.kind in ("blur", "mixed"):
            out = gaussian_blur(out, self.sigma)
        if self.kind in ("resize", "mixed"):
            out = resize(out, self.ratio)
        return out


def _probs_matrix(params, samples) -> np.ndarray:
    from .fusion import predict

    return np.stack([predict(params, s) for s in samples])


def robustness_eval(
    manifests,
    params,
    label_map: dict[str, int],
    perturbation: Perturbation,
    rescore: bool = True,
) -> dict:
    """Clean-vs-perturbed comparison of the classifier and the scorers.

    The classifier is re-run on features shrunk toward their cohort mean
    by the fixture response factor; the anomaly scorers are re-run on
    actually perturbed frames, depth and embeddings.  Identity
    perturbations short-circuit so all deltas are exactly zero.
    """
    from .fusion import samples_from_manifests
    from .scoring import score_arrays
    from .synth import attenuate_toward, perturbation_attenuation
    from .tensorio import load_depth, load_embeddings, load_flow, load_frames

    samples = samples_from_manifests(manifests, label_map)
    if not samples:
        raise DataError("no labeled videos to evaluate")
    labels = [s.label for s in samples]
    clean_probs = _probs_matrix(params, samples)
    clean_report = evaluate(clean_probs, labels)

    factor = perturbation_attenuation(perturbation)
    if perturbation.is_identity():
        perturbed_report = clean_report
    else:
        token_center = np.mean([s.tokens for s in samples], axis=0)
        feat_center = np.mean([s.depth_feat for s in samples], axis=0)
        perturbed = [
            type(s)(
                tokens=attenuate_toward(s.tokens, token_center, factor),
                depth_feat=attenuate_toward(s.depth_feat, feat_center, factor),
                label=s.label,
                weight=s.weight,
                video_id=s.video_id,
            )
            for s in samples
        ]
        perturbed_report = evaluate(_probs_matrix(params, perturbed), labels)

    payload = {
        "perturbation": perturbation.describe(),
        "attenuation": factor,
        "clean": clean_report.to_json_dict(),
        "perturbed": perturbed_report.to_json_dict(),
        "delta": report_delta(clean_report, perturbed_report),
    }

    if rescore:
        by_id = {m.video_id: m for m in manifests}
        score_rows = {}
        for s in samples:
            m = by_id[s.video_id]
            frames = load_frames(m)
            depth = load_depth(m)
            clip = load_embeddings(m, "clip_emb") if "clip_emb" in m.artifacts else None
            dino = load_embeddings(m, "dino_emb") if "dino_emb" in m.artifacts else None
            clean_scores = score_arrays(
                frames, load_flow(m, "frame_flow"), depth,
                load_flow(m, "depth_flow"), clip, dino,
            )
            if perturbation.is_identity():
                pert_scores = clean_scores
            else:
                p_frames = np.stack(
                    [perturbation.apply_image(f) for f in frames]
                )
                p_depth = np.stack(
                    [perturbation.apply_image(d) for d in depth]
                )
                emb_center = lambda e: e.mean(axis=0, keepdims=True)
                p_clip = (
                    attenuate_toward(clip, emb_center(clip), factor)
                    if clip is not None
                    else None
                )
                p_dino = (
                    attenuate_toward(dino, emb_center(dino), factor)
                    if dino is not None
                    else None
                )
                pert_scores = score_arrays(
                    p_frames, load_flow(m, "frame_flow"), p_depth,
                    load_flow(m, "depth_flow"), p_clip, p_dino,
                )
            score_rows[s.video_id] = {
                "clean": {
                    "spatial": clean_scores.spatial,
                    "appearance": clean_scores.appearance,
                    "motion": clean_scores.motion,
                },
                "perturbed": {
                    "spatial": pert_scores.spatial,
                    "appearance": pert_scores.appearance,
                    "motion": pert_scores.motion,
                },
            }
        payload["rescored"] = score_rows
    return payload


def report_delta(clean: EvalReport, perturbed: EvalReport) -> dict:
    return {
        "acc": perturbed.acc - clean.acc,
        "macro_ovr_auc": perturbed.macro_ovr_auc - clean.macro_ovr_auc,
        "binary_acc": perturbed.binary_acc - clean.binary_acc,
        "binary_auc": perturbed.binary_auc - clean.binary_auc,
        "f1_per_class": [
            pf - cf for pf, cf in zip(perturbed.f1_per_class, clean.f1_per_class)
        ],
    }


def write_eval_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
