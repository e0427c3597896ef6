"""Acceptance gate: one test per release criterion, each printing a
PASS line with its measured tolerance/runtime (run with -s or -rA to
see them).  Tolerances are pinned here, not configurable.
"""

import filecmp
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from forgescore.cli import main
from forgescore.consistency import appearance_consistency
from forgescore.errors import DataError
from forgescore.evalsuite import binary_auc, binary_map, evaluate
from forgescore.fusion import (
    FusionConfig,
    FusionParams,
    FusionSample,
    gradcheck,
    rank_weighted_loss,
)
from forgescore.labeling import (
    AnomalyScores,
    ForgeryLabel,
    assign_labels,
    build_labeled_cohort,
    confidence_weights,
    load_labeled,
    load_split_manifest,
    rank_cohort,
    split_cohort,
    substream,
)
from forgescore.review import ReviewEvent, ReviewJournal, ReviewSession, fold_events
from forgescore.warp import warping_error


def _ok(name: str, detail: str = ""):
    print(f"[PASS] {name}" + (f"  ({detail})" if detail else ""))


def test_warping_identities():
    t0 = time.perf_counter()
    frame = np.random.default_rng(0).random((32, 32, 3))
    static = np.stack([frame] * 6)
    report = warping_error(static, np.zeros((5, 32, 32, 2)))
    assert report.total <= 1e-12

    rng = np.random.default_rng(1)
    h, w, t = 32, 32, 8
    wide = rng.random((h, w + t, 3))
    seq = np.stack([wide[:, i : i + w] for i in range(t)])
    flows = np.zeros((t - 1, h, w, 2))
    flows[..., 0] = 1.0
    shifted = warping_error(seq, flows, border=1)
    assert shifted.total <= 1e-10
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    _ok("warping identities", f"static 0, shift {shifted.total:.2e}, {elapsed:.3f}s")


def test_noise_calibration():
    t0 = time.perf_counter()
    seq = np.random.default_rng(2).random((30, 64, 64, 3))
    report = warping_error(seq, np.zeros((29, 64, 64, 2)))
    assert abs(report.total - 1 / 6) <= 0.01
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    _ok("noise calibration", f"E={report.total:.5f} vs 1/6, {elapsed:.3f}s")


def test_consistency_identities():
    const = np.tile(np.array([0.2, -0.7, 1.1]), (9, 1))
    assert appearance_consistency(const).s_score == 1.0

    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    alt = np.stack([e1 if i % 2 == 0 else e2 for i in range(10)])
    assert appearance_consistency(alt).s_score == 0.0

    rng = np.random.default_rng(3)
    seq = rng.normal(size=(12, 8))
    scaled = seq * rng.uniform(0.5, 20.0, size=(12, 1))
    diff = abs(
        appearance_consistency(seq).s_score
        - appearance_consistency(scaled).s_score
    )
    assert diff <= 1e-12
    _ok("consistency identities", f"rescale diff {diff:.1e}")


def _oracle_rank(scores):
    remaining = dict(scores)
    ranks = {}
    rank = 1
    while remaining:
        best = None
        for vid, s in remaining.items():
            if (
                best is None
                or s > remaining[best]
                or (s == remaining[best] and vid < best)
            ):
                best = vid
        ranks[best] = rank
        del remaining[best]
        rank += 1
    return ranks


def _oracle_label(rs, ra, rm):
    if rs <= ra and rs <= rm:
        return ForgeryLabel.SPATIAL
    if ra <= rm:
        return ForgeryLabel.APPEARANCE
    return ForgeryLabel.MOTION


def test_label_engine_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 101))
        vals = np.round(rng.random((n, 3)), 2)  # coarse grid forces ties
        raw = {f"v{i:03d}": vals[i] for i in range(n)}
        scores = {vid: AnomalyScores(*v.tolist()) for vid, v in raw.items()}
        table = rank_cohort(scores)
        labels = assign_labels(table)
        for kind, idx in (("spatial", 0), ("appearance", 1), ("motion", 2)):
            oracle = _oracle_rank({vid: float(v[idx]) for vid, v in raw.items()})
            if getattr(table, kind) != oracle:
                mismatches += 1
        for vid in raw:
            want = _oracle_label(
                table.spatial[vid], table.appearance[vid], table.motion[vid]
            )
            if labels[vid] != want:
                mismatches += 1
    elapsed = time.perf_counter() - t0
    assert mismatches == 0
    assert elapsed < 10.0
    _ok("label-engine oracle", f"1000 cohorts, 0 mismatches, {elapsed:.2f}s")


def test_confidence_formulas():
    for n in (1, 2, 4, 9, 50):
        scores = {f"v{i:02d}": 1.0 - i / n for i in range(n)}
        out = confidence_weights(scores)
        for vid, (r, r_hat, alpha) in out.items():
            assert abs(r_hat - r / n) <= 1e-15
            assert abs(alpha - math.log(math.e + r / n)) <= 1e-12
            assert 1.0 < alpha <= math.log(math.e + 1)

    # batch total: L = {0.5, 1.0}, weights {1.0, 1.3} -> (0.5 + 1.3)/2
    def logits_for(p):
        rest = (1 - p) / 3
        return np.log([p, rest, rest, rest])

    report = rank_weighted_loss(
        [logits_for(math.exp(-0.5)), logits_for(math.exp(-1.0))],
        [0, 0],
        [1.0, 1.3],
    )
    assert abs(report.total - 0.9) <= 1e-9
    _ok("confidence formulas", f"L_total={report.total:.12f}")


def test_gradient_verification():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for trial in range(20):
        c = int(rng.integers(3, 8))
        d = int(rng.integers(2, 6))
        config = FusionConfig(
            token_dim=c,
            token_count=int(rng.integers(2, 5)),
            frames=int(rng.integers(2, 4)),
            depth_feat_shape=(2, d, 2, 2),
            fused_dim=d,
            seed=trial,
        )
        params = FusionParams.init(config, rng=substream(trial, "init"))
        batch = [
            FusionSample(
                tokens=rng.normal(
                    size=(config.frames, config.token_count, config.token_dim)
                ),
                depth_feat=rng.normal(size=config.depth_feat_shape),
                label=int(rng.integers(4)),
                weight=float(rng.uniform(1.0, 1.3)),
            )
            for _ in range(2)
        ]
        worst = max(worst, gradcheck(params, batch))
    elapsed = time.perf_counter() - t0
    assert worst < 1e-4
    assert elapsed < 30.0
    _ok("gradient verification", f"max rel err {worst:.2e}, {elapsed:.2f}s")


def test_end_to_end_planted_recovery(tmp_path):
    t0 = time.perf_counter()
    cohort = tmp_path / "cohort"
    work = tmp_path / "work"
    assert main(["synth", "--seed", "7", "--per-class", "20",
                 "--out", str(cohort)]) == 0
    assert main(["score", "--cohort", str(cohort), "--out", str(work)]) == 0
    assert main(["label", "--scores", str(work / "scores.json"),
                 "--out", str(work)]) == 0

    labels = json.loads((work / "labels.json").read_text())
    hits = total = 0
    for vid, entry in labels["videos"].items():
        doc = json.loads((cohort / "manifests" / f"{vid}.json").read_text())
        if doc["is_real"]:
            continue
        total += 1
        hits += int(entry["label"] == doc["planted_label"])
    recovery = hits / total
    assert recovery >= 0.95

    assert main(["split", "--labels", str(work / "labels.json"), "--seed", "7",
                 "--out", str(work)]) == 0
    split = load_split_manifest(work / "split.json")
    cohort_id, labeled = load_labeled(work / "labels.json")
    per_class = {c: 0 for c in (0, 1, 2)}
    for vid in split.pending_review:
        per_class[int(labeled[vid].label)] += 1
    assert per_class == {0: 4, 1: 4, 2: 4}  # ceil(0.2 * 20) each

    # finalize by accepting every pending video, then train
    verdicts = {vid: ("accept", None) for vid in split.pending_review}
    final = split_cohort(labeled, cohort_id, 7, verdicts=verdicts)
    final.write(work / "split_final.json")
    assert main([
        "train", "--cohort", str(cohort), "--labels", str(work / "labels.json"),
        "--split", str(work / "split_final.json"),
        "--lr", "0.05", "--epochs", "200", "--seed", "7",
        "--out", str(work),
    ]) == 0
    header = json.loads((work / "checkpoint" / "header.json").read_text())
    val_acc = header["metrics"]["best_val_acc"]
    assert val_acc >= 0.90
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    _ok(
        "end-to-end planted recovery",
        f"recovery {recovery:.2f}, val acc {val_acc:.2f}, {elapsed:.1f}s",
    )


def test_metric_contracts():
    rng = np.random.default_rng(6)
    labels = rng.integers(0, 4, 400)
    probs = rng.dirichlet(np.ones(4), size=400)
    report = evaluate(probs, labels)
    preds = probs.argmax(axis=1)
    assert report.binary_acc == float(
        np.mean(binary_map(preds) == binary_map(labels))
    )

    assert binary_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    null_rng = np.random.default_rng(7)
    scores = null_rng.random(10_000)
    pos = null_rng.random(10_000) < 0.5
    null_auc = binary_auc(scores, pos)
    assert abs(null_auc - 0.5) <= 0.05

    base = binary_auc(scores, pos)
    assert binary_auc(np.exp(5 * scores), pos) == pytest.approx(base, abs=1e-12)
    _ok("metric contracts", f"null AUC {null_auc:.4f}")


def test_determinism(tmp_path):
    for name in ("r1", "r2"):
        root = tmp_path / name
        assert main(["synth", "--seed", "11", "--per-class", "3",
                     "--out", str(root / "cohort")]) == 0
        assert main(["score", "--cohort", str(root / "cohort"),
                     "--out", str(root / "work")]) == 0
        assert main(["label", "--scores", str(root / "work" / "scores.json"),
                     "--out", str(root / "work")]) == 0
        assert main(["split", "--labels", str(root / "work" / "labels.json"),
                     "--seed", "11", "--out", str(root / "work")]) == 0
        assert main([
            "train", "--cohort", str(root / "cohort"),
            "--labels", str(root / "work" / "labels.json"),
            "--split", str(root / "work" / "split.json"), "--assume-accept",
            "--lr", "0.05", "--epochs", "25", "--seed", "11",
            "--out", str(root / "work"),
        ]) == 0

    r1, r2 = tmp_path / "r1", tmp_path / "r2"
    synth_files = sorted(
        p.relative_to(r1 / "cohort")
        for p in (r1 / "cohort").rglob("*")
        if p.is_file() and p.name != "run.json"
    )
    assert synth_files
    for rel in synth_files:
        assert filecmp.cmp(r1 / "cohort" / rel, r2 / "cohort" / rel,
                           shallow=False), rel
    assert filecmp.cmp(r1 / "work" / "split.json", r2 / "work" / "split.json",
                       shallow=False)
    ckpt_files = sorted(
        p.relative_to(r1 / "work" / "checkpoint")
        for p in (r1 / "work" / "checkpoint").rglob("*")
        if p.is_file()
    )
    assert ckpt_files
    for rel in ckpt_files:
        assert filecmp.cmp(
            r1 / "work" / "checkpoint" / rel,
            r2 / "work" / "checkpoint" / rel,
            shallow=False,
        ), rel
    _ok(
        "determinism",
        f"{len(synth_files)} synth files, split, {len(ckpt_files)} ckpt files",
    )


def _toy_labeled(seed):
    rng = np.random.default_rng(seed)
    scores = {}
    for i in range(8):
        scores[f"s{i:02d}"] = AnomalyScores(1 + rng.random(), 0.01, 0.01)
        scores[f"a{i:02d}"] = AnomalyScores(0.01, 1 + rng.random(), 0.01)
        scores[f"m{i:02d}"] = AnomalyScores(0.01, 0.01, 1 + rng.random())
    return build_labeled_cohort(scores, [f"r{i:02d}" for i in range(4)])


def test_journal_replay(tmp_path):
    rng = np.random.default_rng(8)
    labeled = _toy_labeled(0)
    from forgescore.labeling import pending_by_class

    pending = [vid for ids in pending_by_class(labeled).values() for vid in ids]
    t0 = time.perf_counter()
    for trial in range(1000):
        n_events = int(rng.integers(0, 20))
        events = []
        oracle = {}
        for seq in range(1, n_events + 1):
            vid = pending[int(rng.integers(len(pending)))]
            verdict = ("accept", "reassign", "reject")[int(rng.integers(3))]
            target = int(rng.integers(4)) if verdict == "reassign" else None
            events.append(
                ReviewEvent(seq=seq, timestamp="t", video_id=vid,
                            verdict=verdict, reviewer="r", reassign_to=target)
            )
            oracle[vid] = (verdict, target)
        effective = fold_events(events, set(pending))
        assert {
            vid: (ev.verdict, ev.reassign_to) for vid, ev in effective.items()
        } == oracle
        manifest = split_cohort(labeled, "c0", 3, verdicts=oracle)
        for vid, (verdict, target) in oracle.items():
            if verdict == "reject":
                assert vid not in manifest.train
                assert vid not in manifest.val
                assert vid not in manifest.pending_review
            else:
                assert vid in manifest.val

    # a slice of sequences goes through real journal files and sessions
    for trial in range(25):
        journal = ReviewJournal(tmp_path / f"j{trial}.jsonl")
        session = ReviewSession("c0", labeled, 3, journal)
        applied = {}
        for _ in range(int(rng.integers(1, 12))):
            vid = pending[int(rng.integers(len(pending)))]
            verdict = ("accept", "reassign", "reject")[int(rng.integers(3))]
            target = int(rng.integers(4)) if verdict == "reassign" else None
            session.review(vid, verdict, "r", reassign_to=target)
            applied[vid] = (verdict, target)
        replayed = ReviewSession("c0", labeled, 3, ReviewJournal(journal.path))
        assert replayed.review_verdicts() == applied == session.review_verdicts()
        a = replayed.finalize(force=True)
        b = session.finalize(force=True)
        assert (a.train, a.val, a.pending_review) == (b.train, b.val, b.pending_review)
    elapsed = time.perf_counter() - t0
    _ok("journal replay", f"1000 folds + 25 file replays, {elapsed:.2f}s")
