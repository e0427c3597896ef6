import numpy as np
import pytest

from forgescore.errors import DataError
from forgescore.evalsuite import (
    Perturbation,
    accuracy,
    binary_auc,
    binary_map,
    binary_prob_fake,
    confusion,
    evaluate,
    f1_per_class,
    macro_ovr_auc,
)


def _oracle_auc(scores, positives):
    """Count concordant pairs; ties contribute one half."""
    scores = np.asarray(scores, dtype=float)
    positives = np.asarray(positives, dtype=bool)
    pos = scores[positives]
    neg = scores[~positives]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def test_accuracy_all_correct():
    preds = [0, 1, 2, 3]
    assert accuracy(preds, preds) == 1.0
    conf = confusion(preds, preds)
    assert all(conf[i][i] == 1 for i in range(4))
    assert sum(map(sum, conf)) == 4


def test_all_predicted_real_half_right():
    preds = [3] * 10
    labels = [3] * 5 + [0] * 5
    assert accuracy(preds, labels) == 0.5
    conf = confusion(preds, labels)
    assert conf[3][3] == 5 and conf[0][3] == 5
    f1 = f1_per_class(conf)
    assert f1[0] == 0.0
    assert f1[3] == pytest.approx(2 * 5 / (2 * 5 + 5), abs=1e-12)


def test_metrics_match_counting_oracle():
    rng = np.random.default_rng(0)
    preds = rng.integers(0, 4, 1000)
    labels = rng.integers(0, 4, 1000)
    assert accuracy(preds, labels) == pytest.approx(
        sum(int(p == y) for p, y in zip(preds, labels)) / 1000, abs=1e-15
    )
    conf = confusion(preds, labels)
    for t in range(4):
        for p in range(4):
            assert conf[t][p] == sum(
                1 for pp, yy in zip(preds, labels) if yy == t and pp == p
            )


def test_confusion_row_sums_are_class_counts():
    rng = np.random.default_rng(1)
    preds = rng.integers(0, 4, 200)
    labels = rng.integers(0, 4, 200)
    conf = np.asarray(confusion(preds, labels))
    for c in range(4):
        assert conf[c].sum() == int((labels == c).sum())


def test_auc_perfectly_separable():
    scores = [0.9, 0.8, 0.2, 0.1]
    assert binary_auc(scores, [True, True, False, False]) == 1.0


def test_auc_inverted_hand_case():
    # positives scored strictly below negatives: every pair lost
    scores = [0.9, 0.8, 0.2, 0.1]
    positives = [False, False, True, True]
    assert binary_auc(scores, positives) == 0.0
    assert _oracle_auc(scores, positives) == 0.0


def test_auc_matches_pair_oracle_with_ties():
    rng = np.random.default_rng(2)
    for _ in range(30):
        n = int(rng.integers(4, 40))
        scores = rng.integers(0, 5, n).astype(float)  # heavy ties
        positives = rng.random(n) < 0.4
        if positives.all() or not positives.any():
            continue
        assert binary_auc(scores, positives) == pytest.approx(
            _oracle_auc(scores, positives), abs=1e-12
        )


def test_auc_null_distribution():
    rng = np.random.default_rng(3)
    scores = rng.random(10_000)
    labels = rng.random(10_000) < 0.5
    assert binary_auc(scores, labels) == pytest.approx(0.5, abs=0.05)


def test_auc_invariant_under_monotone_transform():
    rng = np.random.default_rng(4)
    scores = rng.random(500)
    positives = rng.random(500) < 0.3
    base = binary_auc(scores, positives)
    assert binary_auc(np.exp(7 * scores), positives) == pytest.approx(
        base, abs=1e-12
    )
    assert binary_auc(scores**3 + 5, positives) == pytest.approx(base, abs=1e-12)


def test_macro_ovr_auc_perfect():
    labels = [0, 1, 2, 3]
    probs = np.eye(4)[labels]
    assert macro_ovr_auc(probs, labels) == 1.0


def test_macro_ovr_auc_skips_absent_classes():
    labels = [0, 0, 1, 1]
    rng = np.random.default_rng(5)
    probs = rng.dirichlet(np.ones(4), size=4)
    # classes 2,3 absent: mean over the two present one-vs-rest AUCs
    got = macro_ovr_auc(probs, labels)
    expect = np.mean(
        [
            _oracle_auc(probs[:, 0], np.array(labels) == 0),
            _oracle_auc(probs[:, 1], np.array(labels) == 1),
        ]
    )
    assert got == pytest.approx(expect, abs=1e-12)


def test_macro_ovr_auc_validates_rows():
    with pytest.raises(DataError):
        macro_ovr_auc(np.ones((3, 4)), [0, 1, 2])


def test_binary_map_table():
    assert binary_map([2])[0] == 1
    assert binary_map([3])[0] == 0
    assert binary_map([0, 1, 2, 3]).tolist() == [1, 1, 1, 0]
    with pytest.raises(DataError):
        binary_map([4])


def test_binary_prob_fake_sum_rule():
    probs = np.array([[0.1, 0.2, 0.3, 0.4]])
    assert binary_prob_fake(probs)[0] == pytest.approx(0.6, abs=1e-12)


def test_binary_acc_consistency():
    rng = np.random.default_rng(6)
    labels = rng.integers(0, 4, 300)
    probs = rng.dirichlet(np.ones(4), size=300)
    report = evaluate(probs, labels)
    preds = probs.argmax(axis=1)
    expect = float(np.mean(binary_map(preds) == binary_map(labels)))
    assert report.binary_acc == expect
    assert report.n_samples == 300
    assert sum(map(sum, report.confusion)) == 300


def test_perturbation_parsing():
    p = Perturbation.parse("blur:3")
    assert p.kind == "blur" and p.sigma == 3.0
    p = Perturbation.parse("resize:0.7")
    assert p.kind == "resize" and p.ratio == 0.7
    assert Perturbation.parse("mixed").kind == "mixed"
    assert Perturbation.parse("resize:1.0").is_identity()
    with pytest.raises(DataError):
        Perturbation.parse("sharpen:2")


def test_attenuation_model():
    import math

    from forgescore.synth import FEATURE_BAND_FREQ, perturbation_attenuation

    blur = perturbation_attenuation(Perturbation.parse("blur:3"))
    assert blur == pytest.approx(
        math.exp(-2 * math.pi**2 * 9 * FEATURE_BAND_FREQ**2), rel=1e-12
    )
    resize = perturbation_attenuation(Perturbation.parse("resize:0.7"))
    assert resize == 0.7
    mixed = perturbation_attenuation(Perturbation.parse("mixed"))
    assert mixed == pytest.approx(
        perturbation_attenuation(Perturbation(kind="blur"))
        * perturbation_attenuation(Perturbation(kind="resize")),
        rel=1e-12,
    )
    assert perturbation_attenuation(Perturbation.parse("resize:1.0")) == 1.0


def test_robustness_eval_mixed_smoke(tmp_path):
    from forgescore.evalsuite import robustness_eval
    from forgescore.fusion import FusionParams, config_from_samples, samples_from_manifests
    from forgescore.synth import SynthSpec, generate

    counts = {name: 3 for name in ("spatial", "appearance", "motion", "real")}
    manifests = generate(SynthSpec(seed=9, counts=counts), tmp_path)
    labels = {m.video_id: int(m.planted_label) for m in manifests}
    samples = samples_from_manifests(manifests, labels)
    params = FusionParams.init(config_from_samples(samples))
    payload = robustness_eval(
        manifests, params, labels, Perturbation.parse("mixed")
    )
    assert 0.0 < payload["attenuation"] < 1.0
    for key in ("acc", "macro_ovr_auc", "binary_acc", "binary_auc"):
        assert np.isfinite(payload["delta"][key])
    assert len(payload["rescored"]) == 12
    for row in payload["rescored"].values():
        for side in ("clean", "perturbed"):
            assert all(np.isfinite(v) for v in row[side].values())
