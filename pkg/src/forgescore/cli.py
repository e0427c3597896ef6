"""Command-line entry point wiring the pipeline stages together.

    forgescore synth --seed 7 --per-class 20 --out cohort/
    forgescore score --cohort cohort/ --out work/
    forgescore label --scores work/scores.json --out work/
    forgescore split --labels work/labels.json --seed 7 --out work/
    forgescore train --cohort cohort/ --labels work/labels.json \
        --split work/split.json --assume-accept --out work/
    forgescore eval  --cohort cohort/ --checkpoint work/checkpoint \
        --labels work/labels.json --out work/ --perturb blur:3
    forgescore serve --cohort cohort/ --labels work/labels.json \
        --split work/split.json --journal work/journal.jsonl --port 8008

Config resolution is defaults < --config JSON file < explicit flags; the
resolved config is echoed to run.json in the output directory (the one
place a wall-clock timestamp appears).  Exit codes: 0 ok, 1 usage,
2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from .errors import DataError, NumericError, PipelineError


class UsageError(PipelineError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="forgescore", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="JSON config file layered under flags")

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--per-class", type=int, dest="per_class")
    p.add_argument("--frames", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--emb-dim", type=int, dest="emb_dim")
    p.add_argument("--token-count", type=int, dest="token_count")
    p.add_argument("--token-dim", type=int, dest="token_dim")
    p.add_argument("--depth-channels", type=int, dest="depth_channels")
    p.add_argument("--depth-grid", type=int, dest="depth_grid")
    p.add_argument("--strength-spatial", type=float, dest="strength_spatial")
    p.add_argument("--strength-appearance", type=float, dest="strength_appearance")
    p.add_argument("--strength-motion", type=float, dest="strength_motion")

    p = sub.add_parser("score", help="compute per-video anomaly scores")
    add_common(p)
    p.add_argument("--cohort", required=True)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("label", help="rank a scored cohort and assign labels")
    add_common(p)
    p.add_argument("--scores", required=True)
    p.add_argument(
        "--confidence-orientation",
        choices=("verbatim", "inverted"),
        dest="confidence_orientation",
    )

    p = sub.add_parser("split", help="produce the train/val/pending split")
    add_common(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train the fusion classifier")
    add_common(p)
    p.add_argument("--cohort", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--final-labels", dest="final_labels")
    p.add_argument("--assume-accept", action="store_true", dest="assume_accept")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("eval", help="evaluate a checkpoint, optionally perturbed")
    add_common(p)
    p.add_argument("--cohort", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--preds", help="stored predictions JSON instead of a checkpoint")
    p.add_argument("--labels")
    p.add_argument("--final-labels", dest="final_labels")
    p.add_argument("--split")
    p.add_argument("--subset", choices=("all", "train", "val"))
    p.add_argument("--perturb", action="append", default=None)

    p = sub.add_parser("serve", help="run the human review service")
    add_common(p)
    p.add_argument("--cohort", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--journal", required=True)
    p.add_argument("--bind")
    p.add_argument("--port", type=int)
    p.add_argument("--ui")

    return parser


DEFAULTS = {
    "synth": {
        "seed": 0, "per_class": 5, "frames": 12, "height": 32, "width": 32,
        "emb_dim": 16, "token_count": 5, "token_dim": 16,
        "depth_channels": 32, "depth_grid": 6,
        "strength_spatial": 1.0, "strength_appearance": 0.5,
        "strength_motion": 2.0,
    },
    "score": {"workers": 1},
    "label": {"confidence_orientation": "verbatim"},
    "split": {"seed": 0},
    "train": {"lr": 0.05, "epochs": 200, "batch": 16, "seed": 0},
    "eval": {"subset": "all", "perturb": []},
    "serve": {"bind": "127.0.0.1", "port": 8008},
}


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    resolved = dict(DEFAULTS.get(args.command, {}))
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DataError(f"config file {path} does not exist")
        try:
            file_cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"config file {path}: invalid JSON ({exc})")
        unknown = set(file_cfg) - set(resolved)
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)} for {args.command}")
        resolved.update(file_cfg)
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None and value is not False:
            resolved[key] = value
    return resolved


def write_run_echo(out_dir: Path, command: str, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = {
        "command": command,
        "config": {k: v for k, v in sorted(config.items()) if k != "out"},
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    (out_dir / "run.json").write_text(json.dumps(echo, indent=2) + "\n")


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_synth(cfg: dict, out_dir: Path) -> int:
    from .synth import CLASS_ORDER, SynthSpec, generate

    spec = SynthSpec(
        seed=cfg["seed"],
        counts={name: cfg["per_class"] for name in CLASS_ORDER},
        frames=cfg["frames"],
        height=cfg["height"],
        width=cfg["width"],
        emb_dim=cfg["emb_dim"],
        token_count=cfg["token_count"],
        token_dim=cfg["token_dim"],
        depth_channels=cfg["depth_channels"],
        depth_feat_grid=cfg["depth_grid"],
        strengths={
            "spatial": cfg["strength_spatial"],
            "appearance": cfg["strength_appearance"],
            "motion": cfg["strength_motion"],
        },
    )
    manifests = generate(spec, out_dir)
    print(f"wrote {len(manifests)} videos to {out_dir}")
    return 0


def cmd_score(cfg: dict, out_dir: Path) -> int:
    from .scoring import score_cohort
    from .tensorio import load_cohort

    manifests = load_cohort(cfg["cohort"])
    scores = score_cohort(manifests, workers=cfg["workers"])
    payload = {
        "cohort_id": manifests[0].cohort_id,
        "is_real": {m.video_id: m.is_real for m in manifests},
        "scores": {
            vid: {
                "spatial": s.spatial,
                "appearance": s.appearance,
                "motion": s.motion,
            }
            for vid, s in scores.items()
        },
    }
    _dump_json(out_dir / "scores.json", payload)
    print(f"scored {len(scores)} videos -> {out_dir / 'scores.json'}")
    return 0


def cmd_label(cfg: dict, out_dir: Path) -> int:
    from .labeling import AnomalyScores, build_labeled_cohort, save_labeled

    path = Path(cfg["scores"])
    if not path.is_file():
        raise DataError(f"scores file {path} does not exist")
    doc = json.loads(path.read_text())
    fake_scores = {
        vid: AnomalyScores(**entry)
        for vid, entry in doc["scores"].items()
        if not doc["is_real"].get(vid, False)
    }
    real_ids = [vid for vid, real in doc["is_real"].items() if real]
    labeled = build_labeled_cohort(
        fake_scores, real_ids, orientation=cfg["confidence_orientation"]
    )
    save_labeled(labeled, doc["cohort_id"], out_dir / "labels.json")
    print(f"labeled {len(labeled)} videos -> {out_dir / 'labels.json'}")
    return 0


def cmd_split(cfg: dict, out_dir: Path) -> int:
    from .labeling import load_labeled, split_cohort

    path = Path(cfg["labels"])
    if not path.is_file():
        raise DataError(f"labels file {path} does not exist")
    cohort_id, labeled = load_labeled(path)
    manifest = split_cohort(labeled, cohort_id, cfg["seed"])
    manifest.write(out_dir / "split.json")
    print(
        f"split: {len(manifest.train)} train, {len(manifest.val)} val, "
        f"{len(manifest.pending_review)} pending -> {out_dir / 'split.json'}"
    )
    return 0


def _effective_labels(cfg: dict, labeled) -> dict[str, int]:
    labels = {vid: int(v.effective_label()) for vid, v in labeled.items()}
    if cfg.get("final_labels"):
        path = Path(cfg["final_labels"])
        if not path.is_file():
            raise DataError(f"final labels file {path} does not exist")
        final = json.loads(path.read_text())
        labels = {vid: int(code) for vid, code in final.items()}
    return labels


def cmd_train(cfg: dict, out_dir: Path) -> int:
    from .fusion import (
        config_from_samples,
        samples_from_manifests,
        save_checkpoint,
        train,
    )
    from .labeling import load_labeled, load_split_manifest
    from .tensorio import load_cohort

    manifests = load_cohort(cfg["cohort"])
    _, labeled = load_labeled(Path(cfg["labels"]))
    split = load_split_manifest(Path(cfg["split"]))
    val_ids = list(split.val)
    if split.pending_review:
        if not cfg.get("assume_accept"):
            raise DataError(
                f"{len(split.pending_review)} videos still pending review; "
                "finalize the split or pass --assume-accept"
            )
        val_ids += list(split.pending_review)
    labels = _effective_labels(cfg, labeled)
    weights = {vid: v.confidence for vid, v in labeled.items()}
    train_labels = {vid: labels[vid] for vid in split.train if vid in labels}
    val_labels = {vid: labels[vid] for vid in val_ids if vid in labels}
    train_set = samples_from_manifests(manifests, train_labels, weights)
    val_set = samples_from_manifests(manifests, val_labels, weights)
    if not train_set:
        raise DataError("empty training set after split")
    config = config_from_samples(
        train_set,
        lr=cfg["lr"],
        epochs=cfg["epochs"],
        batch=cfg["batch"],
        seed=cfg["seed"],
    )
    result = train(train_set, config, val_set or None)
    metrics = {
        "best_epoch": result.best_epoch,
        "best_val_acc": result.best_val_acc,
        "final_train_loss": result.loss_curve[-1],
    }
    save_checkpoint(
        out_dir / "checkpoint", result.params, config,
        epoch=result.best_epoch, metrics=metrics,
    )
    with open(out_dir / "loss_curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_acc"])
        for i, loss in enumerate(result.loss_curve):
            val = result.val_acc_curve[i] if i < len(result.val_acc_curve) else ""
            writer.writerow([i, f"{loss:.12g}", val])
    print(
        f"trained {config.epochs} epochs; best val acc "
        f"{result.best_val_acc:.3f} at epoch {result.best_epoch}"
    )
    return 0


def cmd_eval(cfg: dict, out_dir: Path) -> int:
    import numpy as np

    from .evalsuite import (
        Perturbation,
        evaluate,
        robustness_eval,
        write_eval_json,
    )
    from .fusion import load_checkpoint, predict, samples_from_manifests
    from .labeling import load_labeled, load_split_manifest
    from .tensorio import load_cohort

    if bool(cfg.get("checkpoint")) == bool(cfg.get("preds")):
        raise UsageError("eval needs exactly one of --checkpoint or --preds")
    manifests = load_cohort(cfg["cohort"])

    if cfg.get("labels"):
        _, labeled = load_labeled(Path(cfg["labels"]))
        labels = _effective_labels(cfg, labeled)
    else:
        missing = [m.video_id for m in manifests if m.planted_label is None]
        if missing:
            raise DataError(
                "no labels file and no planted labels for: " + ", ".join(missing)
            )
        labels = {m.video_id: int(m.planted_label) for m in manifests}

    if cfg.get("split"):
        split = load_split_manifest(Path(cfg["split"]))
        subset = cfg["subset"]
        if subset == "train":
            keep = set(split.train)
        elif subset == "val":
            keep = set(split.val)
        else:
            keep = set(split.train) | set(split.val) | set(split.pending_review)
        labels = {vid: lab for vid, lab in labels.items() if vid in keep}

    if cfg.get("preds"):
        doc = json.loads(Path(cfg["preds"]).read_text())
        if "probs" in doc:
            rows = {vid: np.asarray(p, dtype=float) for vid, p in doc["probs"].items()}
        elif "preds" in doc:
            rows = {vid: np.eye(4)[int(code)] for vid, code in doc["preds"].items()}
        else:
            raise DataError(f"{cfg['preds']}: need a 'probs' or 'preds' map")
        missing = sorted(set(labels) - set(rows))
        if missing:
            raise DataError("predictions missing for: " + ", ".join(missing))
        ordered = sorted(labels)
        probs = np.stack([rows[vid] for vid in ordered])
        true = [labels[vid] for vid in ordered]
        params = None
    else:
        params, _, _ = load_checkpoint(Path(cfg["checkpoint"]))
        samples = samples_from_manifests(manifests, labels)
        if not samples:
            raise DataError("no videos left to evaluate")
        probs = np.stack([predict(params, s) for s in samples])
        true = [s.label for s in samples]

    report = evaluate(probs, true)
    write_eval_json(out_dir / "eval.json", report.to_json_dict())
    report.write_confusion_csv(out_dir / "confusion.csv")
    print(
        f"eval: acc {report.acc:.3f}, macro AUC {report.macro_ovr_auc:.3f} "
        f"on {report.n_samples} videos"
    )
    if cfg["perturb"] and params is None:
        raise UsageError("--perturb needs a --checkpoint to re-run the model")
    for text in cfg["perturb"] or []:
        perturbation = Perturbation.parse(text)
        payload = robustness_eval(manifests, params, labels, perturbation)
        name = perturbation.describe().replace(":", "_").replace(".", "p")
        write_eval_json(out_dir / f"robustness_{name}.json", payload)
        delta = payload["delta"]
        print(
            f"perturb {perturbation.describe()}: d_acc {delta['acc']:+.3f}, "
            f"d_auc {delta['macro_ovr_auc']:+.3f}"
        )
    return 0


def cmd_serve(cfg: dict, out_dir: Path) -> int:
    import uvicorn

    from .labeling import load_labeled, load_split_manifest
    from .review import ReviewJournal, ReviewSession, create_app
    from .tensorio import load_cohort

    manifests = load_cohort(cfg["cohort"])
    cohort_id, labeled = load_labeled(Path(cfg["labels"]))
    split = load_split_manifest(Path(cfg["split"]))
    session = ReviewSession(
        cohort_id=cohort_id,
        labeled=labeled,
        seed=split.seed,
        journal=ReviewJournal(cfg["journal"]),
        manifests={m.video_id: m for m in manifests},
    )
    app = create_app(session, ui_dir=cfg.get("ui"), out_dir=out_dir)
    uvicorn.run(app, host=cfg["bind"], port=cfg["port"], log_level="warning")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "score": cmd_score,
    "label": cmd_label,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        out_dir = Path(cfg["out"])
        write_run_echo(out_dir, args.command, cfg)
        return COMMANDS[args.command](cfg, out_dir)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
