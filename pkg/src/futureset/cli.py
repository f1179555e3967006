"""Command-line entry point: data generation, training, evaluation, reports.

Subcommands: ``gen-data``, ``train-stage1``, ``train-stage2``, ``eval``,
``report``. Exit codes: 0 success, 2 configuration/input error, 3 numerical
failure. Every run writes a fully resolved config snapshot next to its
outputs so results are reproducible from the snapshot alone.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import RunConfig, apply_override, load_config_file, write_resolved
from .datagen import (
    load_dataset,
    make_toy_dataset,
    save_dataset,
    sliding_stage1_examples,
    stage1_examples,
)
from .errors import ConfigError, DataFormatError, NumericalError, UsageError
from .evaluation import (
    label_map_sweep,
    moc_sweep,
    model_predictor,
    oracle_predictor,
    write_map_csv,
    write_metrics_json,
    write_moc_csv,
)
from .losses import LossConfig
from .model import AnticipationModel, ModelConfig
from .reports import render_run_reports
from .train import (
    WindowSpec,
    stage1_validation,
    train_stage1,
    train_stage2,
    write_history_csv,
)


def build_model(cfg: RunConfig, dataset) -> AnticipationModel:
    if not dataset.videos:
        raise ConfigError("dataset has no videos")
    model_cfg = ModelConfig(
        num_classes=dataset.num_classes,
        feature_dim=int(dataset.videos[0].features.shape[1]),
        model_dim=cfg.model_dim,
        num_heads=cfg.num_heads,
        seg_layers=cfg.seg_layers,
        vid_layers=cfg.vid_layers,
        dec_layers=cfg.dec_layers,
        num_queries=cfg.num_queries,
        window_k=cfg.window_k,
        t_max=cfg.t_max,
        dropout_p=cfg.dropout_p,
        use_segment_memory=cfg.use_segment_memory,
    )
    return AnticipationModel(model_cfg, np.random.default_rng(cfg.seed))


def window_spec(cfg: RunConfig) -> WindowSpec:
    pairs = tuple((bo, ba) for bo in cfg.beta_obs for ba in cfg.beta_ant)
    return WindowSpec(beta_pairs=pairs, alpha_obs=tuple(cfg.alpha_obs))


def loss_config(cfg: RunConfig) -> LossConfig:
    return LossConfig(l1_weight=cfg.l1_weight, iou_weight=cfg.iou_weight,
                      no_action_weight=cfg.no_action_weight)


def segment_params(model: AnticipationModel) -> dict:
    return {f"segment_encoder.{k}": v
            for k, v in model.segment_encoder.named_params().items()}


def extract_examples(cfg: RunConfig, dataset) -> list:
    out = []
    for video in dataset.videos:
        if cfg.stage1_sliding:
            out.extend(sliding_stage1_examples(
                video, cfg.window_k, dataset.num_classes,
                stride=cfg.sliding_stride,
                include_empty_future=cfg.include_empty_future))
        else:
            out.extend(stage1_examples(
                video, dataset.num_classes,
                include_empty_future=cfg.include_empty_future))
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args, cfg: RunConfig) -> int:
    data_dir = Path(cfg.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    splits = (
        ("train", cfg.gen_train_videos, 0),
        ("val", cfg.gen_val_videos, 1),
        ("test", cfg.gen_test_videos, 2),
    )
    train_counts = None
    class_names = None
    for which, count, stream in splits:
        dataset = make_toy_dataset(count, cfg.seed, length_budget=cfg.gen_length,
                                   noise_sigma=cfg.gen_noise, stream=stream)
        save_dataset(cfg.split_path(which), dataset)
        print(f"wrote {count} videos to {cfg.split_path(which)}")
        if which == "train":
            train_counts = dataset.instance_counts()
            class_names = dataset.class_names
    print("training-split instance counts per class:")
    for c, name in enumerate(class_names):
        print(f"  {c:3d} {name:12s} {int(train_counts[c])}")
    write_resolved(cfg, data_dir)
    return 0


def cmd_train_stage1(args, cfg: RunConfig) -> int:
    train_set = load_dataset(cfg.split_path("train"))
    val_set = load_dataset(cfg.split_path("val"))
    model = build_model(cfg, train_set)
    examples = extract_examples(cfg, train_set)
    history = train_stage1(
        model, examples, steps=cfg.stage1_steps, batch_size=cfg.stage1_batch,
        lr=cfg.stage1_lr, weight_decay=cfg.weight_decay, seed=cfg.seed)
    out_dir = cfg.out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    write_history_csv(out_dir / "stage1_history.csv", history)
    ckpt_path = out_dir / "stage1.antq"
    checkpoint.save(ckpt_path, segment_params(model))
    checkpoint.load_into(ckpt_path, segment_params(model))
    metrics = stage1_validation(model, extract_examples(cfg, val_set))
    (out_dir / "stage1_validation.json").write_text(
        json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_resolved(cfg, out_dir)
    print(f"stage-1 final loss {history[-1]['loss']:.6f}; "
          f"val exact-match {metrics['exact_match']:.3f}, "
          f"mean AP {metrics['mean_ap']:.3f}; checkpoint {ckpt_path}")
    return 0


def cmd_train_stage2(args, cfg: RunConfig) -> int:
    train_set = load_dataset(cfg.split_path("train"))
    model = build_model(cfg, train_set)
    out_dir = cfg.out_dir()
    if not cfg.skip_stage1:
        stage1_path = Path(args.stage1) if args.stage1 else out_dir / "stage1.antq"
        if not stage1_path.exists():
            raise UsageError(
                f"stage-1 checkpoint not found: {stage1_path} "
                f"(run train-stage1 first, or pass --skip-stage1)"
            )
        checkpoint.load_into(stage1_path, segment_params(model))
    history = train_stage2(
        model, train_set, window_spec(cfg), steps=cfg.stage2_steps,
        lr=cfg.stage2_lr, weight_decay=cfg.weight_decay, seed=cfg.seed,
        loss_cfg=loss_config(cfg), matcher=cfg.matcher,
        finetune_se=cfg.finetune_se)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_history_csv(out_dir / "stage2_history.csv", history)
    ckpt_path = out_dir / "stage2.antq"
    checkpoint.save(ckpt_path, model.named_params())
    checkpoint.load_into(ckpt_path, model.named_params())
    write_resolved(cfg, out_dir)
    print(f"stage-2 final loss {history[-1]['loss']:.6f}; checkpoint {ckpt_path}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    test_set = load_dataset(cfg.split_path("test"))
    train_set = load_dataset(cfg.split_path("train"))
    out_dir = cfg.out_dir()
    if args.oracle:
        predict_fn = oracle_predictor()
    else:
        ckpt_path = Path(args.checkpoint) if args.checkpoint else out_dir / "stage2.antq"
        if not ckpt_path.exists():
            raise UsageError(f"checkpoint not found: {ckpt_path}")
        model = build_model(cfg, test_set)
        checkpoint.load_into(ckpt_path, model.named_params())
        model.freeze_segment_encoder()
        predict_fn = model_predictor(model, threshold=cfg.predict_threshold)
    moc = moc_sweep(predict_fn, test_set, cfg.beta_obs, cfg.beta_ant,
                    pooling=cfg.moc_pooling)
    label_map = label_map_sweep(
        predict_fn, test_set, cfg.alpha_obs,
        class_counts=train_set.instance_counts(),
        freq_threshold=cfg.freq_threshold, rare_threshold=cfg.rare_threshold)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_moc_csv(out_dir / "moc.csv", moc)
    write_map_csv(out_dir / "label_map.csv", label_map)
    write_metrics_json(out_dir / "metrics.json", moc, label_map)
    write_resolved(cfg, out_dir)
    for (beta_o, beta_a), value in sorted(moc.items()):
        print(f"MoC beta_obs={beta_o:g} beta_ant={beta_a:g}: {value:.4f}")
    map_all = label_map["map_all"]
    print(f"label-set mAP (all classes, averaged over alpha): "
          f"{map_all:.4f}" if map_all is not None else "label-set mAP: n/a")
    return 0


def cmd_report(args, cfg: RunConfig) -> int:
    produced = render_run_reports(cfg.out_dir())
    if not produced:
        raise UsageError(f"no result CSVs found in {cfg.out_dir()}")
    for path in produced:
        print(f"rendered {path}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="futureset",
        description="Set-prediction transformer for long-term action "
                    "anticipation on synthetic activity grammars.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="master random seed")
        p.add_argument("--out", help="output directory for this run")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config field (repeatable)")

    p = sub.add_parser("gen-data", help="generate toy train/val/test splits")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-stage1", help="train the segment encoder")
    common(p)
    p.add_argument("--sliding", action="store_true",
                   help="draw fixed-length sliding-window segments instead of "
                        "annotated spans")
    p.set_defaults(func=cmd_train_stage1)

    p = sub.add_parser("train-stage2", help="train the anticipation decoder")
    common(p)
    p.add_argument("--stage1", help="stage-1 checkpoint path")
    p.add_argument("--skip-stage1", "--no-stage1", action="store_true",
                   dest="skip_stage1",
                   help="start from a random frozen segment encoder")
    p.add_argument("--finetune-se", action="store_true",
                   help="also train the segment encoder in this stage")
    p.add_argument("--no-se", action="store_true",
                   help="drop the segment-memory cross-attention entirely")
    p.add_argument("--no-l1", action="store_true", help="zero the L1 span term")
    p.add_argument("--no-iou", action="store_true", help="zero the IoU span term")
    p.add_argument("--matcher", choices=("greedy", "hungarian"))
    p.set_defaults(func=cmd_train_stage2)

    p = sub.add_parser("eval", help="run both metric protocols on the test split")
    common(p)
    p.add_argument("--checkpoint", help="trained stage-2 checkpoint")
    p.add_argument("--oracle", action="store_true",
                   help="score the groundtruth against itself (metric check)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render SVG figures from result CSVs")
    common(p)
    p.set_defaults(func=cmd_report)

    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        load_config_file(cfg, args.config)
    for pair in args.set:
        if "=" not in pair:
            raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
        key, _, value = pair.partition("=")
        apply_override(cfg, key.strip(), value)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if getattr(args, "sliding", False):
        cfg.stage1_sliding = True
    if getattr(args, "skip_stage1", False):
        cfg.skip_stage1 = True
    if getattr(args, "finetune_se", False):
        cfg.finetune_se = True
    if getattr(args, "no_se", False):
        cfg.use_segment_memory = False
    if getattr(args, "no_l1", False):
        cfg.l1_weight = 0.0
    if getattr(args, "no_iou", False):
        cfg.iou_weight = 0.0
    if getattr(args, "matcher", None):
        cfg.matcher = args.matcher
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (ConfigError, DataFormatError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
