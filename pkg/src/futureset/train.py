"""Two-stage training loops and their per-step logs.

Stage 1 fits the segment encoder's multi-label future-class head with BCE
over single-action segments. Stage 2 freezes the segment encoder (unless
fine-tuning is requested) and trains everything else with the matched set
loss over randomly drawn (observation, horizon) windows, so one model serves
every evaluation horizon.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import Dataset, Stage1Example, horizon_length, split_observed, target_set
from .errors import ConfigError, NumericalError, UsageError
from .evaluation import average_precision
from .losses import LossConfig, anticipation_loss, bce_multilabel
from .matching import greedy_match, hungarian_match
from .model import AnticipationModel
from .optim import AdamW
from .tensor import Tape, Tensor, concat, reshape


def _check_finite(value: float, step: int, what: str) -> None:
    if not np.isfinite(value):
        raise NumericalError(f"{what} became non-finite at step {step}")


# ---------------------------------------------------------------------------
# stage 1


def train_stage1(model: AnticipationModel, examples: list[Stage1Example], *,
                 steps: int, batch_size: int = 8, lr: float = 1e-3,
                 weight_decay: float = 0.0, seed: int = 0,
                 log_every: int = 1) -> list[dict]:
    """Fit the segment encoder + future head with mean BCE over batches."""
    if not examples:
        raise UsageError("stage-1 training requires at least one example")
    if steps < 1 or batch_size < 1:
        raise UsageError("steps and batch_size must be >= 1")
    params = model.segment_encoder.named_params()
    optimizer = AdamW(params, lr=lr, weight_decay=weight_decay)
    data_rng = np.random.default_rng(seed)
    drop_rng = np.random.default_rng(seed + 1)
    history = []
    for step in range(steps):
        batch = data_rng.choice(len(examples), size=min(batch_size, len(examples)),
                                replace=False)
        with Tape() as tape:
            losses = []
            for idx in batch:
                ex = examples[idx]
                h = model.segment_encoder(ex.features, train=True, rng=drop_rng)
                probs = model.segment_encoder.future_probs(h)
                losses.append(reshape(bce_multilabel(probs, ex.target), (1,)))
            loss = concat(losses, axis=0).mean()
            value = float(loss.data)
            _check_finite(value, step, "stage-1 loss")
            optimizer.zero_grad()
            tape.backward(loss, leaves=params.values())
        optimizer.step()
        if step % log_every == 0 or step == steps - 1:
            history.append({"step": step, "loss": value})
    return history


def stage1_validation(model: AnticipationModel, examples: list[Stage1Example],
                      threshold: float = 0.5) -> dict:
    """Exact-match ratio and mean AP of the multi-label head on a split."""
    if not examples:
        raise UsageError("validation requires at least one example")
    num_classes = model.config.num_classes
    probs = np.zeros((len(examples), num_classes))
    targets = np.zeros((len(examples), num_classes))
    total_bce = 0.0
    for i, ex in enumerate(examples):
        h = model.segment_encoder(ex.features, train=False)
        p = model.segment_encoder.future_probs(h)
        total_bce += float(bce_multilabel(p, ex.target).data)
        probs[i] = p.data
        targets[i] = ex.target
    exact = float(np.mean(np.all((probs >= threshold) == (targets > 0.5), axis=1)))
    aps = []
    for c in range(num_classes):
        ap = average_precision(probs[:, c], targets[:, c] > 0.5)
        if ap is not None:
            aps.append(ap)
    return {
        "exact_match": exact,
        "mean_ap": float(np.mean(aps)) if aps else None,
        "bce": total_bce / len(examples),
    }


# ---------------------------------------------------------------------------
# stage 2


@dataclass(frozen=True)
class WindowSpec:
    """Window protocols to draw training targets from.

    ``beta_pairs`` are (observation %, anticipation % of remainder) cells;
    ``alpha_obs`` values observe that percentage and anticipate to the video
    end. One entry is drawn uniformly per step.
    """

    beta_pairs: tuple = ()
    alpha_obs: tuple = ()

    def __post_init__(self):
        if not self.beta_pairs and not self.alpha_obs:
            raise ConfigError("window spec needs at least one protocol entry")

    def draw(self, rng: np.random.Generator, t_total: int) -> tuple[int, int]:
        entries = len(self.beta_pairs) + len(self.alpha_obs)
        pick = int(rng.integers(entries))
        if pick < len(self.beta_pairs):
            beta_o, beta_a = self.beta_pairs[pick]
            t_obs = split_observed(t_total, beta_o)
            return t_obs, horizon_length(t_total, t_obs, beta_a)
        alpha = self.alpha_obs[pick - len(self.beta_pairs)]
        t_obs = split_observed(t_total, alpha)
        return t_obs, t_total - t_obs


def validate_query_budget(model: AnticipationModel, dataset: Dataset,
                          spec: WindowSpec) -> None:
    """Fail up front if any protocol window can hold more groundtruth
    instances than there are queries to match them."""
    windows = []
    for video in dataset.videos:
        for beta_o, beta_a in spec.beta_pairs:
            t_obs = split_observed(video.T, beta_o)
            windows.append((video, t_obs, horizon_length(video.T, t_obs, beta_a)))
        for alpha in spec.alpha_obs:
            t_obs = split_observed(video.T, alpha)
            windows.append((video, t_obs, video.T - t_obs))
    worst = 0
    for video, t_obs, t_ant in windows:
        worst = max(worst, len(target_set(video, t_obs, t_ant)))
    if worst > model.config.num_queries:
        raise ConfigError(
            f"a training window holds {worst} instances but the model has "
            f"only {model.config.num_queries} queries"
        )


def train_stage2(model: AnticipationModel, dataset: Dataset, spec: WindowSpec, *,
                 steps: int, lr: float = 1e-3, weight_decay: float = 0.0,
                 seed: int = 0, loss_cfg: LossConfig | None = None,
                 matcher: str = "greedy", finetune_se: bool = False,
                 log_every: int = 1) -> list[dict]:
    """Train decoder/video-encoder/heads with the matched set loss.

    The segment encoder stays frozen (bit-identical weights) unless
    ``finetune_se``. Each step draws one video and one protocol window.
    """
    if steps < 1:
        raise UsageError("steps must be >= 1")
    if matcher not in ("greedy", "hungarian"):
        raise ConfigError(f"unknown matcher '{matcher}'")
    if not dataset.videos:
        raise UsageError("stage-2 training requires at least one video")
    loss_cfg = loss_cfg if loss_cfg is not None else LossConfig()
    validate_query_budget(model, dataset, spec)
    if finetune_se:
        model.unfreeze_segment_encoder()
        params = model.named_params()
    else:
        model.freeze_segment_encoder()
        params = model.stage2_params()
    optimizer = AdamW(params, lr=lr, weight_decay=weight_decay)
    data_rng = np.random.default_rng(seed)
    drop_rng = np.random.default_rng(seed + 1)
    history = []
    for step in range(steps):
        video = dataset.videos[int(data_rng.integers(len(dataset.videos)))]
        t_obs, t_ant = spec.draw(data_rng, video.T)
        gt = target_set(video, t_obs, t_ant)
        with Tape() as tape:
            raw = model.forward(video.features[:t_obs], t_ant,
                                train=True, rng=drop_rng)
            snapshot = raw.to_prediction_set()
            if matcher == "greedy":
                corr = greedy_match(gt, snapshot)
            else:
                corr = hungarian_match(gt, snapshot, loss_cfg)
            loss, parts = anticipation_loss(gt, raw, corr, loss_cfg,
                                            return_parts=True)
            value = float(loss.data)
            _check_finite(value, step, "stage-2 loss")
            optimizer.zero_grad()
            tape.backward(loss, leaves=params.values())
        optimizer.step()
        if step % log_every == 0 or step == steps - 1:
            history.append({"step": step, "loss": value, **parts})
    return history


# ---------------------------------------------------------------------------
# log files


def write_history_csv(path, history: list[dict]) -> None:
    """One row per logged step; columns are the union of logged keys."""
    if not history:
        raise UsageError("empty history")
    columns = ["step"] + sorted(k for k in history[0] if k != "step")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in history:
            writer.writerow([row.get(col, "") for col in columns])
