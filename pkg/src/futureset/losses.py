"""Training objectives: stage-1 multi-label BCE and the stage-2 set loss.

The set loss sums, over all padded groundtruth slots, a cross-entropy term
on the matched prediction's class plus, for real (non-padding) slots only,
weighted L1 and IoU span distances computed on window-normalized times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UsageError
from .tensor import (
    Tensor,
    abs_,
    add,
    div,
    index_rows,
    log,
    maximum,
    minimum,
    mul,
    neg,
    sub,
    sum_,
)

BCE_CLAMP = 1e-7


@dataclass(frozen=True)
class LossConfig:
    """Span-term weights and the no-action class weight.

    Defaults follow the reference configuration: L1 weight 3, IoU weight 5.
    ``no_action_weight`` scales the cross-entropy of padded slots; 1.0 means
    uniform weighting.
    """

    l1_weight: float = 3.0
    iou_weight: float = 5.0
    no_action_weight: float = 1.0

    def __post_init__(self):
        for name in ("l1_weight", "iou_weight", "no_action_weight"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {value}")


def bce_multilabel(pred: Tensor, target) -> Tensor:
    """Mean binary cross-entropy over independent per-class probabilities.

    Predictions are clamped into [1e-7, 1-1e-7] before the logs.
    """
    t = np.asarray(target, dtype=np.float64)
    if not isinstance(pred, Tensor):
        pred = Tensor(np.asarray(pred, dtype=np.float64))
    if pred.shape != t.shape:
        raise UsageError(f"prediction shape {pred.shape} != target shape {t.shape}")
    p = minimum(maximum(pred, BCE_CLAMP), 1.0 - BCE_CLAMP)
    terms = add(mul(t, log(p)), mul(1.0 - t, log(sub(1.0, p))))
    return neg(terms.mean())


def iou_loss(span_a, span_b) -> float:
    """1 - intersection/union for two closed spans given as (start, end).

    Union is |a| + |b| - intersection. When the union is zero (two
    zero-length spans), identical points cost 0 and distinct points cost 1,
    the continuity limit of the formula.
    """
    a_s, a_e = float(span_a[0]), float(span_a[1])
    b_s, b_e = float(span_b[0]), float(span_b[1])
    if a_s > a_e or b_s > b_e:
        raise UsageError("span start exceeds end")
    inter = max(0.0, min(a_e, b_e) - max(a_s, b_s))
    union = (a_e - a_s) + (b_e - b_s) - inter
    if union == 0.0:
        return 0.0 if a_s == b_s else 1.0
    return 1.0 - inter / union


def anticipation_loss(gt_instances, raw, correspondence, cfg: LossConfig,
                      return_parts: bool = False):
    """Differentiable set loss for one (video, horizon) prediction.

    ``gt_instances`` must already be clipped to the anticipation window;
    ``correspondence.assignment[i]`` names the prediction for padded slot i.
    Span terms use times normalized to fractions of the window, matching the
    matcher's cost; padded slots contribute cross-entropy only. Inside the
    tensor path the IoU denominator carries a 1e-12 guard so two degenerate
    zero-length spans yield a finite (worst-case) loss instead of 0/0.

    With ``return_parts`` the weighted scalar contributions are also
    returned as {"ce", "l1", "iou"}; they sum to the total.
    """
    n = len(correspondence)
    num_real = correspondence.num_real
    if len(gt_instances) != num_real:
        raise UsageError(
            f"correspondence says {num_real} real slots but {len(gt_instances)} "
            f"groundtruth instances were provided"
        )
    if raw.class_probs.shape[0] != n:
        raise UsageError("correspondence length does not match prediction count")
    num_labels = raw.class_probs.shape[1]
    no_action = num_labels - 1
    t_obs, t_ant = raw.t_obs, raw.t_ant

    targets = np.full(n, no_action, dtype=np.intp)
    gt_start = np.zeros(n)
    gt_end = np.zeros(n)
    for i, inst in enumerate(gt_instances):
        if not 0 <= inst.c < no_action:
            raise UsageError(f"groundtruth class {inst.c} outside [0, {no_action})")
        targets[i] = inst.c
        gt_start[i] = (inst.ts - t_obs) / t_ant
        gt_end[i] = (inst.te - t_obs) / t_ant

    onehot = np.zeros((n, num_labels))
    onehot[np.arange(n), targets] = 1.0
    perm = np.asarray(correspondence.assignment, dtype=np.intp)

    probs = index_rows(raw.class_probs, perm)
    picked = sum_(mul(probs, onehot), axis=1)
    ce = neg(log(maximum(picked, 1e-30)))
    ce_weights = np.where(np.arange(n) < num_real, 1.0, cfg.no_action_weight)
    ce_sum = sum_(mul(ce, ce_weights))
    loss = ce_sum
    l1_value = 0.0
    iou_value = 0.0

    if num_real > 0:
        real = np.where(np.arange(n) < num_real, 1.0, 0.0)
        ps = index_rows(raw.u_start, perm)
        pe = index_rows(raw.u_end, perm)
        l1 = add(abs_(sub(gt_start, ps)), abs_(sub(gt_end, pe)))
        inter = maximum(sub(minimum(gt_end, pe), maximum(gt_start, ps)), 0.0)
        union = sub(add(gt_end - gt_start, sub(pe, ps)), inter)
        iou_term = sub(1.0, div(inter, add(union, 1e-12)))
        l1_sum = mul(sum_(mul(l1, real)), cfg.l1_weight)
        iou_sum = mul(sum_(mul(iou_term, real)), cfg.iou_weight)
        loss = add(loss, add(l1_sum, iou_sum))
        l1_value = float(l1_sum.data)
        iou_value = float(iou_sum.data)
    if return_parts:
        parts = {"ce": float(ce_sum.data), "l1": l1_value, "iou": iou_value}
        return loss, parts
    return loss
