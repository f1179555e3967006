"""Set correspondence between groundtruth and predicted action instances.

Groundtruth is padded with no-action entries up to the query count; a
correspondence maps each padded groundtruth slot to a distinct prediction.
The default matcher is the greedy max-overlap procedure; an exact
minimum-cost matcher is available for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, UsageError
from .instances import ActionInstance
from .losses import LossConfig, iou_loss
from .model import PredictionSet


@dataclass(frozen=True)
class Correspondence:
    """Bijection from padded-groundtruth slots to prediction indices.

    ``assignment[i]`` is the prediction matched to padded slot i; the first
    ``num_real`` slots are the real groundtruth instances in their input
    order, the rest are no-action padding.
    """

    assignment: np.ndarray
    num_real: int

    def __post_init__(self):
        n = len(self.assignment)
        if not (0 <= self.num_real <= n):
            raise UsageError(f"num_real {self.num_real} outside [0, {n}]")
        if sorted(self.assignment.tolist()) != list(range(n)):
            raise UsageError("assignment is not a bijection")

    def __len__(self) -> int:
        return len(self.assignment)


def temporal_overlap(a_start: float, a_end: float, b_start: float, b_end: float) -> float:
    """Length of the intersection of two closed spans (0 when disjoint)."""
    if a_start > a_end or b_start > b_end:
        raise UsageError("span start exceeds end")
    return max(0.0, min(a_end, b_end) - max(a_start, b_start))


def _check_sizes(gt: list[ActionInstance], pred: PredictionSet) -> None:
    if len(gt) > len(pred):
        raise ConfigError(
            f"{len(gt)} groundtruth instances exceed the {len(pred)}-entry "
            f"prediction set; increase the query count"
        )


def greedy_match(gt: list[ActionInstance], pred: PredictionSet) -> Correspondence:
    """Match longest-first groundtruth to max-overlap unmatched predictions.

    Deterministic tie-breaks: groundtruth with equal durations are visited
    earlier-start-first, then lower-class-first; among candidate predictions
    with equal overlap the lowest index wins. A groundtruth instance with
    zero overlap everywhere takes the unmatched prediction whose span center
    is nearest its own.
    """
    _check_sizes(gt, pred)
    n = len(pred)
    order = sorted(range(len(gt)),
                   key=lambda i: (-gt[i].duration, gt[i].ts, gt[i].c))
    assignment = np.full(n, -1, dtype=np.intp)
    free = list(range(n))
    for i in order:
        inst = gt[i]
        best_j, best_overlap = None, -1.0
        for j in free:
            ov = temporal_overlap(inst.ts, inst.te, pred.starts[j], pred.ends[j])
            if ov > best_overlap:
                best_j, best_overlap = j, ov
        if best_overlap == 0.0:
            center = 0.5 * (inst.ts + inst.te)
            best_dist = None
            for j in free:
                dist = abs(0.5 * (pred.starts[j] + pred.ends[j]) - center)
                if best_dist is None or dist < best_dist:
                    best_j, best_dist = j, dist
        assignment[i] = best_j
        free.remove(best_j)
    for slot, j in zip(range(len(gt), n), free):
        assignment[slot] = j
    return Correspondence(assignment=assignment, num_real=len(gt))


def _pair_cost(inst: ActionInstance, pred: PredictionSet, j: int,
               cfg: LossConfig) -> float:
    """Matching cost of pairing one real groundtruth instance with
    prediction j: negative class probability plus weighted span distances
    on window-normalized times."""
    t_ant = pred.t_ant
    gs = (inst.ts - pred.t_obs) / t_ant
    ge = (inst.te - pred.t_obs) / t_ant
    ps = (pred.starts[j] - pred.t_obs) / t_ant
    pe = (pred.ends[j] - pred.t_obs) / t_ant
    l1 = abs(gs - ps) + abs(ge - pe)
    return (
        -float(pred.class_probs[j, inst.c])
        + cfg.l1_weight * l1
        + cfg.iou_weight * iou_loss((gs, ge), (ps, pe))
    )


def match_cost_matrix(gt: list[ActionInstance], pred: PredictionSet,
                      cfg: LossConfig) -> np.ndarray:
    """Full padded cost matrix: rows are padded groundtruth slots, columns
    predictions. No-action rows cost the negative no-action probability."""
    n = len(pred)
    no_action = pred.no_action_index
    cost = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            if i < len(gt):
                cost[i, j] = _pair_cost(gt[i], pred, j, cfg)
            else:
                cost[i, j] = -float(pred.class_probs[j, no_action])
    return cost


def hungarian_match(gt: list[ActionInstance], pred: PredictionSet,
                    cfg: LossConfig) -> Correspondence:
    """Exact minimum-total-cost bijection over the padded cost matrix."""
    _check_sizes(gt, pred)
    cost = match_cost_matrix(gt, pred, cfg)
    rows, cols = linear_sum_assignment(cost)
    assignment = np.empty(len(pred), dtype=np.intp)
    assignment[rows] = cols
    return Correspondence(assignment=assignment, num_real=len(gt))
