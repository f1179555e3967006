"""Benchmark metrics: timelines, mean-over-classes accuracy, label-set mAP.

Predicted instance sets are post-processed two ways: into a per-timestep
timeline for MoC accuracy, and into a per-video future label set (max score
per class) for multi-label average precision over the corpus.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .datagen import Dataset, VideoSample, horizon_length, split_observed, target_set
from .errors import UsageError
from .instances import ScoredInstance

NO_LABEL = -1


def build_timeline(preds: list[ScoredInstance], t_obs: float, t_ant: int) -> np.ndarray:
    """Per-timestep class array of length t_ant for times t_obs+1..t_obs+t_ant.

    Every span must lie inside (t_obs, t_obs+t_ant]. A timestep covered by
    several spans takes the highest-scoring one; ties go to the earlier
    start, then the lower class index. Uncovered steps hold NO_LABEL.
    Fractional span ends round to the nearest frame.
    """
    t_ant = int(t_ant)
    if t_ant < 1:
        raise UsageError(f"timeline length must be >= 1, got {t_ant}")
    timeline = np.full(t_ant, NO_LABEL, dtype=np.int64)
    tol = 1e-9
    for p in preds:
        if p.ts <= t_obs - tol or p.te > t_obs + t_ant + tol:
            raise UsageError(
                f"span [{p.ts}, {p.te}] outside window ({t_obs}, {t_obs + t_ant}]"
            )
    order = sorted(range(len(preds)),
                   key=lambda i: (-preds[i].score, preds[i].ts, preds[i].c))
    for i in order:
        p = preds[i]
        lo = max(int(np.floor(p.ts + 0.5)), int(t_obs) + 1)
        hi = min(int(np.floor(p.te + 0.5)), int(t_obs) + t_ant)
        for step in range(lo, hi + 1):
            idx = step - int(t_obs) - 1
            if timeline[idx] == NO_LABEL:
                timeline[idx] = p.c
    return timeline


def groundtruth_timeline(video: VideoSample, t_obs: int, t_ant: int) -> np.ndarray:
    instances = target_set(video, t_obs, t_ant)
    scored = [ScoredInstance(i.c, i.ts, i.te, 1.0) for i in instances]
    return build_timeline(scored, t_obs, t_ant)


def moc_accuracy(pred_timelines, gt_timelines, num_classes: int,
                 pooling: str = "global") -> float:
    """Mean over classes of per-class timestep accuracy.

    ``global`` pooling counts timesteps across all videos before dividing;
    ``per_video`` averages each video's per-class accuracy first. Classes
    absent from the groundtruth are left out of the mean.
    """
    if len(pred_timelines) != len(gt_timelines):
        raise UsageError("timeline lists differ in length")
    if pooling not in ("global", "per_video"):
        raise UsageError(f"unknown pooling '{pooling}'")
    for p, g in zip(pred_timelines, gt_timelines):
        if len(p) != len(g):
            raise UsageError("paired timelines differ in length")
    accs = []
    for c in range(num_classes):
        if pooling == "global":
            total = 0
            correct = 0
            for p, g in zip(pred_timelines, gt_timelines):
                mask = g == c
                total += int(mask.sum())
                correct += int((p[mask] == c).sum())
            if total > 0:
                accs.append(correct / total)
        else:
            per_video = []
            for p, g in zip(pred_timelines, gt_timelines):
                mask = g == c
                if mask.any():
                    per_video.append(float((p[mask] == c).mean()))
            if per_video:
                accs.append(float(np.mean(per_video)))
    if not accs:
        raise UsageError("groundtruth timelines contain no labeled timesteps")
    return float(np.mean(accs))


def future_label_set(preds: list[ScoredInstance]) -> dict[int, float]:
    """Union of predicted classes with the max score seen for each."""
    out: dict[int, float] = {}
    for p in preds:
        if p.c not in out or p.score > out[p.c]:
            out[p.c] = p.score
    return out


def average_precision(scores: np.ndarray, positives: np.ndarray) -> float | None:
    """Interpolation-free AP: precision averaged at every positive's rank.

    Videos are ranked by descending score with index order breaking ties.
    Returns None when there are no positives.
    """
    n_pos = int(positives.sum())
    if n_pos == 0:
        return None
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    precision_sum = 0.0
    for rank, i in enumerate(order, start=1):
        if positives[i]:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / n_pos


def mean_average_precision(video_scores: list[dict[int, float]],
                           video_labels: list[set[int]], num_classes: int,
                           class_counts=None, freq_threshold: int = 100,
                           rare_threshold: int = 10) -> dict:
    """Per-class AP over the corpus, averaged over ALL / frequent / rare.

    ``class_counts`` are training-split instance counts used to split
    classes into frequent (> freq_threshold) and rare (< rare_threshold);
    classes with zero positive videos are excluded from every mean, and an
    empty subset reports None.
    """
    if len(video_scores) != len(video_labels):
        raise UsageError("score and label lists differ in length")
    per_class: dict[int, float] = {}
    for c in range(num_classes):
        scores = np.array([vs.get(c, 0.0) for vs in video_scores])
        positives = np.array([c in vl for vl in video_labels])
        ap = average_precision(scores, positives)
        if ap is not None:
            per_class[c] = ap

    def subset_mean(classes) -> float | None:
        values = [per_class[c] for c in classes if c in per_class]
        return float(np.mean(values)) if values else None

    result = {
        "per_class": per_class,
        "map_all": subset_mean(range(num_classes)),
        "map_freq": None,
        "map_rare": None,
    }
    if class_counts is not None:
        counts = np.asarray(class_counts)
        if counts.shape != (num_classes,):
            raise UsageError(f"class_counts must have length {num_classes}")
        result["map_freq"] = subset_mean(
            [c for c in range(num_classes) if counts[c] > freq_threshold])
        result["map_rare"] = subset_mean(
            [c for c in range(num_classes) if counts[c] < rare_threshold])
    return result


# ---------------------------------------------------------------------------
# protocol sweeps


def model_predictor(model, threshold: float = 0.0):
    """Prediction provider backed by a trained model in evaluation mode."""
    def predict(video: VideoSample, t_obs: int, t_ant: int) -> list[ScoredInstance]:
        return model.predict_set(video.features[:t_obs], t_ant, threshold=threshold)
    return predict


def oracle_predictor():
    """Prediction provider that emits the groundtruth with score 1."""
    def predict(video: VideoSample, t_obs: int, t_ant: int) -> list[ScoredInstance]:
        return [ScoredInstance(i.c, i.ts, i.te, 1.0)
                for i in target_set(video, t_obs, t_ant)]
    return predict


def moc_sweep(predict_fn, dataset: Dataset, beta_obs_list, beta_ant_list,
              pooling: str = "global") -> dict[tuple[float, float], float]:
    """MoC accuracy for every (observation %, anticipation %) grid cell."""
    results = {}
    for beta_o in beta_obs_list:
        per_video_obs = [(v, split_observed(v.T, beta_o)) for v in dataset.videos]
        for beta_a in beta_ant_list:
            preds, gts = [], []
            for video, t_obs in per_video_obs:
                t_ant = horizon_length(video.T, t_obs, beta_a)
                preds.append(build_timeline(
                    predict_fn(video, t_obs, t_ant), t_obs, t_ant))
                gts.append(groundtruth_timeline(video, t_obs, t_ant))
            results[(beta_o, beta_a)] = moc_accuracy(
                preds, gts, dataset.num_classes, pooling=pooling)
    return results


def label_map_sweep(predict_fn, dataset: Dataset, alpha_obs_list,
                    class_counts=None, freq_threshold: int = 100,
                    rare_threshold: int = 10) -> dict:
    """Label-set mAP per observation fraction with the horizon running to
    the video end, plus the average over observation fractions."""
    per_alpha = {}
    for alpha in alpha_obs_list:
        scores, labels = [], []
        for video in dataset.videos:
            t_obs = split_observed(video.T, alpha)
            t_ant = video.T - t_obs
            scores.append(future_label_set(predict_fn(video, t_obs, t_ant)))
            labels.append({i.c for i in target_set(video, t_obs, t_ant)})
        per_alpha[alpha] = mean_average_precision(
            scores, labels, dataset.num_classes, class_counts=class_counts,
            freq_threshold=freq_threshold, rare_threshold=rare_threshold)

    def averaged(key: str) -> float | None:
        values = [per_alpha[a][key] for a in per_alpha if per_alpha[a][key] is not None]
        return float(np.mean(values)) if values else None

    return {
        "per_alpha": per_alpha,
        "map_all": averaged("map_all"),
        "map_freq": averaged("map_freq"),
        "map_rare": averaged("map_rare"),
    }


# ---------------------------------------------------------------------------
# result files


def write_moc_csv(path, results: dict[tuple[float, float], float]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta_obs", "beta_ant", "moc"])
        for (beta_o, beta_a), value in sorted(results.items()):
            writer.writerow([beta_o, beta_a, f"{value:.6f}"])


def write_map_csv(path, results: dict) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha_obs", "map_all", "map_freq", "map_rare"])

        def fmt(v):
            return "" if v is None else f"{v:.6f}"

        for alpha in sorted(results["per_alpha"]):
            cell = results["per_alpha"][alpha]
            writer.writerow([alpha, fmt(cell["map_all"]),
                             fmt(cell["map_freq"]), fmt(cell["map_rare"])])
        writer.writerow(["averaged", fmt(results["map_all"]),
                         fmt(results["map_freq"]), fmt(results["map_rare"])])


def metrics_to_json(moc_results=None, map_results=None) -> dict:
    """Plain-JSON summary of both sweeps (stable key order for diffing)."""
    out: dict = {}
    if moc_results is not None:
        out["moc"] = {
            f"beta_obs={beta_o},beta_ant={beta_a}": value
            for (beta_o, beta_a), value in sorted(moc_results.items())
        }
    if map_results is not None:
        out["label_map"] = {
            "per_alpha": {
                str(alpha): {k: v for k, v in cell.items() if k != "per_class"}
                for alpha, cell in sorted(map_results["per_alpha"].items())
            },
            "map_all": map_results["map_all"],
            "map_freq": map_results["map_freq"],
            "map_rare": map_results["map_rare"],
        }
    return out


def write_metrics_json(path, moc_results=None, map_results=None) -> None:
    payload = metrics_to_json(moc_results, map_results)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
