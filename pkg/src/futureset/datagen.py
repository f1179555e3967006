"""Synthetic activity videos, example extraction, and dataset files.

Videos come from per-activity Markov grammars over a shared class universe:
each instance picks a duration for its class and emits prototype features
plus Gaussian noise. Instances tile [1, T] exactly with integer frames. The
dataset file is JSON Lines (one video per line) with a classes.json sidecar;
externally extracted features in the same layout load through the same path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, UsageError
from .instances import ActionInstance, clip_to_window


@dataclass(frozen=True)
class ActivityGrammar:
    """Markov process over a subset of the global class universe.

    ``classes`` lists global class indices; ``transitions[i, j]`` is the
    probability that local class i is followed by local class j; durations
    are drawn uniformly from the inclusive per-class ranges.
    """

    activity: str
    classes: tuple[int, ...]
    transitions: np.ndarray
    initial: np.ndarray
    duration_ranges: tuple[tuple[int, int], ...]
    prototypes: np.ndarray
    noise_sigma: float

    def __post_init__(self):
        n = len(self.classes)
        if self.transitions.shape != (n, n):
            raise UsageError(f"transition table must be {n}x{n}, got {self.transitions.shape}")
        if self.initial.shape != (n,):
            raise UsageError(f"initial distribution must have length {n}")
        rows = self.transitions.sum(axis=1)
        if not np.all(np.abs(rows - 1.0) <= 1e-9):
            raise UsageError("transition rows must sum to 1")
        if abs(self.initial.sum() - 1.0) > 1e-9:
            raise UsageError("initial distribution must sum to 1")
        if len(self.duration_ranges) != n or self.prototypes.shape[0] != n:
            raise UsageError("per-class tables must cover every class")
        for lo, hi in self.duration_ranges:
            if lo < 1 or hi < lo:
                raise UsageError(f"bad duration range [{lo}, {hi}]")
        if self.noise_sigma < 0:
            raise UsageError("noise sigma must be >= 0")

    @property
    def min_duration(self) -> int:
        return min(lo for lo, _ in self.duration_ranges)


@dataclass
class VideoSample:
    """One annotated feature sequence; instances tile [1, T] exactly."""

    id: str
    activity: str
    features: np.ndarray
    instances: list[ActionInstance]

    def __post_init__(self):
        t = self.features.shape[0]
        if not self.instances:
            raise UsageError(f"video {self.id} has no instances")
        cursor = 1
        for inst in self.instances:
            if inst.ts != cursor:
                raise UsageError(
                    f"video {self.id}: instance starts at {inst.ts}, expected {cursor}"
                )
            cursor = int(inst.te) + 1
        if cursor != t + 1:
            raise UsageError(f"video {self.id}: instances cover [1, {cursor - 1}], T = {t}")

    @property
    def T(self) -> int:
        return self.features.shape[0]


@dataclass
class Stage1Example:
    """A single-action segment and the classes that occur after it."""

    video_id: str
    ts: int
    te: int
    features: np.ndarray
    target: np.ndarray


@dataclass
class Dataset:
    class_names: list[str]
    videos: list[VideoSample] = field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def instance_counts(self) -> np.ndarray:
        """Number of annotated instances per class across all videos."""
        counts = np.zeros(self.num_classes, dtype=np.int64)
        for video in self.videos:
            for inst in video.instances:
                counts[inst.c] += 1
        return counts


def sample_video(grammar: ActivityGrammar, seed, length_budget: int,
                 video_id: str | None = None) -> VideoSample:
    """Run the grammar until the budget is filled; the last instance is
    truncated so T equals the budget exactly. Deterministic given the seed."""
    if length_budget < grammar.min_duration:
        raise UsageError(
            f"budget {length_budget} below the grammar's minimum duration "
            f"{grammar.min_duration}"
        )
    rng = np.random.default_rng(seed)
    n = len(grammar.classes)
    local = int(rng.choice(n, p=grammar.initial))
    instances: list[ActionInstance] = []
    cursor = 1
    rows: list[np.ndarray] = []
    d_in = grammar.prototypes.shape[1]
    while cursor <= length_budget:
        lo, hi = grammar.duration_ranges[local]
        duration = int(rng.integers(lo, hi + 1))
        end = min(cursor + duration - 1, length_budget)
        instances.append(ActionInstance(grammar.classes[local], cursor, end))
        steps = end - cursor + 1
        noise = rng.standard_normal((steps, d_in))
        rows.append(grammar.prototypes[local] + grammar.noise_sigma * noise)
        cursor = end + 1
        local = int(rng.choice(n, p=grammar.transitions[local]))
    features = np.concatenate(rows, axis=0).astype(np.float32)
    return VideoSample(
        id=video_id if video_id is not None else f"{grammar.activity}-{seed}",
        activity=grammar.activity,
        features=features,
        instances=instances,
    )


def stage1_examples(video: VideoSample, num_classes: int,
                    include_empty_future: bool = False) -> list[Stage1Example]:
    """One example per annotated instance: its feature rows and a binary
    vector of the classes occurring strictly after its end. Instances with
    nothing after them are skipped unless ``include_empty_future``."""
    out = []
    for idx, inst in enumerate(video.instances):
        target = np.zeros(num_classes)
        for later in video.instances[idx + 1:]:
            target[later.c] = 1.0
        if target.sum() == 0 and not include_empty_future:
            continue
        ts, te = int(inst.ts), int(inst.te)
        out.append(Stage1Example(
            video_id=video.id, ts=ts, te=te,
            features=video.features[ts - 1:te], target=target,
        ))
    return out


def sliding_stage1_examples(video: VideoSample, k: int, num_classes: int,
                            stride: int = 1,
                            include_empty_future: bool = False) -> list[Stage1Example]:
    """Ablation extractor: fixed-length windows instead of annotation spans.

    Windows of length k start at 1, 1+stride, ...; the target covers classes
    whose instances start strictly after the window's end.
    """
    if k < 1 or stride < 1:
        raise UsageError("window length and stride must be >= 1")
    out = []
    for ts in range(1, video.T - k + 2, stride):
        te = ts + k - 1
        target = np.zeros(num_classes)
        for inst in video.instances:
            if inst.ts > te:
                target[inst.c] = 1.0
        if target.sum() == 0 and not include_empty_future:
            continue
        out.append(Stage1Example(
            video_id=video.id, ts=ts, te=te,
            features=video.features[ts - 1:te], target=target,
        ))
    return out


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_observed(t_total: int, beta_o: float) -> int:
    """Observed length: beta_o percent of the video, rounded, at least 1."""
    if not 0 < beta_o < 100:
        raise UsageError(f"observation percentage must be in (0, 100), got {beta_o}")
    t_obs = max(1, _round_half_up(beta_o / 100.0 * t_total))
    if t_obs >= t_total:
        raise UsageError(
            f"observing {beta_o}% of {t_total} frames leaves no future to predict"
        )
    return t_obs


def horizon_length(t_total: int, t_obs: int, beta_a: float) -> int:
    """Anticipation length: beta_a percent of the remaining video, >= 1."""
    if not 0 < beta_a <= 100:
        raise UsageError(f"anticipation percentage must be in (0, 100], got {beta_a}")
    if not 1 <= t_obs < t_total:
        raise UsageError(f"observed length {t_obs} outside [1, {t_total})")
    return max(1, _round_half_up(beta_a / 100.0 * (t_total - t_obs)))


def target_set(video: VideoSample, t_obs: int, t_ant: int) -> list[ActionInstance]:
    """Groundtruth instances intersecting (t_obs, t_obs+t_ant], clipped."""
    if t_obs + t_ant > video.T:
        raise UsageError(
            f"window ({t_obs}, {t_obs + t_ant}] extends past video end {video.T}"
        )
    return clip_to_window(video.instances, t_obs, t_ant)


# ---------------------------------------------------------------------------
# serialization


def _classes_path(path: Path) -> Path:
    return path.parent / "classes.json"


def save_dataset(path, dataset: Dataset) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for video in dataset.videos:
            record = {
                "id": video.id,
                "activity": video.activity,
                "T": video.T,
                "d": int(video.features.shape[1]),
                "features": [[float(x) for x in row] for row in video.features],
                "instances": [
                    {"c": int(i.c), "ts": int(i.ts), "te": int(i.te)}
                    for i in video.instances
                ],
            }
            fh.write(json.dumps(record) + "\n")
    _classes_path(path).write_text(json.dumps(dataset.class_names), encoding="utf-8")


def load_dataset(path) -> Dataset:
    path = Path(path)
    classes_file = _classes_path(path)
    if not classes_file.exists():
        raise DataFormatError(f"{classes_file}: class-name sidecar not found")
    try:
        class_names = json.loads(classes_file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{classes_file}: invalid JSON ({exc})") from exc
    if not isinstance(class_names, list) or not all(isinstance(c, str) for c in class_names):
        raise DataFormatError(f"{classes_file}: expected a JSON array of strings")
    videos = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{line_no}: invalid JSON ({exc})") from exc
            videos.append(_parse_video(record, path, line_no, len(class_names)))
    return Dataset(class_names=class_names, videos=videos)


def _parse_video(record, path, line_no: int, num_classes: int) -> VideoSample:
    def fail(message: str):
        raise DataFormatError(f"{path}:{line_no}: {message}")

    for key in ("id", "activity", "T", "d", "features", "instances"):
        if key not in record:
            fail(f"missing field '{key}'")
    t, d = record["T"], record["d"]
    if not (isinstance(t, int) and isinstance(d, int) and t >= 1 and d >= 1):
        fail(f"T and d must be positive integers, got T={t!r}, d={d!r}")
    features = np.asarray(record["features"], dtype=np.float32)
    if features.shape != (t, d):
        fail(f"features shape {features.shape} does not match T={t}, d={d}")
    instances = []
    for entry in record["instances"]:
        try:
            c, ts, te = int(entry["c"]), int(entry["ts"]), int(entry["te"])
        except (KeyError, TypeError, ValueError):
            fail(f"malformed instance entry {entry!r}")
        if not 0 <= c < num_classes:
            fail(f"class index {c} outside the {num_classes}-class universe")
        instances.append(ActionInstance(c, ts, te))
    try:
        return VideoSample(
            id=str(record["id"]), activity=str(record["activity"]),
            features=features, instances=instances,
        )
    except UsageError as exc:
        fail(str(exc))


# ---------------------------------------------------------------------------
# built-in toy corpus


TOY_CLASS_NAMES = [
    "rinse", "chop", "stir", "heat", "pour", "whisk", "fold", "serve",
]
TOY_FEATURE_DIM = 16


def _toy_prototypes() -> np.ndarray:
    protos = np.zeros((len(TOY_CLASS_NAMES), TOY_FEATURE_DIM), dtype=np.float64)
    for c in range(len(TOY_CLASS_NAMES)):
        protos[c, 2 * c] = 1.0
        protos[c, 2 * c + 1] = 0.5
    return protos


def toy_grammars(noise_sigma: float = 0.05) -> list[ActivityGrammar]:
    """Four activities cycling deterministically over 4-class subsets.

    Durations are fixed per class, so given the observed prefix the entire
    future timeline is determined; the corpus is learnable by construction
    while still requiring activity and phase inference.
    """
    protos = _toy_prototypes()
    cycles = {
        "brew": (0, 1, 2, 3),
        "bake": (4, 5, 6, 7),
        "grill": (0, 2, 4, 6),
        "roast": (1, 3, 5, 7),
    }
    grammars = []
    for activity, cycle in cycles.items():
        n = len(cycle)
        transitions = np.zeros((n, n))
        for i in range(n):
            transitions[i, (i + 1) % n] = 1.0
        durations = tuple((4 + (c % 5), 4 + (c % 5)) for c in cycle)
        grammars.append(ActivityGrammar(
            activity=activity,
            classes=tuple(cycle),
            transitions=transitions,
            initial=np.full(n, 1.0 / n),
            duration_ranges=durations,
            prototypes=protos[list(cycle)],
            noise_sigma=noise_sigma,
        ))
    return grammars


def make_toy_dataset(num_videos: int, master_seed: int, length_budget: int = 60,
                     noise_sigma: float = 0.05, stream: int = 0) -> Dataset:
    """Balanced corpus over the four toy activities, one child seed per video.

    ``stream`` separates splits: train/val/test built from the same master
    seed with different streams share no per-video seeds.
    """
    grammars = toy_grammars(noise_sigma)
    videos = []
    for index in range(num_videos):
        grammar = grammars[index % len(grammars)]
        seed = np.random.SeedSequence([master_seed, stream, index])
        videos.append(sample_video(
            grammar, seed, length_budget,
            video_id=f"{grammar.activity}-{stream}-{index:04d}",
        ))
    return Dataset(class_names=list(TOY_CLASS_NAMES), videos=videos)
