"""Two-stage set-prediction model for long-term action anticipation.

Stage 1 trains a segment encoder to predict which action classes occur after
a segment (multi-label head over per-timestep embeddings). Stage 2 reuses the
frozen segment encoder to build a segment-level memory over non-overlapping
windows, encodes the observed video with a separate encoder, and decodes a
fixed-size set of time-conditioned queries into scored action spans inside
the anticipation window.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .blocks import (
    BlockConfig,
    DecoderBlock,
    EncoderBlock,
    Linear,
    sinusoidal_pe,
    xavier_uniform,
)
from .errors import ConfigError, UsageError
from .instances import ScoredInstance
from .tensor import (
    Tensor,
    add,
    concat,
    maximum,
    mean,
    minimum,
    relu,
    reshape,
    sigmoid,
    slice_axis,
    softmax,
)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``num_queries`` must exceed the largest groundtruth instance count the
    training set can place inside one anticipation window; training validates
    this against the data. ``t_max`` normalizes the horizon scalar fed to the
    query conditioner and the span losses.
    """

    num_classes: int
    feature_dim: int
    model_dim: int = 64
    num_heads: int = 4
    seg_layers: int = 2
    vid_layers: int = 2
    dec_layers: int = 2
    num_queries: int = 12
    window_k: int = 4
    t_max: int = 256
    dropout_p: float = 0.1
    use_segment_memory: bool = True

    def __post_init__(self):
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.feature_dim < 1:
            raise ConfigError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.num_queries < 1:
            raise ConfigError(f"num_queries must be >= 1, got {self.num_queries}")
        if self.window_k < 1:
            raise ConfigError(f"window_k must be >= 1, got {self.window_k}")
        if self.t_max < 1:
            raise ConfigError(f"t_max must be >= 1, got {self.t_max}")
        if min(self.seg_layers, self.vid_layers, self.dec_layers) < 1:
            raise ConfigError("all layer counts must be >= 1")
        self.block_config()  # validates dim/head/dropout combinations

    def block_config(self) -> BlockConfig:
        return BlockConfig(
            model_dim=self.model_dim,
            num_heads=self.num_heads,
            ffn_dim=4 * self.model_dim,
            dropout_p=self.dropout_p,
        )

    @classmethod
    def benchmark_scale(cls, num_classes: int, feature_dim: int, **overrides) -> "ModelConfig":
        """Full-size configuration (2048-dim, 3 layers, 8 heads) for
        benchmark-feature runs; far too heavy for the test suite."""
        base = cls(
            num_classes=num_classes,
            feature_dim=feature_dim,
            model_dim=2048,
            num_heads=8,
            seg_layers=3,
            vid_layers=3,
            dec_layers=3,
            num_queries=150,
            window_k=16,
            t_max=4096,
        )
        return replace(base, **overrides)


@dataclass
class PredictionSet:
    """Numpy snapshot of one decoder output: exactly ``num_queries`` entries.

    ``class_probs[i]`` is a simplex over num_classes+1 labels where the last
    index is the no-action label; ``starts``/``ends`` are absolute times in
    (t_obs, t_obs + t_ant].
    """

    class_probs: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    t_obs: float
    t_ant: float

    def __post_init__(self):
        n = self.class_probs.shape[0]
        if self.starts.shape != (n,) or self.ends.shape != (n,):
            raise UsageError("prediction arrays disagree in length")
        sums = self.class_probs.sum(axis=1)
        if not np.all(np.abs(sums - 1.0) <= 1e-6):
            raise UsageError("class probabilities must sum to 1 per entry")

    @property
    def no_action_index(self) -> int:
        return self.class_probs.shape[1] - 1

    def __len__(self) -> int:
        return self.class_probs.shape[0]


@dataclass
class RawPrediction:
    """Differentiable decoder outputs, kept in normalized span coordinates.

    ``u_start``/``u_end`` are fractions of the anticipation window in (0, 1],
    already ordered so u_start <= u_end.
    """

    class_probs: Tensor
    u_start: Tensor
    u_end: Tensor
    t_obs: float
    t_ant: float

    def to_prediction_set(self) -> PredictionSet:
        return PredictionSet(
            class_probs=self.class_probs.data.copy(),
            starts=self.t_obs + self.u_start.data * self.t_ant,
            ends=self.t_obs + self.u_end.data * self.t_ant,
            t_obs=self.t_obs,
            t_ant=self.t_ant,
        )


class _Encoder:
    """Input projection + positional table + encoder-block stack."""

    def __init__(self, config: ModelConfig, layers: int, rng: np.random.Generator):
        self.config = config
        self.input_proj = Linear(config.feature_dim, config.model_dim, rng)
        block_cfg = config.block_config()
        self.blocks = [EncoderBlock(block_cfg, rng) for _ in range(layers)]

    def __call__(self, features, train: bool = False, rng=None) -> Tensor:
        x = features if isinstance(features, Tensor) else Tensor(np.asarray(features, dtype=np.float64))
        length = x.shape[-2]
        if length == 0:
            raise UsageError("cannot encode an empty sequence")
        if x.shape[-1] != self.config.feature_dim:
            raise UsageError(
                f"feature width {x.shape[-1]} does not match configured "
                f"feature_dim {self.config.feature_dim}"
            )
        x = add(self.input_proj(x), sinusoidal_pe(length, self.config.model_dim))
        for block in self.blocks:
            x = block(x, train=train, rng=rng)
        return x

    def named_params(self) -> dict[str, Tensor]:
        out = {f"input_proj.{k}": v for k, v in self.input_proj.named_params().items()}
        for i, block in enumerate(self.blocks):
            for k, v in block.named_params().items():
                out[f"block{i}.{k}"] = v
        return out


class SegmentEncoder(_Encoder):
    """Per-timestep segment embedding plus the multi-label future-class head.

    Positions are relative to the segment start, so the same feature rows
    produce the same embedding at any absolute offset.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__(config, config.seg_layers, rng)
        self.future_head = Linear(config.model_dim, config.num_classes, rng)

    def future_probs(self, h: Tensor) -> Tensor:
        """Mean-pool time, then independent per-class occurrence probabilities."""
        if h.ndim != 2:
            raise UsageError(f"expected (L, d) embeddings, got shape {h.shape}")
        pooled = mean(h, axis=0, keepdims=True)
        logits = self.future_head(pooled)
        return sigmoid(reshape(logits, (self.config.num_classes,)))

    def named_params(self) -> dict[str, Tensor]:
        out = super().named_params()
        for k, v in self.future_head.named_params().items():
            out[f"future_head.{k}"] = v
        return out


class AnticipationModel:
    """Full two-encoder/one-decoder architecture with both output heads."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        d = config.model_dim
        self.segment_encoder = SegmentEncoder(config, rng)
        self.video_encoder = _Encoder(config, config.vid_layers, rng)
        self.queries = Tensor(xavier_uniform(rng, config.num_queries, d), requires_grad=True)
        self.query_conditioner = Linear(d + 1, d, rng)
        block_cfg = config.block_config()
        self.decoder_blocks = [
            DecoderBlock(block_cfg, rng, use_segment_memory=config.use_segment_memory)
            for _ in range(config.dec_layers)
        ]
        self.class_head = Linear(d, config.num_classes + 1, rng)
        self.span_hidden = Linear(d, d, rng)
        self.span_out = Linear(d, 2, rng)
        self.decode_calls = 0
        self.segment_encoder_frozen = False

    # ---- stage-2 pipeline pieces -----------------------------------------

    def window_segments(self, features, train: bool = False, rng=None) -> Tensor:
        """Segment-level memory: encode non-overlapping windows of length
        window_k (remainder window shortened, never dropped) and concatenate
        their outputs back to one row per observed timestep.

        Full windows are stacked along a batch axis and encoded in one call.
        """
        feats = np.asarray(features, dtype=np.float64)
        t_obs = feats.shape[0]
        if t_obs == 0:
            raise UsageError("cannot window an empty sequence")
        se_train = train and not self.segment_encoder_frozen
        k = self.config.window_k
        n_full, rem = divmod(t_obs, k)
        parts = []
        if n_full > 0:
            stacked = feats[: n_full * k].reshape(n_full, k, feats.shape[1])
            encoded = self.segment_encoder(stacked, train=se_train, rng=rng)
            parts.append(reshape(encoded, (n_full * k, self.config.model_dim)))
        if rem > 0:
            tail = self.segment_encoder(feats[n_full * k:], train=se_train, rng=rng)
            parts.append(tail)
        return parts[0] if len(parts) == 1 else concat(parts, axis=0)

    def condition_queries(self, t_ant: float) -> Tensor:
        """Append the normalized horizon to every query row, then apply the
        shared conditioning map back to model width."""
        if t_ant <= 0:
            raise UsageError(f"anticipation duration must be positive, got {t_ant}")
        scalar = float(t_ant) / self.config.t_max
        col = Tensor(np.full((self.config.num_queries, 1), scalar))
        return self.query_conditioner(concat([self.queries, col], axis=1))

    def decode(self, q_a: Tensor, h_v: Tensor, h_s, train: bool = False, rng=None) -> Tensor:
        self.decode_calls += 1
        x = q_a
        for block in self.decoder_blocks:
            x = block(x, h_s, h_v, train=train, rng=rng)
        return x

    def output_heads(self, y: Tensor, t_obs: float, t_ant: float) -> RawPrediction:
        """Class simplex over num_classes+1 and an ordered span per query.

        Span fractions come from two sigmoid outputs sorted so start <= end;
        a tiny floor keeps the start strictly inside the window even if the
        sigmoid underflows to exactly 0.
        """
        n = self.config.num_queries
        probs = softmax(self.class_head(y), axis=-1)
        uv = sigmoid(self.span_out(relu(self.span_hidden(y))))
        u0 = reshape(slice_axis(uv, 1, 0, 1), (n,))
        u1 = reshape(slice_axis(uv, 1, 1, 2), (n,))
        u_start = maximum(minimum(u0, u1), 1e-12)
        u_end = maximum(u0, u1)
        return RawPrediction(probs, u_start, u_end, float(t_obs), float(t_ant))

    def forward(self, features, t_ant: float, train: bool = False, rng=None) -> RawPrediction:
        """One decoder pass over an observed feature sequence for one horizon."""
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2:
            raise UsageError(f"expected (T_o, feature_dim) features, got shape {feats.shape}")
        t_obs = feats.shape[0]
        if t_obs == 0:
            raise UsageError("observed sequence must be nonempty")
        h_v = self.video_encoder(feats, train=train, rng=rng)
        h_s = None
        if self.config.use_segment_memory:
            h_s = self.window_segments(feats, train=train, rng=rng)
        q_a = self.condition_queries(t_ant)
        y = self.decode(q_a, h_v, h_s, train=train, rng=rng)
        return self.output_heads(y, t_obs, t_ant)

    def predict_set(self, features, t_ant: float, threshold: float = 0.0) -> list[ScoredInstance]:
        """Evaluation-mode predictions: queries whose best class is the
        no-action label are dropped, as are scores below ``threshold``."""
        pred = self.forward(features, t_ant, train=False).to_prediction_set()
        no_action = pred.no_action_index
        out = []
        for i in range(len(pred)):
            c = int(np.argmax(pred.class_probs[i]))
            if c == no_action:
                continue
            score = float(pred.class_probs[i, c])
            if score < threshold:
                continue
            out.append(ScoredInstance(c, float(pred.starts[i]), float(pred.ends[i]), score))
        return out

    # ---- parameter bookkeeping -------------------------------------------

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for k, v in self.segment_encoder.named_params().items():
            out[f"segment_encoder.{k}"] = v
        for k, v in self.video_encoder.named_params().items():
            out[f"video_encoder.{k}"] = v
        out["queries"] = self.queries
        for k, v in self.query_conditioner.named_params().items():
            out[f"query_conditioner.{k}"] = v
        for i, block in enumerate(self.decoder_blocks):
            for k, v in block.named_params().items():
                out[f"decoder.block{i}.{k}"] = v
        for k, v in self.class_head.named_params().items():
            out[f"class_head.{k}"] = v
        for k, v in self.span_hidden.named_params().items():
            out[f"span_hidden.{k}"] = v
        for k, v in self.span_out.named_params().items():
            out[f"span_out.{k}"] = v
        return out

    def stage2_params(self) -> dict[str, Tensor]:
        """Everything the second stage trains (segment encoder excluded)."""
        return {
            name: p for name, p in self.named_params().items()
            if not name.startswith("segment_encoder.")
        }

    def freeze_segment_encoder(self) -> None:
        """Stage-2 default: no gradients and no dropout in the segment path."""
        self.segment_encoder_frozen = True
        for p in self.segment_encoder.named_params().values():
            p.requires_grad = False

    def unfreeze_segment_encoder(self) -> None:
        self.segment_encoder_frozen = False
        for p in self.segment_encoder.named_params().values():
            p.requires_grad = True
