"""Model-level behavior: segment windowing, query conditioning, output head
contracts, prediction extraction, and end-to-end gradients."""

import numpy as np
import pytest

from futureset.errors import ConfigError, UsageError
from futureset.model import (
    AnticipationModel,
    ModelConfig,
    PredictionSet,
    RawPrediction,
    SegmentEncoder,
)
from futureset.tensor import Tape, Tensor, mul, sum_
from tests.helpers import check_gradients


def tiny_config(**overrides) -> ModelConfig:
    base = dict(
        num_classes=3, feature_dim=5, model_dim=8, num_heads=2,
        seg_layers=1, vid_layers=1, dec_layers=1, num_queries=3,
        window_k=3, t_max=64, dropout_p=0.0,
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_model(seed: int = 0, **overrides) -> AnticipationModel:
    return AnticipationModel(tiny_config(**overrides), np.random.default_rng(seed))


class TestModelConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            tiny_config(num_queries=0)
        with pytest.raises(ConfigError):
            tiny_config(window_k=0)
        with pytest.raises(ConfigError):
            tiny_config(model_dim=10, num_heads=4)
        with pytest.raises(ConfigError):
            tiny_config(num_classes=0)

    def test_benchmark_scale_preset(self):
        cfg = ModelConfig.benchmark_scale(num_classes=48, feature_dim=400)
        assert cfg.model_dim == 2048
        assert cfg.num_heads == 8
        assert (cfg.seg_layers, cfg.vid_layers, cfg.dec_layers) == (3, 3, 3)
        assert cfg.num_queries == 150
        assert cfg.window_k == 16
        overridden = ModelConfig.benchmark_scale(48, 400, num_queries=20)
        assert overridden.num_queries == 20


class TestSegmentEncoder:
    def test_output_shapes(self):
        enc = SegmentEncoder(tiny_config(), np.random.default_rng(0))
        rng = np.random.default_rng(1)
        assert enc(rng.normal(size=(4, 5))).shape == (4, 8)
        assert enc(rng.normal(size=(2, 4, 5))).shape == (2, 4, 8)

    def test_same_rows_same_embedding(self):
        # positions are segment-relative, so identical feature rows embed
        # identically regardless of where the segment sat in the video
        enc = SegmentEncoder(tiny_config(), np.random.default_rng(2))
        seg = np.random.default_rng(3).normal(size=(3, 5))
        a = enc(seg).data
        b = enc(seg.copy()).data
        assert np.array_equal(a, b)

    def test_future_probs_shape_and_range(self):
        enc = SegmentEncoder(tiny_config(), np.random.default_rng(4))
        h = enc(np.random.default_rng(5).normal(size=(6, 5)))
        probs = enc.future_probs(h).data
        assert probs.shape == (3,)
        assert np.all((probs > 0) & (probs < 1))

    def test_zeroed_head_gives_half(self):
        enc = SegmentEncoder(tiny_config(), np.random.default_rng(6))
        enc.future_head.weight.data[:] = 0.0
        enc.future_head.bias.data[:] = 0.0
        h = enc(np.random.default_rng(7).normal(size=(4, 5)))
        assert np.array_equal(enc.future_probs(h).data, [0.5, 0.5, 0.5])

    def test_future_probs_mean_pool_tiling_invariance(self):
        enc = SegmentEncoder(tiny_config(), np.random.default_rng(8))
        h = Tensor(np.random.default_rng(9).normal(size=(4, 8)))
        tiled = Tensor(np.tile(h.data, (3, 1)))
        a = enc.future_probs(h).data
        b = enc.future_probs(tiled).data
        assert np.max(np.abs(a - b)) < 1e-12

    def test_future_probs_requires_matrix(self):
        enc = SegmentEncoder(tiny_config(), np.random.default_rng(10))
        with pytest.raises(UsageError):
            enc.future_probs(Tensor(np.zeros(8)))

    def test_empty_or_miswidth_input(self):
        enc = SegmentEncoder(tiny_config(), np.random.default_rng(11))
        with pytest.raises(UsageError):
            enc(np.zeros((0, 5)))
        with pytest.raises(UsageError):
            enc(np.zeros((4, 6)))


class TestWindowSegments:
    def test_matches_per_window_encoding(self):
        model = tiny_model(seed=20)
        feats = np.random.default_rng(21).normal(size=(7, 5))
        out = model.window_segments(feats).data
        assert out.shape == (7, 8)
        pieces = [
            model.segment_encoder(feats[0:3]).data,
            model.segment_encoder(feats[3:6]).data,
            model.segment_encoder(feats[6:7]).data,
        ]
        manual = np.concatenate(pieces, axis=0)
        assert np.max(np.abs(out - manual)) < 1e-12

    def test_short_sequence_single_window(self):
        model = tiny_model(seed=22, window_k=10)
        feats = np.random.default_rng(23).normal(size=(7, 5))
        out = model.window_segments(feats).data
        direct = model.segment_encoder(feats).data
        assert np.array_equal(out, direct)

    @pytest.mark.parametrize("t_obs,k", [(1, 1), (5, 1), (6, 3), (8, 3), (3, 4)])
    def test_row_count_preserved(self, t_obs, k):
        model = tiny_model(seed=24, window_k=k)
        feats = np.random.default_rng(25).normal(size=(t_obs, 5))
        assert model.window_segments(feats).shape == (t_obs, 8)

    def test_window_locality(self):
        # rows of one window never see features of another window
        model = tiny_model(seed=26)
        rng = np.random.default_rng(27)
        feats = rng.normal(size=(9, 5))
        out = model.window_segments(feats).data
        altered = feats.copy()
        altered[7] += 5.0  # inside the third window [6:9]
        out2 = model.window_segments(altered).data
        assert np.max(np.abs(out[:6] - out2[:6])) < 1e-12
        assert np.max(np.abs(out[6:] - out2[6:])) > 1e-6

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            tiny_model().window_segments(np.zeros((0, 5)))


class TestQueryConditioning:
    def test_shape(self):
        model = tiny_model(seed=30)
        assert model.condition_queries(10.0).shape == (3, 8)

    def test_nonpositive_horizon_rejected(self):
        model = tiny_model(seed=31)
        with pytest.raises(UsageError):
            model.condition_queries(0.0)
        with pytest.raises(UsageError):
            model.condition_queries(-3.0)

    def test_horizon_enters_as_scaled_rank_one_shift(self):
        # appending the scalar column makes cond(a) - cond(b) the same
        # vector on every row: ((a-b)/t_max) times the last weight row
        model = tiny_model(seed=32)
        a, b = 40.0, 8.0
        diff = model.condition_queries(a).data - model.condition_queries(b).data
        expected = ((a - b) / model.config.t_max) * model.query_conditioner.weight.data[-1]
        assert np.max(np.abs(diff - expected)) < 1e-12


class TestDecodeAndHeads:
    def test_decode_counter(self):
        model = tiny_model(seed=40)
        feats = np.random.default_rng(41).normal(size=(6, 5))
        assert model.decode_calls == 0
        model.forward(feats, 12.0)
        model.forward(feats, 20.0)
        assert model.decode_calls == 2

    def test_video_memory_matters(self):
        model = tiny_model(seed=42, use_segment_memory=False)
        rng = np.random.default_rng(43)
        q = model.condition_queries(10.0)
        h_a = Tensor(rng.normal(size=(6, 8)))
        h_b = Tensor(rng.normal(size=(6, 8)))
        out_a = model.decode(q, h_a, None).data
        out_b = model.decode(q, h_b, None).data
        assert np.max(np.abs(out_a - out_b)) > 1e-6

    def test_raw_prediction_contract(self):
        model = tiny_model(seed=44)
        feats = np.random.default_rng(45).normal(size=(7, 5))
        raw = model.forward(feats, 15.0)
        probs = raw.class_probs.data
        assert probs.shape == (3, 4)
        assert np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-9
        assert np.all(probs > 0)
        u_s, u_e = raw.u_start.data, raw.u_end.data
        assert np.all(u_s <= u_e)
        assert np.all(u_s >= 1e-12)
        assert np.all(u_e <= 1.0)

    def test_horizon_only_rescales_head_outputs(self):
        model = tiny_model(seed=46)
        h = Tensor(np.random.default_rng(47).normal(size=(3, 8)))
        raw_a = model.output_heads(h, t_obs=10.0, t_ant=10.0)
        raw_b = model.output_heads(h, t_obs=10.0, t_ant=20.0)
        assert np.array_equal(raw_a.u_start.data, raw_b.u_start.data)
        assert np.array_equal(raw_a.class_probs.data, raw_b.class_probs.data)

    def test_span_scaling_hand_case(self):
        probs = np.full((1, 4), 0.25)
        raw = RawPrediction(Tensor(probs), Tensor([0.2]), Tensor([0.5]),
                            t_obs=30.0, t_ant=10.0)
        pset = raw.to_prediction_set()
        assert pset.starts[0] == pytest.approx(32.0)
        assert pset.ends[0] == pytest.approx(35.0)
        wider = RawPrediction(Tensor(probs), Tensor([0.2]), Tensor([0.5]),
                              t_obs=30.0, t_ant=20.0)
        pw = wider.to_prediction_set()
        assert pw.starts[0] == pytest.approx(34.0)
        assert pw.ends[0] == pytest.approx(40.0)

    def test_prediction_times_inside_window(self):
        model = tiny_model(seed=48)
        rng = np.random.default_rng(49)
        for trial in range(5):
            feats = rng.normal(size=(rng.integers(2, 12), 5))
            t_ant = float(rng.integers(1, 40))
            pset = model.forward(feats, t_ant).to_prediction_set()
            t_obs = feats.shape[0]
            assert np.all(pset.starts > t_obs)
            assert np.all(pset.starts <= pset.ends)
            assert np.all(pset.ends <= t_obs + t_ant + 1e-9)

    def test_prediction_set_validation(self):
        bad = np.array([[0.5, 0.2, 0.2]])  # does not sum to 1
        with pytest.raises(UsageError):
            PredictionSet(bad, np.array([1.0]), np.array([2.0]), 0.0, 5.0)
        with pytest.raises(UsageError):
            PredictionSet(np.array([[0.5, 0.5]]), np.array([1.0, 2.0]),
                          np.array([2.0]), 0.0, 5.0)


class TestPredictSet:
    def test_instances_well_formed(self):
        model = tiny_model(seed=50)
        feats = np.random.default_rng(51).normal(size=(8, 5))
        out = model.predict_set(feats, 16.0)
        assert len(out) <= model.config.num_queries
        for inst in out:
            assert 0 <= inst.c < 3
            assert 8.0 < inst.ts <= inst.te <= 24.0 + 1e-9
            assert 0.0 < inst.score <= 1.0

    def test_threshold_filters_everything_when_impossible(self):
        model = tiny_model(seed=52)
        feats = np.random.default_rng(53).normal(size=(6, 5))
        assert model.predict_set(feats, 10.0, threshold=1.1) == []

    def test_no_action_dominant_yields_empty(self):
        model = tiny_model(seed=54)
        model.class_head.weight.data[:] = 0.0
        model.class_head.bias.data[:] = 0.0
        model.class_head.bias.data[-1] = 50.0
        feats = np.random.default_rng(55).normal(size=(6, 5))
        assert model.predict_set(feats, 10.0) == []

    def test_eval_deterministic(self):
        model = tiny_model(seed=56, dropout_p=0.3)
        feats = np.random.default_rng(57).normal(size=(7, 5))
        a = model.predict_set(feats, 12.0)
        b = model.predict_set(feats, 12.0)
        assert a == b


class TestEndToEndGradients:
    def _loss_builder(self, model, feats, t_ant, rng):
        wc = rng.normal(size=(3, 4))
        ws = rng.normal(size=3)
        we = rng.normal(size=3)

        def loss_from_forward():
            raw = model.forward(feats, t_ant)
            return sum_(mul(raw.class_probs, wc)) \
                + sum_(mul(raw.u_start, ws)) \
                + sum_(mul(raw.u_end, we))

        return loss_from_forward

    @pytest.mark.parametrize("target", [
        "queries", "class_head.weight", "span_out.weight",
        "query_conditioner.weight", "video_encoder.input_proj.weight",
        "segment_encoder.input_proj.weight",
    ])
    def test_parameter_gradients_match_finite_differences(self, target):
        model = tiny_model(seed=60)
        rng = np.random.default_rng(61)
        feats = rng.normal(size=(6, 5))
        loss_fn = self._loss_builder(model, feats, 12.0, rng)
        params = model.named_params()
        original = params[target]

        def build(leaf):
            self._assign(model, target, leaf)
            return loss_fn()

        try:
            check_gradients(build, original.data.copy(), tol=1e-4)
        finally:
            self._assign(model, target, original)

    @staticmethod
    def _assign(model, dotted: str, tensor: Tensor):
        if dotted == "queries":
            model.queries = tensor
            return
        parts = dotted.split(".")
        obj = model
        for p in parts[:-1]:
            if p.startswith("block") and p[5:].isdigit():
                obj = obj.blocks[int(p[5:])]
            else:
                obj = getattr(obj, p)
        setattr(obj, parts[-1], tensor)

    def test_frozen_segment_encoder_out_of_stage2_params(self):
        model = tiny_model(seed=62)
        model.freeze_segment_encoder()
        stage2 = model.stage2_params()
        assert not any(n.startswith("segment_encoder.") for n in stage2)
        assert all(not p.requires_grad
                   for n, p in model.named_params().items()
                   if n.startswith("segment_encoder."))
        full = model.named_params()
        assert set(full) == set(stage2) | {
            n for n in full if n.startswith("segment_encoder.")
        }
        model.unfreeze_segment_encoder()
        assert all(p.requires_grad for p in model.named_params().values())

    def test_frozen_segment_encoder_skips_dropout(self):
        model = tiny_model(seed=63, dropout_p=0.5)
        model.freeze_segment_encoder()
        feats = np.random.default_rng(64).normal(size=(7, 5))
        a = model.window_segments(feats, train=True, rng=np.random.default_rng(1)).data
        b = model.window_segments(feats, train=True, rng=np.random.default_rng(2)).data
        assert np.array_equal(a, b)

    def test_frozen_segment_encoder_not_recorded(self):
        model = tiny_model(seed=65)
        model.freeze_segment_encoder()
        feats = np.random.default_rng(66).normal(size=(6, 5))
        with Tape() as tape:
            model.window_segments(feats)
            assert len(tape) == 0
