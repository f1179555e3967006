"""Set-prediction transformer for long-term action anticipation.

A self-contained desk-scale stack: numpy-backed reverse-mode autodiff, the
two-stage encoder/decoder model, greedy and exact set matching, the matched
set loss, synthetic activity grammars, benchmark-style evaluation protocols,
and a CLI tying them together.
"""

from .config import RunConfig
from .datagen import (
    ActivityGrammar,
    Dataset,
    VideoSample,
    load_dataset,
    make_toy_dataset,
    sample_video,
    save_dataset,
)
from .errors import (
    ConfigError,
    DataFormatError,
    DimensionError,
    FuturesetError,
    NumericalError,
    UsageError,
)
from .instances import ActionInstance, ScoredInstance
from .losses import LossConfig, anticipation_loss, bce_multilabel, iou_loss
from .matching import Correspondence, greedy_match, hungarian_match, temporal_overlap
from .model import AnticipationModel, ModelConfig, PredictionSet
from .tensor import Tape, Tensor

__version__ = "0.1.0"

__all__ = [
    "ActionInstance",
    "ActivityGrammar",
    "AnticipationModel",
    "ConfigError",
    "Correspondence",
    "DataFormatError",
    "Dataset",
    "DimensionError",
    "FuturesetError",
    "LossConfig",
    "ModelConfig",
    "NumericalError",
    "PredictionSet",
    "RunConfig",
    "ScoredInstance",
    "Tape",
    "Tensor",
    "UsageError",
    "VideoSample",
    "anticipation_loss",
    "bce_multilabel",
    "greedy_match",
    "hungarian_match",
    "iou_loss",
    "load_dataset",
    "make_toy_dataset",
    "sample_video",
    "save_dataset",
    "temporal_overlap",
]
