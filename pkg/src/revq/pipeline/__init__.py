from .calibrate import DegeneratePredictions, logistic_map, rescale_predictions
from .evaluate import EvalReport, NoEvaluableScenes, SceneRow, evaluate, write_report
from .losses import (
    plcc_loss,
    plcc_loss_value_grad,
    ranking_loss,
    ranking_loss_value_grad,
    total_loss,
    total_loss_value_grad,
)
from .score import ScoreResult, fragment_tensor, motions_for_video, score_video
from .stats import DegenerateInput, average_ranks, kurtosis, pearson, spearman
from .train import (
    STAGE_FULL,
    STAGE_STREAM_B,
    EmptyTrainSet,
    EpochLog,
    MissingLabels,
    TrainConfig,
    VideoItem,
    train,
    write_training_log,
)

__all__ = [
    "DegenerateInput",
    "DegeneratePredictions",
    "EmptyTrainSet",
    "EpochLog",
    "EvalReport",
    "MissingLabels",
    "NoEvaluableScenes",
    "STAGE_FULL",
    "STAGE_STREAM_B",
    "SceneRow",
    "ScoreResult",
    "TrainConfig",
    "VideoItem",
    "average_ranks",
    "evaluate",
    "fragment_tensor",
    "kurtosis",
    "logistic_map",
    "motions_for_video",
    "pearson",
    "plcc_loss",
    "plcc_loss_value_grad",
    "ranking_loss",
    "ranking_loss_value_grad",
    "rescale_predictions",
    "score_video",
    "spearman",
    "total_loss",
    "total_loss_value_grad",
    "train",
    "write_report",
    "write_training_log",
]
