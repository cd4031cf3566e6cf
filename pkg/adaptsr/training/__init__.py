from adaptsr.training.history import read_history_csv, read_metrics_json, write_history_csv, write_metrics_json
from adaptsr.training.models import DEFAULT_MILESTONES, RunHistory, TrainConfig, TrainMode
from adaptsr.training.schedule import lr_at
from adaptsr.training.trainer import (
    Trainer,
    adapter_digest,
    base_weight_digest,
    build_optimizer,
    evaluate,
    metric_config_for,
    run_training,
    train_step,
)
