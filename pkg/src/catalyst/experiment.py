"""One full experiment: data, dense pretraining, catalyst pruning, dense baseline."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

from .config import ExperimentConfig
from .data import Dataset, DatasetSpec, generate_dataset, load_csv_dataset
from .nn import Model, evaluate, init_mlp
from .pipeline import LRSchedule, RunLog, catalyst_prune_full, dense_baseline, steps_per_epoch, train_plain

log = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    data: Dataset
    pretrained: Model
    pruned: Model
    runlog: RunLog
    pretrain_acc: float
    baseline_acc: float
    baseline_loss: float


def load_data(cfg: ExperimentConfig) -> Dataset:
    if cfg.csv_path:
        return load_csv_dataset(cfg.csv_path, cfg.label_column, seed=cfg.data_seed)
    return generate_dataset(DatasetSpec(cfg.dataset, cfg.n_classes, cfg.dim, cfg.n_train, cfg.n_test,
                                        cfg.noise, cfg.data_seed))


def pretrain(cfg: ExperimentConfig, data: Dataset) -> Model:
    tcfg = cfg.train_config()
    widths = [data.n_features, *cfg.hidden_widths, data.n_classes]
    model = init_mlp(widths, target=cfg.target, sigma=cfg.sigma, rng=cfg.seed)
    if cfg.pretrain_epochs:
        train_plain(model, data, LRSchedule(cfg.pretrain_lr), cfg.pretrain_epochs * steps_per_epoch(data, tcfg),
                    dataclasses.replace(tcfg, alpha_theta=cfg.pretrain_decay), stream=0)
    return model


def run_experiment(cfg: ExperimentConfig, data: Dataset = None, runlog: RunLog = None) -> ExperimentResult:
    data = load_data(cfg) if data is None else data
    tcfg = cfg.train_config()
    model = pretrain(cfg, data)
    _, pre_acc = evaluate(model, *data.test)
    log.info("pretrained dense model: test acc %.2f%%", pre_acc)
    pruned, runlog = catalyst_prune_full(model, tcfg, data, runlog)
    base = dense_baseline(model, tcfg, data, runlog)
    base_loss, base_acc = evaluate(base, *data.test)
    log.info("catalyst: %.2f%%, dense baseline: %.2f%%", runlog.final_acc, base_acc)
    return ExperimentResult(cfg, data, model, pruned, runlog, pre_acc, base_acc, base_loss)


def result_meta(res: ExperimentResult) -> dict:
    """Run metadata stored next to the logs (everything summary.json needs beyond the CSVs)."""
    config = res.config.to_dict()
    # where the files go is not part of the computation; leaving it out keeps
    # the emitted bytes identical across output directories
    config.pop("output_dir")
    return {
        "config": config,
        "seed": res.config.seed,
        "pretrain_acc": res.pretrain_acc,
        "baseline_acc": res.baseline_acc,
        "baseline_loss": res.baseline_loss,
        "stop_reasons": dict(res.runlog.stop_reasons),
        "notes": list(res.runlog.notes),
    }
