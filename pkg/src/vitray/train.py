"""Experiment runner: configured training, evaluation, and comparison.

A run loads train/test manifests, trains for the configured epochs with
AdamW under a per-epoch cosine schedule, evaluates the full metric suite
on the test split after every epoch, appends each row to ``report.csv``
as soon as it exists (so a crash loses nothing), and checkpoints the
model together with the optimizer state.

Determinism: model init, epoch shuffles, and dropout masks are drawn from
independent streams keyed by (seed, purpose, epoch), so identical configs
reproduce byte-identical reports and resuming from an epoch-k checkpoint
replays epochs k+1..T exactly.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    DatasetManifest,
    epoch_order,
    iter_index_batches,
    load_manifest,
    load_sample,
    preprocess,
)
from .errors import ConfigError, DataError, NumericError, UsageError
from .metrics import METRIC_NAMES, evaluate
from .model import ViTConfig, ViTModel
from .optim import AdamW, CosineSchedule, cross_entropy
from .tensor import Tensor, derive_rng, zero_grads

REPORT_COLUMNS = ("epoch", "loss", "accuracy", "precision", "recall", "f1",
                  "roc_auc", "kappa", "mcc")
REPORT_HEADER = ",".join(REPORT_COLUMNS)

# rng stream tags
_INIT, _SHUFFLE, _DROPOUT = 0, 1, 2


@dataclass
class EpochReport:
    epoch: int
    loss: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float
    kappa: float
    mcc: float
    lr: float = 0.0  # applied learning rate; informational, not a CSV column

    def csv_row(self) -> str:
        values = [f"{getattr(self, c):.6f}" for c in REPORT_COLUMNS[1:]]
        return ",".join([str(self.epoch)] + values)


@dataclass
class TrainConfig:
    vit: ViTConfig
    schedule: CosineSchedule
    train_manifest: Path
    test_manifest: Path
    out_dir: Path
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    pipeline_mode: str = "full"
    checkpoint_every: int = 0  # 0 = final checkpoint only

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        # a zero-epoch run never applies a learning rate, so the schedule
        # length check only binds for real runs
        if self.epochs >= 1 and self.epochs != self.schedule.t_max:
            raise ConfigError(
                f"epochs ({self.epochs}) must equal the schedule length ({self.schedule.t_max})"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.pipeline_mode not in ("full", "masked"):
            raise ConfigError(f"pipeline_mode must be 'full' or 'masked', got {self.pipeline_mode!r}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be non-negative")


def preload_split(manifest: DatasetManifest, cfg: TrainConfig):
    """Preprocess an entire split into one [n, C, S, S] array (desk scale)."""
    images = np.stack([
        preprocess(load_sample(s), cfg.vit.image_size, cfg.pipeline_mode, cfg.vit.in_channels)
        for s in manifest.samples
    ])
    return images, manifest.labels()


def predict_scores(model: ViTModel, images: np.ndarray, batch_size: int) -> np.ndarray:
    chunks = [model.predict_proba(Tensor(images[i:i + batch_size]))
              for i in range(0, len(images), batch_size)]
    return np.concatenate(chunks, axis=0)


def train_one_epoch(model: ViTModel, optimizer: AdamW, images: np.ndarray,
                    labels: np.ndarray, batch_size: int,
                    shuffle_rng, dropout_rng=None, epoch: int = 0) -> float:
    """One pass over the data; returns the sample-weighted mean batch loss."""
    order = epoch_order(len(images), shuffle_rng, shuffle=True)
    total = 0.0
    for step, idx in enumerate(iter_index_batches(order, batch_size)):
        try:
            logits = model.forward(Tensor(images[idx]), train=True, rng=dropout_rng)
            loss = cross_entropy(logits, labels[idx])
            value = loss.item()
        except NumericError as exc:
            raise NumericError(f"epoch {epoch + 1}, batch {step}: {exc}") from None
        if not math.isfinite(value):
            raise NumericError(f"non-finite training loss at epoch {epoch + 1}, batch {step}")
        zero_grads(model.params.values())
        loss.backward()
        optimizer.step()
        total += value * len(idx)
    return total / len(images)


def run_training(cfg: TrainConfig, resume_from: Optional[Path] = None,
                 on_epoch=None) -> tuple[list[EpochReport], Path]:
    """Execute a training run; returns the per-epoch reports and the final
    checkpoint path. All config violations surface before any work.
    ``on_epoch``, when given, is called with each EpochReport as it lands."""
    cfg.validate()
    train_manifest = load_manifest(cfg.train_manifest, split="train")
    test_manifest = load_manifest(cfg.test_manifest, split="test")
    if train_manifest.label_names != test_manifest.label_names:
        raise DataError(
            f"train/test label tables differ: {train_manifest.label_names} "
            f"vs {test_manifest.label_names}"
        )
    if cfg.vit.num_classes != train_manifest.num_classes:
        raise ConfigError(
            f"model has {cfg.vit.num_classes} classes but the manifest defines "
            f"{train_manifest.num_classes}"
        )
    if cfg.pipeline_mode == "masked":
        for manifest in (train_manifest, test_manifest):
            if not manifest.has_masks():
                raise ConfigError(f"masked pipeline requires masks in the {manifest.split} manifest")

    start_epoch = 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if ckpt.config != cfg.vit:
            raise ConfigError("checkpoint model config does not match the run config")
        model = ckpt.build_model()
        start_epoch = ckpt.epoch
        if start_epoch > cfg.epochs:
            raise ConfigError(f"checkpoint is at epoch {start_epoch}, past epochs={cfg.epochs}")
    else:
        model = ViTModel(cfg.vit, rng=derive_rng(cfg.seed, _INIT))

    optimizer = AdamW(model.trainable_parameters(), lr=cfg.schedule.eta_max,
                      beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
                      weight_decay=cfg.weight_decay)
    if resume_from is not None and start_epoch > 0:
        if ckpt.optimizer is None or not ckpt.opt_arrays:
            raise DataError(f"{resume_from}: checkpoint lacks optimizer state, cannot resume")
        optimizer.load_state_arrays(ckpt.opt_arrays, t=ckpt.optimizer["t"])

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.csv"
    with open(report_path, "w") as fh:
        fh.write(REPORT_HEADER + "\n")

    train_images, train_labels = preload_split(train_manifest, cfg)
    test_images, test_labels = preload_split(test_manifest, cfg)

    reports: list[EpochReport] = []
    for epoch in range(start_epoch, cfg.epochs):
        optimizer.lr = cfg.schedule.lr_at(epoch)
        loss = train_one_epoch(
            model, optimizer, train_images, train_labels, cfg.batch_size,
            shuffle_rng=derive_rng(cfg.seed, _SHUFFLE, epoch),
            dropout_rng=derive_rng(cfg.seed, _DROPOUT, epoch),
            epoch=epoch,
        )
        scores = predict_scores(model, test_images, cfg.batch_size)
        metrics = evaluate(scores, test_labels)
        report = EpochReport(epoch=epoch + 1, loss=loss, lr=optimizer.lr,
                             **{name: metrics[name] for name in METRIC_NAMES})
        reports.append(report)
        with open(report_path, "a") as fh:  # crash-safe: row lands immediately
            fh.write(report.csv_row() + "\n")
            fh.flush()
        if on_epoch is not None:
            on_epoch(report)
        if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(out_dir / f"checkpoint_epoch_{epoch + 1:04d}.ckpt",
                            model, epoch=epoch + 1, optimizer=optimizer)

    final_path = out_dir / "checkpoint_final.ckpt"
    save_checkpoint(final_path, model, epoch=cfg.epochs, optimizer=optimizer)
    return reports, final_path


def run_compare(cfg_full: TrainConfig, cfg_masked: TrainConfig) -> dict:
    """Train both pipeline arms with identical settings and tabulate them.

    The configs must be identical apart from ``pipeline_mode``. Each arm
    trains under ``out_dir/<arm>``; the side-by-side per-epoch table goes
    to ``out_dir/compare.csv`` (one row per epoch per arm) and final-epoch
    deltas (masked minus full) to ``out_dir/compare_delta.csv``.
    """
    if cfg_full.pipeline_mode != "full" or cfg_masked.pipeline_mode != "masked":
        raise UsageError("run_compare needs one 'full' config and one 'masked' config")
    a = dataclasses.asdict(cfg_full)
    b = dataclasses.asdict(cfg_masked)
    a.pop("pipeline_mode")
    b.pop("pipeline_mode")
    if a != b:
        differing = sorted(k for k in a if a[k] != b[k])
        raise UsageError(f"compare configs differ beyond pipeline_mode: {differing}")

    out_dir = Path(cfg_full.out_dir)
    results = {}
    for arm, cfg in (("full", cfg_full), ("masked", cfg_masked)):
        arm_cfg = dataclasses.replace(cfg, out_dir=out_dir / arm)
        results[arm] = run_training(arm_cfg)[0]

    compare_path = out_dir / "compare.csv"
    with open(compare_path, "w") as fh:
        fh.write("epoch,arm," + ",".join(REPORT_COLUMNS[1:]) + "\n")
        for full_row, masked_row in zip(results["full"], results["masked"]):
            for arm, row in (("full", full_row), ("masked", masked_row)):
                fh.write(f"{row.epoch},{arm}," + ",".join(
                    f"{getattr(row, c):.6f}" for c in REPORT_COLUMNS[1:]) + "\n")

    delta_path = out_dir / "compare_delta.csv"
    with open(delta_path, "w") as fh:
        fh.write("metric,full,masked,delta\n")
        if results["full"]:
            last_full, last_masked = results["full"][-1], results["masked"][-1]
            for c in REPORT_COLUMNS[1:]:
                f_v, m_v = getattr(last_full, c), getattr(last_masked, c)
                fh.write(f"{c},{f_v:.6f},{m_v:.6f},{m_v - f_v:.6f}\n")
    return results


def parse_report_csv(path) -> list[EpochReport]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"report not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0] != REPORT_HEADER:
        raise DataError(f"{path}:1: expected header '{REPORT_HEADER}'")
    reports = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(REPORT_COLUMNS):
            raise DataError(f"{path}:{lineno}: expected {len(REPORT_COLUMNS)} fields")
        try:
            reports.append(EpochReport(int(parts[0]), *[float(v) for v in parts[1:]]))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return reports


# ---- plain-text config files (key = value) ----

_CONFIG_KEYS = {
    # vit
    "image_size": int, "patch_size": int, "in_channels": int, "hidden_size": int,
    "intermediate_size": int, "num_layers": int, "num_heads": int, "num_classes": int,
    "attn_dropout": float, "hidden_dropout": float, "ln_eps": float, "freeze_encoder": bool,
    # schedule
    "lr_max": float, "lr_min": float,
    # run
    "weight_decay": float, "beta1": float, "beta2": float, "eps": float,
    "batch_size": int, "epochs": int, "seed": int, "pipeline_mode": str,
    "train_manifest": str, "test_manifest": str, "out_dir": str, "checkpoint_every": int,
}

_VIT_KEYS = ("image_size", "patch_size", "in_channels", "hidden_size", "intermediate_size",
             "num_layers", "num_heads", "num_classes", "attn_dropout", "hidden_dropout",
             "ln_eps", "freeze_encoder")


def _parse_value(key: str, raw: str, lineno, source):
    kind = _CONFIG_KEYS[key]
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment, blanks ignored."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, lineno, path)
    return values


def build_train_config(values: dict, base_dir: Path = Path(".")) -> TrainConfig:
    """Assemble a TrainConfig from flat key/value settings.

    ``num_classes`` may be omitted: it is then taken from the train
    manifest's label table. Relative paths resolve against ``base_dir``.
    """
    values = dict(values)
    for required in ("train_manifest", "test_manifest", "out_dir"):
        if required not in values:
            raise ConfigError(f"missing required config key {required!r}")
    train_manifest = _resolve(values["train_manifest"], base_dir)
    test_manifest = _resolve(values["test_manifest"], base_dir)
    out_dir = _resolve(values["out_dir"], base_dir)

    if "num_classes" not in values:
        values["num_classes"] = load_manifest(train_manifest).num_classes
    vit = ViTConfig(**{k: values[k] for k in _VIT_KEYS if k in values})

    epochs = int(values.get("epochs", 10))
    schedule = CosineSchedule(eta_max=values.get("lr_max", 1e-4),
                              eta_min=values.get("lr_min", 0.0),
                              t_max=max(epochs, 1))
    run_keys = ("weight_decay", "beta1", "beta2", "eps", "batch_size", "seed",
                "pipeline_mode", "checkpoint_every")
    cfg = TrainConfig(vit=vit, schedule=schedule, train_manifest=train_manifest,
                      test_manifest=test_manifest, out_dir=out_dir, epochs=epochs,
                      **{k: values[k] for k in run_keys if k in values})
    cfg.validate()
    return cfg


def _resolve(path_str: str, base_dir: Path) -> Path:
    p = Path(path_str)
    return p if p.is_absolute() else base_dir / p
