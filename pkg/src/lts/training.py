"""Minibatch Adam training with per-epoch validation and checkpoints."""

import copy
import csv
import logging
import sys
from collections import OrderedDict
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import yaml

from lts.config import RunConfig, from_dict, to_dict
from lts.data.batch import collate
from lts.data.vocab import Vocabulary, build_vocab
from lts.errors import ConfigError, DataError, TrainingDivergedError
from lts.evaluation import evaluate
from lts.model import LTSModel
from lts.objective import lr_at, total_loss

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "lts-checkpoint"
CHECKPOINT_VERSION = 1
LOG_COLUMNS = ["epoch", "lr", "L_seg", "L_loc", "L_total", "val_IoU", "val_cum_IoU", "val_loc"]


@dataclass
class Checkpoint:
    config: dict
    vocab: list
    model_state: dict
    optimizer_state: dict | None = None
    epoch: int = -1
    best_iou: float = -1.0
    history: list = field(default_factory=list)

    def run_config(self) -> RunConfig:
        return from_dict(RunConfig, self.config)

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(list(self.vocab))

    def build_model(self, config: RunConfig | None = None) -> LTSModel:
        """Model with the stored weights.

        ``config`` may switch modules off (ablations at inference time); the
        weights it no longer uses are ignored, but every parameter the model
        does need must come from the checkpoint.
        """
        config = config or self.run_config()
        model = LTSModel(len(self.vocab), config.effective_model())
        expected = model.state_dict()
        missing = sorted(set(expected) - set(self.model_state))
        bad = sorted(k for k in expected if k in self.model_state and expected[k].shape != self.model_state[k].shape)
        if missing or bad:
            raise ConfigError(
                "checkpoint parameters do not fit this model configuration "
                f"(localization mode / n_filters / widths must match training); "
                f"missing {missing[:3]}, mismatched {bad[:3]}"
            )
        model.load_state_dict({k: self.model_state[k] for k in expected})
        model.eval()
        return model


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": ckpt.config,
        "vocab": list(ckpt.vocab),
        "model": ckpt.model_state,
        "optimizer": ckpt.optimizer_state,
        "epoch": ckpt.epoch,
        "best_iou": ckpt.best_iou,
        "history": ckpt.history,
    }
    torch.save(_canonical(payload), path)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint {path} does not exist")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path} is not an LTS checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {payload.get('version')}")
    return Checkpoint(
        config=payload["config"],
        vocab=payload["vocab"],
        model_state=payload["model"],
        optimizer_state=payload["optimizer"],
        epoch=payload["epoch"],
        best_iou=payload["best_iou"],
        history=payload["history"],
    )


def _canonical(obj):
    """Interned strings and fresh containers.

    Pickle output depends on which objects are shared in memory; with this
    normal form, saving a loaded checkpoint reproduces the original bytes.
    """
    if isinstance(obj, str):
        return sys.intern(obj)
    if isinstance(obj, OrderedDict):
        out = OrderedDict((_canonical(k), _canonical(v)) for k, v in obj.items())
        if hasattr(obj, "_metadata"):
            out._metadata = _canonical(obj._metadata)
        return out
    if isinstance(obj, dict):
        return {_canonical(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_canonical(v) for v in obj)
    return obj


def _snapshot(module_or_optim):
    return copy.deepcopy(module_or_optim.state_dict())


def _make_optimizer(model, config):
    tc = config.train
    return torch.optim.Adam(model.parameters(), lr=tc.lr, betas=tuple(tc.adam_betas), eps=tc.adam_eps)


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng((seed, epoch)).permutation(n)


@dataclass
class TrainResult:
    best: Checkpoint
    last: Checkpoint
    history: list


def train(config: RunConfig, train_set, val_set, out_dir=None, resume=None, max_epochs=None) -> TrainResult:
    """Train from scratch or continue from ``resume`` (a checkpoint or path).

    When ``out_dir`` is given, ``last.pt``, ``best.pt``, ``log.csv`` and
    ``config.yaml`` are written there after every epoch. ``max_epochs``
    stops early without changing the schedule (used to test resuming).
    """
    if not train_set or not val_set:
        raise DataError("training and validation sets must be non-empty")
    config.validate()
    tc = config.train
    torch.set_num_threads(tc.num_threads)
    max_len = config.model.text.max_len

    if resume is not None:
        ckpt = load_checkpoint(resume) if not isinstance(resume, Checkpoint) else resume
        vocab = ckpt.vocabulary()
        model = LTSModel(len(vocab), config.effective_model())
        model.load_state_dict(ckpt.model_state)
        optimizer = _make_optimizer(model, config)
        optimizer.load_state_dict(ckpt.optimizer_state)
        start_epoch, best_iou, history = ckpt.epoch + 1, ckpt.best_iou, list(ckpt.history)
    else:
        vocab = build_vocab([s.expression for s in train_set])
        torch.manual_seed(tc.seed)
        model = LTSModel(len(vocab), config.effective_model())
        optimizer = _make_optimizer(model, config)
        start_epoch, best_iou, history = 0, -1.0, []

    config_dict = to_dict(config)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_config(config_dict, out_dir / "config.yaml")

    best = None
    stop = tc.epochs if max_epochs is None else min(tc.epochs, max_epochs)
    n = len(train_set)
    for epoch in range(start_epoch, stop):
        lr = lr_at(epoch, tc)
        for group in optimizer.param_groups:
            group["lr"] = lr
        model.train()
        sums = np.zeros(3)
        order = epoch_order(tc.seed, epoch, n)
        n_batches = 0
        for start in range(0, n, tc.batch_size):
            idx = order[start:start + tc.batch_size]
            images, tokens, lengths, masks = collate([train_set[i] for i in idx], vocab, max_len)
            out = model(images, tokens, lengths)
            terms = total_loss(out.mask.logits, out.prior.logits, masks, tc)
            values = [t.item() for t in terms]
            if not all(math.isfinite(v) for v in values):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}: total={values[0]} seg={values[1]} loc={values[2]} "
                    f"batch={idx.tolist()}",
                    batch_indices=idx.tolist(),
                    components=dict(zip(("total", "seg", "loc"), values)),
                )
            optimizer.zero_grad(set_to_none=True)
            terms.total.backward()
            optimizer.step()
            sums += values
            n_batches += 1
        mean_total, mean_seg, mean_loc = sums / n_batches
        report = evaluate(model, val_set, vocab, max_len)
        row = {
            "epoch": epoch,
            "lr": lr,
            "L_seg": float(mean_seg),
            "L_loc": float(mean_loc),
            "L_total": float(mean_total),
            "val_IoU": report.mean_iou,
            "val_cum_IoU": report.overall_iou,
            "val_loc": report.loc_quality,
        }
        history.append(row)
        log.info("epoch %d lr=%.2g loss=%.4f seg=%.4f loc=%.4f val mIoU=%.4f loc=%.3f",
                 epoch, lr, mean_total, mean_seg, mean_loc, report.mean_iou, report.loc_quality)
        last = Checkpoint(config_dict, vocab.tokens, _snapshot(model), _snapshot(optimizer),
                          epoch, max(best_iou, report.mean_iou), list(history))
        if report.mean_iou > best_iou:
            best_iou = report.mean_iou
            best = last
            last.best_iou = best_iou
        if out_dir is not None:
            save_checkpoint(last, out_dir / "last.pt")
            if best is last:
                save_checkpoint(best, out_dir / "best.pt")
            write_log(history, out_dir / "log.csv")

    if start_epoch >= stop:
        raise ConfigError(f"nothing to train: start epoch {start_epoch} >= stop epoch {stop}")
    if best is None:
        # resumed run that never beat the earlier best
        best = load_checkpoint(out_dir / "best.pt") if out_dir and (out_dir / "best.pt").exists() else last
    return TrainResult(best=best, last=last, history=history)


def write_log(history, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for row in history:
            writer.writerow({k: row[k] for k in LOG_COLUMNS})


def _write_config(config_dict, path):
    Path(path).write_text(yaml.safe_dump(config_dict, sort_keys=True), encoding="utf-8")
