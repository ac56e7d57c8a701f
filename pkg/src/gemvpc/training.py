"""Teacher-forced training with a label-smoothed KL objective."""
from __future__ import annotations

import copy
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch
import torch.nn.functional as F

from .model import GEMVPCModel, ModelConfig, VideoInputs
from .text import Vocabulary

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "gemvpc-checkpoint"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    warmup_epochs: int = 5
    batch_size: int = 2
    label_smoothing: float = 0.3
    patience: int = 3
    max_epochs: int = 30
    grad_clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError("label_smoothing must be in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def smoothed_kl_loss(logits, targets, smoothing: float, pad_id: int, reduction: str = "mean"):
    """KL(target || softmax(logits)) with (1 - s) on the gold token and s / (V - 1) elsewhere.

    PAD targets are excluded. ``reduction="sum"`` returns the summed loss
    so callers can average over a whole batch of events.
    """
    if logits.shape[0] != targets.shape[0]:
        raise ValueError("logits and targets differ in length")
    keep = targets != pad_id
    if not bool(keep.any()):
        raise ValueError("all target positions are PAD")
    logits, targets = logits[keep], targets[keep]
    v = logits.shape[-1]
    log_q = F.log_softmax(logits, -1)
    true = torch.full_like(log_q, smoothing / (v - 1))
    true.scatter_(1, targets.unsqueeze(1), 1.0 - smoothing)
    kl = (torch.xlogy(true, true) - true * log_q).sum(-1)
    return kl.sum() if reduction == "sum" else kl.mean()


def lr_at_step(step: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    warm = cfg.warmup_epochs * steps_per_epoch
    if warm <= 0 or step >= warm:
        return cfg.lr
    return cfg.lr * step / warm


@dataclass
class EarlyStopState:
    patience: int
    best_cider: float = float("-inf")
    epochs_since_improve: int = 0
    best_epoch: int = -1

    def update(self, cider: float, epoch: int) -> bool:
        """Record a validation score; True means stop training now."""
        if cider > self.best_cider:
            self.best_cider, self.best_epoch, self.epochs_since_improve = cider, epoch, 0
        else:
            self.epochs_since_improve += 1
        return self.epochs_since_improve >= self.patience


@dataclass
class Example:
    video: VideoInputs
    captions: list  # per-event token-id lists (no BOS/EOS)


def caption_tensors(ids, vocab: Vocabulary, max_len: int):
    ids = list(ids)[:max_len]
    inp = torch.tensor([vocab.bos_id] + ids, dtype=torch.long)
    tgt = torch.tensor(ids + [vocab.eos_id], dtype=torch.long)
    return inp, tgt


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_cider: float = float("-inf")
    best_state: Optional[dict] = None


def _loss_for_video(model, ex: Example, vocab, smoothing, batch_id):
    cfg = model.cfg
    pairs = [caption_tensors(c, vocab, cfg.max_caption_len) for c in ex.captions]
    logits = model.forward_video(ex.video, [p[0] for p in pairs])
    total, count = 0.0, 0
    for t, (lg, (_, tgt)) in enumerate(zip(logits, pairs)):
        loss = smoothed_kl_loss(lg, tgt, smoothing, vocab.pad_id, reduction="sum")
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at batch {batch_id}, video {ex.video.video_id}, event {t}")
        total = total + loss
        count += int((tgt != vocab.pad_id).sum())
    return total, count


def train_epoch(model, optimizer, examples, vocab, cfg: TrainConfig, epoch: int, step: int, gen):
    model.train()
    order = torch.randperm(len(examples), generator=gen).tolist()
    steps_per_epoch = math.ceil(len(examples) / cfg.batch_size)
    sum_loss, sum_tok = 0.0, 0
    for b in range(steps_per_epoch):
        batch = [examples[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
        for group in optimizer.param_groups:
            group["lr"] = lr_at_step(step, steps_per_epoch, cfg)
        optimizer.zero_grad()
        total, count = 0.0, 0
        for ex in batch:
            loss, n = _loss_for_video(model, ex, vocab, cfg.label_smoothing, b)
            total, count = total + loss, count + n
        loss = total / count
        loss.backward()
        if cfg.grad_clip:
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        optimizer.step()
        step += 1
        sum_loss += float(total.detach())
        sum_tok += count
    return sum_loss / sum_tok, step


def make_optimizer(model, cfg: TrainConfig):
    return torch.optim.AdamW(model.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2),
                             weight_decay=cfg.weight_decay)


def train(model: GEMVPCModel, examples, vocab: Vocabulary, cfg: TrainConfig,
          validate: Optional[Callable[[GEMVPCModel], float]] = None, log_path=None,
          checkpoint_path=None) -> TrainResult:
    """Train until early stopping or ``cfg.max_epochs``; keeps the best weights in memory.

    ``validate`` returns the validation CIDEr of the current model. Without it,
    every epoch counts as an improvement and the last weights are kept.
    """
    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    optimizer = make_optimizer(model, cfg)
    stopper = EarlyStopState(cfg.patience)
    result = TrainResult()
    steps_per_epoch = math.ceil(len(examples) / cfg.batch_size)
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    step = 0
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            t0 = time.time()
            train_loss, step = train_epoch(model, optimizer, examples, vocab, cfg, epoch, step, gen)
            val = validate(model) if validate is not None else float(epoch)
            stop = stopper.update(val, epoch)
            entry = {"epoch": epoch, "train_loss": train_loss,
                     "val_cider": val if validate is not None else None,
                     "lr": lr_at_step(step - 1, steps_per_epoch, cfg), "seconds": round(time.time() - t0, 3)}
            result.history.append(entry)
            logger.info("epoch %d loss %.4f val %.4f", epoch, train_loss, val)
            if log_fh:
                log_fh.write(json.dumps(entry) + "\n")
                log_fh.flush()
            if stopper.best_epoch == epoch:
                result.best_state = copy.deepcopy(model.state_dict())
                if checkpoint_path:
                    save_checkpoint(checkpoint_path, model, vocab, optimizer,
                                    {"epoch": epoch, "val_cider": val, "train_config": asdict(cfg)})
            if stop:
                break
    finally:
        if log_fh:
            log_fh.close()
    result.best_epoch, result.best_cider = stopper.best_epoch, stopper.best_cider
    if result.best_state is not None:
        model.load_state_dict(result.best_state)
    return result


# --------------------------------------------------------------------------- checkpoints

def save_checkpoint(path, model: GEMVPCModel, vocab: Vocabulary, optimizer=None, extra=None) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": model.cfg.to_dict(),
        "dtype": str(model.dtype).replace("torch.", ""),
        "vocab": vocab.to_dict(),
        "vocab_digest": vocab.digest(),
        "state_dict": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "extra": extra or {},
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def load_checkpoint(path):
    """Returns ``(model, vocab, payload)`` with the model in eval mode."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: checkpoint version {payload.get('version')} != {CHECKPOINT_VERSION}")
    vocab = Vocabulary.from_dict(payload["vocab"])
    if vocab.digest() != payload["vocab_digest"]:
        raise ValueError(f"{path}: vocabulary hash mismatch")
    model = GEMVPCModel(ModelConfig(**payload["model_config"]))
    model.to(getattr(torch, payload["dtype"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, vocab, payload


def teacher_forced_accuracy(model: GEMVPCModel, examples, vocab: Vocabulary) -> float:
    model.eval()
    hit = total = 0
    with torch.no_grad():
        for ex in examples:
            pairs = [caption_tensors(c, vocab, model.cfg.max_caption_len) for c in ex.captions]
            for lg, (_, tgt) in zip(model.forward_video(ex.video, [p[0] for p in pairs]), pairs):
                hit += int((lg.argmax(-1) == tgt).sum())
                total += tgt.numel()
    return hit / max(total, 1)
