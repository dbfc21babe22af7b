"""Joint online training of the rating and generation objectives."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .corpus import RecommendationInstance
from .model import ModelConfig, OpinionModel
from .nn import Tensor

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "train_mse", "train_nll", "dev_mse", "dev_rouge1")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    l2: float = 1e-4
    epochs: int = 20
    lr: float = 0.1
    eps: float = 1e-6
    seed: int = 0
    patience: int = 5
    dev_rouge: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        model = ModelConfig.from_dict(d.pop("model", {}))
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(model=model, **known)

    def to_dict(self) -> dict:
        return asdict(self)


def l2_penalty(params: Sequence[Tensor], lam: float) -> Tensor:
    total = Tensor(0.0)
    for p in params:
        total = total + nn.sum(p * p)
    return total * (lam / 2.0)


def loss_rating(pred, gold: float, params: Sequence[Tensor] = (), lam: float = 0.0) -> Tensor:
    """(pred - gold)^2 + (lam/2) * ||params||^2."""
    loss = nn.squared_error(pred if isinstance(pred, Tensor) else Tensor(pred), gold)
    if lam and params:
        loss = loss + l2_penalty(params, lam)
    return loss


def loss_generation(probs: Tensor, targets) -> Tensor:
    """Mean per-token negative log-likelihood (probabilities floored at 1e-12)."""
    return nn.nll(probs, targets)


@dataclass
class StepResult:
    loss: float
    sq_err: float | None
    nll: float | None


def instance_loss(model: OpinionModel, inst: RecommendationInstance, lam: float, train: bool, rng=None):
    """Build the total loss for one instance; returns (loss tensor, squared error, nll)."""
    fw = model.forward(inst, train=train, rng=rng)
    terms = []
    sq = nl = None
    if fw.rating is not None:
        r = nn.squared_error(fw.rating, inst.gold_score)
        sq = r.item()
        terms.append(r)
    if fw.probs is not None:
        g = loss_generation(fw.probs, fw.targets)
        nl = g.item()
        terms.append(g)
    if lam:
        terms.append(l2_penalty(model.trainable(), lam))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total, sq, nl


def train_step(model: OpinionModel, opt: nn.Adagrad, inst: RecommendationInstance, lam: float, rng) -> StepResult:
    model.params.zero_grad()
    loss, sq, nl = instance_loss(model, inst, lam, train=True, rng=rng)
    value = loss.item()
    if not math.isfinite(value):
        nn.get_tape().clear()
        norms = {k: float(np.linalg.norm(v.data)) for k, v in model.params.items()}
        raise TrainingDiverged(f"non-finite loss on instance {inst.key}; parameter norms {norms}")
    nn.backward(loss)
    opt.step()
    mu = model.head.mu
    if mu.data < 0:
        mu.data = np.zeros_like(mu.data)
    return StepResult(value, sq, nl)


def evaluate_dev(model: OpinionModel, instances: Sequence[RecommendationInstance], rouge: bool = True) -> dict:
    from .evaluation.metrics import rouge1

    if not instances:
        return {"dev_mse": float("nan"), "dev_rouge1": float("nan"), "dev_nll": float("nan")}
    errs, recalls, nlls = [], [], []
    cfg = model.config
    for inst in instances:
        if cfg.use_rating or rouge:
            out = model.recommend(inst)
            if out["score"] is not None:
                errs.append((out["score"] - inst.gold_score) ** 2)
            if rouge and cfg.use_generation:
                recalls.append(rouge1(out["tokens"], inst.gold_tokens)[1])
        if cfg.use_generation:
            with nn.no_grad():
                fw = model.forward(inst)
                nlls.append(loss_generation(fw.probs, fw.targets).item())
    mean = lambda xs: float(np.mean(xs)) if xs else float("nan")  # noqa: E731
    return {"dev_mse": mean(errs), "dev_rouge1": mean(recalls), "dev_nll": mean(nlls)}


@dataclass
class TrainResult:
    history: list[dict]
    best_epoch: int
    best_params: dict[str, np.ndarray]


def train(
    model: OpinionModel,
    train_set: Sequence[RecommendationInstance],
    dev_set: Sequence[RecommendationInstance] = (),
    config: TrainConfig | None = None,
    metrics_path=None,
    checkpoint_path=None,
) -> TrainResult:
    """Online Adagrad training, one instance per update, shuffled each epoch.

    After every epoch the dev set is scored through the inference path; the
    parameters with the best dev MSE (dev NLL when the rating head is ablated)
    are restored into ``model`` at the end and written to ``checkpoint_path``.
    Training stops after ``patience`` epochs without improvement.
    """
    if not train_set:
        raise ValueError("empty training set")
    cfg = config or TrainConfig(model=model.config)
    rng = np.random.default_rng(cfg.seed)
    opt = nn.Adagrad(model.trainable(), lr=cfg.lr, eps=cfg.eps)
    history = []
    best_key, best_epoch, best = math.inf, 0, model.params.snapshot()
    stale = 0
    writer = fh = None
    if metrics_path is not None:
        fh = Path(metrics_path).open("w", newline="")
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(train_set))
            sq, nl = [], []
            for i in order:
                res = train_step(model, opt, train_set[i], cfg.l2, rng)
                if res.sq_err is not None:
                    sq.append(res.sq_err)
                if res.nll is not None:
                    nl.append(res.nll)
            dev = evaluate_dev(model, dev_set, rouge=cfg.dev_rouge)
            row = {
                "epoch": epoch,
                "train_mse": float(np.mean(sq)) if sq else float("nan"),
                "train_nll": float(np.mean(nl)) if nl else float("nan"),
                "dev_mse": dev["dev_mse"],
                "dev_rouge1": dev["dev_rouge1"],
            }
            history.append(row)
            if writer:
                writer.writerow(row)
                fh.flush()
            log.info("epoch %d %s", epoch, {k: round(v, 4) for k, v in row.items() if k != "epoch"})
            key = dev["dev_mse"] if model.config.use_rating else dev["dev_nll"]
            if not dev_set:
                key = -epoch  # no dev data: keep the latest parameters
            if key < best_key:
                best_key, best_epoch, best = key, epoch, model.params.snapshot()
                stale = 0
                if checkpoint_path is not None:
                    model.save(checkpoint_path, {"epoch": epoch, "train": cfg.to_dict()})
            else:
                stale += 1
                if stale >= cfg.patience:
                    log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                    break
    finally:
        if fh:
            fh.close()
    model.params.load(best)
    return TrainResult(history, best_epoch, best)
