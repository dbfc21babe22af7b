"""Scoring systems on a split and writing the results as CSV and text tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..corpus import RecommendationInstance, Review
from ..embeddings import embed_review
from .baselines import ItemKNNBaseline, LinearBaseline, MFBaseline, rs_average
from .metrics import mse, rouge1

SUMMARY_COLUMNS = ("system", "split", "n", "mse", "rouge1_p", "rouge1_r", "rouge1_f", "fallbacks", "status")
INSTANCE_COLUMNS = ("system", "split", "user_id", "product_id", "gold", "pred", "raw", "fallback",
                    "rouge1_p", "rouge1_r", "rouge1_f", "generated")


@dataclass
class EvalReport:
    system: str
    split: str
    mse: float | None
    rouge: tuple[float, float, float] | None  # mean (precision, recall, f1); recall is the headline
    records: list[dict] = field(default_factory=list)
    fallbacks: int = 0
    status: str = "ok"

    @property
    def n(self) -> int:
        return len(self.records)

    def summary(self) -> dict:
        p, r, f = self.rouge if self.rouge else (None, None, None)
        return {"system": self.system, "split": self.split, "n": self.n, "mse": self.mse,
                "rouge1_p": p, "rouge1_r": r, "rouge1_f": f, "fallbacks": self.fallbacks, "status": self.status}


def absent(system: str, split: str, reason: str = "absent") -> EvalReport:
    return EvalReport(system, split, None, None, status=reason)


def evaluate_model(model, instances: Sequence[RecommendationInstance], system: str = "model",
                   split: str = "test") -> EvalReport:
    """Greedy inference on every instance; MSE over clamped scores, mean ROUGE-1 over generated reviews."""
    records, preds, golds, rouges = [], [], [], []
    for inst in instances:
        out = model.recommend(inst)
        rec = {"system": system, "split": split, "user_id": inst.user_id, "product_id": inst.product_id,
               "gold": inst.gold_score, "pred": out["score"], "raw": out["raw_score"], "fallback": False,
               "generated": " ".join(out["tokens"])}
        if out["score"] is not None:
            preds.append(out["score"])
            golds.append(inst.gold_score)
        if model.config.use_generation:
            p, r, f = rouge1(out["tokens"], inst.gold_tokens)
            rouges.append((p, r, f))
            rec.update(rouge1_p=p, rouge1_r=r, rouge1_f=f)
        records.append(rec)
    rouge = tuple(float(x) for x in np.mean(rouges, axis=0)) if rouges else None
    return EvalReport(system, split, mse(preds, golds) if preds else None, rouge, records)


def _score_report(system: str, split: str, instances, predict: Callable) -> EvalReport:
    records, preds, n_fb = [], [], 0
    for inst in instances:
        score, fb = predict(inst)
        n_fb += fb
        preds.append(score)
        records.append({"system": system, "split": split, "user_id": inst.user_id, "product_id": inst.product_id,
                        "gold": inst.gold_score, "pred": score, "raw": score, "fallback": fb})
    return EvalReport(system, split, mse(preds, [i.gold_score for i in instances]), None, records, n_fb)


def baseline_reports(train_reviews: Sequence[Review], instances: Sequence[RecommendationInstance], split: str,
                     review_vector: Callable[[Review], np.ndarray], k: int = 5, topics: int = 16,
                     sweeps: int = 200, seed: int = 0) -> list[EvalReport]:
    """RS-Average, RS-Linear, RS-Item and RS-MF on ``instances``.

    ``train_reviews`` must exclude every evaluation gold; it feeds the linear
    deviations, the item vectors and the factorised rating matrix.
    """
    lin = LinearBaseline(train_reviews)
    knn = ItemKNNBaseline(train_reviews, review_vector, k)
    mf = MFBaseline(train_reviews, topics, sweeps, seed)
    return [
        _score_report("RS-Average", split, instances, lambda i: (rs_average(i), False)),
        _score_report("RS-Linear", split, instances, lambda i: (lin.predict(i.user_id, i.product_id), False)),
        _score_report("RS-Item", split, instances, lambda i: knn.predict(i.user_id, i.product_id, rs_average(i))),
        _score_report("RS-MF", split, instances, lambda i: mf.predict(i.user_id, i.product_id, rs_average(i))),
    ]


def review_vector_fn(vocab, vectors: np.ndarray) -> Callable[[Review], np.ndarray]:
    from ..corpus import tokenize

    cache: dict[str, np.ndarray] = {}

    def vec(r: Review) -> np.ndarray:
        if r.review_id not in cache:
            cache[r.review_id] = embed_review(vocab.encode(tokenize(r.text)), vectors)
        return cache[r.review_id]

    return vec


# ------------------------------------------------------------------ output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(round(v, 6))
    return str(v)


def write_csv(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def format_table(rows: Sequence[dict], columns: Sequence[str], title: str = "") -> str:
    cells = [[_fmt(r.get(c)) if not isinstance(r.get(c), float) else f"{r[c]:.4f}" for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c) for i, c in enumerate(columns)]
    line = "  ".join(c.ljust(w) for c, w in zip(columns, widths))
    out = [title] if title else []
    out += [line, "-" * len(line)]
    out += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(out) + "\n"
