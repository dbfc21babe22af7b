from __future__ import annotations

from collections import Counter
from typing import Sequence

import numpy as np


def mse(preds: Sequence[float], golds: Sequence[float]) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    golds = np.asarray(golds, dtype=np.float64)
    if preds.shape != golds.shape:
        raise ValueError(f"mse: {preds.shape[0] if preds.ndim else preds} predictions vs {golds.shape} golds")
    if preds.size == 0:
        raise ValueError("mse: no predictions")
    d = preds - golds
    return float((d * d).mean())


def rouge1(candidate: Sequence[str], reference: Sequence[str]) -> tuple[float, float, float]:
    """Clipped unigram overlap: (precision, recall, f1). No stemming, no stopword removal."""
    if not reference:
        raise ValueError("rouge1: empty reference")
    if not candidate:
        return 0.0, 0.0, 0.0
    cand, ref = Counter(candidate), Counter(reference)
    overlap = sum(min(c, ref[t]) for t, c in cand.items())
    p = overlap / len(candidate)
    r = overlap / len(reference)
    f = 0.0 if overlap == 0 else 2 * p * r / (p + r)
    return p, r, f
