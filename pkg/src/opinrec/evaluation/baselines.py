"""Rating-only baselines: average, linear deviations, item kNN, matrix factorisation."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..corpus import RecommendationInstance, Review
from ..neighbors import TriFactorization, build_matrix, factorize


def _clamp(x: float) -> float:
    return float(min(5.0, max(0.0, x)))


def rs_average(instance: RecommendationInstance) -> float:
    scores = [r.score for r in instance.target_reviews]
    if not scores:
        raise ValueError("rs_average: product has no existing reviews")
    return float(np.mean(scores))


class LinearBaseline:
    """s_ui = s_all + (mean_u - s_all) + (mean_i - s_all); unseen users/products add 0."""

    def __init__(self, train_reviews: Sequence[Review]):
        if not train_reviews:
            raise ValueError("rs_linear: empty training corpus")
        self.s_all = float(np.mean([r.score for r in train_reviews]))
        by_u, by_p = defaultdict(list), defaultdict(list)
        for r in train_reviews:
            by_u[r.user_id].append(r.score)
            by_p[r.product_id].append(r.score)
        self.user_dev = {u: float(np.mean(v)) - self.s_all for u, v in by_u.items()}
        self.product_dev = {p: float(np.mean(v)) - self.s_all for p, v in by_p.items()}

    def predict(self, user: str, product: str) -> float:
        return _clamp(self.s_all + self.user_dev.get(user, 0.0) + self.product_dev.get(product, 0.0))


def rs_linear(train_reviews: Sequence[Review], user: str, product: str) -> float:
    return LinearBaseline(train_reviews).predict(user, product)


class ItemKNNBaseline:
    """Item-based kNN over product vectors (mean embedding of each product's reviews).

    The prediction is the cosine-weighted mean of the user's own scores on the
    k most similar products they rated. Negative similarities get zero weight;
    if every weight is zero the plain mean of the k scores is used.
    """

    def __init__(self, train_reviews: Sequence[Review], review_vector, k: int = 5):
        self.k = k
        sums, counts = {}, defaultdict(int)
        self.user_scores: dict[str, dict[str, float]] = defaultdict(dict)
        latest = {}
        for r in train_reviews:
            v = review_vector(r)
            sums[r.product_id] = sums.get(r.product_id, 0) + v
            counts[r.product_id] += 1
            key = (r.user_id, r.product_id)
            if key not in latest or r.sort_key > latest[key].sort_key:
                latest[key] = r
        for (u, p), r in latest.items():
            self.user_scores[u][p] = r.score
        self.product_vec = {p: sums[p] / counts[p] for p in sums}

    @staticmethod
    def _cos(a: np.ndarray, b: np.ndarray) -> float:
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        return 0.0 if na == 0 or nb == 0 else float(a @ b / (na * nb))

    def predict(self, user: str, product: str, fallback: float) -> tuple[float, bool]:
        rated = {p: s for p, s in self.user_scores.get(user, {}).items() if p != product}
        target = self.product_vec.get(product)
        if not rated or target is None:
            return _clamp(fallback), True
        sims = sorted(((self._cos(target, self.product_vec[p]), p) for p in rated), key=lambda t: (-t[0], t[1]))
        top = sims[: self.k]
        w = np.array([max(s, 0.0) for s, _ in top])
        scores = np.array([rated[p] for _, p in top])
        if w.sum() == 0:
            return _clamp(scores.mean()), False
        return _clamp(float(w @ scores / w.sum())), False


def rs_item(train_reviews, review_vector, product: str, user: str, k: int = 5, fallback: float = 0.0) -> float:
    return ItemKNNBaseline(train_reviews, review_vector, k).predict(user, product, fallback)[0]


class MFBaseline:
    """Masked tri-factorisation of the training rating matrix; predicts (F S T^T)[product, user]."""

    def __init__(self, train_reviews: Sequence[Review], topics: int = 16, sweeps: int = 200, seed: int = 0):
        self.matrix = build_matrix(train_reviews)
        self.fact: TriFactorization = factorize(self.matrix, topics, sweeps, seed, mask=self.matrix.mask, tol=None)
        self.recon = self.fact.reconstruct()

    def predict(self, user: str, product: str, fallback: float) -> tuple[float, bool]:
        i = self.matrix.product_index.get(product)
        j = self.matrix.user_index.get(user)
        if i is None or j is None:
            return _clamp(fallback), True
        return _clamp(self.recon[i, j]), False


def rs_mf(fact: TriFactorization, user: str, product: str, fallback: float) -> tuple[float, bool]:
    """Reconstruction lookup on an already fitted factorisation; (score, used_fallback)."""
    try:
        i = fact.products.index(product)
        j = fact.users.index(user)
    except ValueError:
        return _clamp(fallback), True
    return _clamp(float(fact.F[i] @ fact.S @ fact.T[j])), False


@dataclass
class BaselinePrediction:
    score: float
    fallback: bool = False
