"""Product-user rating matrix, nonnegative tri-factorisation and neighbour search."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import MAX_SEQUENCE_REVIEWS, Review, most_recent

log = logging.getLogger(__name__)

DENOM_FLOOR = 1e-12
DEFAULT_TOPICS = 16
DEFAULT_ETA = 0.25
DEFAULT_SWEEPS = 200
EARLY_STOP_TOL = 1e-6


@dataclass
class RatingMatrix:
    values: np.ndarray  # products x users, zeros where unobserved
    mask: np.ndarray  # bool, True where observed
    products: list[str]
    users: list[str]

    def __post_init__(self):
        self.product_index = {p: i for i, p in enumerate(self.products)}
        self.user_index = {u: j for j, u in enumerate(self.users)}

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def build_matrix(reviews: Iterable[Review]) -> RatingMatrix:
    """Place each user's score for each product; the most recent review wins."""
    latest: dict[tuple[str, str], Review] = {}
    for r in reviews:
        k = (r.product_id, r.user_id)
        if k not in latest or r.sort_key > latest[k].sort_key:
            latest[k] = r
    products = sorted({p for p, _ in latest})
    users = sorted({u for _, u in latest})
    pi = {p: i for i, p in enumerate(products)}
    ui = {u: j for j, u in enumerate(users)}
    values = np.zeros((len(products), len(users)))
    mask = np.zeros(values.shape, dtype=bool)
    for (p, u), r in latest.items():
        values[pi[p], ui[u]] = r.score
        mask[pi[p], ui[u]] = True
    return RatingMatrix(values, mask, products, users)


@dataclass
class TriFactorization:
    """M ~ F S T^T. T is stored users x topics (the transpose of the usual K x n_u)."""

    F: np.ndarray  # products x K
    S: np.ndarray  # K x K
    T: np.ndarray  # users x K
    objective: list[float] = field(default_factory=list)
    floor_events: int = 0
    products: list[str] = field(default_factory=list)
    users: list[str] = field(default_factory=list)

    def reconstruct(self) -> np.ndarray:
        return self.F @ self.S @ self.T.T

    def user_topics(self) -> np.ndarray:
        """Rows of T rescaled onto the probability simplex (all-zero rows stay zero)."""
        sums = self.T.sum(axis=1, keepdims=True)
        return np.divide(self.T, sums, out=np.zeros_like(self.T), where=sums > 0)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"nmf.F": self.F, "nmf.S": self.S, "nmf.T": self.T}


def _objective(M, F, S, T, W=None) -> float:
    R = M - F @ S @ T.T
    if W is not None:
        R = R * W
    return float(np.sqrt((R * R).sum()))


def factorize(
    M: RatingMatrix | np.ndarray,
    topics: int = DEFAULT_TOPICS,
    sweeps: int = DEFAULT_SWEEPS,
    seed: int = 0,
    mask: np.ndarray | None = None,
    rule: str = "frobenius",
    init: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
    tol: float | None = EARLY_STOP_TOL,
) -> TriFactorization:
    """Multiplicative updates for min ||M - F S T^T|| with F, S, T >= 0.

    ``rule="frobenius"`` uses the gradient-ratio updates

        F <- F * (M T S^T) / (F S T^T T S^T)
        S <- S * (F^T M T) / (F^T F S T^T T)
        T <- T * (M^T F S) / (T S^T F^T F S)

    each of which cannot increase the objective. ``rule="orthogonal"`` uses
    the orthogonal tri-factorisation family, whose T step is
    T <- T * (M^T F S) / (T T^T M^T F S); it is not monotone in general.

    With ``mask`` the objective only counts observed cells (weighted updates);
    otherwise unobserved cells are treated as zeros. Denominators are floored
    at 1e-12 and each floored entry is counted in ``floor_events``.
    """
    if topics < 1:
        raise ValueError("topics must be >= 1")
    if rule not in ("frobenius", "orthogonal"):
        raise ValueError(f"unknown rule {rule!r}")
    products = users = []
    if isinstance(M, RatingMatrix):
        products, users = list(M.products), list(M.users)
        M = M.values
    M = np.asarray(M, dtype=np.float64)
    if (M < 0).any():
        raise ValueError("matrix has negative entries")
    W = None if mask is None else np.asarray(mask, dtype=np.float64)
    n, m = M.shape
    if init is not None:
        F, S, T = (np.array(a, dtype=np.float64) for a in init)
    else:
        rng = np.random.default_rng(seed)
        mean = M[W > 0].mean() if W is not None and W.any() else M.mean()
        scale = np.sqrt(max(mean, 1e-12) / topics)
        F = rng.random((n, topics)) * scale
        S = rng.random((topics, topics)) * scale
        T = rng.random((m, topics)) * scale
    Mw = M if W is None else M * W
    floors = 0

    def ratio(num, den):
        nonlocal floors
        low = den < DENOM_FLOOR
        floors += int(low.sum())
        return num / np.where(low, DENOM_FLOOR, den)

    def model():
        X = F @ S @ T.T
        return X if W is None else X * W

    obj = [_objective(M, F, S, T, W)]
    for _ in range(sweeps):
        if rule == "frobenius":
            F = F * ratio(Mw @ T @ S.T, model() @ T @ S.T)
            S = S * ratio(F.T @ Mw @ T, F.T @ model() @ T)
            T = T * ratio(Mw.T @ F @ S, model().T @ F @ S)
        else:
            FS = F @ S
            T = T * ratio(Mw.T @ FS, T @ T.T @ Mw.T @ FS)
            TS = T @ S.T
            F = F * ratio(Mw @ TS, F @ F.T @ Mw @ TS)
            S = S * ratio(F.T @ Mw @ T, F.T @ model() @ T)
        obj.append(_objective(M, F, S, T, W))
        if tol is not None and obj[-2] > 0 and (obj[-2] - obj[-1]) / obj[-2] < tol and obj[-1] <= obj[-2]:
            break
    if floors:
        log.info("factorize: %d denominator entries floored at %g", floors, DENOM_FLOOR)
    return TriFactorization(F, S, T, obj, floors, products, users)


def user_similarity(fact: TriFactorization, i: str | int, j: str | int, topics: np.ndarray | None = None) -> float:
    """Inner product of two users' topic distributions."""
    P = fact.user_topics() if topics is None else topics
    return float(P[_user_row(fact, i)] @ P[_user_row(fact, j)])


def _user_row(fact: TriFactorization, u: str | int) -> int:
    if isinstance(u, (int, np.integer)):
        if not 0 <= u < fact.T.shape[0]:
            raise KeyError(f"user index {u} out of range")
        return int(u)
    try:
        return fact.users.index(u)
    except ValueError:
        raise KeyError(f"unknown user {u!r}") from None


def find_neighbors(fact: TriFactorization, user: str, eta: float = DEFAULT_ETA) -> set[str]:
    """Users j != user with sim(user, j) > eta."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if user not in fact.users:
        return set()
    P = fact.user_topics()
    i = fact.users.index(user)
    sims = P @ P[i]
    return {fact.users[j] for j in np.flatnonzero(sims > eta) if j != i}


def neighbor_table(fact: TriFactorization, eta: float = DEFAULT_ETA) -> dict[str, list[str]]:
    P = fact.user_topics()
    G = P @ P.T
    out = {}
    for i, u in enumerate(fact.users):
        hits = np.flatnonzero(G[i] > eta)
        out[u] = sorted(fact.users[j] for j in hits if j != i)
    return out


def attach_neighbors(instances: Sequence, reviews: Sequence[Review], table: dict[str, list[str]],
                     cap: int = MAX_SEQUENCE_REVIEWS, exclude_review_ids: Iterable[str] = ()) -> list:
    """Fill each instance's neighbour sequence with the temporal merge of its neighbours' reviews."""
    hidden = set(exclude_review_ids)
    by_user: dict[str, list[Review]] = {}
    for r in reviews:
        if r.review_id not in hidden:
            by_user.setdefault(r.user_id, []).append(r)
    out = []
    for inst in instances:
        pool = [r for n in table.get(inst.user_id, ()) for r in by_user.get(n, ())]
        # the neighbour's own review of the target product is still "existing", but never the gold
        out.append(inst.with_neighbors(most_recent(pool, 0), cap))
    return out
