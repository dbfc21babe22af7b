"""Planted-bias synthetic review corpus.

Users belong to taste groups. A group fixes a rating offset and a pool of
words its members write with; products have a base quality, a topic group
and a few product-specific words. A user's score for a product is

    clip(base_p + offset_u + N(0, noise), 0, 5),   offset_u = group offset + jitter

so a model that recognises the user's taste from text can beat the plain
average of existing scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import Review

_GROUP_WORDS = [
    ["spicy", "curry", "chili", "pepper", "heat", "masala", "szechuan", "jalapeno", "salsa", "wasabi", "kimchi", "harissa"],
    ["sweet", "dessert", "cake", "pastry", "frosting", "caramel", "sugar", "cookie", "syrup", "candy", "cream", "honey"],
    ["vegan", "salad", "kale", "quinoa", "tofu", "greens", "organic", "smoothie", "lentil", "sprouts", "avocado", "seeds"],
    ["steak", "grill", "brisket", "ribs", "bacon", "burger", "smoked", "sausage", "pork", "beef", "bbq", "wings"],
    ["coffee", "espresso", "latte", "brew", "roast", "mocha", "beans", "barista", "cappuccino", "decaf", "pour", "crema"],
    ["sushi", "ramen", "noodle", "dumpling", "broth", "miso", "udon", "tempura", "sashimi", "bento", "soy", "nori"],
]
_FILLER = ["the", "place", "was", "and", "we", "had", "a", "with", "it", "here", "this", "."]


@dataclass
class SyntheticConfig:
    n_users: int = 200
    n_products: int = 50
    n_groups: int = 4
    offset_span: float = 1.2
    offset_jitter: float = 0.1
    noise: float = 0.3
    min_reviews: int = 4
    max_reviews: int = 10
    topic_affinity: float = 0.6
    style_words: int = 4
    product_words: int = 3
    filler_words: int = 3
    pairs_per_user: int = 2
    split_probs: tuple[float, float, float] = (0.6, 0.1, 0.3)
    extra_train_pairs: int = 0
    seed: int = 0


@dataclass
class SyntheticCorpus:
    reviews: list[Review]
    pairs: list[tuple[str, str, str]]
    user_group: dict[str, int]
    user_offset: dict[str, float]
    product_base: dict[str, float]
    product_group: dict[str, int]


def generate(cfg: SyntheticConfig | None = None) -> SyntheticCorpus:
    cfg = cfg or SyntheticConfig()
    if not 1 <= cfg.n_groups <= len(_GROUP_WORDS):
        raise ValueError(f"n_groups must be in 1..{len(_GROUP_WORDS)}")
    rng = np.random.default_rng(cfg.seed)
    G = cfg.n_groups
    offsets = np.linspace(-cfg.offset_span, cfg.offset_span, G) if G > 1 else np.zeros(1)
    products = [f"p{i:03d}" for i in range(cfg.n_products)]
    users = [f"u{i:04d}" for i in range(cfg.n_users)]
    p_group = {p: int(rng.integers(G)) for p in products}
    p_base = {p: float(rng.uniform(1.5, 3.5)) for p in products}
    p_words = {p: [f"{p}{c}" for c in "abc"] for p in products}
    u_group = {u: i % G for i, u in enumerate(users)}
    u_offset = {u: float(offsets[u_group[u]] + rng.normal(0, cfg.offset_jitter)) for u in users}
    by_group = {g: [p for p in products if p_group[p] == g] for g in range(G)}

    reviews: list[Review] = []
    rid = 0
    for u in users:
        n = int(rng.integers(cfg.min_reviews, cfg.max_reviews + 1))
        chosen: list[str] = []
        while len(chosen) < min(n, len(products)):
            pool = by_group[u_group[u]] if rng.random() < cfg.topic_affinity and by_group[u_group[u]] else products
            p = pool[int(rng.integers(len(pool)))]
            if p not in chosen:
                chosen.append(p)
        for p in chosen:
            score = float(np.clip(p_base[p] + u_offset[u] + rng.normal(0, cfg.noise), 0.0, 5.0))
            words = list(rng.choice(_GROUP_WORDS[u_group[u]], cfg.style_words))
            words += list(rng.choice(p_words[p], cfg.product_words))
            words += list(rng.choice(_FILLER, cfg.filler_words))
            rng.shuffle(words)
            reviews.append(Review(f"r{rid:06d}", u, p, " ".join(words), round(score, 3), int(rng.integers(0, 10**8))))
            rid += 1

    by_user: dict[str, list[Review]] = {}
    n_reviews: dict[str, int] = {}
    for r in reviews:
        by_user.setdefault(r.user_id, []).append(r)
        n_reviews[r.product_id] = n_reviews.get(r.product_id, 0) + 1
    pairs = []
    splits = ("train", "dev", "test")
    for u in users:
        own = by_user.get(u, [])
        candidates = [r.product_id for r in own if n_reviews[r.product_id] >= 2]
        if len(own) < 2 or not candidates:
            continue
        k = min(cfg.pairs_per_user, len(own) - 1, len(candidates))
        picked = [str(p) for p in rng.choice(candidates, k, replace=False)]
        for p in picked:
            pairs.append((u, p, splits[int(rng.choice(3, p=cfg.split_probs))]))
        # extra training pairs leave at least one of the user's reviews as context
        rest = [p for p in candidates if p not in picked]
        k = min(cfg.extra_train_pairs, len(own) - len(picked) - 1, len(rest))
        if k > 0:
            pairs.extend((u, str(p), "train") for p in rng.choice(rest, k, replace=False))
    return SyntheticCorpus(reviews, pairs, u_group, u_offset, p_base, p_group)
