"""Review ingestion, tokenisation, vocabulary and instance assembly."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

UNK, BOS, EOS, PAD = "<unk>", "<bos>", "<eos>", "<pad>"
SPECIALS = (UNK, BOS, EOS, PAD)
UNK_ID, BOS_ID, EOS_ID, PAD_ID = 0, 1, 2, 3

MAX_REVIEW_TOKENS = 200
MAX_SEQUENCE_REVIEWS = 30
MAX_SKIP_FRACTION = 0.10


class IngestError(RuntimeError):
    pass


@dataclass(frozen=True)
class Review:
    review_id: str
    user_id: str
    product_id: str
    text: str
    score: float
    timestamp: int

    def __post_init__(self):
        if not 0.0 <= self.score <= 5.0:
            raise ValueError(f"score out of range: {self.score}")
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp: {self.timestamp}")
        if not self.text.strip():
            raise ValueError("empty review text")

    @property
    def sort_key(self) -> tuple[int, str]:
        return (self.timestamp, self.review_id)

    def to_record(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------------ ingestion

_REVIEW_ALIASES = {"business_id": "product_id", "stars": "score"}

SCHEMAS = {
    "review": ("review_id", "user_id", "product_id", "text", "score", "timestamp"),
    "business": ("business_id",),
    "user": ("user_id",),
}


def _parse_timestamp(value) -> int:
    if isinstance(value, bool):
        raise ValueError("timestamp must be an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value)
        except ValueError:
            dt = datetime.fromisoformat(value)
            if dt.tzinfo is None:
                dt = dt.replace(tzinfo=timezone.utc)
            return int(dt.timestamp())
    raise ValueError(f"bad timestamp {value!r}")


def _review_from_dict(obj: dict) -> Review:
    obj = {_REVIEW_ALIASES.get(k, k): v for k, v in obj.items()}
    if "timestamp" not in obj and "date" in obj:
        obj["timestamp"] = obj["date"]
    missing = [k for k in SCHEMAS["review"] if k not in obj]
    if missing:
        raise ValueError(f"missing field(s) {', '.join(missing)}")
    score = obj["score"]
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise ValueError(f"score must be numeric, got {score!r}")
    return Review(
        review_id=str(obj["review_id"]),
        user_id=str(obj["user_id"]),
        product_id=str(obj["product_id"]),
        text=str(obj["text"]),
        score=float(score),
        timestamp=_parse_timestamp(obj["timestamp"]),
    )


@dataclass
class IngestResult:
    records: list
    diagnostics: list[tuple[int, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def ingest_jsonl(path, schema: str = "review", max_skip_fraction: float = MAX_SKIP_FRACTION) -> IngestResult:
    """Read one JSON object per line.

    Reviews come back as :class:`Review`; business and user records as plain
    dicts checked for their id field. Bad lines are skipped and reported as
    ``(line_number, message)``; if more than ``max_skip_fraction`` of the
    non-blank lines are bad the file is rejected outright.
    """
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    result = IngestResult([])
    seen = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            seen += 1
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("record is not a JSON object")
                if schema == "review":
                    rec = _review_from_dict(obj)
                else:
                    missing = [k for k in SCHEMAS[schema] if k not in obj]
                    if missing:
                        raise ValueError(f"missing field(s) {', '.join(missing)}")
                    rec = obj
            except (ValueError, TypeError) as exc:
                result.diagnostics.append((lineno, str(exc)))
                continue
            result.records.append(rec)
    if seen and len(result.diagnostics) / seen > max_skip_fraction:
        raise IngestError(
            f"{path}: {len(result.diagnostics)} of {seen} lines rejected "
            f"(first: line {result.diagnostics[0][0]}: {result.diagnostics[0][1]}); wrong schema?"
        )
    for lineno, msg in result.diagnostics:
        log.warning("%s:%d skipped: %s", path, lineno, msg)
    return result


def write_reviews_jsonl(path, reviews: Iterable[Review]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in reviews:
            fh.write(json.dumps(r.to_record(), ensure_ascii=False) + "\n")


# -------------------------------------------------------------- tokenisation

_TOKEN_RE = re.compile(r"'\w+|\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, detach punctuation; clitics keep their apostrophe."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens: Sequence[str], counts: dict[str, int] | None = None, min_count: int = 1):
        self.itos: list[str] = list(SPECIALS) + [t for t in tokens if t not in SPECIALS]
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        self.counts = dict(counts or {})
        self.min_count = min_count

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def save_tsv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write(f"#min_count\t{self.min_count}\n")
            for i, tok in enumerate(self.itos):
                fh.write(f"{tok}\t{i}\t{self.counts.get(tok, 0)}\n")

    @classmethod
    def load_tsv(cls, path) -> "Vocabulary":
        rows, min_count = [], 1
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("#min_count\t"):
                    min_count = int(line.split("\t")[1])
                    continue
                tok, idx, count = line.split("\t")
                rows.append((int(idx), tok, int(count)))
        rows.sort()
        if [r[0] for r in rows] != list(range(len(rows))):
            raise ValueError(f"{path}: indices are not contiguous")
        toks = [t for _, t, _ in rows]
        if tuple(toks[:4]) != SPECIALS:
            raise ValueError(f"{path}: special tokens missing from indices 0-3")
        return cls(toks[4:], {t: c for _, t, c in rows if c}, min_count)


def build_vocabulary(reviews: Iterable[Review], min_count: int = 2) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for r in reviews:
        counts.update(tokenize(r.text))
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(kept, {t: counts[t] for t in kept}, min_count)


# --------------------------------------------------------------- instances


def temporal_sort(reviews: Iterable[Review]) -> list[Review]:
    return sorted(reviews, key=lambda r: r.sort_key)


def most_recent(reviews: Iterable[Review], cap: int = MAX_SEQUENCE_REVIEWS) -> tuple[Review, ...]:
    ordered = temporal_sort(reviews)
    return tuple(ordered[-cap:]) if cap else tuple(ordered)


@dataclass(frozen=True)
class RecommendationInstance:
    user_id: str
    product_id: str
    gold: Review
    target_reviews: tuple[Review, ...]
    user_reviews: tuple[Review, ...]
    neighbor_reviews: tuple[Review, ...] = ()

    @property
    def gold_score(self) -> float:
        return self.gold.score

    @property
    def gold_tokens(self) -> list[str]:
        return tokenize(self.gold.text)[:MAX_REVIEW_TOKENS]

    @property
    def key(self) -> tuple[str, str]:
        return (self.user_id, self.product_id)

    def with_neighbors(self, neighbor_reviews: Iterable[Review], cap: int = MAX_SEQUENCE_REVIEWS):
        banned = {self.gold.review_id}
        pool = [r for r in neighbor_reviews if r.review_id not in banned and r.user_id != self.user_id]
        return RecommendationInstance(
            self.user_id, self.product_id, self.gold, self.target_reviews, self.user_reviews, most_recent(pool, cap)
        )

    def to_record(self) -> dict:
        return {
            "user_id": self.user_id,
            "product_id": self.product_id,
            "gold_review_id": self.gold.review_id,
            "gold_score": self.gold.score,
            "gold_tokens": self.gold_tokens,
            "target_review_ids": [r.review_id for r in self.target_reviews],
            "user_review_ids": [r.review_id for r in self.user_reviews],
            "neighbor_review_ids": [r.review_id for r in self.neighbor_reviews],
        }

    @classmethod
    def from_record(cls, rec: dict, reviews_by_id: dict[str, Review]) -> "RecommendationInstance":
        def get(ids):
            return tuple(reviews_by_id[i] for i in ids)

        return cls(
            rec["user_id"],
            rec["product_id"],
            reviews_by_id[rec["gold_review_id"]],
            get(rec["target_review_ids"]),
            get(rec["user_review_ids"]),
            get(rec.get("neighbor_review_ids", [])),
        )


def assemble_instances(
    reviews: Sequence[Review],
    held_out_pairs: Sequence[tuple[str, str]],
    exclude_review_ids: Iterable[str] = (),
    cap: int = MAX_SEQUENCE_REVIEWS,
    diagnostics: list[str] | None = None,
) -> list[RecommendationInstance]:
    """Build one instance per (user, product) pair.

    The user's most recent review of the product is the gold; every review the
    user wrote about that product is kept out of both context sequences.
    ``exclude_review_ids`` removes further reviews from all contexts (used to
    hide other evaluation golds). Pairs that cannot form a valid instance are
    skipped with a diagnostic.
    """
    excluded = set(exclude_review_ids)
    by_product: dict[str, list[Review]] = defaultdict(list)
    by_user: dict[str, list[Review]] = defaultdict(list)
    for r in reviews:
        by_product[r.product_id].append(r)
        by_user[r.user_id].append(r)
    diags = diagnostics if diagnostics is not None else []
    out = []
    for user, product in held_out_pairs:
        own = [r for r in by_user.get(user, ()) if r.product_id == product]
        if not own:
            diags.append(f"({user}, {product}): user has no review of product")
            continue
        gold = max(own, key=lambda r: r.sort_key)
        targets = [r for r in by_product[product] if r.user_id != user and r.review_id not in excluded]
        history = [r for r in by_user[user] if r.product_id != product and r.review_id not in excluded]
        if not targets:
            diags.append(f"({user}, {product}): product has no other reviews")
            continue
        if not history:
            diags.append(f"({user}, {product}): user has no other reviews")
            continue
        out.append(RecommendationInstance(user, product, gold, most_recent(targets, cap), most_recent(history, cap)))
    for d in diags:
        log.info("skipped pair %s", d)
    return out


@dataclass
class DatasetSplit:
    train: list[RecommendationInstance]
    dev: list[RecommendationInstance]
    test: list[RecommendationInstance]
    reviews: list[Review]

    def split(self, name: str) -> list[RecommendationInstance]:
        return {"train": self.train, "dev": self.dev, "test": self.test}[name]

    @property
    def held_out_review_ids(self) -> set[str]:
        """Every review behind a dev/test pair; never visible as context or matrix entries."""
        keys = {i.key for i in self.dev + self.test}
        return {r.review_id for r in self.reviews if (r.user_id, r.product_id) in keys}

    def context_reviews(self) -> list[Review]:
        hidden = self.held_out_review_ids
        return [r for r in self.reviews if r.review_id not in hidden]


def read_pairs(path) -> list[tuple[str, str, str]]:
    """Pairs file: TSV ``user_id<TAB>product_id<TAB>split`` (split defaults to train)."""
    pairs = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            pairs.append((cols[0], cols[1], cols[2] if len(cols) > 2 else "train"))
    return pairs


def write_pairs(path, pairs: Iterable[tuple[str, str, str]]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for u, p, s in pairs:
            fh.write(f"{u}\t{p}\t{s}\n")


def build_split(
    reviews: Sequence[Review], pairs: Sequence[tuple[str, str, str]], cap: int = MAX_SEQUENCE_REVIEWS
) -> DatasetSplit:
    keys = [(u, p) for u, p, _ in pairs]
    if len(set(keys)) != len(keys):
        raise ValueError("a (user, product) pair appears more than once in the pairs list")
    by_split = defaultdict(list)
    for u, p, s in pairs:
        if s not in ("train", "dev", "test"):
            raise ValueError(f"unknown split {s!r} for pair ({u}, {p})")
        by_split[s].append((u, p))
    # golds of evaluation pairs are hidden from every context
    eval_pairs = set(by_split["dev"]) | set(by_split["test"])
    hidden = {r.review_id for r in reviews if (r.user_id, r.product_id) in eval_pairs}
    parts = {s: assemble_instances(reviews, by_split[s], hidden, cap) for s in ("train", "dev", "test")}
    return DatasetSplit(parts["train"], parts["dev"], parts["test"], list(reviews))


def save_instances(path, instances: Iterable[RecommendationInstance]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_record(), ensure_ascii=False) + "\n")


def load_instances(path, reviews_by_id: dict[str, Review]) -> list[RecommendationInstance]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(RecommendationInstance.from_record(json.loads(line), reviews_by_id))
    return out
