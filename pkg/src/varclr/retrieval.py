"""Dense cosine retrieval over a name pool, Hit@K, and synthetic keyboard typos.

Anything with an ``encode_names(list[str]) -> ndarray`` method can serve as
the model; a :class:`~varclr.checkpoint.Checkpoint` is the usual one.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .checkpoint import Checkpoint, read_container, write_container
from .encoders import l2_normalize
from .evaluation import BenchmarkPair
from .tokenizer import is_valid_name

DEFAULT_KS = (1, 5, 10, 25, 50, 100, 250, 500, 1000)


class NameEncoder(Protocol):
    def encode_names(self, names: Sequence[str]) -> np.ndarray: ...


@dataclass
class SearchIndex:
    names: list[str]
    vectors: np.ndarray
    model: Optional[NameEncoder] = None
    fingerprint: str = ""
    dropped: int = 0
    _pos: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._pos = {n: i for i, n in enumerate(self.names)}
        if len(self._pos) != len(self.names):
            raise ValueError("duplicate names in index")

    def __len__(self) -> int:
        return len(self.names)

    def position(self, name: str) -> Optional[int]:
        return self._pos.get(name)

    def query_vectors(self, queries: Sequence[str]) -> np.ndarray:
        if self.model is None:
            raise ValueError("index has no model attached for encoding queries")
        return l2_normalize(self.model.encode_names(list(queries)))

    def save(self, path) -> None:
        if not isinstance(self.model, Checkpoint):
            raise ValueError("only indexes built from a checkpoint can be saved")
        ckpt_meta, ckpt_arrays = self.model.to_container()
        arrays = {"vectors": self.vectors}
        arrays.update({"ckpt/" + k: v for k, v in ckpt_arrays.items()})
        meta = {"names": self.names, "fingerprint": self.fingerprint, "dropped": self.dropped,
                "checkpoint": ckpt_meta}
        write_container(path, "index", meta, arrays)

    @classmethod
    def load(cls, path) -> "SearchIndex":
        meta, arrays = read_container(path, "index")
        ckpt = Checkpoint.from_container(
            meta["checkpoint"], {k[5:]: v for k, v in arrays.items() if k.startswith("ckpt/")})
        if ckpt.fingerprint() != meta["fingerprint"]:
            raise ValueError(f"{path}: encoder fingerprint mismatch")
        return cls(names=list(meta["names"]), vectors=arrays["vectors"], model=ckpt,
                   fingerprint=meta["fingerprint"], dropped=int(meta["dropped"]))


def build_index(names: Sequence[str], model: NameEncoder) -> SearchIndex:
    """Encode and unit-normalize a deduplicated pool; invalid names are dropped and counted."""
    seen: dict[str, None] = {}
    dropped = 0
    for n in names:
        if n in seen:
            continue
        if is_valid_name(n):
            seen[n] = None
        else:
            dropped += 1
    pool = list(seen)
    if not pool:
        raise ValueError("empty pool after dropping invalid names")
    vectors = l2_normalize(model.encode_names(pool))
    fp = model.fingerprint() if hasattr(model, "fingerprint") else ""
    return SearchIndex(names=pool, vectors=vectors, model=model, fingerprint=fp, dropped=dropped)


def _candidates(index: SearchIndex, exclude: Optional[str]) -> np.ndarray:
    keep = np.ones(len(index), dtype=bool)
    if exclude is not None:
        pos = index.position(exclude)
        if pos is not None:
            keep[pos] = False
    return np.flatnonzero(keep)


def search(index: SearchIndex, query: str, k: int, exclude_query: bool = False) -> list[tuple[str, float]]:
    """Top-k pool names by cosine similarity, descending; ties keep pool order."""
    cand = _candidates(index, query if exclude_query else None)
    if not 1 <= k <= len(cand):
        raise ValueError(f"k must be in [1, {len(cand)}], got {k}")
    q = index.query_vectors([query])[0]
    # score the whole pool so results match target_ranks bit for bit
    scores = (index.vectors @ q)[cand]
    order = np.argsort(-scores, kind="stable")[:k]
    return [(index.names[cand[i]], float(scores[i])) for i in order]


@dataclass
class HitCurve:
    ks: list[int]
    hits: list[float]
    n_queries: int
    dropped: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["k", "hit_rate"])
            for k, h in zip(self.ks, self.hits):
                w.writerow([k, f"{h:.6g}"])


def target_ranks(index: SearchIndex, queries: Sequence[tuple[str, str]],
                 exclude_query: bool = False) -> np.ndarray:
    """0-based rank of each target in its query's result list (ties broken by pool order)."""
    targets = []
    for q, t in queries:
        pos = index.position(t)
        if pos is None:
            raise ValueError(f"target {t!r} is not in the index")
        targets.append(pos)
    Qv = index.query_vectors([q for q, _ in queries])
    ranks = np.empty(len(queries), dtype=np.int64)
    idx = np.arange(len(index))
    for row, ((q, _), t) in enumerate(zip(queries, targets)):
        s = index.vectors @ Qv[row]
        better = (s > s[t]) | ((s == s[t]) & (idx < t))
        if exclude_query:
            qpos = index.position(q)
            if qpos is not None and qpos != t:
                better[qpos] = False
        ranks[row] = int(better.sum())
    return ranks


def hit_at_k(index: SearchIndex, queries: Sequence[tuple[str, str]], ks: Sequence[int] = DEFAULT_KS,
             exclude_query: bool = False) -> HitCurve:
    """Fraction of queries whose target is within the top k, for each k.

    Queries that cannot be tokenized are dropped and counted.  Cutoffs beyond
    the candidate count behave as the full pool.
    """
    kept = []
    dropped = 0
    for q, t in queries:
        if is_valid_name(q):
            kept.append((q, t))
        else:
            dropped += 1
    if not kept:
        raise ValueError("no valid queries")
    ranks = target_ranks(index, kept, exclude_query)
    hits = [float(np.mean(ranks < k)) for k in ks]
    return HitCurve(ks=list(ks), hits=hits, n_queries=len(kept), dropped=dropped)


def filter_similar_pairs(pairs: Sequence[BenchmarkPair], threshold: float = 0.4,
                         both_directions: bool = False) -> list[tuple[str, str]]:
    """(query, target) pairs whose human similarity is strictly above ``threshold``."""
    out = []
    for p in pairs:
        if p.similarity is not None and p.similarity > threshold:
            out.append((p.left, p.right))
            if both_directions:
                out.append((p.right, p.left))
    return out


_QWERTY_ROWS = ("qwertyuiop", "asdfghjkl", "zxcvbnm")


def _keyboard_neighbors() -> dict[str, str]:
    pos = {c: (r, i) for r, row in enumerate(_QWERTY_ROWS) for i, c in enumerate(row)}
    out = {}
    for c, (r, i) in pos.items():
        near = []
        for other, (r2, i2) in pos.items():
            if other == c or abs(r - r2) > 1:
                continue
            # rows are staggered by half a key, so diagonals reach one column over
            if r2 == r and abs(i2 - i) == 1:
                near.append(other)
            elif r2 == r - 1 and i2 in (i, i + 1):
                near.append(other)
            elif r2 == r + 1 and i2 in (i - 1, i):
                near.append(other)
        out[c] = "".join(sorted(near))
    return out


KEYBOARD_NEIGHBORS = _keyboard_neighbors()
EDIT_KINDS = ("substitute", "insert", "delete", "transpose")


@dataclass(frozen=True)
class TypoPair:
    misspelled: str
    correct: str


def _match_case(c: str, like: str) -> str:
    return c.upper() if like.isupper() else c


def keyboard_typo(name: str, rng: random.Random) -> str:
    """Apply one random keyboard edit at a random letter position."""
    letters = [i for i, c in enumerate(name) if c.isalpha()]
    if not letters:
        raise ValueError(f"{name!r} has no alphabetic characters")
    while True:
        kind = rng.choice(EDIT_KINDS)
        i = rng.choice(letters)
        c = name[i]
        if kind == "substitute":
            out = name[:i] + _match_case(rng.choice(KEYBOARD_NEIGHBORS[c.lower()]), c) + name[i + 1:]
        elif kind == "insert":
            out = name[:i + 1] + _match_case(rng.choice(KEYBOARD_NEIGHBORS[c.lower()]), c) + name[i + 1:]
        elif kind == "delete":
            out = name[:i] + name[i + 1:]
        else:
            if i + 1 >= len(name) or not name[i + 1].isalpha():
                continue
            out = name[:i] + name[i + 1] + name[i] + name[i + 2:]
        if out != name and is_valid_name(out) and not out[0].isdigit():
            return out


def make_typos(names: Sequence[str], count: int, seed: int = 0) -> list[TypoPair]:
    """Sample ``count`` distinct names and give each exactly one keyboard typo."""
    names = list(dict.fromkeys(names))
    for n in names:
        if not any(c.isalpha() for c in n):
            raise ValueError(f"{n!r} has no alphabetic characters")
    if count > len(names):
        raise ValueError(f"count {count} exceeds pool of {len(names)} names")
    rng = random.Random(seed)
    chosen = rng.sample(names, count)
    return [TypoPair(keyboard_typo(n, rng), n) for n in chosen]


def write_typos(typos: Sequence[TypoPair], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        for t in typos:
            w.writerow([t.misspelled, t.correct])


def read_query_pairs(path) -> list[tuple[str, str]]:
    """Read ``query<TAB>target`` lines (extra columns ignored)."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split("\t")
            if not line.strip():
                continue
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: expected 'query<TAB>target'")
            out.append((parts[0], parts[1]))
    return out


def read_pool(path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip()]

