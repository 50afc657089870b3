"""Similarity scoring against human benchmarks, plus the edit-distance baseline."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .checkpoint import Checkpoint
from .tokenizer import TokenizationError


@dataclass(frozen=True)
class BenchmarkPair:
    left: str
    right: str
    relatedness: Optional[float] = None
    similarity: Optional[float] = None

    def __post_init__(self):
        if self.relatedness is None and self.similarity is None:
            raise ValueError(f"pair ({self.left}, {self.right}) has no score")


@dataclass
class ScoreReport:
    encoder: str
    n_pairs: int
    n_dropped: int
    similarity: Optional[float]
    relatedness: Optional[float]
    benchmark: str = ""

    HEADER = ("benchmark", "encoder", "pairs", "dropped", "similarity", "relatedness")

    def row(self) -> list[str]:
        def fmt(x):
            return "" if x is None else f"{x:.6g}"
        return [self.benchmark, self.encoder, str(self.n_pairs), str(self.n_dropped),
                fmt(self.similarity), fmt(self.relatedness)]


def read_benchmark(path) -> list[BenchmarkPair]:
    """Read an IdBench-style CSV with columns var1,var2,relatedness,similarity.

    Blank score cells are allowed; rows with neither score are skipped.
    """
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = {"var1", "var2"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            rel = _cell(row.get("relatedness"))
            sim = _cell(row.get("similarity"))
            if rel is None and sim is None:
                continue
            out.append(BenchmarkPair(row["var1"].strip(), row["var2"].strip(), rel, sim))
    return out


def _cell(value) -> Optional[float]:
    if value is None or not value.strip() or value.strip().upper() == "NAN":
        return None
    return float(value)


def similarity_score(u: str, v: str, ckpt: Checkpoint) -> float:
    """Cosine similarity of the encodings of two names."""
    hu, hv = ckpt.encode_names([u, v])
    nu, nv = np.linalg.norm(hu), np.linalg.norm(hv)
    if nu == 0 or nv == 0:
        raise ValueError("zero-norm encoding")
    return float(np.clip(hu @ hv / (nu * nv), -1.0, 1.0))


def checkpoint_scorer(ckpt: Checkpoint) -> Callable[[str, str], float]:
    return lambda u, v: similarity_score(u, v, ckpt)


def average_ranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ValueError("need at least two observations")
    rx = average_ranks(xs)
    ry = average_ranks(ys)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ValueError("correlation undefined for constant input")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_score(a: str, b: str) -> float:
    """1 - distance / max length, so larger means more similar."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def evaluate_benchmark(pairs: Sequence[BenchmarkPair], scorer: Callable[[str, str], float],
                       encoder: str = "", benchmark: str = "") -> ScoreReport:
    """Spearman correlation of model scores with the human similarity and relatedness columns.

    Pairs the scorer cannot tokenize are dropped and counted.
    """
    if not pairs:
        raise ValueError("empty benchmark")
    scored = []
    dropped = 0
    for p in pairs:
        try:
            scored.append((p, scorer(p.left, p.right)))
        except TokenizationError:
            dropped += 1

    def corr(attr: str) -> Optional[float]:
        rows = [(s, getattr(p, attr)) for p, s in scored if getattr(p, attr) is not None]
        if not any(getattr(p, attr) is not None for p in pairs):
            return None
        if len(rows) < 2:
            raise ValueError(f"fewer than two scoreable pairs with {attr}")
        model, human = zip(*rows)
        return spearman(model, human)

    return ScoreReport(encoder=encoder, n_pairs=len(scored), n_dropped=dropped,
                       similarity=corr("similarity"), relatedness=corr("relatedness"),
                       benchmark=benchmark)
