"""Synthetic rename corpus with known latent concepts.

Each concept has a made-up stem word; its two surface names share the stem
and differ in surrounding noise words and case style (``qorvexTmp`` vs
``new_qorvex``).  Used to exercise training and retrieval end to end when
no mined corpus is available.
"""

from __future__ import annotations

import random

from .mining import RenamePair

NOISE_WORDS = (
    "tmp", "new", "old", "cur", "my", "val", "num", "idx", "ptr", "buf",
    "str", "list", "count", "get", "set", "data", "item", "res", "2", "1",
)
_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "gr", "pl", "st", "tr", "kl")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ou")
_CODAS = ("", "", "n", "r", "x", "l", "m", "s")


def _stem(rng: random.Random) -> str:
    return "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) + rng.choice(_CODAS)
                   for _ in range(rng.randint(2, 3)))


def _render(words: list[str], rng: random.Random) -> str:
    if rng.random() < 0.5:
        return "_".join(words)
    head, *rest = words
    return head + "".join(w[:1].upper() + w[1:] for w in rest)


def _surface(stem: str, rng: random.Random, max_noise: int) -> str:
    words = [stem]
    for _ in range(rng.randint(0, max_noise)):
        words.insert(rng.randint(0, len(words)), rng.choice(NOISE_WORDS))
    # an identifier cannot start with a digit
    while words[0].isdigit():
        words.append(words.pop(0))
    return _render(words, rng)


def make_cluster_corpus(n_concepts: int = 200, seed: int = 0, max_noise: int = 2) -> list[RenamePair]:
    """One pair of distinct surface names per concept; all 2 * n_concepts names are distinct."""
    rng = random.Random(seed)
    stems: list[str] = []
    seen = set(NOISE_WORDS)
    while len(stems) < n_concepts:
        s = _stem(rng)
        if s not in seen:
            seen.add(s)
            stems.append(s)
    pairs = []
    used: set[str] = set()
    for i, stem in enumerate(stems):
        while True:
            a = _surface(stem, rng, max_noise)
            b = _surface(stem, rng, max_noise)
            if a != b and a not in used and b not in used:
                break
        used.update((a, b))
        pairs.append(RenamePair(a, b, f"concept{i}"))
    return pairs
