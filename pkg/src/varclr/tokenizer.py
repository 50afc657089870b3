"""Identifier canonicalization and byte-pair subword encoding.

Names are first split into lowercase word tokens (``maxIteration`` and
``max_iteration`` both become ``["max", "iteration"]``), then each word is
segmented into subwords with a BPE vocabulary.  Non-initial subwords carry
the ``##`` continuation marker, so ``sendmsg`` may become
``["send", "##msg"]``.
"""

from __future__ import annotations

import hashlib
import re
import string
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

MARKER = "##"

# Canonical tokens only ever contain these characters, so a fixed base
# alphabet makes encoding total even for characters unseen during training.
ALPHABET = string.ascii_lowercase + string.digits

_IDENT_RE = re.compile(r"^[A-Za-z0-9_]+$")
# Order matters: an uppercase run followed by Capitalized word splits before
# the final capital (HTMLParser -> HTML, Parser).
_WORD_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")


class TokenizationError(ValueError):
    pass


def canonicalize(name: str) -> list[str]:
    """Split an identifier into lowercase word tokens.

    Splits on underscores, lower->upper case changes, letter<->digit
    boundaries and acronym->word boundaries.
    """
    if not name:
        raise TokenizationError("empty identifier")
    if not _IDENT_RE.match(name):
        raise TokenizationError(f"invalid identifier {name!r}")
    tokens = [m.group(0).lower() for part in name.split("_") for m in _WORD_RE.finditer(part)]
    if not tokens:
        raise TokenizationError(f"identifier {name!r} has no letters or digits")
    return tokens


def is_valid_name(name: str) -> bool:
    try:
        canonicalize(name)
    except TokenizationError:
        return False
    return True


def _base_symbols() -> list[str]:
    return list(ALPHABET) + [MARKER + c for c in ALPHABET]


def _merge_symbols(left: str, right: str) -> str:
    return left + right[len(MARKER):]


def _split_word(word: str) -> list[str]:
    return [word[0]] + [MARKER + c for c in word[1:]]


@dataclass
class BpeVocab:
    merges: list[tuple[str, str]] = field(default_factory=list)
    token_to_id: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.token_to_id:
            self.token_to_id = {tok: i for i, tok in enumerate(_base_symbols())}
            for left, right in self.merges:
                self._add(_merge_symbols(left, right))
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._cache: dict[str, list[str]] = {}

    @classmethod
    def from_merges(cls, merges: Iterable[tuple[str, str]]) -> "BpeVocab":
        merges = [tuple(m) for m in merges]
        for left, right in merges:
            if not right.startswith(MARKER) or not left or len(right) <= len(MARKER):
                raise ValueError(f"invalid merge rule {left!r} {right!r}")
        return cls(merges=merges)

    def _add(self, token: str) -> None:
        if token not in self.token_to_id:
            self.token_to_id[token] = len(self.token_to_id)

    def __len__(self) -> int:
        return len(self.token_to_id)

    @property
    def id_to_token(self) -> list[str]:
        out = [""] * len(self.token_to_id)
        for tok, i in self.token_to_id.items():
            out[i] = tok
        return out

    @property
    def base_size(self) -> int:
        return 2 * len(ALPHABET)

    def encode_word(self, word: str) -> list[str]:
        cached = self._cache.get(word)
        if cached is not None:
            return list(cached)
        symbols = encode_subwords(word, self)
        self._cache[word] = symbols
        return list(symbols)

    def to_text(self) -> str:
        lines = [f"{self.base_size} {len(self.merges)}"]
        lines.extend(f"{left} {right}" for left, right in self.merges)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BpeVocab":
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty vocab file")
        header = lines[0].split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise ValueError(f"line 1: bad vocab header {lines[0]!r}")
        base, count = int(header[0]), int(header[1])
        if base != 2 * len(ALPHABET):
            raise ValueError(f"line 1: base alphabet size {base}, expected {2 * len(ALPHABET)}")
        merges = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'left right', got {line!r}")
            merges.append((parts[0], parts[1]))
        if len(merges) != count:
            raise ValueError(f"header declares {count} merges, found {len(merges)}")
        return cls.from_merges(merges)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path) -> "BpeVocab":
        with open(path, encoding="utf-8") as f:
            return cls.from_text(f.read())

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class TokenSeq:
    ids: tuple[int, ...]
    surface: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.ids)


def train_bpe(
    corpus: Iterable[Sequence[str]],
    target_vocab_size: int,
    min_pair_frequency: int = 2,
) -> BpeVocab:
    """Learn merge rules from a stream of canonical token lists.

    Greedily merges the most frequent adjacent symbol pair; ties go to the
    lexicographically smallest pair.
    """
    word_freq: Counter[str] = Counter()
    for tokens in corpus:
        word_freq.update(tokens)
    if not word_freq:
        raise ValueError("empty corpus")
    base_size = 2 * len(ALPHABET)
    if target_vocab_size <= base_size:
        raise ValueError(f"target_vocab_size must exceed base alphabet size {base_size}")
    for w in word_freq:
        if not w or any(c not in ALPHABET for c in w):
            raise ValueError(f"corpus word {w!r} is not canonical")

    words = [_split_word(w) for w in sorted(word_freq)]
    freqs = [word_freq[w] for w in sorted(word_freq)]
    pair_counts: Counter[tuple[str, str]] = Counter()
    where: defaultdict[tuple[str, str], set[int]] = defaultdict(set)
    for wi, symbols in enumerate(words):
        for pair in zip(symbols, symbols[1:]):
            pair_counts[pair] += freqs[wi]
            where[pair].add(wi)

    vocab = BpeVocab()
    merges: list[tuple[str, str]] = []
    while len(vocab) < target_vocab_size and pair_counts:
        best = min(pair_counts, key=lambda p: (-pair_counts[p], p))
        if pair_counts[best] < min_pair_frequency:
            break
        merges.append(best)
        merged = _merge_symbols(*best)
        vocab._add(merged)
        for wi in sorted(where.pop(best, ())):
            old = words[wi]
            new = _apply_merge(old, best, merged)
            f = freqs[wi]
            for pair in zip(old, old[1:]):
                pair_counts[pair] -= f
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
            for pair in zip(new, new[1:]):
                pair_counts[pair] += f
                where[pair].add(wi)
            words[wi] = new
        pair_counts.pop(best, None)
    return BpeVocab.from_merges(merges)


def _apply_merge(symbols: list[str], pair: tuple[str, str], merged: str) -> list[str]:
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def encode_subwords(word: str, vocab: BpeVocab) -> list[str]:
    """Segment one canonical word, applying merges in training order."""
    if not word:
        raise TokenizationError("empty word")
    symbols = _split_word(word)
    ranks = vocab._ranks
    while len(symbols) > 1:
        best_rank, best = None, None
        for pair in zip(symbols, symbols[1:]):
            r = ranks.get(pair)
            if r is not None and (best_rank is None or r < best_rank):
                best_rank, best = r, pair
        if best is None:
            break
        symbols = _apply_merge(symbols, best, _merge_symbols(*best))
    return symbols


def tokenize(name: str, vocab: BpeVocab) -> TokenSeq:
    surface: list[str] = []
    for word in canonicalize(name):
        surface.extend(vocab.encode_word(word))
    ids = tuple(vocab.token_to_id[s] for s in surface)
    return TokenSeq(ids=ids, surface=tuple(surface))


def corpus_from_names(names: Iterable[str]) -> list[list[str]]:
    """Canonicalize every valid name; invalid ones are skipped."""
    out = []
    for name in names:
        try:
            out.append(canonicalize(name))
        except TokenizationError:
            continue
    return out
