"""Checkpoints, array containers and the embedding text format."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .encoders import Encoder, encoder_from_params, l2_normalize
from .tokenizer import BpeVocab, tokenize

FORMAT_VERSION = 1
_MAGIC = b"VARCLR\x00"


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a deterministic binary container, atomically (temp file + rename).

    Layout: magic, a newline-terminated decimal header length, a sorted-key
    JSON header, then each array as little-endian float64 in header order.
    """
    names = sorted(arrays)
    header = {
        "format": kind,
        "format_version": FORMAT_VERSION,
        "meta": meta,
        "arrays": [{"name": n, "shape": list(arrays[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(_MAGIC)
            f.write(f"{len(blob)}\n".encode("ascii"))
            f.write(blob)
            for n in names:
                f.write(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(_MAGIC):
        raise ValueError(f"{path}: not a varclr file")
    rest = data[len(_MAGIC):]
    nl = rest.index(b"\n")
    size = int(rest[:nl])
    header = json.loads(rest[nl + 1:nl + 1 + size])
    if header.get("format") != kind:
        raise ValueError(f"{path}: expected a {kind} file, found {header.get('format')}")
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {header.get('format_version')}")
    offset = len(_MAGIC) + nl + 1 + size
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays[spec["name"]] = arr.astype(np.float64)
        offset += 8 * count
    return header["meta"], arrays


@dataclass
class Checkpoint:
    """A trained encoder bundled with its vocabulary and training metadata."""

    encoder: Encoder
    vocab: BpeVocab
    metadata: dict = field(default_factory=dict)

    def encode_names(self, names: Iterable[str]) -> np.ndarray:
        """Encode identifiers to raw (unnormalized) vectors.

        Raises TokenizationError for names that cannot be canonicalized.
        """
        seqs = [tokenize(n, self.vocab).ids for n in names]
        if not seqs:
            return np.zeros((0, self.encoder.out_dim))
        return self.encoder.encode(seqs)

    def unit_vectors(self, names: Iterable[str]) -> np.ndarray:
        return l2_normalize(self.encode_names(names))

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.vocab.fingerprint().encode())
        h.update(json.dumps(self.encoder.config(), sort_keys=True).encode())
        for k in sorted(self.encoder.params):
            h.update(np.ascontiguousarray(self.encoder.params[k], dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def to_container(self) -> tuple[dict, dict[str, np.ndarray]]:
        meta = {
            "encoder": self.encoder.config(),
            "vocab": self.vocab.to_text(),
            "vocab_hash": self.vocab.fingerprint(),
            "training": self.metadata,
        }
        return meta, dict(self.encoder.params)

    @classmethod
    def from_container(cls, meta: dict, arrays: dict[str, np.ndarray]) -> "Checkpoint":
        vocab = BpeVocab.from_text(meta["vocab"])
        if vocab.fingerprint() != meta["vocab_hash"]:
            raise ValueError("checkpoint vocab hash mismatch")
        encoder = encoder_from_params(meta["encoder"], arrays)
        if encoder.vocab_size != len(vocab):
            raise ValueError("embedding rows do not match vocabulary size")
        return cls(encoder=encoder, vocab=vocab, metadata=meta.get("training", {}))

    def save(self, path) -> None:
        write_container(path, "checkpoint", *self.to_container())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_container(*read_container(path, "checkpoint"))


def import_embeddings(path, vocab: BpeVocab, table: np.ndarray) -> int:
    """Copy rows for tokens present in both the file and ``vocab`` into ``table``.

    ``table`` is modified in place, and only once the whole file has parsed.
    Returns the number of rows replaced.
    """
    dim = table.shape[1]
    updates: dict[int, np.ndarray] = {}
    with open(path, encoding="utf-8") as f:
        first = f.readline()
        if not first.strip():
            return 0
        header = first.split()
        if len(header) != 2:
            raise ValueError(f"{path}:1: expected '<count> <dim>' header")
        try:
            count, file_dim = int(header[0]), int(header[1])
        except ValueError:
            raise ValueError(f"{path}:1: expected '<count> <dim>' header") from None
        if file_dim != dim:
            raise ValueError(f"{path}: embedding dim {file_dim} does not match configured dim {dim}")
        rows = 0
        for lineno, line in enumerate(f, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected token plus {dim} values, got {len(parts)} fields")
            try:
                vec = np.array([float(x) for x in parts[1:]])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            rows += 1
            idx = vocab.token_to_id.get(parts[0])
            if idx is not None:
                updates[idx] = vec
        if rows != count:
            raise ValueError(f"{path}: header declares {count} rows, found {rows}")
    for idx, vec in updates.items():
        table[idx] = vec
    return len(updates)


def export_embeddings(ckpt: Checkpoint, path) -> None:
    table = ckpt.encoder.params["embedding"]
    tokens = ckpt.vocab.id_to_token
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{table.shape[0]} {table.shape[1]}\n")
        for tok, row in zip(tokens, table):
            f.write(tok + " " + " ".join(repr(float(x)) for x in row) + "\n")


def load_checkpoint(path) -> Checkpoint:
    return Checkpoint.load(path)
