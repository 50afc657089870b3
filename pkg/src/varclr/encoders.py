"""Variable-name encoders with exact analytic gradients.

Two encoders share the same interface:

* :class:`AvgEncoder` averages subword embeddings.
* :class:`LstmEncoder` runs a bidirectional LSTM over the embeddings,
  mean-pools the concatenated per-step states over the true sequence length
  and projects the result to ``out_dim``.

``forward`` returns the outputs plus a cache; ``backward`` consumes that
cache and an upstream gradient and returns a gradient for every parameter.
All arithmetic is float64.
"""

from __future__ import annotations

import itertools
from typing import Optional, Sequence

import numpy as np

_cache_ids = itertools.count()


def _pad(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(seqs) == 0:
        raise ValueError("empty batch")
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    if lengths.min() < 1:
        raise ValueError("every sequence needs at least one token")
    T = int(lengths.max())
    ids = np.zeros((len(seqs), T), dtype=np.int64)
    for b, s in enumerate(seqs):
        ids[b, : len(s)] = s
    mask = np.arange(T)[None, :] < lengths[:, None]
    return ids, mask, lengths


def _check_ids(ids: np.ndarray, mask: np.ndarray, vocab_size: int) -> None:
    used = ids[mask]
    if used.size and (used.min() < 0 or used.max() >= vocab_size):
        raise IndexError(f"token id out of range for vocabulary of size {vocab_size}")


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale rows (or a single vector) to unit L2 norm."""
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero vector")
    return v / norms


def l2_normalize_backward(v: np.ndarray, dy: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    y = v / norms
    return (dy - y * np.sum(y * dy, axis=-1, keepdims=True)) / norms


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Encoder:
    kind: str = ""
    params: dict[str, np.ndarray]

    @property
    def vocab_size(self) -> int:
        return self.params["embedding"].shape[0]

    @property
    def out_dim(self) -> int:
        raise NotImplementedError

    def config(self) -> dict:
        raise NotImplementedError

    def forward(self, seqs, training: bool = False, rng: Optional[np.random.Generator] = None):
        raise NotImplementedError

    def backward(self, cache: dict, dout: np.ndarray) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def encode(self, seqs: Sequence[Sequence[int]]) -> np.ndarray:
        out, _ = self.forward(seqs)
        return out

    def _check_cache(self, cache: dict, dout: np.ndarray) -> None:
        if cache.get("owner") != id(self) or cache.get("kind") != self.kind:
            raise ValueError("backward called with a cache from a different encoder")
        if dout.shape != cache["out_shape"]:
            raise ValueError(f"upstream gradient shape {dout.shape} != forward output {cache['out_shape']}")

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}


class AvgEncoder(Encoder):
    kind = "avg"

    def __init__(self, vocab_size: int, dim: int, rng: Optional[np.random.Generator] = None,
                 params: Optional[dict[str, np.ndarray]] = None):
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = {"embedding": rng.uniform(-0.5 / dim, 0.5 / dim, size=(vocab_size, dim))}
        self.params = params

    @property
    def dim(self) -> int:
        return self.params["embedding"].shape[1]

    @property
    def out_dim(self) -> int:
        return self.dim

    def config(self) -> dict:
        return {"kind": self.kind, "vocab_size": self.vocab_size, "dim": self.dim}

    def forward(self, seqs, training=False, rng=None):
        ids, mask, lengths = _pad(seqs)
        E = self.params["embedding"]
        _check_ids(ids, mask, E.shape[0])
        X = E[ids] * mask[:, :, None]
        out = X.sum(axis=1) / lengths[:, None]
        cache = {"owner": id(self), "kind": self.kind, "ids": ids, "mask": mask,
                 "lengths": lengths, "out_shape": out.shape}
        return out, cache

    def backward(self, cache, dout):
        dout = np.asarray(dout, dtype=np.float64)
        self._check_cache(cache, dout)
        ids, mask, lengths = cache["ids"], cache["mask"], cache["lengths"]
        grads = self.zero_grads()
        per_row = dout / lengths[:, None]
        rows = np.broadcast_to(per_row[:, None, :], ids.shape + (dout.shape[1],))
        np.add.at(grads["embedding"], ids[mask], rows[mask])
        return grads


_GATES = 4  # input, forget, cell candidate, output


def _lstm_scan(X, mask, Wx, Wh, b):
    """Unidirectional LSTM over padded inputs X (B, T, d).

    Padding sits at the end of every row, so states past a row's length are
    computed but never influence its valid steps; pooling masks them out.
    """
    B, T, _ = X.shape
    h = Wh.shape[1]
    hs = np.zeros((B, T, h))
    cs = np.zeros((B, T, h))
    gates = np.zeros((B, T, _GATES * h))
    h_prev = np.zeros((B, h))
    c_prev = np.zeros((B, h))
    for t in range(T):
        a = X[:, t] @ Wx.T + h_prev @ Wh.T + b
        i = _sigmoid(a[:, :h])
        f = _sigmoid(a[:, h:2 * h])
        g = np.tanh(a[:, 2 * h:3 * h])
        o = _sigmoid(a[:, 3 * h:])
        c = f * c_prev + i * g
        hh = o * np.tanh(c)
        gates[:, t] = np.concatenate([i, f, g, o], axis=1)
        cs[:, t] = c
        hs[:, t] = hh
        h_prev, c_prev = hh, c
    return hs, {"X": X, "hs": hs, "cs": cs, "gates": gates}


def _lstm_scan_backward(cache, dhs, Wx, Wh):
    X, hs, cs, gates = cache["X"], cache["hs"], cache["cs"], cache["gates"]
    B, T, _ = X.shape
    h = Wh.shape[1]
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(Wx.shape[0])
    dX = np.zeros_like(X)
    dh_next = np.zeros((B, h))
    dc_next = np.zeros((B, h))
    for t in reversed(range(T)):
        i, f, g, o = (gates[:, t, k * h:(k + 1) * h] for k in range(_GATES))
        c = cs[:, t]
        c_prev = cs[:, t - 1] if t > 0 else np.zeros((B, h))
        h_prev = hs[:, t - 1] if t > 0 else np.zeros((B, h))
        dh = dhs[:, t] + dh_next
        tc = np.tanh(c)
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc ** 2)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        da = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g ** 2),
            do * o * (1.0 - o),
        ], axis=1)
        dWx += da.T @ X[:, t]
        dWh += da.T @ h_prev
        db += da.sum(axis=0)
        dX[:, t] = da @ Wx
        dh_next = da @ Wh
        dc_next = dc * f
    return dX, dWx, dWh, db


class LstmEncoder(Encoder):
    kind = "lstm"

    def __init__(self, vocab_size: int, emb_dim: int, hidden: int, out_dim: int,
                 rng: Optional[np.random.Generator] = None,
                 params: Optional[dict[str, np.ndarray]] = None,
                 embedding_dropout: float = 0.0):
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = {"embedding": rng.uniform(-0.5 / emb_dim, 0.5 / emb_dim, size=(vocab_size, emb_dim))}
            bound = 1.0 / np.sqrt(hidden)
            for d in ("fwd", "bwd"):
                params[f"{d}_Wx"] = rng.uniform(-bound, bound, size=(_GATES * hidden, emb_dim))
                params[f"{d}_Wh"] = rng.uniform(-bound, bound, size=(_GATES * hidden, hidden))
                bias = np.zeros(_GATES * hidden)
                bias[hidden:2 * hidden] = 1.0
                params[f"{d}_b"] = bias
            pbound = 1.0 / np.sqrt(2 * hidden)
            params["proj_W"] = rng.uniform(-pbound, pbound, size=(out_dim, 2 * hidden))
            params["proj_b"] = np.zeros(out_dim)
        self.params = params
        if not 0.0 <= embedding_dropout < 1.0:
            raise ValueError("embedding_dropout must be in [0, 1)")
        self.embedding_dropout = embedding_dropout
        self._validate_shapes()

    def _validate_shapes(self) -> None:
        p = self.params
        V, d = p["embedding"].shape
        h = p["fwd_Wh"].shape[1]
        for side in ("fwd", "bwd"):
            if p[f"{side}_Wx"].shape != (_GATES * h, d) or p[f"{side}_Wh"].shape != (_GATES * h, h) \
                    or p[f"{side}_b"].shape != (_GATES * h,):
                raise ValueError(f"inconsistent {side} LSTM parameter shapes")
        if p["proj_W"].shape[1] != 2 * h or p["proj_b"].shape != (p["proj_W"].shape[0],):
            raise ValueError("inconsistent projection shapes")

    @property
    def emb_dim(self) -> int:
        return self.params["embedding"].shape[1]

    @property
    def hidden(self) -> int:
        return self.params["fwd_Wh"].shape[1]

    @property
    def out_dim(self) -> int:
        return self.params["proj_W"].shape[0]

    def config(self) -> dict:
        return {"kind": self.kind, "vocab_size": self.vocab_size, "dim": self.emb_dim,
                "hidden": self.hidden, "out_dim": self.out_dim,
                "embedding_dropout": self.embedding_dropout}

    def forward(self, seqs, training=False, rng=None):
        p = self.params
        ids, mask, lengths = _pad(seqs)
        _check_ids(ids, mask, p["embedding"].shape[0])
        # reversed copy: row b holds its tokens back to front, padding still at the end
        rev = np.zeros_like(ids)
        for b, n in enumerate(lengths):
            rev[b, :n] = ids[b, :n][::-1]
        X_f = p["embedding"][ids]
        X_b = p["embedding"][rev]
        drop = None
        if training and self.embedding_dropout > 0:
            if rng is None:
                raise ValueError("embedding dropout needs an rng")
            keep = 1.0 - self.embedding_dropout
            drop = (rng.random(X_f.shape) < keep) / keep
            drop_rev = np.zeros_like(drop)
            for b, n in enumerate(lengths):
                drop_rev[b, :n] = drop[b, :n][::-1]
            X_f = X_f * drop
            X_b = X_b * drop_rev
            drop = (drop, drop_rev)
        hs_f, cache_f = _lstm_scan(X_f, mask, p["fwd_Wx"], p["fwd_Wh"], p["fwd_b"])
        hs_b, cache_b = _lstm_scan(X_b, mask, p["bwd_Wx"], p["bwd_Wh"], p["bwd_b"])
        w = mask[:, :, None] / lengths[:, None, None]
        # mean of concatenated states equals concatenation of per-direction means
        pooled = np.concatenate([(hs_f * w).sum(axis=1), (hs_b * w).sum(axis=1)], axis=1)
        out = pooled @ p["proj_W"].T + p["proj_b"]
        cache = {"owner": id(self), "kind": self.kind, "ids": ids, "rev": rev, "mask": mask,
                 "lengths": lengths, "w": w, "pooled": pooled, "fwd": cache_f, "bwd": cache_b,
                 "drop": drop, "out_shape": out.shape}
        return out, cache

    def backward(self, cache, dout):
        dout = np.asarray(dout, dtype=np.float64)
        self._check_cache(cache, dout)
        p = self.params
        h = self.hidden
        mask = cache["mask"]
        grads = self.zero_grads()
        grads["proj_W"] = dout.T @ cache["pooled"]
        grads["proj_b"] = dout.sum(axis=0)
        dpooled = dout @ p["proj_W"]
        for side, key, ids_key, half in (("fwd", "fwd", "ids", slice(0, h)),
                                         ("bwd", "bwd", "rev", slice(h, 2 * h))):
            dhs = dpooled[:, None, half] * cache["w"]
            dX, dWx, dWh, db = _lstm_scan_backward(cache[key], dhs, p[f"{side}_Wx"], p[f"{side}_Wh"])
            grads[f"{side}_Wx"] = dWx
            grads[f"{side}_Wh"] = dWh
            grads[f"{side}_b"] = db
            if cache["drop"] is not None:
                dX = dX * cache["drop"][0 if side == "fwd" else 1]
            np.add.at(grads["embedding"], cache[ids_key][mask], dX[mask])
        return grads


def build_encoder(kind: str, vocab_size: int, dim: int, hidden: int = 150, out_dim: int = 150,
                  seed: int = 0, embedding_dropout: float = 0.0) -> Encoder:
    rng = np.random.default_rng(seed)
    if kind == "avg":
        return AvgEncoder(vocab_size, dim, rng=rng)
    if kind == "lstm":
        return LstmEncoder(vocab_size, dim, hidden, out_dim, rng=rng, embedding_dropout=embedding_dropout)
    raise ValueError(f"unknown encoder kind {kind!r}")


def encoder_from_params(config: dict, params: dict[str, np.ndarray]) -> Encoder:
    kind = config["kind"]
    if kind == "avg":
        return AvgEncoder(0, 0, params=params)
    if kind == "lstm":
        return LstmEncoder(0, 0, 0, 0, params=params,
                           embedding_dropout=float(config.get("embedding_dropout", 0.0)))
    raise ValueError(f"unknown encoder kind {kind!r}")


def encode_avg(ids: Sequence[int], table: np.ndarray) -> np.ndarray:
    """Mean of the embedding rows for one token-id sequence."""
    return AvgEncoder(0, 0, params={"embedding": table}).encode([ids])[0]


def encode_lstm(ids: Sequence[int], encoder: LstmEncoder) -> np.ndarray:
    return encoder.encode([ids])[0]
