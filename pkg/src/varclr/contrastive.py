"""Contrastive pre-training: symmetric InfoNCE with in-batch negatives."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .checkpoint import Checkpoint, import_embeddings
from .encoders import Encoder, build_encoder, l2_normalize, l2_normalize_backward
from .mining import RenamePair
from .tokenizer import BpeVocab, TokenizationError, tokenize

log = logging.getLogger(__name__)

UNIT_TOL = 1e-6


@dataclass
class TrainConfig:
    batch_size: int = 1024
    temperature: float = 0.05
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip: float = 1.0
    max_epochs: int = 30
    patience: int = 10
    val_fraction: float = 0.05
    data_fraction: float = 1.0
    seed: int = 0
    dim: int = 768
    hidden: int = 150
    out_dim: int = 150
    embedding_dropout: float = 0.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")
        if not 0 < self.data_fraction <= 1:
            raise ValueError("data_fraction must be in (0, 1]")
        if self.clip <= 0:
            raise ValueError("clip bound must be positive")
        if self.patience < 0 or self.max_epochs < 1:
            raise ValueError("need patience >= 0 and max_epochs >= 1")


def _check_unit(M: np.ndarray, name: str) -> None:
    norms = np.linalg.norm(M, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise ValueError(f"rows of {name} must be unit-norm")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def info_nce(Q: np.ndarray, K: np.ndarray, tau: float, return_grad: bool = False):
    """Mean over rows of -log softmax(Q K^T / tau)[i, i].

    With ``return_grad`` also returns (dQ, dK).
    """
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    if tau <= 0:
        raise ValueError("temperature must be positive")
    if Q.shape != K.shape or Q.ndim != 2 or Q.shape[0] == 0:
        raise ValueError(f"Q and K must be matching non-empty matrices, got {Q.shape} and {K.shape}")
    _check_unit(Q, "Q")
    _check_unit(K, "K")
    n = Q.shape[0]
    logits = Q @ K.T / tau
    logp = _log_softmax(logits)
    loss = float(-np.mean(np.diag(logp)))
    loss = max(loss, 0.0)
    if not return_grad:
        return loss
    dlogits = np.exp(logp)
    dlogits[np.arange(n), np.arange(n)] -= 1.0
    dS = dlogits / (n * tau)
    return loss, dS @ K, dS.T @ Q


def symmetric_loss(Q: np.ndarray, K: np.ndarray, tau: float, return_grad: bool = False):
    if not return_grad:
        return 0.5 * info_nce(Q, K, tau) + 0.5 * info_nce(K, Q, tau)
    l1, dQ1, dK1 = info_nce(Q, K, tau, return_grad=True)
    l2, dK2, dQ2 = info_nce(K, Q, tau, return_grad=True)
    return 0.5 * (l1 + l2), 0.5 * (dQ1 + dQ2), 0.5 * (dK1 + dK2)


def in_batch_accuracy(Q: np.ndarray, K: np.ndarray) -> float:
    """Fraction of rows whose most similar key is their own partner."""
    S = Q @ K.T
    return float(np.mean(np.argmax(S, axis=1) == np.arange(S.shape[0])))


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: dict[str, np.ndarray], bound: float) -> dict[str, np.ndarray]:
    if bound <= 0:
        raise ValueError("clip bound must be positive")
    norm = global_norm(grads)
    if norm <= bound:
        return grads
    scale = bound / norm
    return {k: g * scale for k, g in grads.items()}


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, config: TrainConfig) -> tuple[dict[str, np.ndarray], AdamState]:
    """Clip, then apply one bias-corrected Adam update to ``params`` in place."""
    if set(params) != set(grads):
        raise ValueError("parameter and gradient names differ")
    for k in params:
        if params[k].shape != grads[k].shape:
            raise ValueError(f"shape mismatch for {k}: {params[k].shape} vs {grads[k].shape}")
        if k in state.m and state.m[k].shape != params[k].shape:
            raise ValueError(f"optimizer state shape mismatch for {k}")
    grads = clip_gradients(grads, config.clip)
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    for k in sorted(params):
        g = grads[k]
        m = state.m.get(k)
        v = state.v.get(k)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[k], state.v[k] = m, v
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        params[k] -= config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
    return params, state


def pair_loss_and_grads(encoder: Encoder, left: Sequence[Sequence[int]], right: Sequence[Sequence[int]],
                        tau: float, training: bool = False, rng=None):
    """Symmetric loss of one batch of pairs and its gradient for every encoder parameter."""
    B = len(left)
    out, cache = encoder.forward(list(left) + list(right), training=training, rng=rng)
    unit = l2_normalize(out)
    loss, dQ, dK = symmetric_loss(unit[:B], unit[B:], tau, return_grad=True)
    dout = l2_normalize_backward(out, np.concatenate([dQ, dK]))
    return loss, encoder.backward(cache, dout)


def batch_loss(encoder: Encoder, left, right, tau: float) -> float:
    B = len(left)
    unit = l2_normalize(encoder.encode(list(left) + list(right)))
    return symmetric_loss(unit[:B], unit[B:], tau)


def _eval_loss(encoder: Encoder, left, right, config: TrainConfig) -> float:
    n = len(left)
    chunks = np.array_split(np.arange(n), max(1, n // config.batch_size))
    total = 0.0
    for idx in chunks:
        total += len(idx) * batch_loss(encoder, [left[i] for i in idx], [right[i] for i in idx],
                                       config.temperature)
    return total / n


def _split(n: int, config: TrainConfig, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = int(round(config.val_fraction * n))
    if n >= 4:
        n_val = min(max(n_val, 2), n - 2)
    else:
        n_val = 0
    val_idx = np.sort(perm[:n_val])
    train_idx = perm[n_val:]
    if config.data_fraction < 1.0:
        m = max(2, int(round(config.data_fraction * len(train_idx))))
        train_idx = train_idx[:m]
    return np.sort(train_idx), val_idx


def train(pairs: Sequence[RenamePair], vocab: BpeVocab, kind: str, config: TrainConfig,
          init_embeddings: Optional[str] = None,
          epoch_callback: Optional[Callable[[int, float, float, float], None]] = None) -> Checkpoint:
    """Train an encoder on rename pairs and return the best-validation checkpoint.

    When the dataset is too small for a held-out split (fewer than 4 pairs)
    the training loss drives early stopping instead.
    """
    if len(pairs) < 2:
        raise ValueError("need at least two pairs to train")
    ids: dict[str, tuple[int, ...]] = {}
    for p in pairs:
        for name in (p.before, p.after):
            if name not in ids:
                try:
                    ids[name] = tokenize(name, vocab).ids
                except TokenizationError as e:
                    raise TokenizationError(f"cannot tokenize {name!r}: {e}") from None
    left = [ids[p.before] for p in pairs]
    right = [ids[p.after] for p in pairs]

    data_rng = np.random.default_rng([config.seed, 1])
    train_idx, val_idx = _split(len(pairs), config, data_rng)
    encoder = build_encoder(kind, len(vocab), config.dim, config.hidden, config.out_dim,
                            seed=config.seed, embedding_dropout=config.embedding_dropout)
    matched = None
    if init_embeddings:
        matched = import_embeddings(init_embeddings, vocab, encoder.params["embedding"])
        log.info("initialized %d embedding rows from %s", matched, init_embeddings)

    tr_left = [left[i] for i in train_idx]
    tr_right = [right[i] for i in train_idx]
    if len(val_idx):
        va_left = [left[i] for i in val_idx]
        va_right = [right[i] for i in val_idx]
    else:
        va_left, va_right = tr_left, tr_right

    state = AdamState()
    drop_rng = np.random.default_rng([config.seed, 2])
    best_loss = np.inf
    best_params = {k: v.copy() for k, v in encoder.params.items()}
    best_epoch = 0
    stale = 0
    history = []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        order = data_rng.permutation(len(tr_left))
        losses, sizes = [], []
        for s in range(0, len(order), config.batch_size):
            idx = order[s:s + config.batch_size]
            if len(idx) < 2:
                continue
            loss, grads = pair_loss_and_grads(encoder, [tr_left[i] for i in idx], [tr_right[i] for i in idx],
                                              config.temperature, training=True, rng=drop_rng)
            adam_step(encoder.params, grads, state, config)
            losses.append(loss)
            sizes.append(len(idx))
        train_loss = float(np.average(losses, weights=sizes)) if losses else float("nan")
        val_loss = _eval_loss(encoder, va_left, va_right, config)
        seconds = time.perf_counter() - start
        history.append([epoch, train_loss, val_loss])
        if epoch_callback is not None:
            epoch_callback(epoch, train_loss, val_loss, seconds)
        log.info("epoch %d train %.6g val %.6g", epoch, train_loss, val_loss)
        if val_loss < best_loss:
            best_loss, best_epoch, stale = val_loss, epoch, 0
            best_params = {k: v.copy() for k, v in encoder.params.items()}
        else:
            stale += 1
            if stale > config.patience:
                break

    encoder.params = best_params
    metadata = {
        "best_epoch": best_epoch,
        "epochs_run": epoch,
        "val_loss": best_loss,
        "history": history,
        "n_train": len(train_idx),
        "n_val": len(val_idx),
        "seed": config.seed,
        "config": asdict(config),
        "init_embeddings_matched": matched,
    }
    return Checkpoint(encoder=encoder, vocab=vocab, metadata=metadata)
