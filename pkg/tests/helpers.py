import numpy as np


def finite_difference(f, params, eps=1e-5):
    """Central differences of scalar f() w.r.t. every entry of every array in params."""
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + eps
            up = f()
            arr[i] = old - eps
            down = f()
            arr[i] = old
            g[i] = (up - down) / (2 * eps)
        grads[name] = g
    return grads


def rel_error(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def random_seqs(rng, n_seqs, vocab_size, max_len):
    return [list(rng.integers(0, vocab_size, size=rng.integers(1, max_len + 1))) for _ in range(n_seqs)]
