"""Independent reference implementations used as test oracles.

Nothing here calls into the package's differentiable code paths.
"""

import itertools
import math

import numpy as np


def matmul_loops(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def softmax_ref(row):
    e = [math.exp(v) for v in row]
    s = sum(e)
    return np.array([v / s for v in e])


def simplex_projection_bruteforce(z):
    """Enumerate every support, solve the equality-constrained problem on it,
    keep the feasible candidate closest to z."""
    z = np.asarray(z, dtype=float)
    n = z.size
    best, best_dist = None, np.inf
    for size in range(1, n + 1):
        for support in itertools.combinations(range(n), size):
            idx = list(support)
            p = np.zeros(n)
            p[idx] = z[idx] - (z[idx].sum() - 1.0) / size
            if (p[idx] < -1e-12).any():
                continue
            p = np.maximum(p, 0.0)
            dist = float(((p - z) ** 2).sum())
            if dist < best_dist - 1e-15:
                best, best_dist = p, dist
    return best


def numeric_grad(f, arrays, eps=1e-5):
    """Central differences of scalar ``f(*arrays)`` w.r.t. every array entry."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = arr[i]
            arr[i] = orig + eps
            fp = f(*arrays)
            arr[i] = orig - eps
            fm = f(*arrays)
            arr[i] = orig
            g[i] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def grad_error(analytic, numeric, floor=1e-6):
    """Largest elementwise |a - n| / max(|a|, |n|, floor)."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = diff / scale
    return float(rel.max()) if rel.size else 0.0


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def gru_scalar(x, h, w):
    """Scalar GRU step evaluated gate by gate."""
    r = sigmoid(w["W_r"] * x + w["U_r"] * h + w["b_r"])
    u = sigmoid(w["W_u"] * x + w["U_u"] * h + w["b_u"])
    cand = math.tanh(w["W_h"] * x + w["U_h"] * (r * h) + w["b_h"])
    return (1 - u) * h + u * cand


def gru_ref(x, h, p):
    """Vector GRU step in plain numpy with per-gate weight matrices."""
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    r = sig(x @ p["W_r"] + h @ p["U_r"] + p["b_r"])
    u = sig(x @ p["W_u"] + h @ p["U_u"] + p["b_u"])
    cand = np.tanh(x @ p["W_h"] + (r * h) @ p["U_h"] + p["b_h"])
    return (1 - u) * h + u * cand


def masked_softmax_ref(row, keep):
    out = np.zeros(len(row))
    idx = [j for j in range(len(row)) if keep[j]]
    out[idx] = softmax_ref([row[j] for j in idx])
    return out


def masked_sparsemax_ref(row, keep):
    """Project only the kept entries; dropped ones get zero."""
    out = np.zeros(len(row))
    idx = [j for j in range(len(row)) if keep[j]]
    out[idx] = simplex_projection_bruteforce(np.array([row[j] for j in idx]))
    return out


def agent_ref(entities, visible, h, p):
    """One agent step written out line by line.

    ``p`` maps names to plain arrays: embed_W, embed_b, W_Q, W_K, W_V, the
    GRU gate weights (see gru_ref) and head_W, head_b.
    Returns (q_dense, q_sparse, h_next).
    """
    keep = np.array(visible, dtype=bool).copy()
    keep[0] = True
    X = entities @ p["embed_W"] + p["embed_b"]
    Q, K, V = X @ p["W_Q"], X @ p["W_K"], X @ p["W_V"]
    logits = Q @ K.T / math.sqrt(X.shape[1])
    Wd = np.array([masked_softmax_ref(r, keep) for r in logits])
    Ws = np.array([masked_sparsemax_ref(r, keep) for r in logits])
    h_next = gru_ref(X.mean(axis=0), h, p)
    qd = np.concatenate([(Wd @ V).mean(axis=0), h_next]) @ p["head_W"] + p["head_b"]
    qs = np.concatenate([(Ws @ V).mean(axis=0), h_next]) @ p["head_W"] + p["head_b"]
    return qd, qs, h_next


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def qmix_ref(u, s, p):
    """Monotonic mixer for one sample, from plain hypernetwork arrays."""
    n = len(u)
    w1 = np.abs(s @ p["w1_W"] + p["w1_b"]).reshape(n, -1)
    b1 = s @ p["b1_W"] + p["b1_b"]
    hidden = elu(u @ w1 + b1)
    w2 = np.abs(s @ p["w2_W"] + p["w2_b"])
    b2 = np.maximum(s @ p["b2h_W"] + p["b2h_b"], 0.0) @ p["b2o_W"] + p["b2o_b"]
    return float(hidden @ w2 + b2[0])
