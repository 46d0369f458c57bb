"""Independent oracles the tests check the implementation against.

Everything here is deliberately brute force: scalar loops, explicit
finite differences, direct evaluation of definitions. None of it shares code
with the library paths it verifies.
"""

import numpy as np

from advdesk import nn


def fd_input_grad(model, x, y, h=1e-5):
    """Central finite differences of the loss with respect to the input."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        up = x.copy()
        up[i] += h
        down = x.copy()
        down[i] -= h
        grad[i] = (nn.loss(model, up, y) - nn.loss(model, down, y)) / (2 * h)
    return grad


def fd_param_grads(model, x, y, h=1e-5):
    """Central finite differences for every weight and bias tensor."""
    grads = []
    for l in range(len(model.weights)):
        pair = []
        for getter in (lambda m: m.weights[l], lambda m: m.biases[l]):
            arr = getter(model)
            g = np.zeros_like(arr)
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = nn.loss(model, x, y)
                flat[i] = orig - h
                down = nn.loss(model, x, y)
                flat[i] = orig
                gflat[i] = (up - down) / (2 * h)
            pair.append(g)
        grads.append(tuple(pair))
    return grads


def fd_jacobian(model, x, h=1e-5, wrt="probs"):
    """Finite-difference Jacobian of the softmax-at-1 probabilities (or logits)."""
    x = np.asarray(x, dtype=np.float64)

    def out(v):
        logits = nn.forward(model, v).logits
        return logits if wrt == "logits" else nn.softmax_t(logits, 1.0)

    c = model.output_dim
    jac = np.zeros((c, x.size))
    for i in range(x.size):
        up = x.copy()
        up[i] += h
        down = x.copy()
        down[i] -= h
        jac[:, i] = (out(up) - out(down)) / (2 * h)
    return jac


def max_rel_error(a, b, zero_floor=0.0):
    """Max of |a-b| / max(|a|,|b|) elementwise, with 0/0 (below floor) = 0."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    worst = 0.0
    for ai, bi in zip(a, b):
        scale = max(abs(ai), abs(bi))
        if scale <= zero_floor:
            continue
        worst = max(worst, abs(ai - bi) / scale)
    return worst


def reflect_index(i, size):
    """Symmetric reflection with edge duplication: -1 -> 0, size -> size-1."""
    if i < 0:
        return -i - 1
    if i >= size:
        return 2 * size - i - 1
    return i


def brute_median_2x2(image):
    """Sliding 2x2 upper median, window ending at the target pixel."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    out = np.zeros_like(image)
    for r in range(h):
        for c in range(w):
            vals = sorted(
                image[reflect_index(rr, h), reflect_index(cc, w)]
                for rr in (r - 1, r)
                for cc in (c - 1, c)
            )
            out[r, c] = vals[2]  # second largest of four
    return out


def brute_nonlocal(image, search_window, patch_size, strength):
    """Direct per-pixel non-local means over in-bounds candidate centers."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    pr = patch_size // 2
    sr = search_window // 2

    def patch(cy, cx):
        return np.array([
            image[reflect_index(cy + dy, h), reflect_index(cx + dx, w)]
            for dy in range(-pr, pr + 1)
            for dx in range(-pr, pr + 1)
        ])

    out = np.zeros_like(image)
    for r in range(h):
        for c in range(w):
            base = patch(r, c)
            weights = []
            values = []
            for dy in range(-sr, sr + 1):
                for dx in range(-sr, sr + 1):
                    q_r, q_c = r + dy, c + dx
                    if not (0 <= q_r < h and 0 <= q_c < w):
                        continue
                    d2 = float(np.sum((patch(q_r, q_c) - base) ** 2))
                    weights.append(np.exp(-d2 / strength**2))
                    values.append(image[q_r, q_c])
            weights = np.asarray(weights)
            out[r, c] = float(np.sum(weights * np.asarray(values)) / np.sum(weights))
    return out


def power_iteration_singular_values(a, count=None, iters=500, seed=123):
    """Singular values via power iteration with deflation on A^T A."""
    a = np.asarray(a, dtype=np.float64)
    gram = a.T @ a
    n = gram.shape[0]
    count = n if count is None else count
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(count):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            v_new = gram @ v
            norm = np.linalg.norm(v_new)
            if norm == 0:
                lam = 0.0
                break
            v = v_new / norm
            lam = norm
        values.append(np.sqrt(max(lam, 0.0)))
        gram = gram - lam * np.outer(v, v)
    return np.sort(np.asarray(values))[::-1]


def saliency_by_definition(jacobian, target, direction):
    """Scalar-loop evaluation of the saliency formulas; jacobian is (C, n)."""
    jac = np.asarray(jacobian, dtype=np.float64)
    c, n = jac.shape
    out = np.zeros(n)
    for i in range(n):
        jit = jac[target, i]
        rest = sum(jac[j, i] for j in range(c) if j != target)
        if direction == "increase":
            out[i] = 0.0 if (jit < 0 or rest > 0) else jit * abs(rest)
        else:
            out[i] = 0.0 if (jit > 0 or rest < 0) else abs(jit) * rest
    return out


def pairwise_auc(scored):
    """AUC by enumerating every (positive, negative) pair; ties count half."""
    pos = [s for s, adv in scored if adv]
    neg = [s for s, adv in scored if not adv]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else (0.5 if p == q else 0.0)
    return total / (len(pos) * len(neg))
