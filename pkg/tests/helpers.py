"""Independent oracles and generators shared by the test modules.

Everything here recomputes expected values by brute force (explicit loops,
enumeration, sampling, finite differences) so the implementations under test
are never checked against themselves.
"""

import numpy as np

from exitstream import BINARY, MULTICLASS, ProbTrace


def brute_conv3d(clip, spec):
    """Direct loop convolution over the explicitly padded sequence (float64)."""
    x = np.asarray(clip, dtype=np.float64)
    ph, pw = spec.spatial_padding
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    if spec.front_replicate:
        xp = np.concatenate([np.repeat(xp[:, :1], spec.front_replicate, axis=1), xp], axis=1)
    kt, kh, kw = spec.kernel
    st, sh, sw = spec.stride
    _, tp, hp, wp = xp.shape
    t_out = (tp - kt) // st + 1
    h_out = (hp - kh) // sh + 1
    w_out = (wp - kw) // sw + 1
    out = np.zeros((spec.out_channels, t_out, h_out, w_out))
    w = np.asarray(spec.weights, dtype=np.float64)
    for o in range(spec.out_channels):
        for j in range(t_out):
            for y in range(h_out):
                for z in range(w_out):
                    acc = 0.0
                    for i in range(spec.in_channels):
                        for dt in range(kt):
                            for dy in range(kh):
                                for dx in range(kw):
                                    acc += (
                                        w[o, i, dt, dy, dx]
                                        * xp[i, j * st + dt, y * sh + dy, z * sw + dx]
                                    )
                    out[o, j, y, z] = acc
    if spec.bias is not None:
        out += np.asarray(spec.bias, dtype=np.float64)[:, None, None, None]
    return out


def brute_pool3d(clip, spec):
    x = np.asarray(clip, dtype=np.float64)
    if spec.front_replicate:
        x = np.concatenate([np.repeat(x[:, :1], spec.front_replicate, axis=1), x], axis=1)
    kt, kh, kw = spec.kernel
    st, sh, sw = spec.stride
    c, tp, h, w = x.shape
    t_out = (tp - kt) // st + 1
    h_out = (h - kh) // sh + 1
    w_out = (w - kw) // sw + 1
    out = np.zeros((c, t_out, h_out, w_out))
    for i in range(c):
        for j in range(t_out):
            for y in range(h_out):
                for z in range(w_out):
                    window = x[i, j * st : j * st + kt, y * sh : y * sh + kh, z * sw : z * sw + kw]
                    out[i, j, y, z] = window.max() if spec.mode == "max" else window.mean()
    return out


def mc_exit_time(trace, rng, samples=10**5):
    """Stratified Monte-Carlo estimate of the expected exit step.

    Draws one threshold uniformly inside each of `samples` equal strata of
    (0, max trace], exits at the first crossing, and averages. Stratification
    keeps the estimator unbiased while shrinking its error to O(1/samples),
    which a plain i.i.d. scheme cannot reach at this sample count.
    """
    values = np.asarray(trace, dtype=np.float64)
    m = np.maximum.accumulate(values)
    peak = m[-1]
    if peak <= 0:
        return float(values.shape[0] - 1)
    taus = peak * (np.arange(samples) + rng.uniform(0.0, 1.0, samples)) / samples
    first = np.searchsorted(m, taus, side="left")
    return float(first.mean())


def fd_gradient(loss_fn, values, h=1e-5):
    """Central finite differences of loss_fn over every entry of values."""
    values = np.asarray(values, dtype=np.float64)
    grad = np.zeros_like(values)
    it = np.nditer(values, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        hi = values.copy()
        lo = values.copy()
        hi[idx] += h
        lo[idx] -= h
        grad[idx] = (loss_fn(hi) - loss_fn(lo)) / (2 * h)
    return grad


def rel_close(a, b, rtol, atol=0.0, zero_tol=1e-12):
    """Elementwise relative closeness with a shared zero short-circuit."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.abs(a), np.abs(b))
    both_zero = scale <= zero_tol
    return bool(np.all(both_zero | (np.abs(a - b) <= atol + rtol * scale)))


def nondegenerate_binary_trace(rng, max_len=16, gap=1e-3):
    """Random trace whose values are pairwise separated; safe for FD checks."""
    while True:
        n = int(rng.integers(2, max_len + 1))
        v = rng.uniform(0.05, 0.95, n)
        diffs = np.abs(v[:, None] - v[None, :]) + np.eye(n)
        if diffs.min() > gap:
            return v


def nondegenerate_multiclass_trace(rng, classes=3, max_len=12, gap=1e-3):
    """Multiclass ProbTrace whose per-class values are pairwise separated."""
    while True:
        n = int(rng.integers(2, max_len + 1))
        logits = rng.normal(0.0, 1.2, (n, classes))
        z = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        ok = probs.min() > 0.02
        for c in range(classes):
            col = probs[:, c]
            diffs = np.abs(col[:, None] - col[None, :]) + np.eye(n)
            ok = ok and diffs.min() > gap
        if ok:
            return ProbTrace(MULTICLASS, probs, logits)


def brute_pareto(points):
    """O(N^2) dominance filter; duplicates collapsed, sorted by error rate."""
    uniq = sorted({(float(e), float(n)) for e, n in points})
    front = []
    for p in uniq:
        dominated = False
        for q in uniq:
            if q == p:
                continue
            if q[0] <= p[0] and q[1] <= p[1] and (q[0] < p[0] or q[1] < p[1]):
                dominated = True
                break
        if not dominated:
            front.append(p)
    return front


def make_binary_trace(values):
    """Wrap raw probabilities as a binary ProbTrace (logits = logit(p))."""
    p = np.asarray(values, dtype=np.float64)
    return ProbTrace(BINARY, p, np.log(p / (1 - p)))
