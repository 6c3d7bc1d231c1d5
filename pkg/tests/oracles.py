"""Slow reference implementations used as test oracles."""
import numpy as np


def conv2d_loops(x, w, b):
    c_out, c_in, k, _ = w.shape
    _, h, wd = x.shape
    half = k // 2
    out = np.zeros((c_out, h, wd))
    for c in range(c_out):
        for y in range(h):
            for xx in range(wd):
                acc = b[c]
                for cp in range(c_in):
                    for dy in range(k):
                        for dx in range(k):
                            yy, xs = y + dy - half, xx + dx - half
                            if 0 <= yy < h and 0 <= xs < wd:
                                acc += w[c, cp, dy, dx] * x[cp, yy, xs]
                out[c, y, xx] = acc
    return out


def conv1d_loops(x, w, b):
    c_out, c_in, k = w.shape
    n = x.shape[1]
    half = k // 2
    out = np.zeros((c_out, n))
    for c in range(c_out):
        for i in range(n):
            acc = b[c]
            for cp in range(c_in):
                for d in range(k):
                    j = i + d - half
                    if 0 <= j < n:
                        acc += w[c, cp, d] * x[cp, j]
            out[c, i] = acc
    return out




def relu_margin(net, x, directions):
    """Largest step along ``directions`` (one array per parameter) that crosses no ReLU kink,
    estimated to first order from the layer pre-activations."""
    from deblur import difftensor as dt

    conv = dt.conv2d if net.kind == "spatial" else dt.conv1d
    h, dh = np.asarray(x, dtype=np.float64), np.zeros_like(np.asarray(x, dtype=np.float64))
    margin = np.inf
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        dw, db = directions[2 * l], directions[2 * l + 1]
        pre = conv(dt.tensor(h), dt.tensor(w), dt.tensor(b)).data
        dpre = (conv(dt.tensor(dh), dt.tensor(w), dt.tensor(np.zeros_like(b))).data
                + conv(dt.tensor(h), dt.tensor(dw), dt.tensor(db)).data)
        if l == len(net.weights) - 1:
            break
        with np.errstate(divide="ignore"):
            margin = min(margin, float(np.min(np.abs(pre) / np.abs(dpre))))
        h, dh = np.maximum(pre, 0), np.where(pre > 0, dpre, 0.0)
    return margin
