"""Differentiable numpy primitives.

Every ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
maps the upstream gradient and the cache to gradients of the inputs and
parameters, so pipelines compose by running backwards in reverse order.
"""
import numpy as np


def glorot(rng, fan_in, fan_out, shape=None):
    """Uniform in +-sqrt(6 / (fan_in + fan_out))."""
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape or (fan_in, fan_out))


def linear_forward(x, W, b=None):
    # one 2-D GEMM over all leading axes
    out = (x.reshape(-1, x.shape[-1]) @ W).reshape(x.shape[:-1] + (W.shape[1],))
    if b is not None:
        out += b
    return out, (x, W, b is not None)


def linear_backward(dout, cache):
    x, W, has_b = cache
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    dx = (d2 @ W.T).reshape(x.shape)
    dW = x2.T @ d2
    db = d2.sum(axis=0) if has_b else None
    return dx, dW, db


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax_forward(x):
    """Softmax over the last axis."""
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    return p, p


def softmax_backward(dout, p):
    return p * (dout - np.sum(dout * p, axis=-1, keepdims=True))


def mlp_forward(x, weights, biases):
    """Stack of linear layers with ReLU between them and a linear output."""
    caches = []
    h = x
    for i, (W, b) in enumerate(zip(weights, biases)):
        h, lc = linear_forward(h, W, b)
        rc = None
        if i < len(weights) - 1:
            h, rc = relu_forward(h)
        caches.append((lc, rc))
    return h, caches


def mlp_backward(dout, caches):
    dWs, dbs = [], []
    d = dout
    for lc, rc in reversed(caches):
        if rc is not None:
            d = relu_backward(d, rc)
        d, dW, db = linear_backward(d, lc)
        dWs.append(dW)
        dbs.append(db)
    return d, dWs[::-1], dbs[::-1]


def lstm_forward(x, Wx, Wh, b):
    """Single-layer LSTM over x (T, D) from a zero state; gates ordered i, f, g, o.

    Returns hidden states (T, H).
    """
    T = x.shape[0]
    H = Wh.shape[0]
    xw = x @ Wx + b
    h = np.zeros(H)
    c = np.zeros(H)
    hs = np.zeros((T, H))
    steps = []
    for t in range(T):
        a = xw[t] + h @ Wh
        i = sigmoid(a[:H])
        f = sigmoid(a[H:2 * H])
        g = np.tanh(a[2 * H:3 * H])
        o = sigmoid(a[3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[t] = h
        steps.append((i, f, g, o, c_prev, h_prev, tc))
    return hs, (x, Wx, Wh, steps)


def lstm_backward(dhs, cache):
    x, Wx, Wh, steps = cache
    T = x.shape[0]
    H = Wh.shape[0]
    da_all = np.zeros((T, 4 * H))
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        i, f, g, o, c_prev, h_prev, tc = steps[t]
        dh = dhs[t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc**2)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        da = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g**2), do * o * (1 - o)])
        da_all[t] = da
        dWh += np.outer(h_prev, da)
        dh_next = Wh @ da
    dx = da_all @ Wx.T
    dWx = x.T @ da_all
    db = da_all.sum(axis=0)
    return dx, dWx, dWh, db


def conv1d_forward(x, W, b):
    """Temporal convolution, stride 1, zero padding keeping length T.

    x (T, D), W (k, D, H), b (H,) -> (T, H); output t sees inputs
    t - k//2 ... t + (k-1)//2 in kernel order.
    """
    T = x.shape[0]
    k = W.shape[0]
    left = k // 2
    xp = np.pad(x, ((left, k - 1 - left), (0, 0)))
    cols = np.stack([xp[j:j + T] for j in range(k)], axis=1)  # (T, k, D)
    out = np.einsum("tkd,kdh->th", cols, W) + b
    return out, (cols, W, left)


def conv1d_backward(dout, cache):
    cols, W, left = cache
    T, k, _ = cols.shape
    dW = np.einsum("tkd,th->kdh", cols, dout)
    db = dout.sum(axis=0)
    dcols = np.einsum("th,kdh->tkd", dout, W)
    dxp = np.zeros((T + k - 1, cols.shape[2]))
    for j in range(k):
        dxp[j:j + T] += dcols[:, j]
    return dxp[left:left + T], dW, db
