"""Feature fusion: residual graph convolution and dual cross-attention."""
from dataclasses import dataclass

import numpy as np

from . import layers
from .errors import ShapeMismatch


@dataclass(frozen=True, eq=False)
class FusedFeature:
    f_pl: np.ndarray  # (T, N, H1)
    f_lg: np.ndarray  # (T, N, 2 H1)


def init_rgcn_params(rng, in_width, H1):
    p = {"rgcn.W0": layers.glorot(rng, in_width, H1), "rgcn.W1": layers.glorot(rng, H1, H1)}
    if in_width != H1:
        p["rgcn.skip0"] = layers.glorot(rng, in_width, H1)
    return p


def init_dcam_params(rng, H, H1, d_k):
    return {
        "dcam.Wq": layers.glorot(rng, H1, d_k),
        "dcam.Wk": layers.glorot(rng, H, d_k),
        "dcam.Wv": layers.glorot(rng, H, H1),
    }


def init_ablation_params(rng, in_width, H, H1):
    """Perceptrons standing in for the graph convolution / cross-attention."""
    return {
        "mlp_rgcn.W0": layers.glorot(rng, in_width, H1), "mlp_rgcn.b0": np.zeros(H1),
        "mlp_rgcn.W1": layers.glorot(rng, H1, H1), "mlp_rgcn.b1": np.zeros(H1),
        "mlp_dcam.W0": layers.glorot(rng, H1 + H, 2 * H1), "mlp_dcam.b0": np.zeros(2 * H1),
        "mlp_dcam.W1": layers.glorot(rng, 2 * H1, 2 * H1), "mlp_dcam.b1": np.zeros(2 * H1),
    }


def attention_forward(Q, K, V):
    """``softmax(Q K^T / sqrt(d_k)) V`` for Q (q, d_k), K (m, d_k), V (m, c)."""
    if Q.ndim != 2 or K.ndim != 2 or V.ndim != 2:
        raise ShapeMismatch("attention expects 2-D Q, K, V")
    if Q.shape[1] != K.shape[1] or K.shape[0] != V.shape[0] or K.shape[0] < 1:
        raise ShapeMismatch(f"incompatible shapes Q{Q.shape} K{K.shape} V{V.shape}")
    scale = 1.0 / np.sqrt(Q.shape[1])
    P, _ = layers.softmax_forward((Q @ K.T) * scale)
    return P @ V, (Q, K, V, P, scale)


def attention_backward(dout, cache):
    Q, K, V, P, scale = cache
    dV = P.T @ dout
    dS = layers.softmax_backward(dout @ V.T, P) * scale
    return dS @ K, dS.T @ Q, dV


def attention(Q, K, V):
    return attention_forward(np.asarray(Q, float), np.asarray(K, float), np.asarray(V, float))[0]


def attention_weights(Q, K):
    return layers.softmax_forward((Q @ K.T) / np.sqrt(Q.shape[1]))[0]


def _adj_apply(A, X):
    """Apply the (N, N) operator to each frame of X (T, N, C)."""
    T, N, C = X.shape
    M = A.matrix if hasattr(A, "matrix") else A
    Y = M @ X.transpose(1, 0, 2).reshape(N, T * C)
    return np.asarray(Y).reshape(N, T, C).transpose(1, 0, 2)


def _adj_apply_T(A, X):
    M = A.matrix if hasattr(A, "matrix") else A
    return _adj_apply(M.T, X)


def _concat_inputs(f_st, f_al):
    if f_st.ndim != 3 or f_al.ndim != 3 or f_st.shape[:2] != f_al.shape[:2]:
        raise ShapeMismatch(f"f_st {f_st.shape} and f_al {f_al.shape} disagree")
    return np.concatenate([f_st, f_al], axis=-1)


def rgcn_forward_cached(A, f_st, f_al, params, residual=True):
    O = _concat_inputs(f_st, f_al)
    if A.shape[0] != O.shape[1]:
        raise ShapeMismatch(f"adjacency is {A.shape}, features have N = {O.shape[1]}")
    if params["rgcn.W0"].shape[0] != O.shape[2]:
        raise ShapeMismatch(f"rgcn.W0 expects width {params['rgcn.W0'].shape[0]}, got {O.shape[2]}")
    caches = []
    for layer in (0, 1):
        W = params[f"rgcn.W{layer}"]
        U = O @ W
        Z = _adj_apply(A, U)
        R, mask = layers.relu_forward(Z)
        skip = None
        if residual:
            skip = params.get(f"rgcn.skip{layer}")
            if skip is None and O.shape[2] != W.shape[1]:
                raise ShapeMismatch(f"layer {layer} needs rgcn.skip{layer} for width change")
            R = R + (O @ skip if skip is not None else O)
        caches.append((O, W, mask, skip, layer))
        O = R
    return O, (A, caches, residual, f_st.shape[2])


def rgcn_backward(dout, cache):
    A, caches, residual, L = cache
    grads = {}
    d = dout
    for O, W, mask, skip, layer in reversed(caches):
        dZ = layers.relu_backward(d, mask)
        dU = _adj_apply_T(A, dZ)
        grads[f"rgcn.W{layer}"] = O.reshape(-1, O.shape[2]).T @ dU.reshape(-1, dU.shape[2])
        dO = dU @ W.T
        if residual:
            if skip is not None:
                grads[f"rgcn.skip{layer}"] = O.reshape(-1, O.shape[2]).T @ d.reshape(-1, d.shape[2])
                dO = dO + d @ skip.T
            else:
                dO = dO + d
        d = dO
    return d[..., :L], d[..., L:], grads


def rgcn_forward(A, f_st, f_al, params, residual=True):
    """Two residual graph-convolution layers: ``O' = ReLU(A O W) + skip(O)``.

    Input ``O^0 = f_st (+) f_al``; the skip is the identity when widths match and
    ``params["rgcn.skip<l>"]`` otherwise.  ``residual=False`` gives the plain
    ``ReLU(A O W)`` stack.
    """
    return rgcn_forward_cached(A, f_st, f_al, params, residual)[0]


def _align(H, H1):
    return np.eye(H, H1)


def dcam_forward_cached(f_pl, f_ag, params):
    if f_pl.ndim != 3 or f_ag.ndim != 2 or f_pl.shape[0] != f_ag.shape[0]:
        raise ShapeMismatch(f"f_pl {f_pl.shape} and f_ag {f_ag.shape} disagree")
    T, N, H1 = f_pl.shape
    H = f_ag.shape[1]
    Wq, Wk, Wv = params["dcam.Wq"], params["dcam.Wk"], params["dcam.Wv"]
    if Wq.shape[0] != H1 or Wk.shape[0] != H or Wv.shape != (H, H1) or Wq.shape[1] != Wk.shape[1]:
        raise ShapeMismatch("DCAM weight shapes do not match features")
    Q = f_pl.reshape(T * N, H1) @ Wq
    K = f_ag @ Wk
    V = f_ag @ Wv
    att, acache = attention_forward(Q, K, V)
    att = att.reshape(T, N, H1)
    g = f_ag @ _align(H, H1)
    out = np.concatenate([f_pl + att, g[:, None, :] + att], axis=-1)
    return out, (f_pl, f_ag, Wq, Wk, Wv, acache)


def dcam_backward(dout, cache):
    f_pl, f_ag, Wq, Wk, Wv, acache = cache
    T, N, H1 = f_pl.shape
    H = f_ag.shape[1]
    d1, d2 = dout[..., :H1], dout[..., H1:]
    datt = (d1 + d2).reshape(T * N, H1)
    dQ, dK, dV = attention_backward(datt, acache)
    df_pl = d1 + (dQ @ Wq.T).reshape(T, N, H1)
    df_ag = d2.sum(axis=1) @ _align(H, H1).T + dK @ Wk.T + dV @ Wv.T
    grads = {
        "dcam.Wq": f_pl.reshape(T * N, H1).T @ dQ,
        "dcam.Wk": f_ag.T @ dK,
        "dcam.Wv": f_ag.T @ dV,
    }
    return df_pl, df_ag, grads


def dcam_forward(f_pl, f_ag, params):
    """``(f_pl + Att) (+) (align(f_ag) + Att)`` with one query per (frame, vertex)
    attending over all T global-feature frames."""
    return dcam_forward_cached(f_pl, f_ag, params)[0]


def _mlp_names(prefix):
    return [f"{prefix}.W0", f"{prefix}.W1"], [f"{prefix}.b0", f"{prefix}.b1"]


def fuse_forward(A, f_st, f_al, f_ag, params, use_rgcn=True, use_dcam=True):
    if use_rgcn:
        f_pl, c1 = rgcn_forward_cached(A, f_st, f_al, params)
    else:
        wn, bn = _mlp_names("mlp_rgcn")
        f_pl, c1 = layers.mlp_forward(_concat_inputs(f_st, f_al), [params[k] for k in wn], [params[k] for k in bn])
    if use_dcam:
        f_lg, c2 = dcam_forward_cached(f_pl, f_ag, params)
    else:
        T, N, _ = f_pl.shape
        x = np.concatenate([f_pl, np.broadcast_to(f_ag[:, None, :], (T, N, f_ag.shape[1]))], axis=-1)
        wn, bn = _mlp_names("mlp_dcam")
        f_lg, c2 = layers.mlp_forward(x, [params[k] for k in wn], [params[k] for k in bn])
    return FusedFeature(f_pl, f_lg), (c1, c2, use_rgcn, use_dcam, f_st.shape[2], f_pl.shape[2])


def fuse_backward(df_lg, cache):
    """Gradients w.r.t. f_st, f_al, f_ag and the parameters used."""
    c1, c2, use_rgcn, use_dcam, L, H1 = cache
    grads = {}
    if use_dcam:
        df_pl, df_ag, g = dcam_backward(df_lg, c2)
    else:
        dx, dWs, dbs = layers.mlp_backward(df_lg, c2)
        g = {"mlp_dcam.W0": dWs[0], "mlp_dcam.W1": dWs[1], "mlp_dcam.b0": dbs[0], "mlp_dcam.b1": dbs[1]}
        df_pl, df_ag = dx[..., :H1], dx[..., H1:].sum(axis=1)
    grads.update(g)
    if use_rgcn:
        df_st, df_al, g = rgcn_backward(df_pl, c1)
    else:
        dx, dWs, dbs = layers.mlp_backward(df_pl, c1)
        g = {"mlp_rgcn.W0": dWs[0], "mlp_rgcn.W1": dWs[1], "mlp_rgcn.b0": dbs[0], "mlp_rgcn.b1": dbs[1]}
        df_st, df_al = dx[..., :L], dx[..., L:]
    grads.update(g)
    return df_st, df_al, df_ag, grads


def fuse(A, f_st, f_al, f_ag, params, use_rgcn=True, use_dcam=True):
    """RGCN then DCAM, with perceptron stand-ins when a flag is off."""
    return fuse_forward(A, f_st, f_al, f_ag, params, use_rgcn, use_dcam)[0]
