"""Audio feature ingestion, audio encoders and the spatio-temporal vertex encoding."""
from dataclasses import dataclass

import numpy as np

from . import layers
from .errors import DomainError, FormatError, NonFiniteValue, ShapeMismatch
from .featio import load_container, save_container


@dataclass(frozen=True, eq=False)
class AudioFeatureSequence:
    """Latent speech features (T_a, D) at ``source_rate`` frames per second."""

    frames: np.ndarray
    source_rate: float = 50.0

    def __post_init__(self):
        fr = np.array(self.frames, dtype=np.float64)
        if fr.ndim != 2 or fr.shape[0] < 1 or fr.shape[1] < 1:
            raise ShapeMismatch(f"audio features must be (T_a >= 1, D >= 1), got {fr.shape}")
        if not np.all(np.isfinite(fr)):
            raise NonFiniteValue("audio features contain NaN or Inf")
        fr.flags.writeable = False
        object.__setattr__(self, "frames", fr)

    @property
    def T(self):
        return self.frames.shape[0]

    @property
    def D(self):
        return self.frames.shape[1]


def save_features(seq, path):
    save_container(path, {"features": seq.frames}, meta={"source_rate": seq.source_rate})


def load_features(path):
    arrays, meta = load_container(path)
    if "features" not in arrays:
        raise FormatError(f"{path}: no 'features' array")
    fr = arrays["features"]
    if fr.ndim != 2:
        raise FormatError(f"{path}: 'features' must be 2-D, got shape {fr.shape}")
    if not np.all(np.isfinite(fr)):
        raise NonFiniteValue(f"{path}: features contain NaN or Inf")
    return AudioFeatureSequence(fr, float(meta.get("source_rate", 50.0)))


def synth_features(seed, T_a, D, source_rate=50.0):
    """Seeded stand-in for pretrained speech features.

    ``frames[t, d] = sin(2 pi f_d t / T_a + phi_d) + 0.1 n[t, d]`` with
    frequencies f_d (cycles per sequence), phases phi_d and standard normal
    noise n all drawn from ``default_rng(seed)`` in that order.
    """
    rng = np.random.default_rng(seed)
    freq = rng.uniform(1.0, max(1.0, T_a / 8.0), size=D)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=D)
    noise = rng.standard_normal((T_a, D))
    t = np.arange(T_a)[:, None]
    frames = np.sin(2.0 * np.pi * freq * t / T_a + phase) + 0.1 * noise
    return AudioFeatureSequence(frames, source_rate)


def resample_time(seq, target_T):
    """Linear interpolation in time with both endpoints aligned."""
    frames = seq.frames if isinstance(seq, AudioFeatureSequence) else np.asarray(seq, dtype=np.float64)
    Ta = frames.shape[0]
    if target_T < 1:
        raise ValueError("target_T must be >= 1")
    if target_T == 1:
        return frames[:1].copy()
    pos = np.linspace(0.0, Ta - 1, target_T)
    i0 = np.floor(pos).astype(np.int64)
    i1 = np.minimum(i0 + 1, Ta - 1)
    frac = (pos - i0)[:, None]
    # a + f (b - a) keeps time-constant inputs exact
    return frames[i0] + frac * (frames[i1] - frames[i0])


def _ste_angles(uv_points, L):
    uv = np.asarray(uv_points, dtype=np.float64).reshape(-1, 2)
    if np.any(uv < 0.0) or np.any(uv > 1.0) or not np.all(np.isfinite(uv)):
        raise DomainError("STE expects uv coordinates in [0, 1]^2")
    if L < 2 or L % 2:
        raise ValueError(f"L must be even and >= 2, got {L}")
    ac = np.arccos(2.0 * uv - 1.0)  # (P, 2)
    i = np.arange(1, L + 1)
    # odd i (1-based) use u, even i use v
    coord = ac[:, (i - 1) % 2]  # (P, L)
    return i * coord


def ste_encode(uv_points, w, t, T, L, use_time=True):
    """Spatio-temporal encoding ``cos(i * arccos(s) + w t / T)`` -> (P, L)."""
    if not 0 <= t < T:
        raise DomainError(f"frame index {t} outside [0, {T})")
    phase = float(w) * t / T if use_time else 0.0
    return np.cos(_ste_angles(uv_points, L) + phase)


def ste_sequence_forward(uv_points, w, T, L, use_time=True):
    """STE for every frame: (T, P, L), plus cache for the gradient in ``w``."""
    base = _ste_angles(uv_points, L)
    tt = np.arange(T) / T
    phase = (float(w) * tt if use_time else np.zeros(T))[:, None, None]
    arg = base[None] + phase
    return np.cos(arg), (arg, tt, use_time)


def ste_sequence_backward(dout, cache):
    arg, tt, use_time = cache
    if not use_time:
        return 0.0
    return float(np.sum(-np.sin(arg) * dout * tt[:, None, None]))


def init_encoder_params(rng, D, H, k=3):
    return {
        "enc.lstm.Wx": layers.glorot(rng, D, 4 * H),
        "enc.lstm.Wh": layers.glorot(rng, H, 4 * H),
        "enc.lstm.b": np.zeros(4 * H),
        "enc.conv.W": layers.glorot(rng, k * D, H, shape=(k, D, H)),
        "enc.conv.b": np.zeros(H),
        "enc.mlp.W0": layers.glorot(rng, H, H),
        "enc.mlp.b0": np.zeros(H),
        "enc.mlp.W1": layers.glorot(rng, H, H),
        "enc.mlp.b1": np.zeros(H),
    }


def _check_latent(latent, params):
    D = params["enc.lstm.Wx"].shape[0]
    if latent.ndim != 2 or latent.shape[1] != D:
        raise ShapeMismatch(f"latent features must be (T, {D}), got {latent.shape}")


def encode_global_forward(latent, params):
    _check_latent(latent, params)
    return layers.lstm_forward(latent, params["enc.lstm.Wx"], params["enc.lstm.Wh"], params["enc.lstm.b"])


def encode_global_backward(dout, cache):
    dx, dWx, dWh, db = layers.lstm_backward(dout, cache)
    return dx, {"enc.lstm.Wx": dWx, "enc.lstm.Wh": dWh, "enc.lstm.b": db}


def encode_global(latent, params):
    """Global audio feature f_ag (T, H) from a causal LSTM pass."""
    return encode_global_forward(latent, params)[0]


def encode_local_frames_forward(latent, params):
    """Per-frame local feature (T, H): conv -> ReLU -> two-layer perceptron."""
    _check_latent(latent, params)
    if params["enc.conv.W"].shape[1] != latent.shape[1]:
        raise ShapeMismatch("conv kernel width does not match D")
    h, cc = layers.conv1d_forward(latent, params["enc.conv.W"], params["enc.conv.b"])
    h, rc = layers.relu_forward(h)
    out, mc = layers.mlp_forward(h, [params["enc.mlp.W0"], params["enc.mlp.W1"]],
                                 [params["enc.mlp.b0"], params["enc.mlp.b1"]])
    return out, (cc, rc, mc)


def encode_local_frames_backward(dout, cache):
    cc, rc, mc = cache
    dh, (dW0, dW1), (db0, db1) = layers.mlp_backward(dout, mc)
    dh = layers.relu_backward(dh, rc)
    dx, dWc, dbc = layers.conv1d_backward(dh, cc)
    return dx, {"enc.conv.W": dWc, "enc.conv.b": dbc, "enc.mlp.W0": dW0, "enc.mlp.b0": db0,
                "enc.mlp.W1": dW1, "enc.mlp.b1": db1}


def encode_local(latent, params, N):
    """Local audio feature f_al (T, N, H): the per-frame vector broadcast over vertices."""
    if N < 1:
        raise ShapeMismatch("N must be >= 1")
    frames, _ = encode_local_frames_forward(latent, params)
    return np.broadcast_to(frames[:, None, :], (frames.shape[0], N, frames.shape[1])).copy()
