"""Multi-resolution synthesis: feature interpolation, displacement decoding and
the end-to-end forward/backward pass."""
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse

from . import encoding, fusion, layers
from .errors import ShapeMismatch
from .featio import load_container, save_container
from .mesh import Mesh, build_adjacency, save_obj
from .uv import barycentric_interpolate

N_DECODER_LAYERS = 5


@dataclass(frozen=True)
class ModelConfig:
    """Network sizes and ablation switches."""

    D: int = 768
    H: int = 32
    H1: int = 32
    L: int = 16
    d_k: int = 32
    h: int = 256
    kernel: int = 3
    use_ste: bool = True
    use_rgcn: bool = True
    use_dcam: bool = True

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


def init_decoder_params(rng, in_width, h):
    widths = [in_width] + [h] * (N_DECODER_LAYERS - 1) + [3]
    p = {}
    for i in range(N_DECODER_LAYERS):
        p[f"dec.W{i}"] = layers.glorot(rng, widths[i], widths[i + 1])
        p[f"dec.b{i}"] = np.zeros(widths[i + 1])
    return p


def init_params(config, seed=0):
    """All trainable arrays keyed by canonical name, Glorot-uniform, zero biases."""
    rng = np.random.default_rng(seed)
    c = config
    params = {"ste.w": np.array(np.pi)}
    params.update(encoding.init_encoder_params(rng, c.D, c.H, c.kernel))
    params.update(fusion.init_rgcn_params(rng, c.L + c.H, c.H1))
    params.update(fusion.init_dcam_params(rng, c.H, c.H1, c.d_k))
    params.update(fusion.init_ablation_params(rng, c.L + c.H, c.H, c.H1))
    params.update(init_decoder_params(rng, 2 * c.H1, c.h))
    return params


def trainable_names(params, config):
    """Parameters the configured pipeline actually uses."""
    names = []
    for k in params:
        if k.startswith("mlp_rgcn.") and config.use_rgcn:
            continue
        if k.startswith("rgcn.") and not config.use_rgcn:
            continue
        if k.startswith("mlp_dcam.") and config.use_dcam:
            continue
        if k.startswith("dcam.") and not config.use_dcam:
            continue
        if k == "ste.w" and not config.use_ste:
            continue
        names.append(k)
    return names


def _decoder_lists(params):
    return ([params[f"dec.W{i}"] for i in range(N_DECODER_LAYERS)],
            [params[f"dec.b{i}"] for i in range(N_DECODER_LAYERS)])


def decode_forward(features, params):
    Ws, bs = _decoder_lists(params)
    if features.shape[-1] != Ws[0].shape[0]:
        raise ShapeMismatch(f"decoder expects width {Ws[0].shape[0]}, got {features.shape[-1]}")
    return layers.mlp_forward(features, Ws, bs)


def decode_backward(dout, cache):
    dx, dWs, dbs = layers.mlp_backward(dout, cache)
    g = {f"dec.W{i}": dWs[i] for i in range(N_DECODER_LAYERS)}
    g.update({f"dec.b{i}": dbs[i] for i in range(N_DECODER_LAYERS)})
    return dx, g


def decode_displacements(features, params):
    """Five fully connected layers (ReLU hidden, linear output) -> (..., 3)."""
    return decode_forward(features, params)[0]


def sample_template_positions(samples, template):
    """Template positions at the samples (barycentric blend of the face corners)."""
    return samples.interpolate(template.faces, template.vertices)


def interpolate_features(samples, faces, f_lg):
    """Per frame and sample, ``b1 z1 + b2 z2 + b3 z3`` over the incident vertices."""
    if f_lg.ndim != 3:
        raise ShapeMismatch(f"f_lg must be (T, N, C), got {f_lg.shape}")
    if faces.max() >= f_lg.shape[1]:
        raise ShapeMismatch(f"f_lg has N = {f_lg.shape[1]} but faces reference {faces.max() + 1} vertices")
    return barycentric_interpolate(faces, samples.face_index, samples.bary, f_lg)


def interpolation_matrix(samples, faces, n_vertices):
    """Sparse (M, N) matrix with the barycentric weights of each sample."""
    tri = faces[samples.face_index]
    rows = np.repeat(np.arange(samples.M), 3)
    return sparse.csr_matrix((samples.bary.ravel(), (rows, tri.ravel())), shape=(samples.M, n_vertices))


@dataclass(eq=False)
class SequenceContext:
    """Everything the pipeline needs that is fixed for a template and sample set."""

    template: Mesh
    uv: np.ndarray
    samples: object
    adjacency: object = None
    base_positions: np.ndarray = None
    interp: sparse.csr_matrix = None

    def __post_init__(self):
        if self.adjacency is None:
            self.adjacency = build_adjacency(self.template)
        if self.base_positions is None:
            self.base_positions = sample_template_positions(self.samples, self.template)
        if self.interp is None:
            self.interp = interpolation_matrix(self.samples, self.template.faces, self.template.n_vertices)


def forward(params, config, ctx, latent):
    """Predicted positions (T, M, 3) from latent audio (T, D), plus a cache."""
    T = latent.shape[0]
    N = ctx.template.n_vertices
    f_st, ste_cache = encoding.ste_sequence_forward(ctx.uv, params["ste.w"], T, config.L, config.use_ste)
    f_ag, g_cache = encoding.encode_global_forward(latent, params)
    al, l_cache = encoding.encode_local_frames_forward(latent, params)
    f_al = np.broadcast_to(al[:, None, :], (T, N, al.shape[1]))
    fused, f_cache = fusion.fuse_forward(ctx.adjacency, f_st, f_al, f_ag, params, config.use_rgcn, config.use_dcam)
    feats = interpolate_features(ctx.samples, ctx.template.faces, fused.f_lg)
    disp, d_cache = decode_forward(feats, params)
    pred = ctx.base_positions[None] + disp
    return pred, (ste_cache, g_cache, l_cache, f_cache, d_cache, ctx, T)


def backward(dpred, cache):
    """Gradients of a scalar loss w.r.t. every parameter used in :func:`forward`.

    Also returns the gradient w.r.t. the latent audio under key ``"latent"``.
    """
    ste_cache, g_cache, l_cache, f_cache, d_cache, ctx, T = cache
    dfeats, grads = decode_backward(dpred, d_cache)
    M, N = ctx.interp.shape
    C = dfeats.shape[-1]
    df_lg = (ctx.interp.T @ dfeats.transpose(1, 0, 2).reshape(M, T * C)).reshape(N, T, C).transpose(1, 0, 2)
    df_st, df_al, df_ag, g = fusion.fuse_backward(np.ascontiguousarray(df_lg), f_cache)
    grads.update(g)
    dlat_l, g = encoding.encode_local_frames_backward(df_al.sum(axis=1), l_cache)
    grads.update(g)
    dlat_g, g = encoding.encode_global_backward(df_ag, g_cache)
    grads.update(g)
    grads["ste.w"] = np.array(encoding.ste_sequence_backward(df_st, ste_cache))
    grads["latent"] = dlat_l + dlat_g
    return grads


@dataclass(eq=False)
class AnimationSequence:
    """T frames of P vertex positions over a fixed triangle topology."""

    frames: np.ndarray
    topology: np.ndarray
    frame_rate: float = 30.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.topology = np.asarray(self.topology, dtype=np.int64).reshape(-1, 3)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3:
            raise ShapeMismatch(f"frames must be (T, P, 3), got {self.frames.shape}")

    @property
    def T(self):
        return self.frames.shape[0]

    def save(self, path):
        save_container(path, {"frames": self.frames, "topology": self.topology},
                       meta={"frame_rate": self.frame_rate, **self.meta})

    @classmethod
    def load(cls, path):
        arrays, meta = load_container(path)
        rate = meta.pop("frame_rate", 30.0)
        return cls(arrays["frames"], arrays["topology"], rate, meta)

    def export_obj_dir(self, directory):
        """One ``frame_%05d.obj`` per frame plus ``manifest.json``."""
        os.makedirs(directory, exist_ok=True)
        names = []
        for t, pos in enumerate(self.frames):
            name = f"frame_{t:05d}.obj"
            save_obj(Mesh(pos, self.topology), os.path.join(directory, name))
            names.append(name)
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump({"frame_rate": self.frame_rate, "count": self.T, "frames": names}, fh, indent=1)
            fh.write("\n")


def synthesize_sequence(template, atlas, samples, audio, params, T, config, frame_rate=30.0, ctx=None):
    """Animate ``template`` from ``audio`` for T frames at the sample resolution."""
    if ctx is None:
        ctx = SequenceContext(template, atlas.uv, samples)
    latent = encoding.resample_time(audio, T)
    pred, _ = forward(params, config, ctx, latent)
    return AnimationSequence(pred, samples.out_faces, frame_rate)
