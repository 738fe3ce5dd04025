"""Registered finite-difference checks on toy shapes (N <= 12, T <= 4, M <= 20)."""
import numpy as np

from . import encoding, fusion, losses, synthesis
from .gradcheck import grad_check
from .mesh import Mesh, build_adjacency
from .sampler import draw_samples, init_distribution
from .shapes import grid_mesh
from .synthesis import ModelConfig, SequenceContext
from .uv import conformal_parameterize

TOY = ModelConfig(D=5, H=4, H1=4, L=4, d_k=3, h=8, kernel=3)
TOY_T = 4
TOY_M = 16


def toy_mesh():
    """4 x 3 grid (12 vertices) with a gentle bump so it is not planar."""
    g = grid_mesh(4, 3, size=(1.0, 0.8))
    v = g.vertices.copy()
    v[:, 2] = 0.2 * np.sin(2.0 * v[:, 0]) * np.cos(1.5 * v[:, 1])
    return Mesh(v, g.faces)


def _toy_context(seed=0):
    mesh = toy_mesh()
    atlas = conformal_parameterize(mesh)
    dist = init_distribution(mesh, atlas, None, alpha=0.0)
    samples = draw_samples(dist, atlas, TOY_M, seed, pin_boundary=True)
    return SequenceContext(mesh, atlas.uv, samples)


def _projected(rng, shape):
    return rng.standard_normal(shape)


def check_encode_global(eps=1e-5):
    rng = np.random.default_rng(1)
    P = {k: v for k, v in encoding.init_encoder_params(rng, TOY.D, TOY.H).items() if k.startswith("enc.lstm")}
    P["enc.lstm.b"] = 0.1 * rng.standard_normal(P["enc.lstm.b"].shape)
    P["latent"] = rng.standard_normal((TOY_T, TOY.D))
    R = _projected(rng, (TOY_T, TOY.H))

    def fn(P):
        out, cache = encoding.encode_global_forward(P["latent"], P)
        dx, g = encoding.encode_global_backward(R, cache)
        g["latent"] = dx
        return float(np.sum(R * out)), g

    return grad_check(fn, P, eps)


def check_encode_local(eps=1e-5):
    rng = np.random.default_rng(2)
    P = {k: v for k, v in encoding.init_encoder_params(rng, TOY.D, TOY.H).items() if not k.startswith("enc.lstm")}
    for k in ("enc.conv.b", "enc.mlp.b0", "enc.mlp.b1"):
        P[k] = 0.1 * rng.standard_normal(P[k].shape)
    P["enc.lstm.Wx"] = np.zeros((TOY.D, 4 * TOY.H))
    P["latent"] = rng.standard_normal((TOY_T, TOY.D))
    N = 3
    R = _projected(rng, (TOY_T, N, TOY.H))

    def fn(P):
        out, cache = encoding.encode_local_frames_forward(P["latent"], P)
        full = np.broadcast_to(out[:, None], (TOY_T, N, TOY.H))
        dx, g = encoding.encode_local_frames_backward(R.sum(axis=1), cache)
        g["latent"] = dx
        return float(np.sum(R * full)), g

    return grad_check(fn, P, eps, names=["enc.conv.W", "enc.conv.b", "enc.mlp.W0", "enc.mlp.b0",
                                         "enc.mlp.W1", "enc.mlp.b1", "latent"])


def check_ste(eps=1e-5):
    rng = np.random.default_rng(3)
    uv = rng.uniform(0.05, 0.95, size=(7, 2))
    P = {"ste.w": np.array(np.pi)}
    R = _projected(rng, (TOY_T, 7, TOY.L))

    def fn(P):
        out, cache = encoding.ste_sequence_forward(uv, P["ste.w"], TOY_T, TOY.L)
        return float(np.sum(R * out)), {"ste.w": np.array(encoding.ste_sequence_backward(R, cache))}

    return grad_check(fn, P, eps)


def check_attention(eps=1e-5):
    rng = np.random.default_rng(4)
    P = {"Q": rng.standard_normal((5, 3)), "K": rng.standard_normal((4, 3)), "V": rng.standard_normal((4, 2))}
    R = _projected(rng, (5, 2))

    def fn(P):
        out, cache = fusion.attention_forward(P["Q"], P["K"], P["V"])
        dQ, dK, dV = fusion.attention_backward(R, cache)
        return float(np.sum(R * out)), {"Q": dQ, "K": dK, "V": dV}

    return grad_check(fn, P, eps)


def check_rgcn(eps=1e-5):
    rng = np.random.default_rng(5)
    mesh = toy_mesh()
    A = build_adjacency(mesh)
    N = mesh.n_vertices
    P = fusion.init_rgcn_params(rng, TOY.L + TOY.H, TOY.H1 + 1)
    P["f_st"] = rng.standard_normal((TOY_T, N, TOY.L))
    P["f_al"] = rng.standard_normal((TOY_T, N, TOY.H))
    R = _projected(rng, (TOY_T, N, TOY.H1 + 1))

    def fn(P):
        out, cache = fusion.rgcn_forward_cached(A, P["f_st"], P["f_al"], P)
        dst, dal, g = fusion.rgcn_backward(R, cache)
        g["f_st"], g["f_al"] = dst, dal
        return float(np.sum(R * out)), g

    return grad_check(fn, P, eps)


def check_dcam(eps=1e-5):
    rng = np.random.default_rng(6)
    N, H, H1 = 5, TOY.H + 1, TOY.H1
    P = fusion.init_dcam_params(rng, H, H1, TOY.d_k)
    P["f_pl"] = rng.standard_normal((TOY_T, N, H1))
    P["f_ag"] = rng.standard_normal((TOY_T, H))
    R = _projected(rng, (TOY_T, N, 2 * H1))

    def fn(P):
        out, cache = fusion.dcam_forward_cached(P["f_pl"], P["f_ag"], P)
        dpl, dag, g = fusion.dcam_backward(R, cache)
        g["f_pl"], g["f_ag"] = dpl, dag
        return float(np.sum(R * out)), g

    return grad_check(fn, P, eps)


def _check_fuse(use_rgcn, use_dcam, seed, eps):
    rng = np.random.default_rng(seed)
    mesh = toy_mesh()
    A = build_adjacency(mesh)
    N = mesh.n_vertices
    P = {}
    P.update(fusion.init_rgcn_params(rng, TOY.L + TOY.H, TOY.H1))
    P.update(fusion.init_dcam_params(rng, TOY.H, TOY.H1, TOY.d_k))
    P.update(fusion.init_ablation_params(rng, TOY.L + TOY.H, TOY.H, TOY.H1))
    for k in P:
        if ".b" in k:
            P[k] = 0.1 * rng.standard_normal(P[k].shape)
    P["f_st"] = rng.standard_normal((TOY_T, N, TOY.L))
    P["f_al"] = rng.standard_normal((TOY_T, N, TOY.H))
    P["f_ag"] = rng.standard_normal((TOY_T, TOY.H))
    R = _projected(rng, (TOY_T, N, 2 * TOY.H1))

    def fn(P):
        fused, cache = fusion.fuse_forward(A, P["f_st"], P["f_al"], P["f_ag"], P, use_rgcn, use_dcam)
        dst, dal, dag, g = fusion.fuse_backward(R, cache)
        g["f_st"], g["f_al"], g["f_ag"] = dst, dal, dag
        return float(np.sum(R * fused.f_lg)), g

    return grad_check(fn, P, eps)


def check_fuse(eps=1e-5):
    return _check_fuse(True, True, 7, eps)


def check_fuse_no_rgcn(eps=1e-5):
    return _check_fuse(False, True, 8, eps)


def check_fuse_no_dcam(eps=1e-5):
    return _check_fuse(True, False, 9, eps)


def check_decoder(eps=1e-5):
    rng = np.random.default_rng(10)
    P = synthesis.init_decoder_params(rng, 2 * TOY.H1, TOY.h)
    for k in P:
        if ".b" in k:
            P[k] = 0.1 * rng.standard_normal(P[k].shape)
    P["features"] = rng.standard_normal((TOY_T, TOY_M, 2 * TOY.H1))
    R = _projected(rng, (TOY_T, TOY_M, 3))

    def fn(P):
        out, cache = synthesis.decode_forward(P["features"], P)
        dx, g = synthesis.decode_backward(R, cache)
        g["features"] = dx
        return float(np.sum(R * out)), g

    return grad_check(fn, P, eps)


def _loss_check(value, backward, seed, eps, *extra):
    rng = np.random.default_rng(seed)
    gt = rng.standard_normal((TOY_T, TOY_M, 3))
    P = {"pred": gt + 0.5 * rng.standard_normal(gt.shape)}

    def fn(P):
        return value(P["pred"], gt, *extra), {"pred": backward(P["pred"], gt, *extra)}

    return grad_check(fn, P, eps)


def check_loss_rec(eps=1e-5):
    return _loss_check(losses.loss_rec, losses.loss_rec_backward, 11, eps)


def check_loss_velocity(eps=1e-5):
    return _loss_check(losses.loss_velocity, losses.loss_velocity_backward, 12, eps)


def check_loss_eye(eps=1e-5):
    return _loss_check(losses.loss_eye, losses.loss_eye_backward, 13, eps, np.array([0, 3, 7, 11]))


def end_to_end_check(config=TOY, eps=1e-5, seed=14):
    """Total loss of the whole pipeline w.r.t. every trainable parameter and the latent audio."""
    rng = np.random.default_rng(seed)
    ctx = _toy_context(seed)
    P = synthesis.init_params(config, seed)
    for k in P:
        if ".b" in k:
            P[k] = 0.1 * rng.standard_normal(P[k].shape)
    P["latent"] = rng.standard_normal((TOY_T, config.D))
    gt = ctx.base_positions[None] + 0.1 * rng.standard_normal((TOY_T, TOY_M, 3))
    eye = np.array([1, 4, 9])
    weights = losses.LossWeights()
    names = synthesis.trainable_names(P, config)

    def fn(P):
        pred, cache = synthesis.forward(P, config, ctx, P["latent"])
        total, _ = losses.total_loss(pred, gt, eye, weights)
        g = synthesis.backward(losses.total_loss_backward(pred, gt, eye, weights), cache)
        return total, g

    return grad_check(fn, P, eps, names=names)


def check_end_to_end(eps=1e-5):
    return end_to_end_check(TOY, eps)


REGISTRY = {
    "encode_global": check_encode_global,
    "encode_local": check_encode_local,
    "ste": check_ste,
    "attention": check_attention,
    "rgcn": check_rgcn,
    "dcam": check_dcam,
    "fuse": check_fuse,
    "fuse_no_rgcn": check_fuse_no_rgcn,
    "fuse_no_dcam": check_fuse_no_dcam,
    "decoder": check_decoder,
    "loss_rec": check_loss_rec,
    "loss_velocity": check_loss_velocity,
    "loss_eye": check_loss_eye,
    "end_to_end": check_end_to_end,
}
