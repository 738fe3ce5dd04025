"""Optimization loop, ground-truth resampling and checkpoints."""
import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from . import losses
from .encoding import resample_time
from .errors import NonFiniteLoss, ShapeMismatch
from .featio import load_container, save_container
from .losses import LossWeights
from .sampler import SampleSet, draw_samples, init_distribution, score_gradient
from .synthesis import ModelConfig, SequenceContext, backward, forward, trainable_names
from .uv import conformal_parameterize


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-4
    batch_size: int = 1
    steps: int = 100
    seed: int = 0
    weights: LossWeights = LossWeights()
    sampling_mode: str = "frozen"  # or "resample"
    learn_sampling: bool = False
    sampling_lr: float = 1.0
    M: int = None  # None -> 2N samples
    alpha: float = 4.0
    sigma: float = None
    pin_boundary: bool = True
    model: ModelConfig = ModelConfig()

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size != 1:
            raise ValueError("only batch_size = 1 (one sequence per step) is supported")
        if self.sampling_mode not in ("frozen", "resample"):
            raise ValueError(f"unknown sampling_mode {self.sampling_mode!r}")

    def to_dict(self):
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "weights" in d and isinstance(d["weights"], dict):
            d["weights"] = LossWeights(**d["weights"])
        if "model" in d and isinstance(d["model"], dict):
            d["model"] = ModelConfig.from_dict(d["model"])
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


def resample_ground_truth(gt_frames, samples, faces):
    """Ground truth (T, N, 3) interpolated at the samples -> (T, M, 3)."""
    gt = np.asarray(gt_frames, dtype=np.float64)
    if gt.ndim != 3 or gt.shape[2] != 3 or faces.max() >= gt.shape[1]:
        raise ShapeMismatch(f"gt frames {gt.shape} do not fit the sample topology")
    return samples.interpolate(faces, gt)


def eye_sample_indices(samples, faces, masks):
    """Samples whose dominant source vertex is an eye vertex."""
    dom = samples.dominant_vertices(faces)
    return np.flatnonzero(np.isin(dom, masks.eye_vertices))


class Adam:
    """Adam with bias correction; moments keyed by parameter name."""

    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v = {}, {}
        self.step = 0

    def update(self, params, grads, names):
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.step
        c2 = 1.0 - b2**self.step
        for k in names:
            g = grads[k]
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[k] = params[k] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(eq=False)
class PreparedItem:
    """Per-item state that stays fixed between sampling refreshes."""

    item: object
    atlas: object
    dist: object
    ctx: SequenceContext
    latent: np.ndarray
    gt_s: np.ndarray
    eye: np.ndarray


def prepare_item(item, config, samples=None, atlas=None, dist=None, seed=None):
    T = item.gt_frames.shape[0]
    atlas = atlas if atlas is not None else conformal_parameterize(item.template)
    if dist is None:
        dist = init_distribution(item.template, atlas, item.masks, config.alpha, config.sigma)
    if samples is None:
        M = config.M or 2 * item.template.n_vertices
        samples = draw_samples(dist, atlas, M, config.seed if seed is None else seed, config.pin_boundary)
    ctx = SequenceContext(item.template, atlas.uv, samples)
    latent = resample_time(item.audio, T)
    gt_s = resample_ground_truth(item.gt_frames, samples, item.template.faces)
    eye = eye_sample_indices(samples, item.template.faces, item.masks)
    return PreparedItem(item, atlas, dist, ctx, latent, gt_s, eye)


def _first_nonfinite(named):
    for name, arr in named:
        if not np.all(np.isfinite(arr)):
            return name
    return None


def loss_and_grads(params, config, prep):
    """Total loss, breakdown and parameter gradients for one prepared item."""
    pred, cache = forward(params, config.model, prep.ctx, prep.latent)
    total, parts = losses.total_loss(pred, prep.gt_s, prep.eye, config.weights)
    if not np.isfinite(total):
        bad = _first_nonfinite([("prediction", pred)] + list(params.items()))
        raise NonFiniteLoss(f"loss is {total}; first non-finite tensor: {bad or 'loss terms'}")
    dpred = losses.total_loss_backward(pred, prep.gt_s, prep.eye, config.weights)
    grads = backward(dpred, cache)
    return total, parts, grads, pred


def _refresh_samples(prep, config, seed, params):
    """Fresh samples for a new epoch; optionally nudge the sampling logits first."""
    dist = prep.dist
    if config.learn_sampling:
        probe = prepare_item(prep.item, config, atlas=prep.atlas, dist=dist, seed=seed)
        pred, _ = forward(params, config.model, probe.ctx, probe.latent)
        per_sample = np.mean(np.sum((pred - probe.gt_s) ** 2, axis=-1), axis=0)
        s = probe.ctx.samples
        rand = slice(s.n_pinned, None)
        if s.M > s.n_pinned:
            grad = score_gradient(dist, s.face_index[rand], -per_sample[rand])
            dist = dist.with_logits(dist.logits + config.sampling_lr * grad / (s.M - s.n_pinned))
    return prepare_item(prep.item, config, atlas=prep.atlas, dist=dist, seed=seed)


@dataclass(eq=False)
class TrainState:
    params: dict
    optimizer: Adam
    history: list = field(default_factory=list)
    prepared: list = None


def train(dataset, config, params, state=None, samples=None, atlases=None):
    """Run ``config.steps`` Adam steps, one sequence per step, cycling the dataset.

    ``samples`` optionally fixes the sample set of each item (frozen mode) and
    ``atlases`` its UV chart; both default to being computed per item.
    Passing a previous ``state`` continues its optimizer and step counter.
    """
    if not len(dataset):
        raise ValueError("empty dataset")
    if state is None:
        opt = Adam(config.learning_rate)
        state = TrainState({k: np.array(v, dtype=np.float64) for k, v in params.items()}, opt)
    if state.prepared is None:
        state.prepared = [
            prepare_item(it, config, samples=None if samples is None else samples[i],
                         atlas=None if atlases is None else atlases[i], seed=config.seed + i)
            for i, it in enumerate(dataset)
        ]
    names = trainable_names(state.params, config.model)
    opt = state.optimizer
    opt.lr = config.learning_rate
    n = len(dataset)
    for _ in range(config.steps):
        step = opt.step
        i = step % n
        if config.sampling_mode == "resample" and step > 0 and i == 0:
            epoch = step // n
            state.prepared = [
                _refresh_samples(p, config, config.seed + 1000 * epoch + j, state.params)
                for j, p in enumerate(state.prepared)
            ]
        total, parts, grads, _ = loss_and_grads(state.params, config, state.prepared[i])
        bad = _first_nonfinite([(k, grads[k]) for k in names])
        if bad:
            raise NonFiniteLoss(f"gradient of {bad} is non-finite at step {step}")
        opt.update(state.params, grads, names)
        state.history.append({"step": step, **parts})
    return state


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "L", "L_rec", "L_v", "L_eye"])
        for row in history:
            w.writerow([row["step"]] + [repr(float(row[k])) for k in ("L", "L_rec", "L_v", "L_eye")])


def save_checkpoint(path, state, config, extra_arrays=None, meta=None):
    """Parameters, Adam moments and step counter (plus optional context arrays)."""
    arrays = {f"param/{k}": v for k, v in state.params.items()}
    arrays.update({f"adam.m/{k}": v for k, v in state.optimizer.m.items()})
    arrays.update({f"adam.v/{k}": v for k, v in state.optimizer.v.items()})
    arrays["adam.step"] = np.array(state.optimizer.step, dtype=np.int64)
    arrays.update(extra_arrays or {})
    opt = state.optimizer
    m = {"training": config.to_dict(), "adam": {"beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps}}
    m.update(meta or {})
    save_container(path, arrays, meta=m)


def load_checkpoint(path):
    """Returns ``(state, config, extra_arrays, meta)``; ``state.prepared`` is unset."""
    arrays, meta = load_container(path)
    config = TrainingConfig.from_dict(meta["training"])
    a = meta.get("adam", {})
    opt = Adam(config.learning_rate, a.get("beta1", 0.9), a.get("beta2", 0.999), a.get("eps", 1e-8))
    params, extra = {}, {}
    for k, v in arrays.items():
        if k.startswith("param/"):
            params[k[6:]] = np.array(v, dtype=np.float64)
        elif k.startswith("adam.m/"):
            opt.m[k[7:]] = np.array(v, dtype=np.float64)
        elif k.startswith("adam.v/"):
            opt.v[k[7:]] = np.array(v, dtype=np.float64)
        elif k == "adam.step":
            opt.step = int(v)
        else:
            extra[k] = v
    return TrainState(params, opt), config, extra, meta


def samples_to_arrays(samples, prefix="samples."):
    return {
        prefix + "points": samples.points,
        prefix + "locations_face": samples.face_index,
        prefix + "locations_bary": samples.bary,
        prefix + "out_faces": samples.out_faces,
        prefix + "seed": np.array(samples.seed, dtype=np.int64),
        prefix + "n_pinned": np.array(samples.n_pinned, dtype=np.int64),
    }


def samples_from_arrays(arrays, prefix="samples."):
    return SampleSet(arrays[prefix + "points"], arrays[prefix + "locations_face"],
                     arrays[prefix + "locations_bary"], arrays[prefix + "out_faces"].reshape(-1, 3),
                     int(arrays[prefix + "seed"]), int(arrays[prefix + "n_pinned"]))
