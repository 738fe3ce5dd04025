"""Seeded synthetic talking-face data: a hemisphere "face" whose lip and eye
regions move as a smooth function of synthetic audio features."""
from dataclasses import dataclass

import numpy as np

from .encoding import AudioFeatureSequence, resample_time, synth_features
from .errors import SizeTooSmall
from .mesh import Mesh, RegionMasks
from .sampler import draw_samples, init_distribution
from .shapes import hemisphere_cap, rings_for
from .uv import conformal_parameterize

AUDIO_RATE = 50.0
FRAME_RATE = 30.0

# landmark positions in the xy plane of the cap (the face looks along +z)
LIP_CENTER = (0.0, -0.45)
EYE_CENTERS = ((-0.35, 0.3), (0.35, 0.3))
KEYPOINT_XY = ((0.0, -0.45), (-0.2, -0.45), (0.2, -0.45), (-0.35, 0.3), (0.35, 0.3), (0.0, 0.0))


@dataclass(eq=False)
class DatasetItem:
    template: Mesh
    gt_frames: np.ndarray  # (T, N, 3)
    audio: AudioFeatureSequence
    masks: RegionMasks
    frame_rate: float = FRAME_RATE


def _bump(xy, center, width):
    d2 = np.sum((xy - np.asarray(center)) ** 2, axis=1)
    return np.exp(-d2 / (2.0 * width**2))


def region_masks(template):
    xy = template.vertices[:, :2]

    def within(center, r):
        return np.flatnonzero(np.sum((xy - np.asarray(center)) ** 2, axis=1) <= r * r)

    lip = within(LIP_CENTER, 0.25)
    eye = np.union1d(within(EYE_CENTERS[0], 0.2), within(EYE_CENTERS[1], 0.2))
    upper = np.flatnonzero(xy[:, 1] > 0.05)
    kp = [int(np.argmin(np.sum((xy - np.asarray(c)) ** 2, axis=1))) for c in KEYPOINT_XY]
    return RegionMasks(lip, eye, upper, kp)


def motion_basis(template):
    """Four displacement fields (4, N, 3): jaw drop, lip stretch, lip push, blink."""
    v = template.vertices
    xy = v[:, :2]
    lip = _bump(xy, LIP_CENTER, 0.18)
    jaw = 1.0 / (1.0 + np.exp((xy[:, 1] + 0.25) / 0.08))  # lower face
    eye = _bump(xy, EYE_CENTERS[0], 0.1) + _bump(xy, EYE_CENTERS[1], 0.1)
    basis = np.zeros((4, len(v), 3))
    basis[0, :, 1] = -jaw
    basis[1, :, 0] = lip * (xy[:, 0] - LIP_CENTER[0]) * 3.0
    basis[2, :, 2] = lip
    basis[3, :, 1] = -0.5 * eye
    return basis


def motion_coefficients(latent, seed, n_modes=4, window=3):
    """Low-pass filtered latent features projected to ``n_modes`` coefficients in (-1, 1)."""
    rng = np.random.default_rng([seed, 7])
    proj = rng.standard_normal((latent.shape[1], n_modes))
    kernel = np.ones(window) / window
    pad = window // 2
    lp = np.pad(latent, ((pad, window - 1 - pad), (0, 0)), mode="edge")
    smooth = np.stack([np.convolve(lp[:, d], kernel, mode="valid") for d in range(latent.shape[1])], axis=1)
    return np.tanh(smooth @ proj / np.sqrt(latent.shape[1]) * 2.0)


def make_sequence(template, seed, T, D, amplitude=0.08, audio_seed=None):
    """Ground-truth frames and audio for ``template`` from generator ``seed``.

    ``audio_seed`` selects a different utterance for the same generator.
    """
    audio_seed = seed if audio_seed is None else audio_seed
    Ta = max(1, int(round(T * AUDIO_RATE / FRAME_RATE)))
    audio = synth_features(audio_seed, Ta, D, AUDIO_RATE)
    latent = resample_time(audio, T)
    coeff = motion_coefficients(latent, seed)
    disp = np.einsum("tk,knc->tnc", coeff, motion_basis(template))
    gt = template.vertices[None] + amplitude * disp
    return gt, audio


def make_synthetic_dataset(seed, n_target=200, T=20, D=64, M=300, amplitude=0.08, audio_seed=None,
                           alpha=4.0):
    """Synthetic item plus a reference sample set drawn on its conformal atlas.

    Returns
    -------
    item : DatasetItem
    samples : SampleSet
    atlas : UVAtlas
    """
    if n_target < 4 or T < 2 or D < 1:
        raise SizeTooSmall("need n_target >= 4, T >= 2, D >= 1")
    template, _ = hemisphere_cap(rings_for(n_target))
    masks = region_masks(template)
    gt, audio = make_sequence(template, seed, T, D, amplitude, audio_seed)
    atlas = conformal_parameterize(template)
    dist = init_distribution(template, atlas, masks, alpha=alpha)
    samples = draw_samples(dist, atlas, M, seed, pin_boundary=True)
    return DatasetItem(template, gt, audio, masks), samples, atlas
