"""Lip/eye vertex error and upper-face dynamics deviation."""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, ShapeMismatch, TooFewFrames, TopologyMismatch


@dataclass(frozen=True)
class MetricReport:
    e_vl: float
    e_ve: float
    fdd: float
    per_frame_max_lip: tuple = ()


def _check(pred, gt, mask, name):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 3 or pred.shape[2] != 3:
        raise ShapeMismatch(f"pred {pred.shape} and gt {gt.shape} must both be (T, N, 3)")
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise EmptyMask(f"{name} mask is empty")
    return pred, gt, mask


def per_frame_max_error(pred, gt, mask):
    """Largest Euclidean vertex error inside ``mask`` for each frame."""
    pred, gt, mask = _check(pred, gt, mask, "region")
    return np.max(np.linalg.norm(pred[:, mask] - gt[:, mask], axis=-1), axis=1)


def lip_max_error(pred, gt, lip):
    """Mean over frames of the maximum lip-vertex Euclidean error."""
    pred, gt, lip = _check(pred, gt, lip, "lip")
    return float(np.mean(per_frame_max_error(pred, gt, lip)))


def eye_max_error(pred, gt, eye):
    pred, gt, eye = _check(pred, gt, eye, "eye")
    return float(np.mean(per_frame_max_error(pred, gt, eye)))


def fdd(pred, gt, template, upper, absolute=False):
    """Mean over upper-face vertices of std_t(|gt - template|) - std_t(|pred - template|).

    Population standard deviation over frames; signed unless ``absolute``.
    """
    pred, gt, upper = _check(pred, gt, upper, "upper-face")
    if pred.shape[0] < 2:
        raise TooFewFrames("FDD needs at least 2 frames")
    tmpl = np.asarray(template, dtype=np.float64)[upper]
    dyn_gt = np.std(np.linalg.norm(gt[:, upper] - tmpl, axis=-1), axis=0)
    dyn_pred = np.std(np.linalg.norm(pred[:, upper] - tmpl, axis=-1), axis=0)
    val = float(np.mean(dyn_gt - dyn_pred))
    return abs(val) if absolute else val


def evaluate_sequence(pred, gt_frames, masks, template, absolute_fdd=False):
    """All metrics for a prediction at the template's own topology.

    ``pred`` is an :class:`AnimationSequence` (its topology must equal the
    template faces) or a plain (T, N, 3) array.
    """
    frames = getattr(pred, "frames", pred)
    topo = getattr(pred, "topology", None)
    if np.shape(frames)[1] != template.n_vertices or (
            topo is not None and (topo.shape != template.faces.shape or np.any(topo != template.faces))):
        raise TopologyMismatch("prediction is not at the template's original topology")
    lipf = per_frame_max_error(frames, gt_frames, masks.lip_vertices)
    return MetricReport(
        e_vl=lip_max_error(frames, gt_frames, masks.lip_vertices),
        e_ve=eye_max_error(frames, gt_frames, masks.eye_vertices),
        fdd=fdd(frames, gt_frames, template.vertices, masks.upper_face_vertices, absolute_fdd),
        per_frame_max_lip=tuple(float(x) for x in lipf),
    )


def write_reports_csv(reports, path, names=None):
    """One row per sequence plus a ``mean`` row."""
    names = names or [f"seq{i}" for i in range(len(reports))]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sequence", "E_vl", "E_ve", "FDD"])
        for name, r in zip(names, reports):
            w.writerow([name, repr(r.e_vl), repr(r.e_ve), repr(r.fdd)])
        if reports:
            w.writerow(["mean"] + [repr(float(np.mean([getattr(r, k) for r in reports])))
                                   for k in ("e_vl", "e_ve", "fdd")])
