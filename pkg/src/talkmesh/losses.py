"""Reconstruction, velocity and eye-motion losses with their gradients."""
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch

EYE_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 10.0
    lambda3: float = 0.01

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be non-negative")


def _check(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 3 or pred.shape[2] != 3:
        raise ShapeMismatch(f"pred {pred.shape} and gt {gt.shape} must both be (T, M, 3)")
    if pred.shape[0] * pred.shape[1] < 1:
        raise ShapeMismatch("need T * M >= 1")
    return pred, gt


def loss_rec(pred, gt):
    """Mean over frames and points of the squared Euclidean error."""
    pred, gt = _check(pred, gt)
    T, M, _ = pred.shape
    return float(np.sum((gt - pred) ** 2) / (T * M))


def loss_rec_backward(pred, gt):
    pred, gt = _check(pred, gt)
    T, M, _ = pred.shape
    return 2.0 * (pred - gt) / (T * M)


def loss_velocity(pred, gt):
    """Squared error of frame-to-frame motion, summed from the second frame and
    divided by T * M."""
    pred, gt = _check(pred, gt)
    T, M, _ = pred.shape
    if T < 2:
        return 0.0
    r = np.diff(gt, axis=0) - np.diff(pred, axis=0)
    return float(np.sum(r**2) / (T * M))


def loss_velocity_backward(pred, gt):
    pred, gt = _check(pred, gt)
    T, M, _ = pred.shape
    grad = np.zeros_like(pred)
    if T < 2:
        return grad
    # d/d(dpred) of |dgt - dpred|^2 is -2 r; dpred_t = pred_t - pred_{t-1}
    r = np.diff(gt, axis=0) - np.diff(pred, axis=0)
    g = -2.0 * r / (T * M)
    grad[1:] += g
    grad[:-1] -= g
    return grad


def _motion(x):
    d = np.diff(x, axis=0)  # (T-1, K, 3)
    return d, np.linalg.norm(d, axis=-1)


def _eye_terms(pred, gt, eye, eps):
    eye = np.asarray(eye, dtype=np.int64)
    _, mg = _motion(gt[:, eye])
    dp, mp = _motion(pred[:, eye])
    p = (mg + eps) / np.sum(mg + eps, axis=0)
    S = np.sum(mp + eps, axis=0)
    q = (mp + eps) / S
    return eye, p, q, S, dp, mp


def loss_eye(pred, gt, eye_indices, eps=EYE_EPS):
    """Mean over eye points of KL(p || q) between the temporal distributions of
    motion magnitudes of ground truth (p) and prediction (q).

    Magnitudes are smoothed as ``(m + eps) / sum(m + eps)``; ``eps = 0`` is only
    safe when no eye point is static.
    """
    pred, gt = _check(pred, gt)
    if pred.shape[0] < 2 or len(eye_indices) == 0:
        return 0.0
    _, p, q, _, _, _ = _eye_terms(pred, gt, eye_indices, eps)
    return float(np.mean(np.sum(p * np.log(p / q), axis=0)))


def loss_eye_backward(pred, gt, eye_indices, eps=EYE_EPS):
    pred, gt = _check(pred, gt)
    grad = np.zeros_like(pred)
    if pred.shape[0] < 2 or len(eye_indices) == 0:
        return grad
    eye, p, q, S, dp, mp = _eye_terms(pred, gt, eye_indices, eps)
    dm = (-p / (mp + eps) + 1.0 / S) / len(eye)
    safe = np.where(mp > 0, mp, 1.0)
    dd = (dm / safe)[..., None] * dp * (mp > 0)[..., None]
    g = np.zeros((pred.shape[0], len(eye), 3))
    g[1:] += dd
    g[:-1] -= dd
    np.add.at(grad, (slice(None), eye), g)
    return grad


def total_loss(pred, gt, eye_indices, weights=LossWeights()):
    """Weighted sum and the per-term breakdown ``{"L", "L_rec", "L_v", "L_eye"}``."""
    rec = loss_rec(pred, gt)
    vel = loss_velocity(pred, gt)
    eye = loss_eye(pred, gt, eye_indices)
    total = weights.lambda1 * rec + weights.lambda2 * vel + weights.lambda3 * eye
    return total, {"L": total, "L_rec": rec, "L_v": vel, "L_eye": eye}


def total_loss_backward(pred, gt, eye_indices, weights=LossWeights()):
    return (weights.lambda1 * loss_rec_backward(pred, gt)
            + weights.lambda2 * loss_velocity_backward(pred, gt)
            + weights.lambda3 * loss_eye_backward(pred, gt, eye_indices))
