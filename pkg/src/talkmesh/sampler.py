"""Non-uniform sampling of the UV chart and the multi-resolution topology."""
from dataclasses import dataclass, field

import numpy as np

from .delaunay import delaunay_triangulate
from .errors import (
    EmptyKeypoints,
    EmptySamples,
    LengthMismatch,
    NegativeAlpha,
    NonPositiveSigma,
    TooFewSamples,
)
from .featio import load_container, save_container
from .uv import BarycentricLocation, PointLocator, barycentric_interpolate


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass(frozen=True, eq=False)
class SamplingDistribution:
    """Per-triangle sampling logits plus the keypoint prior that seeded them."""

    logits: np.ndarray
    alpha: float = 0.0
    sigma: float = 1.0

    @property
    def probabilities(self):
        return softmax(self.logits)

    def with_logits(self, logits):
        return SamplingDistribution(np.array(logits, dtype=np.float64), self.alpha, self.sigma)


def default_sigma(atlas):
    lo, hi = atlas.uv.min(axis=0), atlas.uv.max(axis=0)
    return 0.1 * float(np.linalg.norm(hi - lo))


def init_distribution(mesh, atlas, masks, alpha=4.0, sigma=None):
    """Area-weighted logits boosted near keypoints.

    ``logit_f = log(area_f * (1 + alpha * exp(-d_f**2 / (2 sigma**2))))`` with
    ``d_f`` the UV distance from the triangle centroid to the nearest keypoint.
    """
    if sigma is None:
        sigma = default_sigma(atlas)
    if alpha < 0:
        raise NegativeAlpha(f"alpha must be >= 0, got {alpha}")
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be > 0, got {sigma}")
    area = np.abs(atlas.signed_areas())
    logits = np.log(np.maximum(area, np.finfo(float).tiny))
    if alpha > 0:
        kp = np.asarray(masks.keypoints, dtype=np.int64)
        if not kp.size:
            raise EmptyKeypoints("alpha > 0 needs at least one keypoint")
        c = atlas.centroids()
        d2 = np.min(np.sum((c[:, None, :] - atlas.uv[kp][None]) ** 2, axis=-1), axis=1)
        logits = logits + np.log1p(alpha * np.exp(-d2 / (2.0 * sigma**2)))
    return SamplingDistribution(logits, float(alpha), float(sigma))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """M UV samples, their source-chart locations and the output triangles."""

    points: np.ndarray
    face_index: np.ndarray
    bary: np.ndarray
    out_faces: np.ndarray
    seed: int = 0
    n_pinned: int = field(default=0)

    @property
    def M(self):
        return len(self.points)

    @property
    def locations(self):
        return [BarycentricLocation(int(f), tuple(b)) for f, b in zip(self.face_index, self.bary.tolist())]

    def interpolate(self, faces, values):
        """Barycentric interpolation of per-vertex ``values`` (..., N, C) at the samples."""
        return barycentric_interpolate(faces, self.face_index, self.bary, values)

    def dominant_vertices(self, faces):
        """Source vertex with the largest barycentric weight for each sample."""
        return faces[self.face_index, np.argmax(self.bary, axis=1)]


def _vertex_locations(atlas, vertices):
    """Exact one-hot locations for the given vertex ids (lowest incident face)."""
    faces = atlas.faces
    first = np.full(len(atlas.uv), -1, dtype=np.int64)
    corner = np.zeros(len(atlas.uv), dtype=np.int64)
    for f in range(len(faces) - 1, -1, -1):
        first[faces[f]] = f
        corner[faces[f]] = np.arange(3)
    vertices = np.asarray(vertices, dtype=np.int64)
    if np.any(first[vertices] < 0):
        raise ValueError("cannot pin a vertex that belongs to no face")
    bary = np.zeros((len(vertices), 3))
    bary[np.arange(len(vertices)), corner[vertices]] = 1.0
    return first[vertices], bary


def triangulate_samples(points, atlas, locator=None):
    """Delaunay triangles over the samples, minus those bridging chart holes."""
    if locator is None:
        locator = PointLocator(atlas)
    return prune_exterior_faces(delaunay_triangulate(points), points, locator)


def draw_samples(dist, atlas, M, seed, pin_boundary=True, triangulate=True, locator=None):
    """Draw M UV samples: boundary vertices first (if pinned), then random ones.

    Random samples pick a triangle from ``softmax(logits)`` and a uniform point
    in it via the square-root barycentric warp.  Identical arguments give
    bitwise-identical results.
    """
    if M < 3:
        raise TooFewSamples(f"need M >= 3, got {M}")
    rng = np.random.default_rng(seed)
    if pin_boundary:
        pin = np.asarray(atlas.boundary, dtype=np.int64)
        if len(pin) > M:
            raise TooFewSamples(f"M = {M} is smaller than the {len(pin)} boundary vertices")
        pin_faces, pin_bary = _vertex_locations(atlas, pin)
    else:
        pin_faces, pin_bary = np.zeros(0, dtype=np.int64), np.zeros((0, 3))
    k = M - len(pin_faces)
    tri = rng.choice(atlas.n_faces, size=k, p=dist.probabilities)
    r = rng.random((k, 2))
    s = np.sqrt(r[:, 0])
    bary = np.stack([1.0 - s, s * (1.0 - r[:, 1]), s * r[:, 1]], axis=1)
    face_index = np.concatenate([pin_faces, tri])
    bary = np.concatenate([pin_bary, bary])
    points = barycentric_interpolate(atlas.faces, face_index, bary, atlas.uv)
    out_faces = (triangulate_samples(points, atlas, locator) if triangulate
                 else np.zeros((0, 3), dtype=np.int64))
    return SampleSet(points, face_index, bary, out_faces, int(seed), len(pin_faces))


def pin_all_vertices(atlas):
    """One sample exactly at every chart vertex, keeping the source topology."""
    n = len(atlas.uv)
    face_index, bary = _vertex_locations(atlas, np.arange(n))
    return SampleSet(atlas.uv.copy(), face_index, bary, atlas.faces.copy(), 0, n)


def prune_exterior_faces(triangles, points, locator):
    """Keep the triangles whose centroid lies inside the source UV chart."""
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if not len(triangles):
        return triangles
    cent = np.asarray(points)[triangles].mean(axis=1)
    keep = np.array([locator.query(c) is not None for c in cent], dtype=bool)
    return triangles[keep]


def score_gradient(dist, sampled_triangle_ids, rewards, baseline=True):
    """Score-function gradient of sum_k (r_k - r_bar) log p(tri_k) w.r.t. the logits.

    Uses ``d log softmax(z)_i / dz = onehot_i - p``.
    """
    ids = np.asarray(sampled_triangle_ids, dtype=np.int64)
    r = np.asarray(rewards, dtype=np.float64)
    if not len(ids):
        raise EmptySamples("no sampled triangles")
    if len(ids) != len(r):
        raise LengthMismatch(f"{len(ids)} samples but {len(r)} rewards")
    p = dist.probabilities
    if baseline:
        if np.all(r == r[0]):
            return np.zeros_like(p)
        adv = r - r.mean()
    else:
        adv = r
    return np.bincount(ids, weights=adv, minlength=len(p)) - adv.sum() * p


def save_samples(samples, path):
    save_container(path, {
        "points": samples.points,
        "locations_face": samples.face_index,
        "locations_bary": samples.bary,
        "out_faces": samples.out_faces,
        "seed": np.array(samples.seed, dtype=np.int64),
    }, meta={"n_pinned": samples.n_pinned})


def load_samples(path):
    arrays, meta = load_container(path)
    return SampleSet(arrays["points"], arrays["locations_face"], arrays["locations_bary"],
                     arrays["out_faces"].reshape(-1, 3), int(arrays["seed"]), int(meta.get("n_pinned", 0)))
