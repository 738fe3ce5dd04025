"""Least-squares conformal flattening and UV point location.

The conformal energy of a UV assignment ``U = u + iv`` is summed per triangle as
``area * |dU/dz_bar|**2`` where ``z`` is a local orthonormal frame of the 3D
triangle.  Two boundary vertices are pinned to remove the similarity freedom.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

from .errors import ArityMismatch, FormatError, NotInChart, SolverDidNotConverge, TopologyNotDisk
from .featio import load_container, save_container
from .mesh import boundary_loops, validate_disk_topology

BARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class UVAtlas:
    """Per-vertex UV coordinates in [0, 1]^2 sharing the mesh faces."""

    uv: np.ndarray
    faces: np.ndarray
    chart_bbox: tuple = (0.0, 0.0, 1.0, 1.0)
    boundary: tuple = ()

    def __post_init__(self):
        uv = np.array(self.uv, dtype=np.float64).reshape(-1, 2)
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        uv.flags.writeable = False
        faces.flags.writeable = False
        object.__setattr__(self, "uv", uv)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "boundary", tuple(int(i) for i in self.boundary))

    @property
    def n_faces(self):
        return len(self.faces)

    def signed_areas(self):
        a, b, c = (self.uv[self.faces[:, k]] for k in range(3))
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def centroids(self):
        return self.uv[self.faces].mean(axis=1)


def _local_frames(vertices, faces):
    """Triangle corners in a per-face orthonormal 2D frame (F, 3, 2) and areas."""
    p = vertices[faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    len1 = np.linalg.norm(e1, axis=1)
    xhat = e1 / len1[:, None]
    normal = np.cross(e1, e2)
    area = 0.5 * np.linalg.norm(normal, axis=1)
    nhat = normal / (2.0 * area[:, None])
    yhat = np.cross(nhat, xhat)
    q = np.zeros((len(faces), 3, 2))
    q[:, 1, 0] = len1
    q[:, 2, 0] = np.einsum("ij,ij->i", e2, xhat)
    q[:, 2, 1] = np.einsum("ij,ij->i", e2, yhat)
    return q, area


def _cr_weights(vertices, faces):
    """Complex weights W (F, 3) with sum_j W_j U_j = 4i * area * dU/dz_bar."""
    q, area = _local_frames(vertices, faces)
    d = q[:, [2, 0, 1]] - q[:, [1, 2, 0]]
    w = (d[..., 0] + 1j * d[..., 1]) / (4.0 * np.sqrt(area))[:, None]
    return w


def _lscm_matrix(vertices, faces):
    n, f = len(vertices), len(faces)
    w = _cr_weights(vertices, faces)
    a, b = w.real.ravel(), w.imag.ravel()
    rows = np.repeat(np.arange(f), 3)
    cols = faces.ravel()
    # real part: a u - b v ; imaginary part: b u + a v
    r = np.concatenate([rows, rows, rows + f, rows + f])
    c = np.concatenate([cols, cols + n, cols, cols + n])
    v = np.concatenate([a, -b, b, a])
    return sparse.csr_matrix((v, (r, c)), shape=(2 * f, 2 * n))


def conformal_energy(mesh, uv):
    """Least-squares conformal energy of ``uv`` (N, 2) on ``mesh``."""
    w = _cr_weights(mesh.vertices, mesh.faces)
    u = np.asarray(uv)[:, 0] + 1j * np.asarray(uv)[:, 1]
    return float(np.sum(np.abs(np.sum(w * u[mesh.faces], axis=1)) ** 2))


def _pick_pins(vertices, loop):
    pts = vertices[loop]
    d2 = np.sum((pts[:, None] - pts[None]) ** 2, axis=-1)
    i, j = np.unravel_index(np.argmax(d2), d2.shape)
    i, j = sorted((int(i), int(j)))
    return loop[i], loop[j]


def conformal_parameterize(mesh, rtol=1e-10):
    """Flatten a disk-topology mesh by least-squares conformal mapping.

    The two mutually most distant boundary vertices are pinned at (0, 0) and
    (1, 0); the remaining coordinates minimize the conformal energy, solved by
    conjugate gradients on the normal equations.  The result is translated and
    uniformly scaled into [0, 1]^2.
    """
    report = validate_disk_topology(mesh)
    if not report.is_disk:
        raise TopologyNotDisk(
            f"euler characteristic {report.euler_characteristic}, "
            f"{report.boundary_loop_count} boundary loops"
        )
    n = mesh.n_vertices
    loop = boundary_loops(mesh)[0]
    p0, p1 = _pick_pins(mesh.vertices, loop)
    A = _lscm_matrix(mesh.vertices, mesh.faces).tocsc()
    pinned = np.array([p0, p1, p0 + n, p1 + n])
    pinned_vals = np.array([0.0, 1.0, 0.0, 0.0])
    free = np.setdiff1d(np.arange(2 * n), pinned)
    Af = A[:, free]
    rhs = -(A[:, pinned] @ pinned_vals)
    normal = (Af.T @ Af).tocsr()
    b = Af.T @ rhs
    x, info = cg(normal, b, rtol=rtol, atol=0.0, maxiter=10 * n)
    resid = np.linalg.norm(normal @ x - b)
    if resid > rtol * max(np.linalg.norm(b), 1e-300):
        raise SolverDidNotConverge(f"CG residual {resid:.3e} after {10 * n} iterations (info={info})")
    sol = np.zeros(2 * n)
    sol[free] = x
    sol[pinned] = pinned_vals
    uv = np.stack([sol[:n], sol[n:]], axis=1)
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    scale = float(np.max(hi - lo))
    uv = np.clip((uv - lo) / scale, 0.0, 1.0)
    return UVAtlas(uv, mesh.faces, (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])), loop)


@dataclass(frozen=True)
class BarycentricLocation:
    face_index: int
    coords: tuple


class PointLocator:
    """Uniform-grid index over the UV triangles of an atlas.

    Each triangle is registered in every cell its (slightly padded) bounding
    box overlaps; the grid only narrows the candidate set, so answers do not
    depend on the resolution.
    """

    def __init__(self, atlas, grid_resolution=None):
        if grid_resolution is None:
            grid_resolution = max(1, math.ceil(math.sqrt(atlas.n_faces)))
        if grid_resolution < 1:
            raise ValueError("grid_resolution must be positive")
        self.atlas = atlas
        self.resolution = g = int(grid_resolution)
        tri = atlas.uv[atlas.faces]
        lo = self._cell(tri.min(axis=1) - 1e-9)
        hi = self._cell(tri.max(axis=1) + 1e-9)
        cells = [[] for _ in range(g * g)]
        for f in range(atlas.n_faces):
            for cx in range(lo[f, 0], hi[f, 0] + 1):
                for cy in range(lo[f, 1], hi[f, 1] + 1):
                    cells[cx * g + cy].append(f)
        self._cells = [np.array(c, dtype=np.int64) for c in cells]

    def _cell(self, p):
        return np.clip(np.floor(np.asarray(p) * self.resolution), 0, self.resolution - 1).astype(np.int64)

    def candidates(self, point):
        cx, cy = self._cell(point)
        return self._cells[cx * self.resolution + cy]

    def query(self, point):
        """Face index and barycentric coords of ``point``, or ``None``."""
        p = np.asarray(point, dtype=np.float64)
        cand = self.candidates(p)
        if not len(cand):
            return None
        faces = self.atlas.faces[cand]
        a, b, c = (self.atlas.uv[faces[:, k]] for k in range(3))
        d = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        b1 = ((b[:, 0] - p[0]) * (c[:, 1] - p[1]) - (b[:, 1] - p[1]) * (c[:, 0] - p[0])) / d
        b2 = ((p[0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (p[1] - a[:, 1]) * (c[:, 0] - a[:, 0])) / d
        b3 = 1.0 - b1 - b2
        ok = (b1 >= -BARY_TOL) & (b2 >= -BARY_TOL) & (b3 >= -BARY_TOL)
        hits = np.flatnonzero(ok)
        if not len(hits):
            return None
        k = hits[0]
        coords = (float(b1[k]), float(b2[k]), float(b3[k]))
        corner = np.flatnonzero(np.all(self.atlas.uv[faces[k]] == p, axis=1))
        if len(corner):
            coords = tuple(1.0 if j == corner[0] else 0.0 for j in range(3))
        return int(cand[k]), coords


def build_locator(atlas, grid_resolution=None):
    return PointLocator(atlas, grid_resolution)


def locate(locator, point):
    """Locate ``point`` in the UV chart; lowest face index wins on shared edges."""
    hit = locator.query(point)
    if hit is None:
        raise NotInChart(f"point {tuple(np.asarray(point).tolist())} is outside every UV triangle")
    return BarycentricLocation(*hit)


def locate_many(locator, points):
    """Vectorized :func:`locate`: returns face indices (M,) and coords (M, 3)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    faces = np.empty(len(pts), dtype=np.int64)
    bary = np.empty((len(pts), 3))
    for i, p in enumerate(pts):
        loc = locate(locator, p)
        faces[i], bary[i] = loc.face_index, loc.coords
    return faces, bary


def barycentric_eval(location, per_vertex_values):
    """``b1*z1 + b2*z2 + b3*z3`` for the three vertex values of the face."""
    if len(per_vertex_values) != 3:
        raise ArityMismatch(f"expected 3 vertex values, got {len(per_vertex_values)}")
    z = [np.asarray(v, dtype=np.float64) for v in per_vertex_values]
    if not (z[0].shape == z[1].shape == z[2].shape):
        raise ArityMismatch(f"vertex values have shapes {[x.shape for x in z]}")
    b1, b2, b3 = location.coords
    return b1 * z[0] + b2 * z[1] + b3 * z[2]


def barycentric_interpolate(faces, face_index, bary, values):
    """Batched barycentric evaluation.

    ``values`` has the vertex axis at position -2, e.g. (N, C) or (T, N, C);
    the result replaces it with the sample axis (M).
    """
    tri = faces[face_index]
    z1, z2, z3 = (np.take(values, tri[:, k], axis=-2) for k in range(3))
    return bary[:, 0:1] * z1 + bary[:, 1:2] * z2 + bary[:, 2:3] * z3


def save_atlas(atlas, path):
    """Store an atlas as a feature container (arrays ``uv``, ``faces``, ``boundary``)."""
    save_container(path, {"uv": atlas.uv, "faces": atlas.faces,
                          "boundary": np.asarray(atlas.boundary, dtype=np.int64)},
                   meta={"chart_bbox": [float(x) for x in atlas.chart_bbox]})


def load_atlas(path):
    arrays, meta = load_container(path)
    if "uv" not in arrays or "faces" not in arrays:
        raise FormatError(f"{path}: not an atlas container")
    return UVAtlas(arrays["uv"], arrays["faces"], tuple(meta.get("chart_bbox", (0.0, 0.0, 1.0, 1.0))),
                   tuple(arrays.get("boundary", ())))
