"""Incremental Bowyer-Watson Delaunay triangulation in the plane."""
import numpy as np
from scipy.spatial import cKDTree

from .errors import AllCollinear, DuplicatePoints, TooFewSamples

_EXT = np.longdouble


def incircle(a, b, c, d):
    """In-circle determinant (extended precision), positive when ``d`` lies
    strictly inside the circumcircle of the counter-clockwise triangle abc.

    All arguments broadcast as (..., 2) arrays.
    """
    a, b, c, d = (np.asarray(x, dtype=_EXT) for x in (a, b, c, d))
    ad, bd, cd = a - d, b - d, c - d
    alift = ad[..., 0] ** 2 + ad[..., 1] ** 2
    blift = bd[..., 0] ** 2 + bd[..., 1] ** 2
    clift = cd[..., 0] ** 2 + cd[..., 1] ** 2
    return (alift * (bd[..., 0] * cd[..., 1] - cd[..., 0] * bd[..., 1])
            + blift * (cd[..., 0] * ad[..., 1] - ad[..., 0] * cd[..., 1])
            + clift * (ad[..., 0] * bd[..., 1] - bd[..., 0] * ad[..., 1]))


def orient(a, b, c):
    """Twice the signed area of triangle abc (positive when counter-clockwise)."""
    a, b, c = (np.asarray(x, dtype=np.float64) for x in (a, b, c))
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def circumcircles(pts, tris):
    """Circumcenters (K, 2) and squared radii (K,) of triangles ``tris``."""
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    bx, by = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
    cx, cy = c[:, 0] - a[:, 0], c[:, 1] - a[:, 1]
    d = 2.0 * (bx * cy - by * cx)
    b2, c2 = bx * bx + by * by, cx * cx + cy * cy
    ux = (cy * b2 - by * c2) / d
    uy = (bx * c2 - cx * b2) / d
    return np.stack([ux + a[:, 0], uy + a[:, 1]], axis=1), ux * ux + uy * uy


def _check_input(pts):
    if len(pts) < 3:
        raise TooFewSamples("Delaunay triangulation needs at least 3 points")
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite point coordinates")
    pairs = cKDTree(pts).query_pairs(1e-12, output_type="ndarray")
    if len(pairs):
        i, j = sorted(pairs[0].tolist())
        raise DuplicatePoints(f"points {i} and {j} coincide")
    d = pts - pts[0]
    far = int(np.argmax(np.einsum("ij,ij->i", d, d)))
    scale = float(np.dot(d[far], d[far]))
    cross = d[far, 0] * d[:, 1] - d[far, 1] * d[:, 0]
    if np.max(np.abs(cross)) <= 1e-12 * scale:
        raise AllCollinear("all points are collinear")


def delaunay_triangulate(points):
    """Delaunay triangles (K, 3) over ``points`` (M, 2), counter-clockwise.

    Points are inserted in input order into a large enclosing triangle; the
    result is deterministic for a fixed input order.  On cocircular ties the
    earlier triangulation is kept.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (M, 2) array")
    _check_input(pts)
    n = len(pts)
    # work in a normalized frame to keep the predicates well scaled
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center, extent = 0.5 * (lo + hi), float(np.max(hi - lo))
    work = (pts - center) / extent
    big = 1.0e4
    superv = np.array([[-big, -big], [big, -big], [0.0, big]])
    allp = np.vstack([work, superv])

    cap = 2 * n + 16
    tris = np.zeros((cap, 3), dtype=np.int64)
    alive = np.zeros(cap, dtype=bool)
    centers = np.zeros((cap, 2))
    rad2 = np.zeros(cap)
    tris[0] = (n, n + 1, n + 2)
    alive[0] = True
    centers[:1], rad2[:1] = circumcircles(allp, tris[:1])
    count = 1

    for ip in range(n):
        p = allp[ip]
        live = np.flatnonzero(alive[:count])
        dist2 = np.sum((centers[live] - p) ** 2, axis=1)
        cand = live[dist2 <= rad2[live] * (1.0 + 1e-6) + 1e-12]
        t = tris[cand]
        inside = incircle(allp[t[:, 0]], allp[t[:, 1]], allp[t[:, 2]], p) > 0
        bad = cand[inside]
        if not len(bad):
            # numerically on every circle; fall back to the containing triangle
            t = tris[live]
            o = np.stack([orient(allp[t[:, k]], allp[t[:, (k + 1) % 3]], p) for k in range(3)], axis=1)
            bad = live[np.all(o >= 0, axis=1)][:1]
        edges = {}
        for a, b, c in tris[bad].tolist():
            for e in ((a, b), (b, c), (c, a)):
                key = (min(e), max(e))
                if key in edges:
                    edges[key] = None
                else:
                    edges[key] = e
        alive[bad] = False
        new = np.array([(a, b, ip) for e in edges.values() if e is not None for a, b in (e,)],
                       dtype=np.int64)
        need = count + len(new)
        if need > cap:
            cap = max(2 * cap, need)
            tris = np.resize(tris, (cap, 3))
            alive = np.concatenate([alive, np.zeros(cap - len(alive), dtype=bool)])
            centers = np.resize(centers, (cap, 2))
            rad2 = np.resize(rad2, cap)
        tris[count:need] = new
        alive[count:need] = True
        centers[count:need], rad2[count:need] = circumcircles(allp, new)
        count = need

    out = tris[:count][alive[:count]]
    out = out[np.all(out < n, axis=1)]
    return out
