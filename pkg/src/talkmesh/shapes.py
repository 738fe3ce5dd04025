"""Procedural test surfaces."""
import math

import numpy as np

from .delaunay import delaunay_triangulate
from .mesh import Mesh


def grid_mesh(nx, ny, size=(1.0, 1.0), z=0.0):
    """Planar (nx x ny)-vertex grid in the z = const plane, two triangles per cell."""
    xs = np.linspace(0.0, size[0], nx)
    ys = np.linspace(0.0, size[1], ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel(), np.full(X.size, z)], axis=1)
    idx = np.arange(nx * ny).reshape(nx, ny)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    faces = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return Mesh(verts, faces)


def disk_points(n_rings):
    """Concentric rings in the unit disk: ring k has 6k points at radius k/n_rings."""
    pts = [np.zeros((1, 2))]
    for k in range(1, n_rings + 1):
        theta = 2 * np.pi * (np.arange(6 * k) + 0.5 * (k % 2)) / (6 * k)
        pts.append(k / n_rings * np.stack([np.cos(theta), np.sin(theta)], 1))
    return np.concatenate(pts)


def rings_for(n_target):
    """Smallest ring count whose disk has at least ``n_target`` points."""
    r = 1
    while 1 + 3 * r * (r + 1) < n_target:
        r += 1
    return r


def hemisphere_cap(n_rings, polar_extent=0.5 * math.pi, radius=1.0):
    """Spherical cap of half-angle ``polar_extent`` (default: a hemisphere).

    Disk points at radius r map to polar angle r * polar_extent, so the
    boundary is a circle.  Faces are counter-clockwise seen from +z (outward).

    Returns
    -------
    mesh : Mesh
    disk : (N, 2) array
        The planar positions the cap was triangulated from.
    """
    disk = disk_points(n_rings)
    faces = delaunay_triangulate(disk)
    r = np.linalg.norm(disk, axis=1)
    phi = r * polar_extent
    theta = np.arctan2(disk[:, 1], disk[:, 0])
    verts = radius * np.stack([np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)], 1)
    return Mesh(verts, faces), disk


def stereographic(vertices, radius=1.0):
    """Stereographic projection from the south pole onto the z = 0 plane."""
    v = np.asarray(vertices) / radius
    return v[:, :2] / (1.0 + v[:, 2:3])


def octahedron():
    verts = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    faces = np.array([
        [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
        [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
    ])
    return Mesh(verts, faces)


def random_disk_mesh(rng, n_vertices):
    """Delaunay triangulation of random points in the unit square (a disk)."""
    pts = rng.random((n_vertices, 2))
    faces = delaunay_triangulate(pts)
    return Mesh(np.column_stack([pts, np.zeros(n_vertices)]), faces)
