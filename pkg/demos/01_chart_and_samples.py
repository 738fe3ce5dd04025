"""
Flattening a face mesh and drawing a sample set
===============================================

Loads the bundled hemisphere cap, maps it to the unit square with a
least-squares conformal map, then draws 300 samples that favour the
neighbourhood of a few keypoints.
"""
import sys

import numpy as np

from talkmesh import bundled_mesh_path, load_obj
from talkmesh.mesh import RegionMasks
from talkmesh.sampler import draw_samples, init_distribution
from talkmesh.uv import build_locator, conformal_parameterize

mesh = load_obj(bundled_mesh_path())
print("vertices", mesh.n_vertices, "faces", mesh.n_faces)

atlas = conformal_parameterize(mesh)
print("uv range", atlas.uv.min(axis=0), atlas.uv.max(axis=0))
print("all faces positively oriented:", bool(np.all(atlas.signed_areas() > 0)))

# keypoints: the vertex nearest each landmark in the xy plane
xy = mesh.vertices[:, :2]
landmarks = np.array([[0.0, -0.45], [-0.35, 0.3], [0.35, 0.3]])
kp = [int(np.argmin(np.sum((xy - c) ** 2, axis=1))) for c in landmarks]
masks = RegionMasks([], [], [], kp)

dist = init_distribution(mesh, atlas, masks, alpha=4.0)
p = dist.probabilities
print("face probability: min %.2e  max %.2e  (uniform %.2e)" % (p.min(), p.max(), 1 / len(p)))

samples = draw_samples(dist, atlas, 300, seed=0)
print("samples", samples.M, "pinned boundary", samples.n_pinned, "triangles", len(samples.out_faces))

# samples are tied back to the surface through their host face
pos = samples.interpolate(mesh.faces, mesh.vertices[None])[0]
print("mean sample height z", pos[:, 2].mean().round(4))

# the locator answers arbitrary chart queries
loc = build_locator(atlas)
hit = loc.query(np.array([0.5, 0.5]))
print("chart centre lies in face", hit[0], "with barycentrics", np.round(hit[1], 4))

if "--plot" in sys.argv:
    import matplotlib.pyplot as plt

    plt.triplot(samples.points[:, 0], samples.points[:, 1], samples.out_faces, lw=0.5)
    plt.gca().set_aspect("equal")
    plt.show()
