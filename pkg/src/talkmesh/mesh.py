"""Triangle meshes: OBJ I/O, disk-topology checks, region masks, adjacency."""
import json
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import (
    IndexOutOfRange,
    InvalidMesh,
    IsolatedVertex,
    MissingField,
    NonManifoldEdge,
    NonTriangular,
    ParseError,
)


def _frozen(arr, dtype):
    arr = np.array(arr, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with ``vertices`` (N, 3) and ``faces`` (F, 3).

    Faces are validated on construction: indices in range, no repeated index
    inside a face, and no face repeated up to cyclic rotation.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = _frozen(self.vertices, np.float64).reshape(-1, 3)
        f = _frozen(self.faces, np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        n = len(v)
        if f.size and (f.min() < 0 or f.max() >= n):
            raise IndexOutOfRange(f"face index outside [0, {n})")
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise InvalidMesh("degenerate face with repeated vertex index")
        # canonical cyclic rotation: smallest index first
        roll = np.argmin(f, axis=1)
        idx = (roll[:, None] + np.arange(3)) % 3
        canon = np.take_along_axis(f, idx, axis=1)
        if len(np.unique(canon, axis=0)) != len(f):
            raise InvalidMesh("duplicate face")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def edges(self):
        """Unique undirected edges as a sorted (E, 2) array."""
        if not len(self.faces):
            return np.zeros((0, 2), dtype=np.int64)
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def edge_face_counts(self):
        counts = defaultdict(int)
        for a, b, c in self.faces.tolist():
            for i, j in ((a, b), (b, c), (c, a)):
                counts[(i, j) if i < j else (j, i)] += 1
        return counts


def load_obj(path):
    """Read vertices and triangular faces from a Wavefront OBJ file.

    ``vt``/``vn`` references in face records (``f 1/1/1 ...``) are accepted and
    ignored; other record types are skipped.
    """
    vertices, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ParseError("vertex record needs 3 coordinates", lineno)
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise ParseError(f"bad vertex coordinate in {line.strip()!r}", lineno) from None
            elif tag == "f":
                if len(parts) != 4:
                    raise NonTriangular(f"line {lineno}: face with {len(parts) - 1} vertices")
                try:
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                except ValueError:
                    raise ParseError(f"bad face index in {line.strip()!r}", lineno) from None
                # negative indices are relative to the current vertex count
                idx = [i - 1 if i > 0 else len(vertices) + i for i in idx]
                faces.append(idx)
    return Mesh(np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
                np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh, path, uv=None):
    """Write ``mesh`` as OBJ with 9 significant digits and 1-based faces.

    When ``uv`` (N, 2) is given, ``vt`` records are written and faces use the
    ``v/vt`` form with matching indices.
    """
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices.tolist()]
    if uv is not None:
        lines += [f"vt {u:.9g} {v:.9g}" for u, v in np.asarray(uv).tolist()]
        lines += [f"f {a}/{a} {b}/{b} {c}/{c}" for a, b, c in (mesh.faces + 1).tolist()]
    else:
        lines += [f"f {a} {b} {c}" for a, b, c in (mesh.faces + 1).tolist()]
    text = "\n".join(lines) + ("\n" if lines else "")
    with open(path, "w") as fh:
        fh.write(text)


def load_obj_uv(path):
    """Read the ``vt`` records of an OBJ written by :func:`save_obj` with ``uv``."""
    uv = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if parts and parts[0] == "vt":
                try:
                    uv.append([float(parts[1]), float(parts[2])])
                except (ValueError, IndexError):
                    raise ParseError("bad vt record", lineno) from None
    return np.asarray(uv, dtype=np.float64).reshape(-1, 2)


@dataclass(frozen=True)
class DiskReport:
    euler_characteristic: int
    boundary_loop_count: int
    is_disk: bool


def _boundary_components(mesh, counts):
    adj = defaultdict(list)
    for (i, j), c in counts.items():
        if c == 1:
            adj[i].append(j)
            adj[j].append(i)
    loops, seen = [], set()
    for start in sorted(adj):
        if start in seen:
            continue
        # walk the component in a deterministic order
        loop, prev, cur = [start], None, start
        seen.add(start)
        stack = [start]
        comp = {start}
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in comp:
                    comp.add(w)
                    stack.append(w)
        seen |= comp
        while True:
            nxt = [w for w in sorted(adj[cur]) if w != prev and w not in loop]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            loop.append(cur)
        loops.append(loop if len(loop) == len(comp) else sorted(comp))
    return loops


def boundary_loops(mesh):
    """Boundary loops of ``mesh`` as lists of vertex indices in walking order.

    Loops are oriented so that they follow the faces' winding and start at the
    smallest vertex index of the loop.
    """
    counts = mesh.edge_face_counts()
    loops = _boundary_components(mesh, counts)
    directed = set()
    for a, b, c in mesh.faces.tolist():
        directed.update(((a, b), (b, c), (c, a)))
    out = []
    for loop in loops:
        if len(loop) >= 2 and (loop[0], loop[1]) not in directed:
            loop = [loop[0]] + loop[1:][::-1]
        out.append(loop)
    return out


def validate_disk_topology(mesh):
    """Euler characteristic, boundary loop count and disk test."""
    if mesh.n_faces == 0:
        raise InvalidMesh("empty mesh")
    counts = mesh.edge_face_counts()
    bad = [e for e, c in counts.items() if c > 2]
    if bad:
        raise NonManifoldEdge(f"edge {bad[0]} has {counts[bad[0]]} incident faces")
    used = np.unique(mesh.faces)
    chi = len(used) - len(counts) + mesh.n_faces
    n_loops = len(_boundary_components(mesh, counts))
    return DiskReport(int(chi), n_loops, bool(chi == 1 and n_loops == 1))


@dataclass(frozen=True, eq=False)
class AdjacencyOperator:
    """Normalized adjacency: 1 on the diagonal, ``1/d_i`` on edge entries."""

    matrix: sparse.csr_matrix
    degrees: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    def dense(self):
        return self.matrix.toarray()

    def __matmul__(self, other):
        return self.matrix @ other


def build_adjacency(mesh):
    n = mesh.n_vertices
    e = mesh.edges()
    deg = np.bincount(e.ravel(), minlength=n)
    if np.any(deg == 0):
        raise IsolatedVertex(f"vertex {int(np.argmin(deg))} is referenced by no face")
    rows = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
    cols = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
    vals = np.concatenate([1.0 / deg[e[:, 0]], 1.0 / deg[e[:, 1]], np.ones(n)])
    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    mat.sort_indices()
    return AdjacencyOperator(mat, deg)


_MASK_FIELDS = ("lip", "eye", "upper_face", "keypoints")


@dataclass(frozen=True, eq=False)
class RegionMasks:
    """Vertex index sets for lips, eyes, upper face and sampling keypoints."""

    lip_vertices: np.ndarray
    eye_vertices: np.ndarray
    upper_face_vertices: np.ndarray
    keypoints: np.ndarray

    def __post_init__(self):
        for name in ("lip_vertices", "eye_vertices", "upper_face_vertices", "keypoints"):
            arr = np.unique(np.asarray(getattr(self, name), dtype=np.int64).ravel())
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def validate(self, n_vertices):
        for name in ("lip_vertices", "eye_vertices", "upper_face_vertices", "keypoints"):
            arr = getattr(self, name)
            if arr.size and (arr.min() < 0 or arr.max() >= n_vertices):
                raise IndexOutOfRange(f"{name} has an index outside [0, {n_vertices})")
        return self

    def to_dict(self):
        return {
            "lip": self.lip_vertices.tolist(),
            "eye": self.eye_vertices.tolist(),
            "upper_face": self.upper_face_vertices.tolist(),
            "keypoints": self.keypoints.tolist(),
        }


def load_region_masks(path, mesh):
    """Load a JSON masks document with integer arrays lip/eye/upper_face/keypoints."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc.msg}", exc.lineno) from None
    missing = [k for k in _MASK_FIELDS if k not in doc]
    if missing:
        raise MissingField(f"masks file lacks {', '.join(missing)}")
    masks = RegionMasks(doc["lip"], doc["eye"], doc["upper_face"], doc["keypoints"])
    return masks.validate(mesh.n_vertices)


def save_region_masks(masks, path):
    with open(path, "w") as fh:
        json.dump(masks.to_dict(), fh, indent=1)
        fh.write("\n")
