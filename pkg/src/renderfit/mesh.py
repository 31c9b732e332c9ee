"""Triangle meshes: construction, scaling, symmetry, and surface smoothness.

The mesh is the carrier of all shape math.  Vertices/faces live in plain
numpy arrays; the differentiable operations (`fit_vertices_unit_cube`,
`smoothness_loss`, `SymmetryMap.expand`) accept autodiff Tensors so that
gradients reach the deformation parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import RenderfitError
from . import autodiff as ad
from .autodiff import Tensor

AXES = {"x": 0, "y": 1, "z": 2}

# below this, a face normal is treated as degenerate (zero-normal fallback)
DEGENERATE_AREA_EPS = 1e-12
# keeps arccos gradients finite at coplanar and folded edges
NORMAL_DOT_CLAMP = 1e-7


class MeshError(RenderfitError):
    code = "E_MESH"


@dataclass(frozen=True)
class TriangleMesh:
    """Vertices (N_v, 3), CCW-wound triangular faces (N_f, 3).

    `uvs`/`face_uvs` carry explicit texture coordinates for OBJ round trips;
    rendering uses the implicit per-face atlas mapping (face i -> patch i).
    """

    vertices: np.ndarray
    faces: np.ndarray
    uvs: np.ndarray | None = None
    face_uvs: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError("vertices must be (N_v, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError("faces must be (N_f, 3)")
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise MeshError("face index out of range")
            degenerate = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if degenerate.any():
                raise MeshError("degenerate face (repeated vertex index)")
        if self.face_uvs is not None:
            object.__setattr__(self, "face_uvs", np.asarray(self.face_uvs, dtype=np.int64))
        if self.uvs is not None:
            object.__setattr__(self, "uvs", np.asarray(self.uvs, dtype=np.float64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        return TriangleMesh(vertices, self.faces, self.uvs, self.face_uvs)

    def edges(self) -> np.ndarray:
        """Unique undirected edges, each row sorted, lexicographic order."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                            self.faces[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    def edge_face_counts(self) -> np.ndarray:
        """How many faces share each edge (aligned with `edges()`)."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                            self.faces[:, [2, 0]]])
        e = np.sort(e, axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return counts

    def is_edge_manifold(self) -> bool:
        counts = self.edge_face_counts()
        return bool(counts.size) and bool((counts == 2).all())

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_faces


# ---------------------------------------------------------------------------
# icosphere
# ---------------------------------------------------------------------------

def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return verts, faces


MAX_SUBDIVISIONS = 5


def make_icosphere(subdivisions: int) -> TriangleMesh:
    """Unit-radius geodesic sphere by 4-way face splits of an icosahedron."""
    if subdivisions < 0 or subdivisions > MAX_SUBDIVISIONS:
        raise MeshError(f"subdivisions must be in [0, {MAX_SUBDIVISIONS}]")
    verts, faces = _icosahedron()
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
    # enforce outward CCW winding (centered at origin, so normal . centroid > 0)
    v0, v1, v2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    normals = np.cross(v1 - v0, v2 - v0)
    centroid = (v0 + v1 + v2) / 3.0
    flipped = (normals * centroid).sum(axis=1) < 0
    faces[flipped] = faces[flipped][:, ::-1]
    return TriangleMesh(verts, faces)


def _subdivide(verts: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cache: dict[tuple[int, int], int] = {}
    new_verts = [v for v in verts]

    def midpoint(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            m = new_verts[a] + new_verts[b]
            m /= np.linalg.norm(m)
            cache[key] = len(new_verts)
            new_verts.append(m)
        return cache[key]

    new_faces = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(new_verts), np.array(new_faces, dtype=np.int64)


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------

def fit_vertices_unit_cube(vertices: Tensor | np.ndarray) -> Tensor:
    """Uniformly scale + translate so the AABB is origin-centered with
    largest side 1.  Differentiable; uses the first-extremum subgradient
    at bounding-box ties."""
    v = ad.as_tensor(vertices)
    if v.shape[0] < 1:
        raise MeshError("mesh has no vertices")
    vmin = ad.tmin(v, axis=0)
    vmax = ad.tmax(v, axis=0)
    extent = ad.tmax(vmax - vmin)
    if float(extent.data) <= 0.0:
        raise MeshError("zero-extent mesh cannot be scaled to a unit cube")
    center = (vmin + vmax) * 0.5
    return (v - center) / extent


def fit_unit_cube(mesh: TriangleMesh) -> TriangleMesh:
    with ad.no_grad():
        fitted = fit_vertices_unit_cube(mesh.vertices)
    return mesh.with_vertices(fitted.data)


# ---------------------------------------------------------------------------
# Laplacian and smoothness
# ---------------------------------------------------------------------------

class SurfaceTopology:
    """Static combinatorics of a face array, shared by the smoothness terms.

    Holds the directed neighbor lists used by the uniform graph Laplacian
    and the interior-edge -> (face, face) pairs used by the dihedral terms.
    """

    def __init__(self, faces: np.ndarray, n_vertices: int):
        faces = np.asarray(faces, dtype=np.int64)
        self.faces = faces
        self.n_vertices = n_vertices
        e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
        face_ids = np.tile(np.arange(len(faces)), 3)
        order = np.lexsort((np.sort(e, axis=1)[:, 1], np.sort(e, axis=1)[:, 0]))
        sorted_e = np.sort(e, axis=1)[order]
        sorted_f = face_ids[order]
        uniq, start, counts = np.unique(sorted_e, axis=0, return_index=True,
                                        return_counts=True)
        self.edges = uniq
        # directed neighbor list (both directions of every undirected edge)
        src = np.concatenate([uniq[:, 0], uniq[:, 1]])
        dst = np.concatenate([uniq[:, 1], uniq[:, 0]])
        self.nbr_src = src
        self.nbr_dst = dst
        self.degree = np.bincount(src, minlength=n_vertices).astype(np.float64)
        if (self.degree == 0).any():
            raise MeshError("isolated vertex (degree zero)")
        interior = counts == 2
        self.interior_edge_faces = np.stack(
            [sorted_f[start[interior]], sorted_f[start[interior] + 1]], axis=1)


def graph_laplacian(mesh: TriangleMesh) -> sp.csr_matrix:
    """Uniform-weight graph Laplacian: (L v)_i = v_i - mean of i's neighbors."""
    topo = SurfaceTopology(mesh.faces, mesh.n_vertices)
    n = mesh.n_vertices
    weights = -1.0 / topo.degree[topo.nbr_src]
    adj = sp.coo_matrix((weights, (topo.nbr_src, topo.nbr_dst)), shape=(n, n))
    return (sp.identity(n, format="csr") + adj.tocsr()).tocsr()


@dataclass
class SmoothnessConfig:
    """Weights and tolerances of the surface regularizer.

    The shipped defaults are artifact defaults tuned for the synthetic runs
    in this repository, not values from any external source.
    """

    t_l: float = 0.0
    t_a: float = 0.0
    lambda_g1: float = 0.0
    lambda_g2: float = 0.05
    lambda_a1: float = 0.0
    lambda_a2: float = 0.002

    def __post_init__(self):
        vals = [self.t_l, self.t_a, self.lambda_g1, self.lambda_g2,
                self.lambda_a1, self.lambda_a2]
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise MeshError("smoothness tolerances and weights must be finite and >= 0")


def laplacian_vectors(vertices: Tensor | np.ndarray, topo: SurfaceTopology) -> Tensor:
    """Differentiable (N_v, 3) array of v_i - mean(neighbors of i).

    Computed in difference form, sum_j (v_i - v_j) / deg_i, so constant
    vertex functions are annihilated exactly (every difference is 0.0).
    """
    v = ad.as_tensor(vertices)
    diffs = ad.gather(v, topo.nbr_src, axis=0) - ad.gather(v, topo.nbr_dst, axis=0)
    sums = ad.index_add(topo.n_vertices, topo.nbr_src, diffs)
    return sums / topo.degree[:, None]


def dihedral_angles(vertices: Tensor | np.ndarray, topo: SurfaceTopology,
                    stats: dict | None = None) -> Tensor:
    """Unsigned angle between face normals across each interior edge.

    Zero-area faces fall back to a zero angle and are counted in
    stats['degenerate_faces'] instead of crashing.
    """
    v = ad.as_tensor(vertices)
    f = topo.faces
    c0 = ad.gather(v, f[:, 0], axis=0)
    c1 = ad.gather(v, f[:, 1], axis=0)
    c2 = ad.gather(v, f[:, 2], axis=0)
    normals = _cross(c1 - c0, c2 - c0)
    norm = ad.sqrt(ad.tsum(normals * normals, axis=1) + 1e-300)
    degenerate = norm.data < DEGENERATE_AREA_EPS
    n_degenerate = int(degenerate.sum())
    if n_degenerate:
        warnings.warn(f"{n_degenerate} degenerate (zero-area) faces in dihedral terms")
    if stats is not None:
        stats["degenerate_faces"] = stats.get("degenerate_faces", 0) + n_degenerate
    unit = normals / ad.reshape(ad.maximum(norm, DEGENERATE_AREA_EPS), (-1, 1))
    pairs = topo.interior_edge_faces
    na = ad.gather(unit, pairs[:, 0], axis=0)
    nb = ad.gather(unit, pairs[:, 1], axis=0)
    dot = ad.tsum(na * nb, axis=1)
    dot = ad.clamp(dot, -1.0 + NORMAL_DOT_CLAMP, 1.0 - NORMAL_DOT_CLAMP)
    theta = ad.arccos(dot)
    edge_ok = ~(degenerate[pairs[:, 0]] | degenerate[pairs[:, 1]])
    return ad.where(edge_ok, theta, ad.Tensor(np.zeros(len(pairs))))


def _cross(a: Tensor, b: Tensor) -> Tensor:
    ax, ay, az = a[:, 0], a[:, 1], a[:, 2]
    bx, by, bz = b[:, 0], b[:, 1], b[:, 2]
    return ad.stack([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=1)


def smoothness_loss(vertices: Tensor | np.ndarray, faces: np.ndarray,
                    cfg: SmoothnessConfig, topo: SurfaceTopology | None = None,
                    stats: dict | None = None) -> Tensor:
    """Surface regularizer combining Laplacian magnitude and dihedral angles.

    Four terms: the squared per-vertex Laplacian norms, a tolerance-gated
    square of their summed norms, the squared dihedral angles, and a
    tolerance-gated square of their (unsigned) sum, combined with the four
    lambda weights.
    """
    v = ad.as_tensor(vertices)
    if topo is None:
        topo = SurfaceTopology(faces, v.shape[0])
    lv = laplacian_vectors(v, topo)
    sq = ad.tsum(lv * lv, axis=1)
    norms = ad.sqrt(sq + 1e-24)
    l_g2 = ad.tsum(sq)
    l_g1 = ad.maximum(ad.tsum(norms) - cfg.t_l, 0.0) ** 2
    theta = dihedral_angles(v, topo, stats=stats)
    l_a2 = ad.tsum(theta * theta)
    l_a1 = ad.maximum(ad.absolute(ad.tsum(theta)) - cfg.t_a, 0.0) ** 2
    return (cfg.lambda_g1 * l_g1 + cfg.lambda_g2 * l_g2
            + cfg.lambda_a1 * l_a1 + cfg.lambda_a2 * l_a2)


def mesh_smoothness_loss(mesh: TriangleMesh, cfg: SmoothnessConfig) -> float:
    with ad.no_grad():
        return float(smoothness_loss(mesh.vertices, mesh.faces, cfg).data)


# ---------------------------------------------------------------------------
# mirror symmetry
# ---------------------------------------------------------------------------

class SymmetryMap:
    """Pairing of base-mesh vertices under reflection through a coordinate plane.

    Offsets for a mirrored pair share one free parameter (the mirrored copy
    sees its plane-normal component negated); on-plane vertices get a free
    parameter whose plane-normal component is forced to zero.  Free layout:
    all pair owners first, then on-plane vertices.
    """

    def __init__(self, base_vertices: np.ndarray, axis: str = "x", tol: float = 1e-6):
        if axis not in AXES:
            raise MeshError(f"unknown mirror axis {axis!r}")
        self.axis = AXES[axis]
        v = np.asarray(base_vertices, dtype=np.float64)
        coord = v[:, self.axis]
        on_plane = np.abs(coord) <= tol
        positive = ~on_plane & (coord > 0)
        negative = ~on_plane & (coord < 0)
        mirrored = v.copy()
        mirrored[:, self.axis] *= -1.0
        tree = cKDTree(v)
        dist, partner = tree.query(mirrored[positive])
        if positive.sum() != negative.sum() or (dist > tol).any():
            raise MeshError("base mesh is not closed under the mirror map")
        owners = np.flatnonzero(positive)
        partners = partner
        if len(np.unique(partners)) != len(partners) or not negative[partners].all():
            raise MeshError("mirror pairing is not a bijection")
        self.pair_owner = owners
        self.pair_mirror = partners
        self.on_plane = np.flatnonzero(on_plane)
        self.n_vertices = len(v)
        self.n_free = len(owners) + len(self.on_plane)
        flip = np.ones(3)
        flip[self.axis] = -1.0
        self._flip = flip
        squash = np.ones(3)
        squash[self.axis] = 0.0
        self._squash = squash

    def expand(self, free: Tensor | np.ndarray) -> Tensor:
        """Free offsets (n_free, 3) -> full per-vertex offsets (N_v, 3)."""
        free = ad.as_tensor(free)
        if free.shape != (self.n_free, 3):
            raise MeshError(f"free offsets must have shape ({self.n_free}, 3)")
        n_pairs = len(self.pair_owner)
        own = free[:n_pairs]
        plane = free[n_pairs:]
        idx = np.concatenate([self.pair_owner, self.pair_mirror, self.on_plane])
        vals = ad.concatenate([own, own * self._flip, plane * self._squash], axis=0)
        return ad.index_add(self.n_vertices, idx, vals)


def symmetrize(free: Tensor | np.ndarray, base_vertices: np.ndarray,
               axis: str = "x") -> Tensor:
    return SymmetryMap(base_vertices, axis=axis).expand(free)


def mirror_distance(vertices: np.ndarray, axis: str = "x") -> float:
    """Max distance from each mirrored vertex to its nearest original vertex."""
    v = np.asarray(vertices, dtype=np.float64)
    m = v.copy()
    m[:, AXES[axis]] *= -1.0
    dist, _ = cKDTree(v).query(m)
    return float(dist.max())


# ---------------------------------------------------------------------------
# OBJ import/export
# ---------------------------------------------------------------------------

class ObjParseError(MeshError):
    code = "E_OBJ_PARSE"

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


def export_obj(mesh: TriangleMesh, path) -> None:
    """Write v/vt/f records; 9 significant digits per coordinate."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    has_uv = mesh.uvs is not None and mesh.face_uvs is not None
    if has_uv:
        for t in mesh.uvs:
            lines.append(f"vt {t[0]:.9g} {t[1]:.9g}")
        for f, t in zip(mesh.faces, mesh.face_uvs):
            lines.append(f"f {f[0]+1}/{t[0]+1} {f[1]+1}/{t[1]+1} {f[2]+1}/{t[2]+1}")
    else:
        for f in mesh.faces:
            lines.append(f"f {f[0]+1} {f[1]+1} {f[2]+1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_obj(path) -> TriangleMesh:
    verts: list[list[float]] = []
    uvs: list[list[float]] = []
    faces: list[list[int]] = []
    face_uvs: list[list[int]] = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tag, *rest = line.split()
            if tag == "v":
                if len(rest) < 3:
                    raise ObjParseError(path, line_no, "vertex needs 3 coordinates")
                try:
                    verts.append([float(x) for x in rest[:3]])
                except ValueError:
                    raise ObjParseError(path, line_no, "bad vertex coordinate")
            elif tag == "vt":
                if len(rest) < 2:
                    raise ObjParseError(path, line_no, "texture coord needs 2 values")
                try:
                    uvs.append([float(x) for x in rest[:2]])
                except ValueError:
                    raise ObjParseError(path, line_no, "bad texture coordinate")
            elif tag == "f":
                if len(rest) != 3:
                    raise ObjParseError(path, line_no, "only triangular faces supported")
                vi, ti = [], []
                for token in rest:
                    parts = token.split("/")
                    try:
                        vi.append(int(parts[0]) - 1)
                        if len(parts) > 1 and parts[1]:
                            ti.append(int(parts[1]) - 1)
                    except ValueError:
                        raise ObjParseError(path, line_no, f"bad face token {token!r}")
                faces.append(vi)
                if len(ti) == 3:
                    face_uvs.append(ti)
            # other record types (vn, mtllib, ...) are ignored
    if not verts:
        raise ObjParseError(path, 1, "no vertices found")
    mesh_uvs = np.array(uvs) if uvs and len(face_uvs) == len(faces) else None
    mesh_face_uvs = np.array(face_uvs) if mesh_uvs is not None else None
    try:
        return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64),
                            mesh_uvs, mesh_face_uvs)
    except MeshError as exc:
        raise ObjParseError(path, 1, str(exc))
