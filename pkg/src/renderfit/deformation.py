"""Shape deformation: per-vertex offsets (stage 1) and free-form deformation
over a 4x4x4 control lattice (stage 2)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import RenderfitError
from . import autodiff as ad
from .autodiff import Tensor
from .mesh import TriangleMesh, fit_vertices_unit_cube

LATTICE_N = 4          # control points per axis (degree-3 Bernstein basis)
LATTICE_MARGIN = 0.05  # box margin so deformed vertices stay inside the domain

# exploration priors; nothing in the source material fixes these
DEFAULT_SHAPE_PRIOR_SIGMA = 0.1
DEFAULT_SHAPE_PERTURB_SIGMA = 0.02


class DeformationError(RenderfitError):
    code = "E_DEFORM"


@dataclass(frozen=True)
class CategoryDims:
    """Relative width/height/depth multipliers applied to the base sphere."""

    width: float
    height: float
    depth: float

    def __post_init__(self):
        for v in (self.width, self.height, self.depth):
            if not (0.0 < v <= 1.0):
                raise DeformationError("dimensions must lie in (0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.width, self.height, self.depth])


def stage1_vertices(base_vertices: np.ndarray, offsets: Tensor | np.ndarray,
                    dims: CategoryDims) -> Tensor:
    """Scale the base sphere by the category dimensions, add per-vertex
    offsets, and refit to the unit cube.  Differentiable in the offsets."""
    offsets = ad.as_tensor(offsets)
    base = np.asarray(base_vertices, dtype=np.float64)
    if offsets.shape != base.shape:
        raise DeformationError("offsets shape must match base vertices")
    return fit_vertices_unit_cube(ad.as_tensor(base * dims.as_array()) + offsets)


def stage1_deform(base: TriangleMesh, offsets: np.ndarray,
                  dims: CategoryDims) -> TriangleMesh:
    with ad.no_grad():
        verts = stage1_vertices(base.vertices, offsets, dims)
    return base.with_vertices(verts.data)


# ---------------------------------------------------------------------------
# free-form deformation
# ---------------------------------------------------------------------------

@dataclass
class FFDGrid:
    """Displacements of a 4x4x4 control lattice plus per-axis aspect scales.

    Displacements are in lattice units (fractions of the lattice box edge).
    """

    displacements: np.ndarray = field(
        default_factory=lambda: np.zeros((LATTICE_N, LATTICE_N, LATTICE_N, 3)))
    aspect: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        self.displacements = np.asarray(self.displacements, dtype=np.float64)
        self.aspect = np.asarray(self.aspect, dtype=np.float64)
        if self.displacements.shape != (LATTICE_N, LATTICE_N, LATTICE_N, 3):
            raise DeformationError("displacements must be (4, 4, 4, 3)")
        if self.aspect.shape != (3,):
            raise DeformationError("aspect must have 3 entries")
        if not np.isfinite(self.displacements).all() or not np.isfinite(self.aspect).all():
            raise DeformationError("FFD parameters must be finite")
        if (self.aspect <= 0).any():
            raise DeformationError("aspect scales must be positive")

    def copy(self) -> "FFDGrid":
        return FFDGrid(self.displacements.copy(), self.aspect.copy())


def lattice_domain(base_vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned lattice box: base bounding box grown by the margin."""
    v = np.asarray(base_vertices)
    lo, hi = v.min(axis=0), v.max(axis=0)
    extent = hi - lo
    if (extent <= 0).any():
        raise DeformationError("base mesh has zero extent on some axis")
    return lo - LATTICE_MARGIN * extent, hi + LATTICE_MARGIN * extent


def bernstein_basis(t: np.ndarray) -> np.ndarray:
    """Degree-3 Bernstein polynomials, shape (len(t), 4)."""
    t = np.asarray(t, dtype=np.float64)
    s = 1.0 - t
    return np.stack([s ** 3, 3 * s * s * t, 3 * s * t * t, t ** 3], axis=-1)


def ffd_weights(base_vertices: np.ndarray,
                domain: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """(N_v, 64) trivariate Bernstein weight matrix for the lattice domain.

    The weights depend only on the undeformed vertices, so they are plain
    constants on the tape.
    """
    v = np.asarray(base_vertices, dtype=np.float64)
    lo, hi = lattice_domain(v) if domain is None else domain
    p = (v - lo) / (hi - lo)
    if (p < -1e-12).any() or (p > 1 + 1e-12).any():
        raise DeformationError("vertex outside the lattice domain")
    bx, by, bz = (bernstein_basis(p[:, i]) for i in range(3))
    w = bx[:, :, None, None] * by[:, None, :, None] * bz[:, None, None, :]
    return w.reshape(len(v), LATTICE_N ** 3)


_CONTROL_UNIT = np.stack(np.meshgrid(*([np.linspace(0.0, 1.0, LATTICE_N)] * 3),
                                     indexing="ij"), axis=-1).reshape(-1, 3)


def ffd_vertices(base_vertices: np.ndarray,
                 displacements: Tensor | np.ndarray,
                 aspect: Tensor | np.ndarray,
                 weights: np.ndarray | None = None,
                 domain: tuple[np.ndarray, np.ndarray] | None = None) -> Tensor:
    """Deform vertices through the displaced lattice, apply per-axis aspect
    scaling, and refit to the unit cube.  Differentiable in the
    displacements and the aspect; zero displacements reproduce the input
    (up to the refit) by the Bernstein partition of unity."""
    v = np.asarray(base_vertices, dtype=np.float64)
    lo, hi = lattice_domain(v) if domain is None else domain
    if weights is None:
        weights = ffd_weights(v, (lo, hi))
    disp = ad.as_tensor(displacements)
    if disp.shape != (LATTICE_N, LATTICE_N, LATTICE_N, 3):
        raise DeformationError("displacements must be (4, 4, 4, 3)")
    control = ad.as_tensor(_CONTROL_UNIT) + ad.reshape(disp, (LATTICE_N ** 3, 3))
    unit = ad.matmul(ad.as_tensor(weights), control)
    world = unit * (hi - lo) + lo
    scaled = world * ad.reshape(ad.as_tensor(aspect), (1, 3))
    return fit_vertices_unit_cube(scaled)


def ffd_deform(mesh: TriangleMesh, grid: FFDGrid,
               domain: tuple[np.ndarray, np.ndarray] | None = None) -> TriangleMesh:
    with ad.no_grad():
        verts = ffd_vertices(mesh.vertices, grid.displacements, grid.aspect,
                             domain=domain)
    return mesh.with_vertices(verts.data)


def random_shape(rng: np.random.Generator,
                 sigma: float = DEFAULT_SHAPE_PRIOR_SIGMA) -> FFDGrid:
    """Draw a grid from the zero-mean Gaussian shape prior."""
    return FFDGrid(rng.normal(scale=sigma, size=(LATTICE_N, LATTICE_N, LATTICE_N, 3)),
                   np.exp(rng.normal(scale=sigma, size=3)))


def perturb_shape(grid: FFDGrid, sigma: float, rng: np.random.Generator) -> FFDGrid:
    """Gaussian perturbation of the displacements (aspect kept)."""
    if sigma < 0:
        raise DeformationError("sigma must be >= 0")
    noise = rng.normal(scale=sigma, size=grid.displacements.shape) if sigma > 0 \
        else np.zeros_like(grid.displacements)
    return FFDGrid(grid.displacements + noise, grid.aspect.copy())
