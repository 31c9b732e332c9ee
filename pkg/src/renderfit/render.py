"""Differentiable soft rasterization of textured triangle meshes.

Per pixel, each face gets a coverage probability sigmoid(d / sigma) from its
signed screen-space distance d (positive inside), and faces are blended by a
depth softmax whose temperature is tied to the screen softness; the result
is composited over the background by the residual weight.  Soft coverage
makes every output pixel finite-difference checkable with respect to
vertices, texture, background, lighting, and camera, and hardens to a 0/1
mask as sigma -> 0.

Pixels whose distance to every face is below the sigmoid cutoff carry
exactly zero coverage and exactly zero gradient to mesh vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import RenderfitError
from . import autodiff as ad
from .autodiff import Tensor
from .appearance import patch_origins
from .mesh import TriangleMesh

# sigmoid(t) is treated as exactly 0 below this argument
SIGMOID_CUTOFF = 30.0
# face probability is kept this far from 1 so the log-space coverage stays finite
COVERAGE_EPS = 1e-12
DEGENERATE_DENOM_EPS = 1e-12


class RenderError(RenderfitError):
    code = "E_RENDER"


@dataclass
class RenderConfig:
    height: int = 32
    width: int = 32
    sigma: float = 0.7            # soft-edge width in pixels
    depth_temperature: float | None = None  # None: tied to sigma
    supersample: int = 16         # hard-oracle supersampling factor
    near: float = 0.2
    far: float = 10.0
    fov_deg: float = 30.0
    patch: int = 4                # atlas patch resolution (texels per face side)

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise RenderError("image size must be at least 8x8")
        if self.sigma <= 0:
            raise RenderError("sigma must be positive")
        if not (0 < self.near < self.far):
            raise RenderError("need 0 < near < far")

    @property
    def gamma(self) -> float:
        if self.depth_temperature is not None:
            return self.depth_temperature
        return max(1e-4, 0.015 * self.sigma)


@dataclass(frozen=True)
class Lighting:
    """Ambient plus one directional light.

    ambient + directional <= 1 keeps shaded texture colors inside [0, 1]
    without clamping (and therefore without dead gradients).
    """

    ambient: float
    directional: float
    direction: tuple[float, float, float]

    def __post_init__(self):
        if not (0.0 <= self.ambient <= 1.0 and 0.0 <= self.directional <= 1.0):
            raise RenderError("light intensities must lie in [0, 1]")
        if self.ambient + self.directional > 1.0 + 1e-9:
            raise RenderError("ambient + directional must not exceed 1")
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise RenderError("light direction must be unit length")


DEFAULT_AMBIENT_RANGE = (0.4, 0.6)
DEFAULT_DIRECTIONAL_RANGE = (0.2, 0.4)


def sample_light(rng: np.random.Generator,
                 ambient_range: tuple[float, float] = DEFAULT_AMBIENT_RANGE,
                 directional_range: tuple[float, float] = DEFAULT_DIRECTIONAL_RANGE,
                 ) -> Lighting:
    """Random directional light: direction area-uniform on the upper (z >= 0)
    hemisphere, intensities uniform in the configured ranges."""
    z = rng.uniform(0.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    r = math.sqrt(max(0.0, 1.0 - z * z))
    direction = np.array([r * math.cos(phi), r * math.sin(phi), z])
    direction /= np.linalg.norm(direction)
    return Lighting(float(rng.uniform(*ambient_range)),
                    float(rng.uniform(*directional_range)),
                    tuple(direction))


@dataclass
class LightBatch:
    """Per-view light parameters; any field may be a Tensor for gradients."""

    ambient: Tensor | np.ndarray        # (B,)
    directional: Tensor | np.ndarray    # (B,)
    direction: Tensor | np.ndarray      # (B, 3)

    @staticmethod
    def from_lights(lights: list[Lighting]) -> "LightBatch":
        return LightBatch(np.array([l.ambient for l in lights]),
                          np.array([l.directional for l in lights]),
                          np.array([l.direction for l in lights]))


# ---------------------------------------------------------------------------
# projection helpers
# ---------------------------------------------------------------------------

def _project(verts: Tensor, cams, cfg: RenderConfig):
    """Vertices (N_v, 3) through (B, 4, 4) transforms -> per-vertex screen
    x, y (pixels) and camera depth, each (B, N_v)."""
    n_v = verts.shape[0]
    ones = np.ones((n_v, 1))
    verts_h = ad.concatenate([verts, ad.Tensor(ones)], axis=1)      # (N_v, 4)
    clip = ad.matmul(ad.as_tensor(cams), ad.transpose(verts_h))      # (B, 4, N_v)
    w = clip[:, 3, :]
    w_safe = ad.maximum(w, cfg.near)
    ndc_x = clip[:, 0, :] / w_safe
    ndc_y = clip[:, 1, :] / w_safe
    pix_x = (ndc_x + 1.0) * (0.5 * (cfg.width - 1))
    pix_y = (1.0 - ndc_y) * (0.5 * (cfg.height - 1))
    return pix_x, pix_y, w


def _face_corners(values: Tensor, faces: np.ndarray):
    """(B, N_v) per-vertex values -> three (B, N_f) per-corner tensors."""
    flat = ad.gather(values, faces.ravel(), axis=1)
    per = ad.reshape(flat, (values.shape[0], len(faces), 3))
    return per[:, :, 0], per[:, :, 1], per[:, :, 2]


class _Raster:
    """Shared per-face screen geometry: barycentrics, coverage, soft blending."""

    def __init__(self, verts: Tensor, faces: np.ndarray, cams, cfg: RenderConfig):
        if not np.isfinite(verts.data).all():
            raise RenderError("non-finite vertex positions")
        self.cfg = cfg
        self.faces = faces
        px, py, w = _project(verts, cams, cfg)
        x0, x1, x2 = _face_corners(px, faces)
        y0, y1, y2 = _face_corners(py, faces)
        z0, z1, z2 = _face_corners(w, faces)
        denom = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2)
        good = np.abs(denom.data) > DEGENERATE_DENOM_EPS
        denom_safe = ad.where(good, denom, ad.Tensor(np.ones_like(denom.data)))

        # barycentric planes b_i(X, Y) = A_i X + B_i Y + C_i
        a0 = (y1 - y2) / denom_safe
        b0 = (x2 - x1) / denom_safe
        c0 = (-a0) * x2 + (-b0) * y2
        a1 = (y2 - y0) / denom_safe
        b1 = (x0 - x2) / denom_safe
        c1 = (-a1) * x2 + (-b1) * y2

        gx, gy = np.meshgrid(np.arange(cfg.width, dtype=np.float64),
                             np.arange(cfg.height, dtype=np.float64))

        def plane(a, b, c):
            sh = a.shape + (1, 1)
            return ad.reshape(a, sh) * gx + ad.reshape(b, sh) * gy + ad.reshape(c, sh)

        bar0 = plane(a0, b0, c0)
        bar1 = plane(a1, b1, c1)
        bar2 = 1.0 - bar0 - bar1

        # squared pixel distance to the face as a set (min over the three
        # edge segments); edge-line distances alone would leak coverage
        # along the infinite extensions of sliver (near edge-on) faces
        def lift(s):
            return ad.reshape(s, s.shape + (1, 1))

        dist_sq = None
        for xa, ya, xb, yb in ((x0, y0, x1, y1), (x1, y1, x2, y2),
                               (x2, y2, x0, y0)):
            ex, ey = xb - xa, yb - ya
            inv_l2 = 1.0 / (ex * ex + ey * ey + 1e-300)
            rx = gx - lift(xa)
            ry = gy - lift(ya)
            tpar = ad.clamp((rx * lift(ex) + ry * lift(ey)) * lift(inv_l2), 0.0, 1.0)
            dx = rx - tpar * lift(ex)
            dy = ry - tpar * lift(ey)
            d2 = dx * dx + dy * dy
            dist_sq = d2 if dist_sq is None else ad.minimum(dist_sq, d2)

        # signed squared-distance response: positive inside, smooth at the
        # boundary, tails die fast enough that the union over faces stays
        # area-accurate
        inside = (bar0.data >= 0) & (bar1.data >= 0) & (bar2.data >= 0)
        t = ad.where(inside, dist_sq, -dist_sq) * (1.0 / cfg.sigma ** 2)
        live = good[..., None, None] & (t.data > -SIGMOID_CUTOFF)
        self.prob = ad.where(live, ad.sigmoid(t), ad.Tensor(0.0))

        # clamped, renormalized barycentrics for interpolation (sum >= 1/3)
        cb0 = ad.clamp(bar0, 0.0, 1.0)
        cb1 = ad.clamp(bar1, 0.0, 1.0)
        cb2 = ad.clamp(bar2, 0.0, 1.0)
        total = cb0 + cb1 + cb2
        self.ib0, self.ib1, self.ib2 = cb0 / total, cb1 / total, cb2 / total
        self.depth_corners = (z0, z1, z2)

    def interpolate_corner_scalars(self, s0, s1, s2) -> Tensor:
        """Blend per-corner (B, N_f) scalars over the pixel grid."""
        def lift(s):
            return ad.reshape(s, s.shape + (1, 1))
        return (self.ib0 * lift(s0) + self.ib1 * lift(s1) + self.ib2 * lift(s2))

    def coverage(self) -> Tensor:
        """Soft silhouette: 1 - prod_f (1 - prob_f), in log space."""
        safe = ad.minimum(self.prob, 1.0 - COVERAGE_EPS)
        return 1.0 - ad.exp(ad.tsum(ad.log(1.0 - safe), axis=1))

    def blend_weights(self) -> Tensor:
        """Coverage-scaled depth-softmax weights (B, N_f, H, W).

        Faces compete among themselves for each pixel (nearest face wins as
        the temperature shrinks); the weights sum to the pixel's coverage,
        so `1 - sum` is the background weight.
        """
        cfg = self.cfg
        z0, z1, z2 = self.depth_corners
        z = self.interpolate_corner_scalars(z0, z1, z2)
        zn = ad.clamp((cfg.far - z) / (cfg.far - cfg.near), 0.0, 1.0)
        logits = zn / cfg.gamma
        m = logits.data.max(axis=1, keepdims=True)  # constant softmax shift
        num = self.prob * ad.exp(logits - m)
        # floor keeps den**2 above the subnormal range in the div backward
        den = ad.tsum(num, axis=1, keepdims=True) + 1e-30
        alpha = self.coverage()
        return (num / den) * ad.reshape(alpha, (alpha.shape[0], 1) + alpha.shape[1:])


def _broadcast_background(background, batch: int, cfg: RenderConfig) -> Tensor:
    bg = ad.as_tensor(background)
    if bg.ndim == 3:
        if bg.shape != (cfg.height, cfg.width, 3):
            raise RenderError("background must be (H, W, 3)")
        return bg * np.ones((batch, 1, 1, 1))
    if bg.shape != (batch, cfg.height, cfg.width, 3):
        raise RenderError("background must be (B, H, W, 3)")
    return bg


def _vertex_light_dots(verts: Tensor, faces: np.ndarray, direction) -> Tensor:
    """(B, N_v) dot products of unit vertex normals with light directions.

    Vertex normals are the (area-weighted) sums of incident face normals,
    normalized per vertex; zero-area faces simply contribute nothing.
    """
    c0 = ad.gather(verts, faces[:, 0], axis=0)
    c1 = ad.gather(verts, faces[:, 1], axis=0)
    c2 = ad.gather(verts, faces[:, 2], axis=0)
    e1, e2 = c1 - c0, c2 - c0

    def col(t, i):
        return t[:, i]

    nx = col(e1, 1) * col(e2, 2) - col(e1, 2) * col(e2, 1)
    ny = col(e1, 2) * col(e2, 0) - col(e1, 0) * col(e2, 2)
    nz = col(e1, 0) * col(e2, 1) - col(e1, 1) * col(e2, 0)
    fnormals = ad.stack([nx, ny, nz], axis=1)            # (N_f, 3), 2*area weighted
    n_v = verts.shape[0]
    idx = np.concatenate([faces[:, 0], faces[:, 1], faces[:, 2]])
    vals = ad.concatenate([fnormals, fnormals, fnormals], axis=0)
    vnormals = ad.index_add(n_v, idx, vals)
    norm = ad.sqrt(ad.tsum(vnormals * vnormals, axis=1, keepdims=True) + 1e-24)
    unit = vnormals / norm
    ldir = ad.as_tensor(direction)                       # (B, 3)
    return ad.matmul(ldir, ad.transpose(unit))           # (B, N_v)


def rasterize_batch(verts: Tensor | np.ndarray, faces: np.ndarray,
                    texture: Tensor | np.ndarray, cams,
                    lights: LightBatch | list[Lighting] | None,
                    background, cfg: RenderConfig) -> Tensor:
    """Render (B, H, W, 3) images; differentiable w.r.t. vertices, texture,
    background, light parameters, and camera transforms."""
    verts = ad.as_tensor(verts)
    texture = ad.as_tensor(texture)
    cams_t = ad.as_tensor(cams)
    batch = cams_t.shape[0]
    if len(faces) == 0 or verts.shape[0] == 0:
        return _broadcast_background(background, batch, cfg)
    if isinstance(lights, list):
        lights = LightBatch.from_lights(lights)

    ras = _Raster(verts, faces, cams_t, cfg)
    weights = ras.blend_weights()
    bg_weight = 1.0 - ad.tsum(weights, axis=1)

    if lights is not None:
        dots = _vertex_light_dots(verts, faces, lights.direction)
        d0, d1, d2 = _face_corners(dots, faces)
        ndotl = ad.maximum(ras.interpolate_corner_scalars(d0, d1, d2), 0.0)
        amb = ad.reshape(ad.as_tensor(lights.ambient), (batch, 1, 1, 1))
        dif = ad.reshape(ad.as_tensor(lights.directional), (batch, 1, 1, 1))
        weights = weights * (amb + dif * ndotl)  # fold shading into the weights

    n_f = len(faces)
    patch = cfg.patch
    row0, col0 = patch_origins(n_f, patch)
    shape4 = (1, n_f, 1, 1)
    tex_x = ras.ib1 * (patch - 1.0) + col0.reshape(shape4)
    tex_y = ras.ib2 * (patch - 1.0) + row0.reshape(shape4)
    contrib = ad.weighted_blend_sample(texture, tex_x, tex_y, weights)
    bg = _broadcast_background(background, batch, cfg)
    return contrib + ad.reshape(bg_weight, bg_weight.shape + (1,)) * bg


def rasterize(mesh: TriangleMesh, texture, camera, light: Lighting | None,
              background, cfg: RenderConfig) -> Tensor:
    """Single-view convenience wrapper around :func:`rasterize_batch`."""
    cams = camera if getattr(camera, "ndim", 2) == 3 else _expand_cam(camera)
    lights = [light] if light is not None else None
    out = rasterize_batch(ad.as_tensor(mesh.vertices), mesh.faces, texture,
                          cams, lights, background, cfg)
    return out[0]


def _expand_cam(camera):
    if isinstance(camera, Tensor):
        return ad.reshape(camera, (1, 4, 4))
    return np.asarray(camera)[None]


def render_silhouette_batch(verts: Tensor | np.ndarray, faces: np.ndarray,
                            cams, cfg: RenderConfig) -> Tensor:
    """Soft coverage masks (B, H, W) in [0, 1]; hardens as sigma -> 0."""
    verts = ad.as_tensor(verts)
    cams_t = ad.as_tensor(cams)
    if len(faces) == 0 or verts.shape[0] == 0:
        return ad.Tensor(np.zeros((cams_t.shape[0], cfg.height, cfg.width)))
    return _Raster(verts, faces, cams_t, cfg).coverage()


def render_silhouette(mesh: TriangleMesh, camera, cfg: RenderConfig) -> Tensor:
    out = render_silhouette_batch(ad.as_tensor(mesh.vertices), mesh.faces,
                                  _expand_cam(camera), cfg)
    return out[0]


def crop_resize(image: Tensor | np.ndarray, bbox: tuple[float, float, float, float],
                out_size: tuple[int, int]) -> Tensor:
    """Bilinear resample of the bbox region (y0, x0, y1, x1) to (h, w)."""
    img = ad.as_tensor(image)
    y0, x0, y1, x1 = (float(v) for v in bbox)
    h, w = out_size
    if not (y1 > y0 and x1 > x0):
        raise RenderError("empty bbox")
    if y0 < 0 or x0 < 0 or y1 > img.shape[0] - 1 or x1 > img.shape[1] - 1:
        raise RenderError("bbox outside image")
    ys = np.linspace(y0, y1, h)
    xs = np.linspace(x0, x1, w)
    gx, gy = np.meshgrid(xs, ys)
    return ad.bilinear_sample(img, ad.Tensor(gx), ad.Tensor(gy))


# ---------------------------------------------------------------------------
# hard-rasterization oracle (non-differentiable; tests and IoU metrics)
# ---------------------------------------------------------------------------

def hard_silhouette(mesh: TriangleMesh, camera: np.ndarray, cfg: RenderConfig,
                    supersample: int | None = None) -> np.ndarray:
    """Supersampled point-in-triangle coverage in [0, 1], shape (H, W)."""
    ss = supersample or cfg.supersample
    n = int(math.isqrt(ss))
    H, W = cfg.height, cfg.width
    verts_h = np.concatenate([mesh.vertices, np.ones((mesh.n_vertices, 1))], axis=1)
    clip = verts_h @ np.asarray(camera).T
    w = np.maximum(clip[:, 3], cfg.near)
    px = (clip[:, 0] / w + 1.0) * (0.5 * (W - 1))
    py = (1.0 - clip[:, 1] / w) * (0.5 * (H - 1))
    offs = (np.arange(n) + 0.5) / n - 0.5
    sx, sy = np.meshgrid(offs, offs)
    gx = (np.arange(W)[None, None, :, None] + sx.ravel()).reshape(1, 1, W, -1)
    gy = (np.arange(H)[None, :, None, None] + sy.ravel()).reshape(1, H, 1, -1)
    x = px[mesh.faces]
    y = py[mesh.faces]
    covered = np.zeros((H, W, n * n), dtype=bool)
    for (x0, x1, x2), (y0, y1, y2) in zip(x, y):
        denom = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2)
        if abs(denom) < DEGENERATE_DENOM_EPS:
            continue
        b0 = ((y1 - y2) * (gx - x2) + (x2 - x1) * (gy - y2)) / denom
        b1 = ((y2 - y0) * (gx - x2) + (x0 - x2) * (gy - y2)) / denom
        b2 = 1.0 - b0 - b1
        covered |= ((b0 >= 0) & (b1 >= 0) & (b2 >= 0))[0]
    return covered.mean(axis=2)


def silhouette_iou(mesh_a: TriangleMesh, mesh_b: TriangleMesh,
                   cameras: list[np.ndarray], cfg: RenderConfig,
                   threshold: float = 0.5) -> float:
    """Mean hard-silhouette IoU of two shapes over a set of views."""
    scores = []
    for cam in cameras:
        sa = hard_silhouette(mesh_a, cam, cfg) > threshold
        sb = hard_silhouette(mesh_b, cam, cfg) > threshold
        union = (sa | sb).sum()
        scores.append(1.0 if union == 0 else (sa & sb).sum() / union)
    return float(np.mean(scores))


def canonical_ring_cameras(n_views: int, elevation: float = 15.0,
                           distance: float = 2.5,
                           fov_deg: float = 30.0) -> list[np.ndarray]:
    """Evenly spaced azimuths at a fixed elevation (evaluation viewpoints)."""
    from .camera import PoseParams, pose_to_camera
    return [pose_to_camera(PoseParams(azimuth=az, elevation=elevation,
                                      distance=distance), fov_deg)
            for az in np.linspace(0.0, 360.0, n_views, endpoint=False)]
