"""Textures and backgrounds.

Stage-1 textures mix a small color palette through per-texel softmax
weights, which keeps texture capacity low; stage-2 textures are free RGB
logits regularized by total variation.  Backgrounds are horizontal stripes:
one color per (upsampled) row, so they can depict sky/ground gradients but
never objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import RenderfitError
from . import autodiff as ad
from .autodiff import Tensor

DEFAULT_PATCH_STAGE1 = 4
DEFAULT_PATCH_STAGE2 = 6
DEFAULT_BACKGROUND_ROWS = 8


class AppearanceError(RenderfitError):
    code = "E_APPEARANCE"


@dataclass
class TextureSpec:
    """Logit-space texture parameters.

    mode 'palette': `weights` (T, T, N_c) channel logits + `palette`
    (N_c, 3) color logits.  mode 'rgb': `rgb` (T, T, 3) logits.
    """

    mode: str
    weights: np.ndarray | None = None
    palette: np.ndarray | None = None
    rgb: np.ndarray | None = None

    def __post_init__(self):
        if self.mode == "palette":
            if self.weights is None or self.palette is None:
                raise AppearanceError("palette mode needs weights and palette")
            self.weights = np.asarray(self.weights, dtype=np.float64)
            self.palette = np.asarray(self.palette, dtype=np.float64)
            if self.weights.ndim != 3:
                raise AppearanceError("weights must be (T, T, N_c)")
            if self.palette.ndim != 2 or self.palette.shape[1] != 3:
                raise AppearanceError("palette must be (N_c, 3)")
            if self.palette.shape[0] != self.weights.shape[2]:
                raise AppearanceError("palette size must match weight channels")
            if self.palette.shape[0] < 1:
                raise AppearanceError("need at least one palette color")
        elif self.mode == "rgb":
            if self.rgb is None:
                raise AppearanceError("rgb mode needs rgb logits")
            self.rgb = np.asarray(self.rgb, dtype=np.float64)
            if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
                raise AppearanceError("rgb must be (T, T, 3)")
        else:
            raise AppearanceError(f"unknown texture mode {self.mode!r}")

    @property
    def resolution(self) -> int:
        src = self.weights if self.mode == "palette" else self.rgb
        return src.shape[0]


def realize_texture_palette(weights: Tensor | np.ndarray,
                            palette: Tensor | np.ndarray) -> Tensor:
    """Texels = softmax(weights) . sigmoid(palette); values in [0, 1] and in
    the convex hull of the activated palette colors."""
    w = ad.as_tensor(weights)
    p = ad.as_tensor(palette)
    if p.shape[0] < 1:
        raise AppearanceError("need at least one palette color")
    t = w.shape[0]
    mix = ad.softmax(ad.reshape(w, (t * t, p.shape[0])), axis=1)
    colors = ad.sigmoid(p)
    return ad.reshape(ad.matmul(mix, colors), (t, t, 3))


def realize_texture_rgb(rgb: Tensor | np.ndarray) -> Tensor:
    return ad.sigmoid(ad.as_tensor(rgb))


def realize_texture(spec: TextureSpec) -> np.ndarray:
    with ad.no_grad():
        if spec.mode == "palette":
            return realize_texture_palette(spec.weights, spec.palette).data
        return realize_texture_rgb(spec.rgb).data


def total_variation(image: Tensor | np.ndarray) -> Tensor:
    """Anisotropic TV: mean |horizontal difference| + mean |vertical difference|."""
    img = ad.as_tensor(image)
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise AppearanceError("total variation needs at least 2x2 texels")
    dh = img[:, 1:] - img[:, :-1]
    dv = img[1:, :] - img[:-1, :]
    return ad.tmean(ad.absolute(dh)) + ad.tmean(ad.absolute(dv))


# ---------------------------------------------------------------------------
# stripe backgrounds
# ---------------------------------------------------------------------------

@dataclass
class StripeBackground:
    """One color logit triple per background row."""

    row_logits: np.ndarray

    def __post_init__(self):
        self.row_logits = np.asarray(self.row_logits, dtype=np.float64)
        if self.row_logits.ndim != 2 or self.row_logits.shape[1] != 3:
            raise AppearanceError("row logits must be (H_bg, 3)")
        if self.row_logits.shape[0] < 1:
            raise AppearanceError("need at least one background row")

    @property
    def n_rows(self) -> int:
        return self.row_logits.shape[0]


def _row_interp_matrix(h_out: int, h_in: int) -> np.ndarray:
    """Vertical align-corners linear interpolation matrix (h_out, h_in)."""
    m = np.zeros((h_out, h_in))
    if h_in == 1:
        m[:, 0] = 1.0
        return m
    pos = np.linspace(0.0, h_in - 1.0, h_out)
    lo = np.minimum(np.floor(pos).astype(int), h_in - 2)
    frac = pos - lo
    m[np.arange(h_out), lo] = 1.0 - frac
    m[np.arange(h_out), lo + 1] += frac
    return m


def realize_background(row_logits: Tensor | np.ndarray, height: int,
                       width: int) -> Tensor:
    """Sigmoid row colors, upsampled vertically and replicated across
    columns.  Every output row is constant by construction (exactly)."""
    logits = ad.as_tensor(row_logits)
    if logits.shape[0] > height:
        raise AppearanceError("background rows exceed output height")
    colors = ad.sigmoid(logits)
    rows = ad.matmul(ad.as_tensor(_row_interp_matrix(height, logits.shape[0])), colors)
    return ad.reshape(rows, (height, 1, 3)) * np.ones((1, width, 1))


def atlas_grid(n_faces: int) -> int:
    """Patches per atlas row/column for an n_faces-patch square packing."""
    return max(1, math.ceil(math.sqrt(n_faces)))


def atlas_resolution(n_faces: int, patch: int) -> int:
    return atlas_grid(n_faces) * patch


def patch_origins(n_faces: int, patch: int) -> tuple[np.ndarray, np.ndarray]:
    """(row0, col0) texel origin of each face's atlas patch."""
    g = atlas_grid(n_faces)
    idx = np.arange(n_faces)
    return (idx // g) * patch, (idx % g) * patch


def atlas_uvs(n_faces: int, patch: int) -> tuple[np.ndarray, np.ndarray]:
    """Explicit per-face-corner UVs of the implicit atlas mapping.

    Returns (uvs (3*N_f, 2) in [0, 1], face_uvs (N_f, 3)); corner k of face
    i maps to the barycentric corners (0,0), (1,0), (0,1) of patch i.
    """
    t = atlas_resolution(n_faces, patch)
    row0, col0 = patch_origins(n_faces, patch)
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]) * (patch - 1)
    u = (col0[:, None] + corners[None, :, 0] + 0.5) / t
    v = 1.0 - (row0[:, None] + corners[None, :, 1] + 0.5) / t
    uvs = np.stack([u, v], axis=-1).reshape(-1, 2)
    face_uvs = np.arange(3 * n_faces, dtype=np.int64).reshape(-1, 3)
    return uvs, face_uvs
