"""Viewpoint distributions, 6-parameter object pose, and camera transforms.

The camera always looks at the origin with world up (0, 1, 0) from a fixed
distance; azimuth 0 places it in front of the object.  Angles are degrees
at the API surface and radians internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import RenderfitError
from . import autodiff as ad
from .autodiff import Tensor

DEFAULT_CAMERA_DISTANCE = 2.5
DEFAULT_FOV_DEG = 30.0
ELEVATION_LIMIT_DEG = 90.0 - 1e-3

DEG = math.pi / 180.0


class CameraError(RenderfitError):
    code = "E_CAMERA"


# ---------------------------------------------------------------------------
# viewpoint distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AngleLaw:
    """'uniform' over [lo, hi] degrees, or 'beta'(alpha, beta) * scale degrees."""

    kind: str
    lo: float = 0.0
    hi: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    scale: float = 180.0

    def __post_init__(self):
        if self.kind == "uniform":
            if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo <= self.hi):
                raise CameraError("uniform law needs finite lo <= hi")
        elif self.kind == "beta":
            if self.alpha <= 0 or self.beta <= 0:
                raise CameraError("beta law needs alpha, beta > 0")
        else:
            raise CameraError(f"unknown angle law {self.kind!r}")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "uniform":
            return float(self.lo) if self.lo == self.hi \
                else float(rng.uniform(self.lo, self.hi))
        return float(rng.beta(self.alpha, self.beta) * self.scale)


def uniform_law(lo: float, hi: float) -> AngleLaw:
    return AngleLaw("uniform", lo=lo, hi=hi)


def beta_law(alpha: float, beta: float, scale: float = 180.0) -> AngleLaw:
    return AngleLaw("beta", alpha=alpha, beta=beta, scale=scale)


@dataclass(frozen=True)
class ViewpointDist:
    elevation: AngleLaw
    azimuth: AngleLaw


def sample_viewpoint(dist: ViewpointDist, rng: np.random.Generator) -> tuple[float, float]:
    """Draw (azimuth, elevation) in degrees."""
    return dist.azimuth.sample(rng), dist.elevation.sample(rng)


# ---------------------------------------------------------------------------
# pose
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoseParams:
    azimuth: float = 0.0
    elevation: float = 0.0
    inplane: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)
    scale: float = 1.0
    distance: float = DEFAULT_CAMERA_DISTANCE

    def __post_init__(self):
        if self.scale <= 0:
            raise CameraError("pose scale must be positive")
        if self.distance <= 0:
            raise CameraError("camera distance must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.azimuth, self.elevation, self.inplane,
                         self.center[0], self.center[1], self.scale])

    @staticmethod
    def from_array(a, distance: float = DEFAULT_CAMERA_DISTANCE) -> "PoseParams":
        a = np.asarray(a, dtype=np.float64)
        return PoseParams(float(a[0]), float(a[1]), float(a[2]),
                          (float(a[3]), float(a[4])), float(a[5]), distance)


POSE_PARAM_NAMES = ("azimuth", "elevation", "inplane", "center_x", "center_y", "scale")
CROP_FREE_PARAMS = ("azimuth", "elevation", "inplane")


def crop_mode(pose: PoseParams) -> PoseParams:
    """Canonicalize center/scale (and zero the in-plane angle) for datasets
    whose images were cropped and resized by bounding boxes.  Free parameters
    drop from six to three; see :func:`free_pose_params`."""
    return replace(pose, center=(0.0, 0.0), scale=1.0, inplane=0.0)


def free_pose_params(cropped: bool, free_inplane: bool = True) -> tuple[str, ...]:
    """Names of the pose parameters the optimizer may move.

    In cropped-dataset mode three parameters remain: azimuth, elevation,
    and one residual, by default the in-plane rotation (a scale residual is
    selectable instead).
    """
    if not cropped:
        return POSE_PARAM_NAMES
    return CROP_FREE_PARAMS if free_inplane else ("azimuth", "elevation", "scale")


def pose_transform(azimuth, elevation, inplane, center_x, center_y, scale,
                   distance: float = DEFAULT_CAMERA_DISTANCE,
                   fov_deg: float = DEFAULT_FOV_DEG) -> Tensor:
    """4x4 view-projection transform, differentiable in all six parameters.

    clip = M @ [p, 1]; ndc = clip[:2] / clip[3]; clip[3] is the camera-space
    depth (positive in front of the camera).
    """
    el = float(elevation.data) if isinstance(elevation, Tensor) else float(elevation)
    if abs(el) >= ELEVATION_LIMIT_DEG:
        raise CameraError("elevation too close to the up-vector singularity")
    a = ad.as_tensor(azimuth) * DEG
    e = ad.as_tensor(elevation) * DEG
    r = ad.as_tensor(inplane) * DEG
    cx, cy = ad.as_tensor(center_x), ad.as_tensor(center_y)
    s = ad.as_tensor(scale)
    ca, sa = ad.cos(a), ad.sin(a)
    ce, se = ad.cos(e), ad.sin(e)
    cr, sr = ad.cos(r), ad.sin(r)
    zero = ad.Tensor(0.0)

    # orthonormal camera axes in closed form (world up = (0, 1, 0))
    x_axis = ad.stack([ca, zero, -sa])
    y_axis = ad.stack([-se * sa, ce, -se * ca])
    z_axis = ad.stack([ce * sa, se, ce * ca])
    row_x = cr * x_axis - sr * y_axis
    row_y = sr * x_axis + cr * y_axis

    f = 1.0 / math.tan(0.5 * fov_deg * DEG)
    d = ad.Tensor(float(distance))
    m3 = ad.concatenate([-z_axis, ad.reshape(d, (1,))])
    m0 = ad.concatenate([f * s * row_x, ad.reshape(zero, (1,))]) + cx * m3
    m1 = ad.concatenate([f * s * row_y, ad.reshape(zero, (1,))]) + cy * m3
    return ad.stack([m0, m1, m3, m3], axis=0)


def pose_to_camera(pose: PoseParams, fov_deg: float = DEFAULT_FOV_DEG) -> np.ndarray:
    """Constant (non-differentiable) transform for a concrete pose."""
    with ad.no_grad():
        return pose_transform(pose.azimuth, pose.elevation, pose.inplane,
                              pose.center[0], pose.center[1], pose.scale,
                              pose.distance, fov_deg).data


def rotation_matrix(pose: PoseParams) -> np.ndarray:
    """World-to-camera rotation (in-plane included); used by pose metrics."""
    with ad.no_grad():
        m = pose_transform(pose.azimuth, pose.elevation, pose.inplane,
                           0.0, 0.0, 1.0, pose.distance).data
    f = 1.0 / math.tan(0.5 * DEFAULT_FOV_DEG * DEG)
    return np.stack([m[0, :3] / f, m[1, :3] / f, -m[3, :3]])


# ---------------------------------------------------------------------------
# pose sampling and perturbation (exploration support)
# ---------------------------------------------------------------------------

@dataclass
class PoseSampler:
    """Prior over poses: viewpoint law plus optional in-plane/center/scale noise."""

    viewpoints: ViewpointDist
    inplane_range: tuple[float, float] = (0.0, 0.0)
    center_sigma: float = 0.0
    log_scale_sigma: float = 0.0
    distance: float = DEFAULT_CAMERA_DISTANCE

    def sample(self, rng: np.random.Generator) -> PoseParams:
        az, el = sample_viewpoint(self.viewpoints, rng)
        lo, hi = self.inplane_range
        inp = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
        center = (float(rng.normal(scale=self.center_sigma)),
                  float(rng.normal(scale=self.center_sigma))) \
            if self.center_sigma > 0 else (0.0, 0.0)
        scale = float(np.exp(rng.normal(scale=self.log_scale_sigma))) \
            if self.log_scale_sigma > 0 else 1.0
        return PoseParams(az, el, inp, center, scale, self.distance)


def perturb_pose(pose: PoseParams, rng: np.random.Generator,
                 sigma_deg: float = 5.0, sigma_center: float = 0.0,
                 sigma_log_scale: float = 0.0,
                 max_elevation: float = ELEVATION_LIMIT_DEG - 1.0) -> PoseParams:
    az = pose.azimuth + rng.normal(scale=sigma_deg)
    el = float(np.clip(pose.elevation + rng.normal(scale=sigma_deg),
                       -max_elevation, max_elevation))
    inp = pose.inplane + (rng.normal(scale=sigma_deg) if sigma_deg > 0 else 0.0)
    if sigma_center > 0:
        center = (pose.center[0] + rng.normal(scale=sigma_center),
                  pose.center[1] + rng.normal(scale=sigma_center))
    else:
        center = pose.center
    scale = pose.scale * float(np.exp(rng.normal(scale=sigma_log_scale))) \
        if sigma_log_scale > 0 else pose.scale
    return PoseParams(float(az), el, float(inp), center, scale, pose.distance)
