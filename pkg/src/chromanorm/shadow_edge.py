"""Shadow-specific edge mask from the invariant and shadow-retaining projections.

An edge belongs to a shadow when it is absent from the invariant projection
(theta_min) but present in the shadow-retaining one (theta_max). Both 1D
projections are re-expressed as 2D plane-coordinate pairs, smoothed with a
guided filter, and compared through their gradient magnitudes against two
thresholds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation, distance_transform_edt

from .chroma_space import LogChromaticityField
from .cii_gen import project_1d
from .image_core import BinaryMask, GrayImage


@dataclass(frozen=True)
class EdgeDetectParams:
    """Thresholds and smoothing knobs for the edge detector.

    tau1 bounds gradient activity in the shadow-free pair, tau2 is the
    minimum activity in the shadow-retained pair; both act on reprojected
    log-chromaticity units.
    """

    tau1: float = 0.1
    tau2: float = 0.2
    guided_radius: int = 3
    guided_eps: float = 1e-4
    dilate_radius: int = 1

    def __post_init__(self):
        if not self.tau1 < self.tau2:
            raise ValueError(f"tau1 must be below tau2, got {self.tau1} >= {self.tau2}")
        if self.guided_radius < 0 or self.dilate_radius < 0:
            raise ValueError("radii must be nonnegative")
        if self.guided_eps <= 0:
            raise ValueError("guided_eps must be positive")


def _box_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the (2r+1)^2 window, truncated at the borders."""
    out = a
    for axis in (0, 1):
        n = out.shape[axis]
        cs = np.cumsum(out, axis=axis)
        cs = np.concatenate([np.zeros_like(np.take(cs, [0], axis=axis)), cs], axis=axis)
        hi = np.minimum(np.arange(n) + radius + 1, n)
        lo = np.maximum(np.arange(n) - radius, 0)
        out = np.take(cs, hi, axis=axis) - np.take(cs, lo, axis=axis)
    return out


def box_filter(a: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2r+1)^2 window, truncated at the borders."""
    counts = _box_sum(np.ones_like(a), radius)
    return _box_sum(a, radius) / counts


def guided_filter(inp: GrayImage, guide: GrayImage, radius: int, eps: float) -> GrayImage:
    """Edge-preserving smoothing of `inp` steered by `guide`.

    Per window: a = cov(guide, inp) / (var(guide) + eps), b = mean(inp) -
    a * mean(guide); the output averages a and b over all windows covering a
    pixel. A constant guide degenerates to plain box smoothing.
    """
    if inp.shape != guide.shape:
        raise ValueError(f"input {inp.shape} and guide {guide.shape} dimensions differ")
    if radius >= min(inp.shape):
        raise ValueError(f"radius {radius} must be below the image extent {min(inp.shape)}")
    p, g = inp.data, guide.data
    mean_g = box_filter(g, radius)
    mean_p = box_filter(p, radius)
    cov_gp = box_filter(g * p, radius) - mean_g * mean_p
    var_g = box_filter(g * g, radius) - mean_g * mean_g
    a = cov_gp / (var_g + eps)
    b = mean_p - a * mean_g
    return GrayImage(box_filter(a, radius) * g + box_filter(b, radius))


def reproject_2d(field: LogChromaticityField, theta: float) -> tuple[GrayImage, GrayImage]:
    """Express the 1D projection at theta back in plane coordinates.

    Returns (chi * cos(theta), chi * sin(theta)); invalid pixels take their
    nearest valid neighbor's value so the fill introduces no step of its own.
    """
    chi = project_1d(field, theta).data
    invalid = np.isnan(chi)
    if invalid.all():
        raise ValueError("field has no valid pixels")
    if invalid.any():
        _, nearest = distance_transform_edt(invalid, return_indices=True)
        chi = chi[nearest[0], nearest[1]]
    return GrayImage(chi * np.cos(theta)), GrayImage(chi * np.sin(theta))


def gradient_magnitude(img: GrayImage) -> np.ndarray:
    """Gradient magnitude with central differences inside, one-sided at borders."""
    if img.height > 1 and img.width > 1:
        gy, gx = np.gradient(img.data)
    elif img.height > 1:
        gy, gx = np.gradient(img.data, axis=0), np.zeros(img.shape)
    elif img.width > 1:
        gy, gx = np.zeros(img.shape), np.gradient(img.data, axis=1)
    else:
        gy = gx = np.zeros(img.shape)
    return np.hypot(gx, gy)


def _pair_gradient(field: LogChromaticityField, theta: float,
                   params: EdgeDetectParams, self_guided: bool) -> np.ndarray:
    phi1, phi2 = reproject_2d(field, theta)
    ones = GrayImage(np.ones(field.phi.shape[:2]))
    mags = []
    for channel in (phi1, phi2):
        guide = channel if self_guided else ones
        smooth = guided_filter(channel, guide, params.guided_radius, params.guided_eps)
        mags.append(gradient_magnitude(smooth))
    return np.maximum(mags[0], mags[1])


def gradient_magnitude_map(field: LogChromaticityField, theta: float,
                           params: EdgeDetectParams, self_guided: bool) -> GrayImage:
    """Per-pixel max channel gradient magnitude of a filtered reprojection.

    self_guided selects the shadow-retained treatment (the image guides
    itself); otherwise a constant guide averages intensity first.
    """
    return GrayImage(_pair_gradient(field, theta, params, self_guided))


def detect_shadow_edges(field: LogChromaticityField, theta_min: float, theta_max: float,
                        params: EdgeDetectParams | None = None) -> BinaryMask:
    """Mask where the invariant projection is flat but the retained one is active.

    The shadow-free pair is filtered with a constant guide, the
    shadow-retained pair guides itself; the raw mask is dilated by
    dilate_radius to close single-pixel gaps before gradient severing.
    """
    params = params or EdgeDetectParams()
    grad_min = _pair_gradient(field, theta_min, params, self_guided=False)
    grad_max = _pair_gradient(field, theta_max, params, self_guided=True)
    mask = (grad_min < params.tau1) & (grad_max > params.tau2)
    if params.dilate_radius > 0 and mask.any():
        size = 2 * params.dilate_radius + 1
        mask = binary_dilation(mask, structure=np.ones((size, size), dtype=bool))
    return BinaryMask(mask)
