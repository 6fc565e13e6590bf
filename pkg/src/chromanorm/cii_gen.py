"""Chromaticity-invariant gray image: entropy-driven angle search and scaling.

The 2D plane coordinates are projected to 1D along a direction theta; the
direction that minimizes the Shannon entropy of the projected values (with
Freedman-Diaconis binning) cancels the illuminant variation. The search is
restricted to [pi/2, pi] because the illuminant line's slope is positive for
any plausible sensor wavelengths.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .chroma_space import LogChromaticityField, compute_chroma_field
from .image_core import BinaryMask, GrayImage, LinearRgbImage

MIN_PIXELS_FOR_SEARCH = 16
DEFAULT_GRID_STEP = np.deg2rad(1.0)
DEFAULT_TRIM = 0.05
DEFAULT_REGULARIZATION_EXPONENT = 0.1
FILL_VALUE = 0.5


@dataclass(frozen=True)
class EntropyProfile:
    """Entropy (nats) sampled over the projection-angle grid."""

    thetas: np.ndarray
    entropies: np.ndarray
    theta_min: float
    theta_max: float

    def __post_init__(self):
        thetas = np.array(self.thetas, dtype=np.float64, copy=True)
        entropies = np.array(self.entropies, dtype=np.float64, copy=True)
        if thetas.shape != entropies.shape or thetas.ndim != 1:
            raise ValueError("thetas and entropies must be 1D arrays of equal length")
        if not np.all(np.isfinite(entropies)) or np.any(entropies < 0):
            raise ValueError("entropies must be finite and nonnegative")
        for name, theta in (("theta_min", self.theta_min), ("theta_max", self.theta_max)):
            if not np.any(np.isclose(thetas, theta)):
                raise ValueError(f"{name}={theta} is not a grid member")
        thetas.setflags(write=False)
        entropies.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "entropies", entropies)

    def to_json(self) -> str:
        return json.dumps({
            "theta_deg": list(np.degrees(self.thetas)),
            "entropy_nats": list(self.entropies),
            "theta_min_deg": float(np.degrees(self.theta_min)),
            "theta_max_deg": float(np.degrees(self.theta_max)),
        }, sort_keys=True)

    def to_csv(self) -> str:
        lines = ["theta_deg,entropy_nats"]
        lines += [f"{np.degrees(t):.6f},{e:.9f}" for t, e in zip(self.thetas, self.entropies)]
        return "\n".join(lines) + "\n"


def project_1d(field: LogChromaticityField, theta: float) -> GrayImage:
    """Project plane coordinates onto the direction theta; invalid pixels are NaN."""
    if field.valid_count < 1:
        raise ValueError("field has no valid pixels")
    chi = field.phi[:, :, 0] * np.cos(theta) + field.phi[:, :, 1] * np.sin(theta)
    return GrayImage(chi)


def fd_bin_width(values) -> float:
    """Freedman-Diaconis bin width 2*IQR/n^(1/3).

    Falls back to range/sqrt(n) when the IQR vanishes; returns 0.0 as the
    degenerate signal when the full range vanishes too.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError(f"need at least 2 values, got {v.size}")
    q1, q3 = np.quantile(v, [0.25, 0.75])
    iqr = q3 - q1
    if iqr > 0:
        return float(2.0 * iqr / v.size ** (1.0 / 3.0))
    rng = v.max() - v.min()
    if rng > 0:
        return float(rng / np.sqrt(v.size))
    return 0.0


def shannon_entropy(values, bin_width: float) -> float:
    """Entropy in nats of the histogram over [min, max] with the given bin width.

    A zero bin width is the degenerate (all-equal) signal and yields 0.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("values must be nonempty")
    if bin_width == 0.0:
        return 0.0
    if bin_width < 0:
        raise ValueError(f"bin width must be positive, got {bin_width}")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return 0.0
    nbins = max(1, int(np.ceil((hi - lo) / bin_width)))
    counts, _ = np.histogram(v, bins=nbins, range=(lo, hi))
    p = counts[counts > 0] / v.size
    return float(-(p * np.log(p)).sum())


def _trimmed(values: np.ndarray, trim: float) -> np.ndarray:
    if trim <= 0:
        return values
    lo, hi = np.quantile(values, [trim, 1.0 - trim])
    return values[(values >= lo) & (values <= hi)]


def find_projection_angles(field: LogChromaticityField,
                           grid_step: float = DEFAULT_GRID_STEP,
                           trim: float = DEFAULT_TRIM) -> EntropyProfile:
    """Sweep theta over [pi/2, pi] and record the entropy of each projection.

    Values are trimmed to the [trim, 1-trim] quantiles before binning. Ties
    for the extremes break toward smaller theta.
    """
    if field.valid_count < MIN_PIXELS_FOR_SEARCH:
        raise ValueError(f"need at least {MIN_PIXELS_FOR_SEARCH} valid pixels, "
                         f"got {field.valid_count}")
    if not 0 <= trim < 0.5:
        raise ValueError(f"trim must lie in [0, 0.5), got {trim}")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    count = max(2, int(round((np.pi / 2) / grid_step)) + 1)
    thetas = np.linspace(np.pi / 2, np.pi, count)

    phi = field.valid_phi()
    entropies = np.empty(count)
    for i, theta in enumerate(thetas):
        chi = phi[:, 0] * np.cos(theta) + phi[:, 1] * np.sin(theta)
        kept = _trimmed(chi, trim)
        entropies[i] = shannon_entropy(kept, fd_bin_width(kept))

    return EntropyProfile(thetas, entropies,
                          theta_min=float(thetas[int(np.argmin(entropies))]),
                          theta_max=float(thetas[int(np.argmax(entropies))]))


def regularize_intensity(chi: GrayImage, m: float = DEFAULT_REGULARIZATION_EXPONENT,
                         printed_exponent: bool = False) -> GrayImage:
    """Scale a projected image so its robust reference intensity sits at 0.5.

    The reference is the order-m power mean mu = mean(x^m)^(1/m) over valid
    pixels, robust to outliers for small m; printed_exponent selects the
    mean(x^m)^m variant instead. Values are shifted nonnegative (by the
    1st percentile, when it is negative) before the fractional power.
    Invalid (NaN) pixels become the reference value 0.5, as does an
    all-equal image (every pixel is the reference then). Output is clipped
    to [0, 1].
    """
    if m <= 0:
        raise ValueError(f"exponent must be positive, got {m}")
    data = chi.data
    valid = np.isfinite(data)
    if not valid.any():
        raise ValueError("image has no valid pixels")
    vals = data[valid]
    out = np.full(chi.shape, FILL_VALUE)
    if vals.max() == vals.min():
        return GrayImage(out)
    shift = min(float(np.percentile(vals, 1.0)), 0.0)
    shifted = np.maximum(vals - shift, 0.0)
    mean_pow = float(np.mean(shifted**m))
    mu = mean_pow**m if printed_exponent else mean_pow ** (1.0 / m)
    if mu == 0.0:
        raise ValueError("robust reference intensity is zero; image is blank")
    out[valid] = np.clip(shifted * (FILL_VALUE / mu), 0.0, 1.0)
    return GrayImage(out)


def generate_cii(img: LinearRgbImage, highlight: BinaryMask | None = None,
                 grid_step: float = DEFAULT_GRID_STEP, trim: float = DEFAULT_TRIM,
                 m: float = DEFAULT_REGULARIZATION_EXPONENT,
                 printed_exponent: bool = False) -> tuple[GrayImage, EntropyProfile]:
    """Full chromaticity-invariant image: field, angle search, projection, scaling.

    Highlight pixels are excluded from all chromaticity statistics; they and
    any degenerate pixels come out as the fill value 0.5.
    """
    field = compute_chroma_field(img, exclude=highlight)
    profile = find_projection_angles(field, grid_step=grid_step, trim=trim)
    chi = project_1d(field, profile.theta_min)
    gray = regularize_intensity(chi, m=m, printed_exponent=printed_exponent)
    return gray, profile
