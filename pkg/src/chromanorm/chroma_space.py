"""Log-chromaticity geometry and the Planckian/Lambertian pixel model.

Per-pixel color is normalized by its geometric mean, taken to log space
(where all points lie on the plane orthogonal to (1,1,1)) and expressed in
2D plane coordinates. Under a black-body illuminant of varying temperature,
the plane coordinates of one surface move along a straight line whose slope
depends only on the sensor wavelengths; that slope fixes the projection
angle that cancels the illuminant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image_core import BinaryMask, LinearRgbImage

# Rows are an orthonormal basis of the plane { psi : psi_1+psi_2+psi_3 = 0 }.
PLANE_BASIS = np.array([
    [1.0 / np.sqrt(2.0), -1.0 / np.sqrt(2.0), 0.0],
    [1.0 / np.sqrt(6.0), 1.0 / np.sqrt(6.0), -2.0 / np.sqrt(6.0)],
])
PLANE_BASIS.setflags(write=False)

# Fraction of the image maximum below which a channel is treated as
# degenerate: the log transform would otherwise blow up near zero.
DEGENERATE_FLOOR_FRACTION = 1e-3


@dataclass(frozen=True)
class PhysicalConstants:
    """Black-body radiation constants (SI units)."""

    h: float = 6.626e-34      # Planck constant, J s
    k_b: float = 1.381e-23    # Boltzmann constant, J/K
    c: float = 3e8            # speed of light, m/s

    @property
    def k1(self) -> float:
        """First radiation constant 2 h c^2."""
        return 2.0 * self.h * self.c**2

    @property
    def k2(self) -> float:
        """Second radiation constant h c / k_B."""
        return self.h * self.c / self.k_b


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class SensorModel:
    """Dirac trichromatic sensor: peak wavelengths (meters) and channel gains.

    Wavelengths must be ordered R > G > B. Defaults sit inside the visible
    ranges for the three primaries.
    """

    wavelengths: tuple[float, float, float] = (700e-9, 530e-9, 470e-9)
    gains: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        l1, l2, l3 = self.wavelengths
        if not (l1 > l2 > l3 > 0):
            raise ValueError(f"wavelengths must satisfy l1 > l2 > l3 > 0, got {self.wavelengths}")
        if any(g <= 0 for g in self.gains):
            raise ValueError("gains must be positive")

    @staticmethod
    def from_nm(red: float, green: float, blue: float,
                gains: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> "SensorModel":
        return SensorModel((red * 1e-9, green * 1e-9, blue * 1e-9), gains)


DEFAULT_SENSOR = SensorModel()


@dataclass(frozen=True)
class SurfaceReflectance:
    """Spectral reflectance sampled at the three sensor wavelengths, each in (0, 1]."""

    samples: tuple[float, float, float]

    def __post_init__(self):
        if any(not (0 < s <= 1) for s in self.samples):
            raise ValueError(f"reflectance samples must lie in (0, 1], got {self.samples}")


@dataclass(frozen=True)
class LogChromaticityField:
    """Per-pixel 2D plane coordinates with a validity mask.

    phi is H x W x 2; invalid pixels (excluded or degenerate) hold NaN and
    are false in the valid mask.
    """

    phi: np.ndarray
    valid: BinaryMask

    def __post_init__(self):
        arr = np.array(self.phi, dtype=np.float64, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ValueError(f"expected HxWx2 phi, got shape {arr.shape}")
        if arr.shape[:2] != self.valid.shape:
            raise ValueError("phi and valid mask dimensions differ")
        if not np.all(np.isfinite(arr[self.valid.data])):
            raise ValueError("valid pixels must carry finite phi")
        arr.setflags(write=False)
        object.__setattr__(self, "phi", arr)

    @property
    def height(self) -> int:
        return self.phi.shape[0]

    @property
    def width(self) -> int:
        return self.phi.shape[1]

    @property
    def valid_count(self) -> int:
        return self.valid.count()

    def valid_phi(self) -> np.ndarray:
        """N x 2 array of the valid plane coordinates."""
        return self.phi[self.valid.data]


def geometric_mean_chromaticity(pixel) -> np.ndarray:
    """Normalize an RGB triple by its geometric mean; the output product is 1."""
    p = np.asarray(pixel, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"expected an RGB triple, got shape {p.shape}")
    if np.any(p <= 0):
        raise ValueError(f"all channels must be positive, got {tuple(p)}")
    return p / np.cbrt(p[0] * p[1] * p[2])


def log_and_project(chroma) -> np.ndarray:
    """Map a geometric-mean chromaticity triple to 2D plane coordinates."""
    c = np.asarray(chroma, dtype=np.float64)
    if np.any(c <= 0):
        raise ValueError(f"chromaticity must be positive, got {tuple(c)}")
    return PLANE_BASIS @ np.log(c)


def lift_to_log3(phi) -> np.ndarray:
    """Lift plane coordinates back to the zero-sum 3D log vector (exact on the plane)."""
    return np.asarray(phi, dtype=np.float64) @ PLANE_BASIS


def compute_chroma_field(img: LinearRgbImage, exclude: BinaryMask | None = None) -> LogChromaticityField:
    """Per-pixel log-chromaticity plane coordinates for all usable pixels.

    A pixel is invalid when it is excluded or any channel falls below
    DEGENERATE_FLOOR_FRACTION of the image maximum. Raises if no pixel
    survives.
    """
    data = img.data
    if exclude is None:
        exclude = BinaryMask.empty(img.height, img.width)
    if exclude.shape != img.shape:
        raise ValueError(f"exclude mask shape {exclude.shape} does not match image {img.shape}")

    floor = DEGENERATE_FLOOR_FRACTION * data.max()
    valid = ~exclude.data & np.all(data > floor, axis=2)
    if not valid.any():
        raise ValueError("no valid pixels: image is fully excluded or degenerate")

    phi = np.full((img.height, img.width, 2), np.nan)
    rgb = data[valid]
    log_chroma = np.log(rgb) - np.log(rgb).mean(axis=1, keepdims=True)
    phi[valid] = log_chroma @ PLANE_BASIS.T
    return LogChromaticityField(phi, BinaryMask(valid))


def theoretical_slope(sensor: SensorModel) -> float:
    """Slope of the illuminant-variation line in plane coordinates.

    Depends only on the sensor wavelengths; positive for any wavelengths in
    the visible R/G/B ranges, which is what restricts the projection angle
    search to [pi/2, pi].
    """
    l1, l2, l3 = sensor.wavelengths
    denom = (l1 - l2) * l3
    if denom == 0:
        raise ZeroDivisionError("theoretical slope undefined for l1 == l2")
    return float(np.sqrt(3.0) / 3.0 * (l1 * (l2 - l3) + l2 * (l1 - l3)) / denom)


def invariant_projection_angle(sensor: SensorModel) -> float:
    """Projection angle in [pi/2, pi] orthogonal to the illuminant line."""
    k = theoretical_slope(sensor)
    return float(np.pi - np.arctan(1.0 / k))


def synth_planckian_pixel(surface: SurfaceReflectance, sensor: SensorModel,
                          temperature: float, intensity: float,
                          constants: PhysicalConstants = CONSTANTS) -> np.ndarray:
    """Sensor response of a Lambertian surface under a Wien-model illuminant.

    Channel i is intensity * k1 * f_i * lambda_i^-5 * exp(-k2/(lambda_i T)) * S_i,
    with the geometry factor folded into intensity. Linear in intensity.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if intensity < 0:
        raise ValueError(f"intensity must be nonnegative, got {intensity}")
    lam = np.asarray(sensor.wavelengths, dtype=np.float64)
    gains = np.asarray(sensor.gains, dtype=np.float64)
    refl = np.asarray(surface.samples, dtype=np.float64)
    wien = lam**-5 * np.exp(-constants.k2 / (lam * temperature))
    return intensity * constants.k1 * gains * wien * refl


def save_field(field: LogChromaticityField, path) -> None:
    """Dump a field as width/height header plus row-major float64 (phi1, phi2) pairs.

    Invalid pixels are stored as NaN.
    """
    import struct

    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", field.width, field.height))
        fh.write(field.phi.astype("<f8").tobytes())


def load_field(path) -> LogChromaticityField:
    """Read a field written by save_field."""
    import struct

    with open(path, "rb") as fh:
        raw = fh.read()
    width, height = struct.unpack_from("<II", raw, 0)
    phi = np.frombuffer(raw, dtype="<f8", offset=8).reshape(height, width, 2).copy()
    valid = np.all(np.isfinite(phi), axis=2)
    return LogChromaticityField(phi, BinaryMask(valid))
