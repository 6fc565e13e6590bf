"""Shared synthetic-scene fixtures.

The hard-shadow mosaic is the workhorse: alternating reflectance bands whose
plane-coordinate separation is purely perpendicular to the illuminant line,
split into a 6500K lit half and a dimmed 2500K half. Band steps stay visible
in the invariant projection (so material edges are never mistaken for shadow
edges) while the lighting step vanishes there.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from chromanorm.chroma_space import (DEFAULT_SENSOR, PLANE_BASIS, SurfaceReflectance,
                                     invariant_projection_angle)
from chromanorm.image_core import LinearRgbImage
from chromanorm.synth_scene import (LightRegion, Rect, SceneSpec, SurfaceRegion,
                                    normalize_exposure, render_scene)

PERP_ANGLE = invariant_projection_angle(DEFAULT_SENSOR)
E_PERP = np.array([np.cos(PERP_ANGLE), np.sin(PERP_ANGLE)])
E_PAR = np.array([np.sin(PERP_ANGLE), -np.cos(PERP_ANGLE)])


def reflectance_from_plane(phi) -> SurfaceReflectance:
    """Reflectance triple whose log-chromaticity plane coordinates equal phi."""
    samples = np.exp(PLANE_BASIS.T @ np.asarray(phi, dtype=np.float64))
    return SurfaceReflectance(tuple(samples / samples.max() * 0.95))


@dataclass(frozen=True)
class MosaicScene:
    spec: SceneSpec
    image: LinearRgbImage
    band_rows: list          # (y0, y1) per horizontal band
    boundary_col: int        # lit/shadow split column
    lit: np.ndarray          # boolean region maps
    shadow: np.ndarray


def build_mosaic(size: int = 180, bands: int = 4, boundary: int = 90,
                 separation: float = 1.1, noise_sigma: float = 3e-4,
                 seed: int = 11, shadow_temperature: float = 2500.0,
                 shadow_intensity: float = 63.0) -> MosaicScene:
    """Two-material banded scene with a vertical hard shadow boundary.

    The shadow side pairs a low color temperature with a higher raw
    intensity so every channel still dims by at least 2x, the worst case
    being red (the low temperature boosts red the most).
    """
    materials = [reflectance_from_plane((0.0, 0.0)),
                 reflectance_from_plane(separation * E_PERP)]
    band_height = size // bands
    surfaces = []
    band_rows = []
    for i in range(bands):
        y0 = i * band_height
        y1 = size if i == bands - 1 else (i + 1) * band_height
        band_rows.append((y0, y1))
        surfaces.append(SurfaceRegion(Rect(0, y0, size, y1), materials[i % 2]))
    spec = SceneSpec(
        size, size, tuple(surfaces),
        (LightRegion(Rect(0, 0, boundary, size), 6500.0, 1.0),
         LightRegion(Rect(boundary, 0, size, size), shadow_temperature, shadow_intensity)),
        noise_sigma=noise_sigma, seed=seed)
    spec = normalize_exposure(spec, 0.9)
    rendered = render_scene(spec)
    return MosaicScene(spec=spec, image=rendered.image, band_rows=band_rows,
                       boundary_col=boundary,
                       lit=rendered.light_labels == 0,
                       shadow=rendered.light_labels == 1)


@pytest.fixture(scope="session")
def mosaic() -> MosaicScene:
    return build_mosaic()


@pytest.fixture(scope="session")
def mosaic_small() -> MosaicScene:
    """Faster 120px variant for module-level tests."""
    return build_mosaic(size=120, boundary=60)


def build_flat_scene(size: int = 96, temperature: float = 6500.0,
                     noise_sigma: float = 3e-4, seed: int = 5,
                     reflectance=(0.85, 0.35, 0.18)) -> LinearRgbImage:
    """Single surface under one light: no shadows, no material edges."""
    spec = normalize_exposure(SceneSpec(
        size, size,
        (SurfaceRegion(Rect(0, 0, size, size), SurfaceReflectance(reflectance)),),
        (LightRegion(Rect(0, 0, size, size), temperature, 1.0),),
        noise_sigma=noise_sigma, seed=seed), 0.9)
    return render_scene(spec).image


@dataclass(frozen=True)
class DiscScene:
    image: LinearRgbImage
    disc_mask: np.ndarray


def build_disc_scene(size: int = 180, cx: float = 120.5, cy: float = 60.5,
                     radius: float = 21.0) -> DiscScene:
    """Skin-toned Lambertian field with a shading ramp plus a white disc.

    The disc adds 3x the local diffuse level equally to all channels, the
    additive achromatic signature of a specular highlight.
    """
    base = normalize_exposure(SceneSpec(
        size, size,
        (SurfaceRegion(Rect(0, 0, size, size), SurfaceReflectance((0.85, 0.35, 0.18))),),
        (LightRegion(Rect(0, 0, size, size), 4500.0, 1.0),)), 0.55)
    data = render_scene(base).image.data * np.linspace(0.8, 1.2, size)[None, :, None]
    ys, xs = np.mgrid[0:size, 0:size]
    inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
    strength = 3.0 * data[inside].mean()
    data = data.copy()
    data[inside] += strength
    return DiscScene(LinearRgbImage(np.clip(data, 0.0, None)), inside)


@pytest.fixture(scope="session")
def disc_scene() -> DiscScene:
    return build_disc_scene()


IDENTITY_COUNT = 5
IDENTITY_SIZE = 96
_IDENTITY_LAST_STRIP = 20


def identity_layout(ident: int, size: int = IDENTITY_SIZE):
    """Vertical-strip face proxy: identity sets the strip count and colors.

    The lit/shadow boundary column sits mid way through the last (widest)
    strip, parallel to every material edge, so shadow-edge detection is
    never confused with layout edges.
    """
    rng = np.random.default_rng(500 + ident)
    strips = ident + 4
    inner = strips - 1
    base = (size - _IDENTITY_LAST_STRIP) // inner
    edges = [0]
    for _ in range(inner - 1):
        edges.append(edges[-1] + base)
    edges += [size - _IDENTITY_LAST_STRIP, size]
    surfaces = []
    for j in range(strips):
        level = 1.35 * (j % 2)
        par = 0.35 + rng.uniform(-0.3, 0.3)
        surfaces.append(SurfaceRegion(
            Rect(edges[j], 0, edges[j + 1], size),
            reflectance_from_plane(level * E_PERP + par * E_PAR)))
    return tuple(surfaces), size - _IDENTITY_LAST_STRIP // 2


def identity_gallery_spec(ident: int) -> SceneSpec:
    surfaces, _ = identity_layout(ident)
    return normalize_exposure(SceneSpec(
        IDENTITY_SIZE, IDENTITY_SIZE, surfaces,
        (LightRegion(Rect(0, 0, IDENTITY_SIZE, IDENTITY_SIZE), 6500.0, 1.0),),
        noise_sigma=4e-4, seed=ident), 0.9)


def identity_query_spec(ident: int) -> SceneSpec:
    surfaces, boundary = identity_layout(ident)
    return normalize_exposure(SceneSpec(
        IDENTITY_SIZE, IDENTITY_SIZE, surfaces,
        (LightRegion(Rect(0, 0, boundary, IDENTITY_SIZE), 6500.0, 1.0),
         LightRegion(Rect(boundary, 0, IDENTITY_SIZE, IDENTITY_SIZE), 3500.0, 2.0)),
        noise_sigma=4e-4, seed=100 + ident), 0.9)


@pytest.fixture(scope="session")
def identity_files(tmp_path_factory):
    """Gallery and shadowed-query PNG sets for the recognition harness."""
    from chromanorm.image_core import save_image

    root = tmp_path_factory.mktemp("identities")
    gallery = root / "gallery"
    queries = root / "queries"
    gallery.mkdir()
    queries.mkdir()
    for ident in range(IDENTITY_COUNT):
        save_image(render_scene(identity_gallery_spec(ident)).image,
                   gallery / f"{ident}_gallery.png")
        save_image(render_scene(identity_query_spec(ident)).image,
                   queries / f"{ident}_query.png")
    return gallery, queries
