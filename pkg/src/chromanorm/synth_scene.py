"""Synthetic ground-truth scenes: flat surfaces under region-wise Planckian lights.

Scenes are piecewise constant by construction, so tests know the exact
chromaticity clusters, shadow boundaries and specular locations. Soft
boundaries blend lighting intensity (never temperature) linearly over the
blur radius, which keeps the log-chromaticity clusters on clean lines.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .chroma_space import DEFAULT_SENSOR, SensorModel, SurfaceReflectance, synth_planckian_pixel
from .image_core import LinearRgbImage


@dataclass(frozen=True)
class Rect:
    """Half-open pixel rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"empty rectangle {self}")


@dataclass(frozen=True)
class SurfaceRegion:
    rect: Rect
    reflectance: SurfaceReflectance


@dataclass(frozen=True)
class LightRegion:
    rect: Rect
    temperature: float
    intensity: float

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.intensity < 0:
            raise ValueError(f"intensity must be nonnegative, got {self.intensity}")


@dataclass(frozen=True)
class SpecularDisc:
    """Additive white disc: strength * (1,1,1) inside the radius."""

    cx: float
    cy: float
    radius: float
    strength: float


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    surfaces: tuple[SurfaceRegion, ...]
    lighting: tuple[LightRegion, ...]
    shadow_softness: int = 0
    specular_discs: tuple[SpecularDisc, ...] = ()
    noise_sigma: float = 0.0
    seed: int = 0
    sensor: SensorModel = DEFAULT_SENSOR

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("scene must contain at least one pixel")
        if not self.surfaces or not self.lighting:
            raise ValueError("scene needs at least one surface and one light region")
        if self.shadow_softness < 0 or self.noise_sigma < 0:
            raise ValueError("shadow_softness and noise_sigma must be nonnegative")
        object.__setattr__(self, "surfaces", tuple(self.surfaces))
        object.__setattr__(self, "lighting", tuple(self.lighting))
        object.__setattr__(self, "specular_discs", tuple(self.specular_discs))

    def to_json(self) -> str:
        def rect(r: Rect):
            return [r.x0, r.y0, r.x1, r.y1]

        doc = {
            "width": self.width,
            "height": self.height,
            "surfaces": [{"rect": rect(s.rect), "reflectance": list(s.reflectance.samples)}
                         for s in self.surfaces],
            "lighting": [{"rect": rect(l.rect), "temperature": l.temperature,
                          "intensity": l.intensity} for l in self.lighting],
            "shadow_softness": self.shadow_softness,
            "specular_discs": [[d.cx, d.cy, d.radius, d.strength] for d in self.specular_discs],
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "sensor": {"wavelengths": list(self.sensor.wavelengths), "gains": list(self.sensor.gains)},
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SceneSpec":
        doc = json.loads(text)
        return SceneSpec(
            width=doc["width"],
            height=doc["height"],
            surfaces=tuple(SurfaceRegion(Rect(*s["rect"]), SurfaceReflectance(tuple(s["reflectance"])))
                           for s in doc["surfaces"]),
            lighting=tuple(LightRegion(Rect(*l["rect"]), l["temperature"], l["intensity"])
                           for l in doc["lighting"]),
            shadow_softness=doc["shadow_softness"],
            specular_discs=tuple(SpecularDisc(*d) for d in doc["specular_discs"]),
            noise_sigma=doc["noise_sigma"],
            seed=doc["seed"],
            sensor=SensorModel(tuple(doc["sensor"]["wavelengths"]), tuple(doc["sensor"]["gains"])),
        )


@dataclass(frozen=True)
class RenderedScene:
    image: LinearRgbImage
    surface_labels: np.ndarray   # H x W int, index into spec.surfaces
    light_labels: np.ndarray     # H x W int, index into spec.lighting


def _paint_labels(width: int, height: int, rects: list[Rect], what: str) -> np.ndarray:
    labels = np.full((height, width), -1, dtype=np.int32)
    for idx, r in enumerate(rects):
        if r.x0 < 0 or r.y0 < 0 or r.x1 > width or r.y1 > height:
            raise ValueError(f"{what} region {idx} {r} exceeds the {width}x{height} canvas")
        labels[r.y0:r.y1, r.x0:r.x1] = idx
    uncovered = int((labels < 0).sum())
    if uncovered:
        raise ValueError(f"{what} regions leave {uncovered} pixels uncovered")
    return labels


def render_scene(spec: SceneSpec) -> RenderedScene:
    """Render a scene plus the surface/light label maps used by test oracles."""
    surface_labels = _paint_labels(spec.width, spec.height, [s.rect for s in spec.surfaces], "surface")
    light_labels = _paint_labels(spec.width, spec.height, [l.rect for l in spec.lighting], "lighting")

    intensity = np.zeros((spec.height, spec.width))
    for idx, light in enumerate(spec.lighting):
        intensity[light_labels == idx] = light.intensity
    if spec.shadow_softness > 0:
        # Box mean of a step gives a linear intensity ramp across the boundary.
        size = 2 * spec.shadow_softness + 1
        intensity = uniform_filter(intensity, size=size, mode="nearest")

    # Unit-intensity response per (surface, light-temperature) pair.
    unit = np.empty((len(spec.surfaces), len(spec.lighting), 3))
    for si, surf in enumerate(spec.surfaces):
        for li, light in enumerate(spec.lighting):
            unit[si, li] = synth_planckian_pixel(surf.reflectance, spec.sensor,
                                                 light.temperature, 1.0)
    data = unit[surface_labels, light_labels] * intensity[:, :, None]

    if spec.specular_discs:
        ys, xs = np.mgrid[0:spec.height, 0:spec.width]
        for disc in spec.specular_discs:
            inside = (xs - disc.cx) ** 2 + (ys - disc.cy) ** 2 <= disc.radius**2
            data[inside] += disc.strength

    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        data = data + rng.normal(0.0, spec.noise_sigma, size=data.shape)

    return RenderedScene(LinearRgbImage(np.clip(data, 0.0, None)),
                         surface_labels, light_labels)


def disc_mask(spec: SceneSpec) -> np.ndarray:
    """Boolean map of all specular disc interiors (ground truth for detection)."""
    ys, xs = np.mgrid[0:spec.height, 0:spec.width]
    mask = np.zeros((spec.height, spec.width), dtype=bool)
    for disc in spec.specular_discs:
        mask |= (xs - disc.cx) ** 2 + (ys - disc.cy) ** 2 <= disc.radius**2
    return mask


def normalize_exposure(spec: SceneSpec, peak: float = 0.9) -> SceneSpec:
    """Rescale all lighting intensities so the noise-free render peaks at `peak`.

    Wien-model responses carry the radiation constants' scale, so raw
    intensities of order one produce astronomically bright pixels; this puts
    a scene into the nominal [0, 1] range while preserving all ratios.
    """
    probe = SceneSpec(spec.width, spec.height, spec.surfaces, spec.lighting,
                      shadow_softness=spec.shadow_softness, sensor=spec.sensor)
    current = render_scene(probe).image.data.max()
    if current <= 0:
        raise ValueError("scene renders to all-zero; cannot normalize exposure")
    scale = peak / current
    lighting = tuple(LightRegion(l.rect, l.temperature, l.intensity * scale)
                     for l in spec.lighting)
    return SceneSpec(spec.width, spec.height, spec.surfaces, lighting,
                     shadow_softness=spec.shadow_softness,
                     specular_discs=spec.specular_discs,
                     noise_sigma=spec.noise_sigma, seed=spec.seed, sensor=spec.sensor)
