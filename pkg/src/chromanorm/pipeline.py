"""End-to-end composition of the normalization stages for one image."""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .chroma_space import LogChromaticityField, compute_chroma_field
from .cii_gen import (EntropyProfile, find_projection_angles, project_1d,
                      regularize_intensity)
from .color_recover import SolverStats, recover_color
from .highlight_detect import detect_highlight
from .image_core import BinaryMask, GrayImage, LinearRgbImage
from .shadow_edge import EdgeDetectParams, detect_shadow_edges


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the batch pipeline; defaults match the module defaults."""

    decode_gamma: bool = True
    theta_step_deg: float = 1.0
    trim: float = 0.05
    m_exponent: float = 0.1
    printed_exponent: bool = False
    tau1: float = 0.1
    tau2: float = 0.2
    guided_radius: int = 3
    guided_eps: float = 1e-4
    dilate_radius: int = 1
    poisson_tol: float = 1e-8
    log_floor: float = 1e-3
    brightness_percentile: float = 99.5
    entropy_range_floor: float = 0.2
    nmf_sparsity: float = 0.8
    nmf_max_iters: int = 500
    nmf_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.theta_step_deg <= 0:
            raise ValueError("theta_step_deg must be positive")
        if not 0 <= self.trim < 0.5:
            raise ValueError("trim must lie in [0, 0.5)")
        if self.m_exponent <= 0:
            raise ValueError("m_exponent must be positive")
        if not 0 < self.nmf_sparsity < 1:
            raise ValueError("nmf_sparsity must lie in (0, 1)")
        if self.poisson_tol <= 0 or self.nmf_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        if not 0 < self.brightness_percentile <= 100:
            raise ValueError("brightness_percentile must lie in (0, 100]")
        if self.entropy_range_floor < 0:
            raise ValueError("entropy_range_floor must be nonnegative")
        # Delegates range checks for the edge parameters.
        self.edge_params()

    def edge_params(self) -> EdgeDetectParams:
        return EdgeDetectParams(tau1=self.tau1, tau2=self.tau2,
                                guided_radius=self.guided_radius,
                                guided_eps=self.guided_eps,
                                dilate_radius=self.dilate_radius)

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(doc: dict) -> "PipelineConfig":
        unknown = set(doc) - set(PipelineConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return PipelineConfig(**doc)

    def override(self, **kwargs) -> "PipelineConfig":
        supplied = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **supplied) if supplied else self


@dataclass(frozen=True)
class PipelineResult:
    highlight_mask: BinaryMask
    field: LogChromaticityField
    profile: EntropyProfile
    cii: GrayImage
    edge_mask: BinaryMask
    recovered: LinearRgbImage
    solver_stats: list[SolverStats]

    def report_fields(self) -> dict:
        total = self.cii.height * self.cii.width
        return {
            "theta_min_deg": float(np.degrees(self.profile.theta_min)),
            "theta_max_deg": float(np.degrees(self.profile.theta_max)),
            "entropy_min_nats": float(self.profile.entropies.min()),
            "entropy_max_nats": float(self.profile.entropies.max()),
            "valid_pixel_fraction": self.field.valid_count / total,
            "highlight_fraction": self.highlight_mask.count() / total,
            "edge_fraction": self.edge_mask.count() / total,
            "poisson": [{"channel": c, "iterations": s.iterations,
                         "relative_residual": s.relative_residual,
                         "converged": s.converged}
                        for c, s in enumerate(self.solver_stats)],
        }


def process_image(img: LinearRgbImage, config: PipelineConfig | None = None) -> PipelineResult:
    """Run highlight detection, CII generation, edge detection and recovery.

    A nearly flat entropy profile means the scene carries no illumination
    variation; the min/max angles are then arbitrary, so edge detection is
    skipped (empty mask) and recovery degrades to a round trip.
    """
    config = config or PipelineConfig()
    highlight = detect_highlight(img, sparsity_target=config.nmf_sparsity,
                                 max_iters=config.nmf_max_iters,
                                 tol=config.nmf_tol, seed=config.seed)
    field = compute_chroma_field(img, exclude=highlight)
    profile = find_projection_angles(field, grid_step=np.deg2rad(config.theta_step_deg),
                                     trim=config.trim)
    chi = project_1d(field, profile.theta_min)
    cii = regularize_intensity(chi, m=config.m_exponent,
                               printed_exponent=config.printed_exponent)
    entropy_range = float(profile.entropies.max() - profile.entropies.min())
    if entropy_range < config.entropy_range_floor:
        edge_mask = BinaryMask.empty(img.height, img.width)
    else:
        edge_mask = detect_shadow_edges(field, profile.theta_min, profile.theta_max,
                                        config.edge_params())
    recovered, stats = recover_color(img, edge_mask, floor=config.log_floor,
                                     tol=config.poisson_tol,
                                     brightness_percentile=config.brightness_percentile)
    return PipelineResult(highlight_mask=highlight, field=field, profile=profile,
                          cii=cii, edge_mask=edge_mask, recovered=recovered,
                          solver_stats=stats)
