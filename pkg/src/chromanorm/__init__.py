"""Chromaticity-space illumination normalization and shadow-free color recovery."""

from .chroma_space import (DEFAULT_SENSOR, LogChromaticityField, PhysicalConstants, SensorModel,
                           SurfaceReflectance, compute_chroma_field, geometric_mean_chromaticity,
                           invariant_projection_angle, log_and_project, synth_planckian_pixel,
                           theoretical_slope)
from .cii_gen import (EntropyProfile, find_projection_angles, generate_cii, project_1d,
                      regularize_intensity)
from .color_recover import recover_color, solve_poisson
from .face_features import FeatureHistogram, chi_square, lbp_uniform_histogram, lpq_histogram, rank1_identify
from .highlight_detect import ReflectanceFactorization, detect_highlight, nmf_sparse
from .image_core import (BinaryMask, GrayImage, LinearRgbImage, load_gray_image, load_image,
                         save_image, save_mask)
from .pipeline import PipelineConfig, PipelineResult, process_image
from .shadow_edge import EdgeDetectParams, detect_shadow_edges, guided_filter, reproject_2d
from .synth_scene import (LightRegion, Rect, SceneSpec, SpecularDisc, SurfaceRegion,
                          normalize_exposure, render_scene)

__version__ = "0.1.0"
