"""Texture descriptors and matching for the recognition harness.

Uniform LBP (8 samples, radius 2, 59 bins of raw counts) and LPQ (5x5
short-time Fourier window, whitened against a rho^distance correlation
model, 256 normalized bins), compared with the chi-square distance.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .image_core import GrayImage

LBP_BINS = 59
LPQ_BINS = 256
LBP_SAMPLES = 8
LBP_RADIUS = 2.0
LPQ_WINDOW = 5
LPQ_RHO = 0.9


@dataclass(frozen=True)
class FeatureHistogram:
    """Histogram feature; kind 'lbp' holds counts, 'lpq' holds frequencies."""

    bins: np.ndarray
    kind: str

    def __post_init__(self):
        bins = np.array(self.bins, dtype=np.float64, copy=True)
        if self.kind == "lbp":
            expected = LBP_BINS
        elif self.kind == "lpq":
            expected = LPQ_BINS
        else:
            raise ValueError(f"unknown histogram kind {self.kind!r}")
        if bins.shape != (expected,):
            raise ValueError(f"{self.kind} histogram must have {expected} bins, "
                             f"got shape {bins.shape}")
        if np.any(bins < 0):
            raise ValueError("histogram bins must be nonnegative")
        if self.kind == "lpq" and abs(bins.sum() - 1.0) > 1e-9:
            raise ValueError(f"lpq histogram must sum to 1, got {bins.sum()}")
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)


@lru_cache(maxsize=1)
def _uniform_lookup() -> np.ndarray:
    """Map every 8-bit pattern to its histogram bin: uniform patterns (at
    most two circular 0/1 transitions) get consecutive labels in numeric
    order, all others share the final bin."""
    table = np.full(256, LBP_BINS - 1, dtype=np.int64)
    label = 0
    for code in range(256):
        bits = [(code >> k) & 1 for k in range(LBP_SAMPLES)]
        transitions = sum(bits[k] != bits[(k + 1) % LBP_SAMPLES] for k in range(LBP_SAMPLES))
        if transitions <= 2:
            table[code] = label
            label += 1
    assert label == LBP_BINS - 1
    return table


def lbp_sample_offsets() -> list[tuple[float, float]]:
    """(row, col) offsets of the 8 circular samples; sample k sits at angle
    2*pi*k/8 measured from the +column axis, rows growing downward."""
    offsets = []
    for k in range(LBP_SAMPLES):
        angle = 2.0 * np.pi * k / LBP_SAMPLES
        offsets.append((-LBP_RADIUS * np.sin(angle), LBP_RADIUS * np.cos(angle)))
    return offsets


def _bilinear_shifted(data: np.ndarray, dr: float, dc: float, margin: int) -> np.ndarray:
    """Values of `data` sampled at (interior grid + (dr, dc)) via bilinear weights."""
    h, w = data.shape
    rows = np.arange(margin, h - margin)
    cols = np.arange(margin, w - margin)
    r0 = int(np.floor(dr))
    c0 = int(np.floor(dc))
    tr = dr - r0
    tc = dc - c0
    # Zero-weight neighbors reuse the base index so integer offsets at the
    # margin never index outside the image.
    r1 = r0 + 1 if tr > 0 else r0
    c1 = c0 + 1 if tc > 0 else c0

    def block(ro, co):
        return data[np.ix_(rows + ro, cols + co)]

    return ((1 - tr) * (1 - tc) * block(r0, c0)
            + (1 - tr) * tc * block(r0, c1)
            + tr * (1 - tc) * block(r1, c0)
            + tr * tc * block(r1, c1))


def lbp_uniform_histogram(gray: GrayImage) -> FeatureHistogram:
    """59-bin uniform LBP histogram (counts over the interior pixels).

    Each interior pixel compares 8 bilinear samples at radius 2 against its
    center value; a sample at least as large as the center sets its bit.
    """
    if gray.height < 5 or gray.width < 5:
        raise ValueError(f"image must be at least 5x5, got {gray.shape}")
    data = gray.data
    margin = int(np.ceil(LBP_RADIUS))
    center = data[margin:-margin, margin:-margin]
    codes = np.zeros(center.shape, dtype=np.int64)
    for k, (dr, dc) in enumerate(lbp_sample_offsets()):
        sample = _bilinear_shifted(data, dr, dc, margin)
        codes |= (sample >= center).astype(np.int64) << k
    labels = _uniform_lookup()[codes]
    counts = np.bincount(labels.ravel(), minlength=LBP_BINS).astype(np.float64)
    return FeatureHistogram(counts, "lbp")


def _lpq_frequencies(alpha: float) -> list[tuple[float, float]]:
    # (u_x, u_y) pairs: the four lowest nonzero frequencies covering a half-plane.
    return [(alpha, 0.0), (0.0, alpha), (alpha, alpha), (alpha, -alpha)]


@lru_cache(maxsize=4)
def _lpq_model(window: int, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Complex 2D filters (4 x window x window) and the 8x8 whitening matrix.

    The whitening matrix diagonalizes the filter responses' covariance under
    an exponential rho^distance pixel correlation model; eigenvectors are
    ordered by descending eigenvalue with their largest-magnitude entry made
    positive, so the transform is deterministic.
    """
    r = window // 2
    offs = np.arange(-r, r + 1, dtype=np.float64)
    alpha = 1.0 / window
    xs, ys = np.meshgrid(offs, offs)          # ys varies along rows
    filters = np.empty((4, window, window), dtype=np.complex128)
    for i, (ux, uy) in enumerate(_lpq_frequencies(alpha)):
        filters[i] = np.exp(-2j * np.pi * (ux * xs + uy * ys))

    positions = np.stack([ys.ravel(), xs.ravel()], axis=1)
    dist = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    cov_pixels = rho**dist
    m = np.concatenate([filters.reshape(4, -1).real, filters.reshape(4, -1).imag], axis=0)
    cov_resp = m @ cov_pixels @ m.T
    eigvals, eigvecs = np.linalg.eigh(cov_resp)
    order = np.argsort(eigvals)[::-1]
    eigvecs = eigvecs[:, order]
    for j in range(eigvecs.shape[1]):
        col = eigvecs[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            eigvecs[:, j] = -col
    filters.setflags(write=False)
    eigvecs.setflags(write=False)
    return filters, eigvecs


def lpq_codeword_map(gray: GrayImage, window: int = LPQ_WINDOW,
                     rho: float = LPQ_RHO) -> np.ndarray:
    """Per-pixel 8-bit LPQ codeword over the valid interior region.

    Bit j is the sign (>= 0) of the j-th whitened component of
    [Re F1..F4, Im F1..F4], with F1..F4 the four low-frequency short-time
    Fourier coefficients of the window centered on the pixel.
    """
    if gray.height < window or gray.width < window:
        raise ValueError(f"image must be at least {window}x{window}, got {gray.shape}")
    filters, eigvecs = _lpq_model(window, rho)
    windows = np.lib.stride_tricks.sliding_window_view(gray.data, (window, window))
    responses = np.einsum("hwyx,fyx->fhw", windows, filters)
    q = np.concatenate([responses.real, responses.imag], axis=0)   # 8 x h x w
    whitened = np.einsum("ij,ihw->jhw", eigvecs, q)
    bits = (whitened >= 0).astype(np.int64)
    weights = (1 << np.arange(8, dtype=np.int64)).reshape(8, 1, 1)
    return (bits * weights).sum(axis=0)


def lpq_histogram(gray: GrayImage, window: int = LPQ_WINDOW,
                  rho: float = LPQ_RHO) -> FeatureHistogram:
    """256-bin normalized histogram of LPQ codewords."""
    codes = lpq_codeword_map(gray, window=window, rho=rho)
    counts = np.bincount(codes.ravel(), minlength=LPQ_BINS).astype(np.float64)
    return FeatureHistogram(counts / counts.sum(), "lpq")


def histogram_csv_row(identity, hist: FeatureHistogram) -> str:
    """One CSV line: the identity followed by all bin values."""
    return ",".join([str(identity)] + [f"{v:.9g}" for v in hist.bins])


def chi_square(h1: FeatureHistogram, h2: FeatureHistogram) -> float:
    """Chi-square distance: sum (a-b)^2/(a+b) over bins with any mass."""
    if h1.kind != h2.kind:
        raise ValueError(f"cannot compare {h1.kind} with {h2.kind}")
    a, b = h1.bins, h2.bins
    total = a + b
    live = total > 0
    diff = a[live] - b[live]
    return float((diff * diff / total[live]).sum())


def rank1_identify(query: FeatureHistogram, gallery) -> object:
    """Identity of the gallery entry nearest in chi-square distance.

    gallery is a sequence of (id, FeatureHistogram); ties keep the earliest
    entry.
    """
    gallery = list(gallery)
    if not gallery:
        raise ValueError("gallery must not be empty")
    best_id, best_dist = None, np.inf
    for identity, hist in gallery:
        d = chi_square(query, hist)
        if d < best_dist:
            best_id, best_dist = identity, d
    return best_id
