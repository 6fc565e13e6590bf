"""Specular highlight detection by sparse non-negative matrix factorization.

Pixel colors form a 3 x N matrix factored into two nonnegative components:
a dense diffuse one and a sparse specular one. The specular coefficient row
is held at a fixed Hoyer sparseness (L1/L2 ratio) with unit L2 norm; pixels
whose specular coefficient clears an Otsu threshold form the highlight mask.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image_core import BinaryMask, LinearRgbImage

DEFAULT_SPARSITY = 0.8
DEFAULT_MAX_ITERS = 500
DEFAULT_TOL = 1e-6
DEFAULT_SEED = 0

_EPS = 1e-12
# Specular component weaker than this fraction of the mean pixel magnitude
# is treated as absent (the factorization parked noise in it).
_CONTRIBUTION_FLOOR = 1e-3
# Basis columns this collinear mean the "specular" color is indistinguishable
# from the diffuse one, so the split carries no highlight evidence.
_PARALLEL_BASIS_COSINE = 0.999
# Highlights cover a small portion of a face; a threshold that selects more
# than this fraction of all pixels found surface structure, not speculars.
_MAX_MASK_FRACTION = 0.25


def hoyer_sparseness(x) -> float:
    """Normalized L1/L2 sparseness in [0, 1]; 0 for uniform, 1 for one-hot."""
    v = np.asarray(x, dtype=np.float64).ravel()
    n = v.size
    l2 = np.linalg.norm(v)
    if l2 == 0 or n < 2:
        return 0.0
    return float((np.sqrt(n) - np.abs(v).sum() / l2) / (np.sqrt(n) - 1.0))


def hoyer_project(x, l1_target: float, l2_target: float = 1.0) -> np.ndarray:
    """Closest nonnegative vector with the given L1 and L2 norms.

    Alternating projection onto the sum constraint and the sphere, zeroing
    negative components until feasible.
    """
    v = np.asarray(x, dtype=np.float64).ravel().copy()
    n = v.size
    s = v + (l1_target - v.sum()) / n
    zeroed = np.zeros(n, dtype=bool)
    for _ in range(n + 1):
        free = ~zeroed
        nfree = int(free.sum())
        if nfree == 0:
            break
        mid = np.where(free, l1_target / nfree, 0.0)
        w = s - mid
        qa = float(w @ w)
        if qa < _EPS:
            s = mid * (l2_target / max(np.linalg.norm(mid), _EPS))
            break
        qb = 2.0 * float(mid @ w)
        qc = float(mid @ mid) - l2_target**2
        disc = max(qb * qb - 4.0 * qa * qc, 0.0)
        alpha = (-qb + np.sqrt(disc)) / (2.0 * qa)
        s = mid + alpha * w
        if np.all(s >= 0):
            return s
        zeroed |= s < 0
        s[zeroed] = 0.0
        free = ~zeroed
        s[free] += (l1_target - s.sum()) / max(int(free.sum()), 1)
    s = np.maximum(s, 0.0)
    norm = np.linalg.norm(s)
    return s * (l2_target / norm) if norm > 0 else s


@dataclass(frozen=True)
class ReflectanceFactorization:
    """Result of the 2-component factorization V ~ basis @ coefficients.

    Basis column 0 / coefficient row 0 is the diffuse component; column 1 /
    row 1 the specular one (the row with the higher Hoyer sparseness).
    """

    basis: np.ndarray                # 3 x 2
    coefficients: np.ndarray         # 2 x N, rows unit L2 norm
    reconstruction_error: float      # relative Frobenius residual
    iterations: int
    converged: bool
    objective_history: np.ndarray    # relative residual after each iteration

    def __post_init__(self):
        basis = np.array(self.basis, dtype=np.float64, copy=True)
        coeff = np.array(self.coefficients, dtype=np.float64, copy=True)
        if basis.shape != (3, 2) or coeff.ndim != 2 or coeff.shape[0] != 2:
            raise ValueError("basis must be 3x2 and coefficients 2xN")
        if np.any(basis < 0) or np.any(coeff < 0):
            raise ValueError("factorization must be nonnegative")
        norms = np.linalg.norm(coeff, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError(f"coefficient rows must have unit L2 norm, got {norms}")
        if hoyer_sparseness(coeff[1]) < hoyer_sparseness(coeff[0]) - 1e-12:
            raise ValueError("specular row must be at least as sparse as the diffuse row")
        history = np.array(self.objective_history, dtype=np.float64, copy=True)
        for arr in (basis, coeff, history):
            arr.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "coefficients", coeff)
        object.__setattr__(self, "objective_history", history)

    @property
    def diffuse(self) -> np.ndarray:
        return self.coefficients[0]

    @property
    def specular(self) -> np.ndarray:
        return self.coefficients[1]


def _objective(v: np.ndarray, w: np.ndarray, h: np.ndarray) -> float:
    return float(np.linalg.norm(v - w @ h))


def _nmf_iterations(v: np.ndarray, sparsity_target: float, max_iters: int, seed: int):
    """Yield (W, H, objective) after every full iteration; objective never increases.

    The sparse row moves by projected gradient with step halving; the dense
    row and the basis use multiplicative updates, each accepted only when it
    does not increase the residual. The basis starts from the physical
    prior (diffuse column = mean pixel color, specular column = achromatic,
    matching a surface reflection that carries the source spectrum); a
    random basis reliably parks the sparse component in a diffuse-colored
    local minimum. Coefficients start seeded uniform random.
    """
    n = v.shape[1]
    rng = np.random.default_rng(seed)
    w = np.empty((3, 2))
    mean_color = v.mean(axis=1)
    norm = np.linalg.norm(mean_color)
    w[:, 0] = mean_color / norm if norm > 0 else 1.0 / np.sqrt(3.0)
    w[:, 1] = 1.0 / np.sqrt(3.0)
    h = rng.uniform(0.1, 1.0, size=(2, n))
    l1_target = np.sqrt(n) - sparsity_target * (np.sqrt(n) - 1.0)
    h[1] = hoyer_project(h[1], l1_target)
    norm0 = np.linalg.norm(h[0])
    h[0] /= norm0
    w[:, 0] *= norm0

    obj = _objective(v, w, h)
    for _ in range(max_iters):
        # Sparse (specular) row: projected gradient with step halving. The
        # line search restarts from the exact unconstrained minimizer
        # 1/||w_s||^2 so a hard iteration cannot poison later step sizes.
        grad = (w.T @ (w @ h - v))[1]
        step = 1.0 / max(float(w[:, 1] @ w[:, 1]), _EPS)
        for _ in range(40):
            candidate = hoyer_project(h[1] - step * grad, l1_target)
            h_try = h.copy()
            h_try[1] = candidate
            obj_try = _objective(v, w, h_try)
            if obj_try <= obj:
                h = h_try
                obj = obj_try
                break
            step /= 2.0

        # Dense (diffuse) row: multiplicative update, kept only if non-increasing.
        numer = (w.T @ v)[0]
        denom = (w.T @ w @ h)[0] + _EPS
        h_try = h.copy()
        h_try[0] = h[0] * numer / denom
        norm0 = np.linalg.norm(h_try[0])
        if norm0 > 0:
            w_try = w.copy()
            h_try[0] /= norm0
            w_try[:, 0] *= norm0
            obj_try = _objective(v, w_try, h_try)
            if obj_try <= obj:
                w, h, obj = w_try, h_try, obj_try

        # Basis: multiplicative update, same acceptance rule.
        w_try = w * (v @ h.T) / (w @ h @ h.T + _EPS)
        obj_try = _objective(v, w_try, h)
        if obj_try <= obj:
            w, obj = w_try, obj_try

        yield w, h, obj


def nmf_sparse(v, sparsity_target: float = DEFAULT_SPARSITY,
               max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL,
               seed: int = DEFAULT_SEED) -> ReflectanceFactorization:
    """Factor a nonnegative 3 x N matrix into diffuse + sparse specular parts.

    The input is normalized by its Frobenius norm before iterating, so the
    recovered coefficients (and the downstream mask) are exactly invariant
    to global intensity scaling; the scale is restored into the basis.
    Stops when the relative objective change falls below tol; otherwise the
    best iterate is returned flagged as non-converged.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != 3:
        raise ValueError(f"expected a 3xN matrix, got shape {v.shape}")
    if v.shape[1] < 2:
        raise ValueError("need at least 2 pixels")
    if np.any(v < 0):
        raise ValueError("input matrix must be nonnegative")
    if not 0 < sparsity_target < 1:
        raise ValueError(f"sparsity_target must lie in (0, 1), got {sparsity_target}")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    scale = float(np.linalg.norm(v))
    if scale == 0:
        raise ValueError("input matrix is all zero")
    vn = v / scale

    history = []
    prev = None
    converged = False
    w = h = None
    for w, h, obj in _nmf_iterations(vn, sparsity_target, max_iters, seed):
        history.append(obj)
        if prev is not None and abs(prev - obj) <= tol * max(prev, _EPS):
            converged = True
            break
        prev = obj

    # Row 1 is the constrained row, but label by measured sparseness.
    if hoyer_sparseness(h[0]) > hoyer_sparseness(h[1]):
        h = h[::-1].copy()
        w = w[:, ::-1].copy()
    history = np.asarray(history)  # ||vn||_F == 1, so this is the relative residual
    return ReflectanceFactorization(
        basis=w * scale,
        coefficients=h,
        reconstruction_error=float(history[-1]),
        iterations=len(history),
        converged=converged,
        objective_history=history,
    )


def otsu_threshold(values, bins: int = 256) -> float:
    """Otsu's threshold over a 1D sample; returns the separating bin edge."""
    v = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return float(hi)
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    p = counts / counts.sum()
    omega = np.cumsum(p)
    mu = np.cumsum(p * (edges[:-1] + edges[1:]) * 0.5)
    mu_total = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    between[~np.isfinite(between)] = -1.0
    return float(edges[int(np.argmax(between)) + 1])


def detect_highlight(img: LinearRgbImage, sparsity_target: float = DEFAULT_SPARSITY,
                     max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL,
                     seed: int = DEFAULT_SEED) -> BinaryMask:
    """Mask of pixels whose specular coefficient clears an Otsu threshold.

    The mask is empty when no genuine specular evidence exists: the
    coefficient row is flat (variance below 1e-12), its contribution is
    negligible next to the mean pixel magnitude, the two basis colors are
    collinear (a constant-chromaticity image factors that way), or the
    threshold selects so many pixels that the component cannot be specular.
    """
    v = img.data.reshape(-1, 3).T
    fact = nmf_sparse(v, sparsity_target=sparsity_target, max_iters=max_iters,
                      tol=tol, seed=seed)
    ks = fact.specular
    if float(np.var(ks)) < 1e-12:
        return BinaryMask.empty(img.height, img.width)
    col_norms = np.linalg.norm(fact.basis, axis=0)
    contribution = col_norms[1] * ks.max()
    mean_magnitude = float(np.linalg.norm(v, axis=0).mean())
    if contribution < _CONTRIBUTION_FLOOR * mean_magnitude:
        return BinaryMask.empty(img.height, img.width)
    if col_norms.min() > 0:
        cosine = float(fact.basis[:, 0] @ fact.basis[:, 1] / (col_norms[0] * col_norms[1]))
        if cosine >= _PARALLEL_BASIS_COSINE:
            return BinaryMask.empty(img.height, img.width)
    mask = ks > otsu_threshold(ks)
    if mask.sum() > _MAX_MASK_FRACTION * mask.size:
        return BinaryMask.empty(img.height, img.width)
    return BinaryMask(mask.reshape(img.height, img.width))
