"""Shadow-free color reconstruction in the log-RGB gradient domain.

Gradients crossing the shadow-edge mask are zeroed, their divergence forms
a per-channel Poisson right-hand side, and each channel is rebuilt by
solving the 5-point Neumann Laplacian system. The Neumann operator is
singular with a constant nullspace, so the right-hand side is projected to
zero mean and the solution mean is pinned afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .image_core import BinaryMask, LinearRgbImage

DEFAULT_LOG_FLOOR = 1e-3
DEFAULT_TOL = 1e-8
DEFAULT_BRIGHTNESS_PERCENTILE = 99.5


class PoissonConvergenceError(RuntimeError):
    """Solver did not reach the requested residual; carries the achieved one."""

    def __init__(self, channel: int, residual: float, tol: float, iterations: int):
        self.channel = channel
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"channel {channel}: residual {residual:.3e} after "
                         f"{iterations} iterations (tol {tol:.1e})")


@dataclass(frozen=True)
class LogRgbImage:
    """H x W x 3 log-domain image, finite everywhere."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected HxWx3 data, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("log image must be finite everywhere")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SolverStats:
    iterations: int
    relative_residual: float
    converged: bool


@lru_cache(maxsize=8)
def neumann_laplacian(height: int, width: int) -> sp.csr_matrix:
    """5-point Laplacian with zero-flux boundaries on a height x width grid.

    Rows sum to zero (diagonal -4 inside, -3 on edges, -2 at corners) and
    the matrix is symmetric, so the system is solvable for any zero-mean
    right-hand side, up to an additive constant.
    """
    def line(n: int) -> sp.csr_matrix:
        main = np.full(n, -2.0)
        main[0] = main[-1] = -1.0
        off = np.ones(n - 1)
        return sp.diags([off, main, off], [-1, 0, 1], format="csr")

    eye_h = sp.identity(height, format="csr")
    eye_w = sp.identity(width, format="csr")
    return (sp.kron(eye_h, line(width)) + sp.kron(line(height), eye_w)).tocsr()


def log_rgb(img: LinearRgbImage, floor: float = DEFAULT_LOG_FLOOR) -> LogRgbImage:
    """Channel-wise natural log after clamping above `floor`."""
    if floor <= 0:
        raise ValueError(f"floor must be positive, got {floor}")
    return LogRgbImage(np.log(np.maximum(img.data, floor)))


def masked_gradients(log_img: LogRgbImage, mask: BinaryMask) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences of each log channel, severed across the mask.

    A difference is zeroed when either of its two endpoint pixels is masked.
    Differences that would leave the grid are zero (zero-flux boundary).
    Returns (zeta_x, zeta_y), both H x W x 3.
    """
    if mask.shape != (log_img.height, log_img.width):
        raise ValueError(f"mask shape {mask.shape} does not match image "
                         f"{(log_img.height, log_img.width)}")
    data = log_img.data
    m = mask.data
    zx = np.zeros_like(data)
    zy = np.zeros_like(data)
    zx[:, :-1] = data[:, 1:] - data[:, :-1]
    zy[:-1, :] = data[1:, :] - data[:-1, :]
    keep_x = ~(m[:, :-1] | m[:, 1:])
    keep_y = ~(m[:-1, :] | m[1:, :])
    zx[:, :-1] *= keep_x[:, :, None]
    zy[:-1, :] *= keep_y[:, :, None]
    return zx, zy


def laplacian_from_gradients(zeta_x: np.ndarray, zeta_y: np.ndarray) -> np.ndarray:
    """Backward-difference divergence of forward-difference gradients.

    With an empty mask this reproduces the Neumann 5-point Laplacian of the
    log image exactly, which keeps the right-hand side consistent with the
    solver operator.
    """
    nu = np.zeros_like(zeta_x)
    nu += zeta_x
    nu[:, 1:] -= zeta_x[:, :-1]
    nu += zeta_y
    nu[1:, :] -= zeta_y[:-1, :]
    return nu


def solve_poisson(nu: np.ndarray, mean_target, tol: float = DEFAULT_TOL,
                  max_iters: int | None = None) -> tuple[LogRgbImage, list[SolverStats]]:
    """Solve the Neumann Poisson system per channel.

    nu is H x W x 3; each channel's right-hand side is projected to zero
    mean (compatibility with the singular operator) and solved by conjugate
    gradients to a relative residual of tol; the solution constant is chosen
    so the channel mean equals mean_target[channel].
    """
    nu = np.asarray(nu, dtype=np.float64)
    if tol <= 0:
        raise ValueError("tol must be positive")
    height, width = nu.shape[:2]
    n = height * width
    if max_iters is None:
        max_iters = 10 * n
    mean_target = np.broadcast_to(np.asarray(mean_target, dtype=np.float64), (3,))
    operator = neumann_laplacian(height, width)
    negative = -operator  # positive semidefinite for CG

    solution = np.empty_like(nu)
    stats = []
    for c in range(3):
        b = nu[:, :, c].ravel()
        b = b - b.mean()
        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            solution[:, :, c] = mean_target[c]
            stats.append(SolverStats(iterations=0, relative_residual=0.0, converged=True))
            continue
        iterations = 0

        def count(_):
            nonlocal iterations
            iterations += 1

        x, info = cg(negative, -b, rtol=tol, atol=0.0, maxiter=max_iters, callback=count)
        residual = float(np.linalg.norm(operator @ x - b) / bnorm)
        if info != 0:
            raise PoissonConvergenceError(c, residual, tol, iterations)
        x = x - x.mean() + mean_target[c]
        solution[:, :, c] = x.reshape(height, width)
        stats.append(SolverStats(iterations=iterations, relative_residual=residual,
                                 converged=True))
    return LogRgbImage(solution), stats


def recover_from_log(log_img: LogRgbImage, raw: LinearRgbImage, mask: BinaryMask,
                     tol: float = DEFAULT_TOL, max_iters: int | None = None,
                     brightness_percentile: float = DEFAULT_BRIGHTNESS_PERCENTILE
                     ) -> tuple[LinearRgbImage, list[SolverStats]]:
    """Rebuild a linear image from a log image with mask-severed gradients.

    The per-channel output scale is set so its brightness percentile matches
    the raw input's, then values are clipped to [0, 1].
    """
    zeta_x, zeta_y = masked_gradients(log_img, mask)
    nu = laplacian_from_gradients(zeta_x, zeta_y)
    mean_target = log_img.data.mean(axis=(0, 1))
    solved, stats = solve_poisson(nu, mean_target, tol=tol, max_iters=max_iters)
    out = np.exp(solved.data)
    for c in range(3):
        ref = np.percentile(raw.data[:, :, c], brightness_percentile)
        cur = np.percentile(out[:, :, c], brightness_percentile)
        if cur > 0:
            out[:, :, c] *= ref / cur
    return LinearRgbImage(np.clip(out, 0.0, 1.0)), stats


def recover_color(img: LinearRgbImage, mask: BinaryMask,
                  floor: float = DEFAULT_LOG_FLOOR, tol: float = DEFAULT_TOL,
                  max_iters: int | None = None,
                  brightness_percentile: float = DEFAULT_BRIGHTNESS_PERCENTILE
                  ) -> tuple[LinearRgbImage, list[SolverStats]]:
    """Shadow-free color image: log, sever masked gradients, Poisson, rescale."""
    if mask.shape != img.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image {img.shape}")
    return recover_from_log(log_rgb(img, floor), img, mask, tol=tol,
                            max_iters=max_iters,
                            brightness_percentile=brightness_percentile)
