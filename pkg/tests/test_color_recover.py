import numpy as np
import pytest

from chromanorm.color_recover import (LogRgbImage, laplacian_from_gradients, log_rgb,
                                      masked_gradients, neumann_laplacian, recover_color,
                                      recover_from_log, solve_poisson)
from chromanorm.image_core import BinaryMask, LinearRgbImage


def random_log_image(h, w, seed=0):
    rng = np.random.default_rng(seed)
    return LogRgbImage(rng.normal(0.0, 0.5, (h, w, 3)))


def test_log_rgb_examples():
    img = LinearRgbImage(np.stack([np.full((2, 2), 1.0), np.full((2, 2), 0.0),
                                   np.full((2, 2), 0.25)], axis=2))
    logged = log_rgb(img, floor=1e-3)
    np.testing.assert_allclose(logged.data[:, :, 0], 0.0, atol=1e-15)
    np.testing.assert_allclose(logged.data[:, :, 1], np.log(1e-3))
    np.testing.assert_allclose(np.exp(logged.data[:, :, 2]), 0.25)  # inverse above floor
    with pytest.raises(ValueError):
        log_rgb(img, floor=0.0)


def test_masked_gradients_examples():
    log_img = random_log_image(6, 7, seed=1)
    empty = BinaryMask.empty(6, 7)
    zx, zy = masked_gradients(log_img, empty)
    np.testing.assert_allclose(zx[:, :-1], log_img.data[:, 1:] - log_img.data[:, :-1])
    np.testing.assert_allclose(zx[:, -1], 0.0)
    full = BinaryMask(np.ones((6, 7), dtype=bool))
    zx, zy = masked_gradients(log_img, full)
    assert not zx.any() and not zy.any()
    const = LogRgbImage(np.full((6, 7, 3), 1.7))
    zx, zy = masked_gradients(const, empty)
    assert not zx.any() and not zy.any()


def test_masked_gradients_sever_both_endpoints():
    log_img = random_log_image(5, 5, seed=2)
    mask = np.zeros((5, 5), dtype=bool)
    mask[2, 2] = True
    zx, zy = masked_gradients(log_img, BinaryMask(mask))
    assert np.all(zx[2, 1] == 0) and np.all(zx[2, 2] == 0)
    assert np.all(zy[1, 2] == 0) and np.all(zy[2, 2] == 0)


def test_divergence_matches_stencil_oracle():
    # Interior of the divergence of forward differences is the classic
    # [[0,1,0],[1,-4,1],[0,1,0]] convolution; verify on a random 8x8 field.
    log_img = random_log_image(8, 8, seed=3)
    zx, zy = masked_gradients(log_img, BinaryMask.empty(8, 8))
    nu = laplacian_from_gradients(zx, zy)
    lap = np.zeros_like(log_img.data)
    d = log_img.data
    lap[1:-1, 1:-1] = (d[:-2, 1:-1] + d[2:, 1:-1] + d[1:-1, :-2] + d[1:-1, 2:]
                       - 4 * d[1:-1, 1:-1])
    np.testing.assert_allclose(nu[1:-1, 1:-1], lap[1:-1, 1:-1], atol=1e-12)


def test_divergence_equals_neumann_operator():
    log_img = random_log_image(7, 9, seed=4)
    zx, zy = masked_gradients(log_img, BinaryMask.empty(7, 9))
    nu = laplacian_from_gradients(zx, zy)
    lam = neumann_laplacian(7, 9)
    for c in range(3):
        np.testing.assert_allclose(nu[:, :, c].ravel(), lam @ log_img.data[:, :, c].ravel(),
                                   atol=1e-12)


def test_divergence_linear_ramp_harmonic():
    ramp = LogRgbImage(np.tile(np.arange(9.0)[None, :, None], (7, 1, 3)))
    zx, zy = masked_gradients(ramp, BinaryMask.empty(7, 9))
    nu = laplacian_from_gradients(zx, zy)
    np.testing.assert_allclose(nu[1:-1, 1:-1], 0.0, atol=1e-12)


def test_operator_structure():
    lam = neumann_laplacian(5, 6)
    dense = lam.toarray()
    np.testing.assert_allclose(dense.sum(axis=1), 0.0, atol=1e-15)
    np.testing.assert_allclose(dense, dense.T, atol=0)
    diag = np.diagonal(dense).reshape(5, 6)
    assert diag[0, 0] == -2 and diag[0, 3] == -3 and diag[2, 3] == -4


def test_operator_symmetry_inner_product():
    lam = neumann_laplacian(6, 6)
    rng = np.random.default_rng(5)
    u, v = rng.normal(size=36), rng.normal(size=36)
    assert abs((lam @ u) @ v - u @ (lam @ v)) < 1e-10


def test_solve_poisson_nullspace_element():
    nu = np.zeros((5, 5, 3))
    solved, stats = solve_poisson(nu, mean_target=(1.0, 2.0, -0.5))
    for c, target in enumerate((1.0, 2.0, -0.5)):
        np.testing.assert_allclose(solved.data[:, :, c], target, atol=1e-12)
    assert all(s.converged and s.iterations == 0 for s in stats)


def test_solve_poisson_roundtrip_recovers_log_image():
    log_img = random_log_image(16, 14, seed=6)
    zx, zy = masked_gradients(log_img, BinaryMask.empty(16, 14))
    nu = laplacian_from_gradients(zx, zy)
    target = log_img.data.mean(axis=(0, 1))
    solved, stats = solve_poisson(nu, target, tol=1e-10)
    for s in stats:
        assert s.relative_residual <= 1e-10
    rms = np.sqrt(((solved.data - log_img.data) ** 2).mean())
    assert rms <= 1e-6


def test_solve_poisson_matches_dense_oracle():
    # 3x3 system, hand-built rhs, dense least-squares oracle on the 9x9 operator.
    rng = np.random.default_rng(7)
    nu_flat = rng.normal(size=9)
    nu_flat -= nu_flat.mean()
    nu = np.repeat(nu_flat.reshape(3, 3)[:, :, None], 3, axis=2)
    solved, _ = solve_poisson(nu, mean_target=0.0, tol=1e-12)
    dense = neumann_laplacian(3, 3).toarray()
    oracle, *_ = np.linalg.lstsq(dense, nu_flat, rcond=None)
    oracle -= oracle.mean()
    np.testing.assert_allclose(solved.data[:, :, 0].ravel(), oracle, atol=1e-9)


def test_solve_poisson_nonconvergence_raises():
    from chromanorm.color_recover import PoissonConvergenceError
    rng = np.random.default_rng(8)
    nu = rng.normal(size=(32, 32, 3))
    with pytest.raises(PoissonConvergenceError) as err:
        solve_poisson(nu, mean_target=0.0, tol=1e-12, max_iters=2)
    assert err.value.residual > 0


def test_recover_color_roundtrip_empty_mask():
    rng = np.random.default_rng(9)
    data = rng.uniform(0.05, 1.0, (48, 40, 3))
    img = LinearRgbImage(data)
    out, stats = recover_color(img, BinaryMask.empty(48, 40))
    rms = np.sqrt(((out.data - data) ** 2).mean(axis=(0, 1)))
    assert np.all(rms <= 1e-4)
    assert all(s.relative_residual <= 1e-8 for s in stats)


def test_recover_color_constant_input_any_mask():
    mask = np.zeros((12, 12), dtype=bool)
    mask[3:6, 4:9] = True
    img = LinearRgbImage(np.full((12, 12, 3), 0.42))
    out, _ = recover_color(img, BinaryMask(mask))
    np.testing.assert_allclose(out.data, 0.42, atol=1e-9)


def test_recover_invariant_to_log_channel_offset():
    rng = np.random.default_rng(10)
    raw = LinearRgbImage(rng.uniform(0.05, 0.9, (20, 20, 3)))
    mask = np.zeros((20, 20), dtype=bool)
    mask[:, 10] = True
    base_log = np.log(raw.data)
    out1, _ = recover_from_log(LogRgbImage(base_log), raw, BinaryMask(mask))
    shifted = base_log.copy()
    shifted[:, :, 1] += 0.7
    out2, _ = recover_from_log(LogRgbImage(shifted), raw, BinaryMask(mask))
    assert np.abs(out1.data - out2.data).max() <= 1e-6


def test_recover_color_removes_shadow(mosaic):
    from scipy.ndimage import binary_dilation
    c = mosaic.boundary_col
    truth = np.zeros((180, 180), dtype=bool)
    truth[:, c - 1:c + 1] = True
    gt_mask = BinaryMask(binary_dilation(truth, np.ones((3, 3), dtype=bool)))
    before = mosaic.image.data[mosaic.lit].mean(axis=0) / mosaic.image.data[mosaic.shadow].mean(axis=0)
    assert np.all(before >= 2.0)
    out, _ = recover_color(mosaic.image, gt_mask)
    after = out.data[mosaic.lit].mean(axis=0) / out.data[mosaic.shadow].mean(axis=0)
    assert np.all((after >= 0.9) & (after <= 1.1))
