"""Tests for the conjugacy series, its lattice cache, and the inverse."""
from __future__ import annotations

import numpy as np
import pytest

from conftest import make_map

from anosovlab import conjugacy as cj
from anosovlab.torus import distance, fixed_points, periodic_points_linear


@pytest.fixture(scope="module")
def grid_default(map_default):
    return cj.build_grid(map_default, resolution=64, tol=1e-9)


@pytest.fixture(scope="module")
def field_default(map_default):
    return cj.displacement_field(map_default, tol=1e-9)


# -- series -------------------------------------------------------------------

def test_truncation_depth(L_default):
    assert cj.truncation_depth(L_default, 1e-9) == 11
    assert cj.truncation_depth(L_default, 1e-6) == 8
    with pytest.raises(ValueError, match="cap"):
        cj.truncation_depth(L_default, 1e-60)
    with pytest.raises(ValueError, match="positive"):
        cj.truncation_depth(L_default, 0.0)


def test_forcing_term_support_and_bound(map_default):
    rng = np.random.default_rng(2)
    pts = rng.uniform(0.0, 5.0, size=(50_000, 2))
    p = cj.forcing_term(map_default, pts)
    norms = np.linalg.norm(p, axis=1)
    assert norms.max() <= 2 * map_default.profile.r
    # support is L^{-1}(B): theta passes everything else through bit-for-bit
    images = map_default.L.apply(pts)
    off = np.linalg.norm(map_default.to_local(images), axis=1) > map_default.profile.r
    assert np.all(p[off] == 0.0)
    assert norms[~off].max() > 0.01


def test_forcing_term_unperturbed(L_default, frame_default):
    fmap = make_map(L_default, frame_default, t=0.0)
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.0, 5.0, size=(1000, 2))
    assert np.all(cj.forcing_term(fmap, pts) == 0.0)
    assert np.array_equal(cj.conjugacy_eval(fmap, pts), pts)


def test_semiconjugacy_residual(map_default):
    report = cj.residual_report(map_default, n=10_000, seed=0, tol=1e-9)
    assert report["truncation"] == 11
    assert report["failures"] == 0
    assert report["max_residual"] < 1e-9


def test_fixed_points_carried_to_fixed_points(map_default, field_default):
    # All five linear fixed points avoid the bump's orbit support, so every
    # series term vanishes identically there.
    fp = fixed_points(map_default.L)
    assert np.all(field_default.u(fp) == 0.0)
    assert np.array_equal(field_default.h(fp), fp)
    assert np.array_equal(map_default.apply_f(fp), fp)


def test_series_against_grid_iteration_oracle(map_default, field_default):
    # Brute-force fixed point of u = L^{-1}(p + u o f) on a coarse lattice:
    # unstable component iterated forward, stable component backward, both
    # through bilinear interpolation.  Agreement is interpolation-limited.
    L = map_default.L
    res, iters, n = 120, 30, 120 * 5
    axis = np.arange(n) / res
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    f_inv = cj._eigenframe_inverse(L)
    fx_nodes = map_default.apply_f(nodes)
    fi_nodes = map_default.apply_f_inv(nodes)

    def interp(plane, pts):
        a = pts * res
        i0 = np.floor(a).astype(np.int64)
        frac = a - i0
        i0 %= n
        i1 = (i0 + 1) % n
        return (plane[i0[:, 0], i0[:, 1]] * (1 - frac[:, 0]) * (1 - frac[:, 1])
                + plane[i1[:, 0], i0[:, 1]] * frac[:, 0] * (1 - frac[:, 1])
                + plane[i0[:, 0], i1[:, 1]] * (1 - frac[:, 0]) * frac[:, 1]
                + plane[i1[:, 0], i1[:, 1]] * frac[:, 0] * frac[:, 1])

    p_u = (cj.forcing_term(map_default, nodes) @ f_inv.T)[:, 0]
    p_s_back = (cj.forcing_term(map_default, fi_nodes) @ f_inv.T)[:, 1]
    uu = np.zeros(n * n)
    us = np.zeros(n * n)
    for _ in range(iters):
        uu = (p_u + interp(uu.reshape(n, n), fx_nodes)) / L.lam_signed
        us = L.mu_s * interp(us.reshape(n, n), fi_nodes) - p_s_back
    u_oracle = np.outer(uu, L.e_u) + np.outer(us, L.e_s)
    diff = np.linalg.norm(u_oracle - field_default.u(nodes), axis=1)
    assert diff.max() < 1e-3
    assert diff.mean() < 1e-6


def test_truncation_tail_bound(map_default, field_default):
    rng = np.random.default_rng(5)
    pts = rng.uniform(0.0, 5.0, size=(2000, 2))
    p_sup = np.linalg.norm(
        cj.forcing_term(map_default, rng.uniform(0.0, 5.0, (50_000, 2))),
        axis=1).max()
    deeper = cj.DisplacementField(fmap=map_default,
                                  truncation=field_default.truncation + 10,
                                  tol=field_default.tol)
    change = np.linalg.norm(field_default.u(pts) - deeper.u(pts), axis=1).max()
    lam = map_default.L.lam
    assert change < lam ** -field_default.truncation * p_sup / (1 - 1 / lam)


def test_displacement_field_validation(map_default):
    with pytest.raises(ValueError, match="truncation"):
        cj.DisplacementField(fmap=map_default, truncation=0, tol=1e-9)


# -- lattice cache ------------------------------------------------------------

def test_grid_round_trip(grid_default, map_default, tmp_path):
    path = tmp_path / "u.conj"
    cj.save_grid(grid_default, path)
    loaded = cj.load_grid(path, map_default)
    assert np.array_equal(loaded.values, grid_default.values)
    assert loaded.resolution == 64
    assert loaded.tol == grid_default.tol
    assert loaded.truncation == grid_default.truncation


def test_grid_rejects_corruption(grid_default, map_default, tmp_path):
    path = tmp_path / "u.conj"
    cj.save_grid(grid_default, path)
    blob = bytearray(path.read_bytes())
    blob[0] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="magic"):
        cj.load_grid(path, map_default)
    blob[0] ^= 0xFF
    blob[5000] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="checksum"):
        cj.load_grid(path, map_default)


def test_grid_rejects_mismatched_map(grid_default, tmp_path,
                                     L_default, frame_default):
    path = tmp_path / "u.conj"
    cj.save_grid(grid_default, path)
    other = make_map(L_default, frame_default, r=0.125)
    with pytest.raises(ValueError, match="key 'r'"):
        cj.load_grid(path, other)


def test_grid_resolution_validation(map_default):
    with pytest.raises(ValueError, match="resolution"):
        cj.build_grid(map_default, resolution=32)


def test_grid_interpolation_matches_series_at_nodes(grid_default,
                                                    field_default):
    nodes = np.array([[0.5, 1.25], [3.0, 0.0], [1.625, 0.46875]])
    assert np.allclose(grid_default.u(nodes), field_default.u(nodes),
                       atol=1e-15)


def test_grid_unperturbed_is_zero(L_default, frame_default):
    fmap = make_map(L_default, frame_default, t=0.0)
    grid = cj.build_grid(fmap, resolution=64, tol=1e-9)
    assert np.all(grid.values == 0.0)


def test_u_sup_decreases_with_r(L_default, frame_default):
    sups = [cj.build_grid(make_map(L_default, frame_default, r=r),
                          resolution=64, tol=1e-9).u_sup()
            for r in (0.25, 0.125, 0.0625)]
    assert sups[0] > sups[1] > sups[2]
    # closeness to the linear model scales like the bump radius
    for big, small in zip(sups, sups[1:]):
        assert 0.4 < small / big < 0.6


def test_grid_interpolation_residual_honest_band(grid_default):
    report = cj.grid_residual_probe(grid_default, n=2000, seed=0)
    assert report["max_residual"] < 0.05
    assert report["mean_residual"] < 5e-4


@pytest.mark.xfail(
    reason="bilinear interpolation of a merely Holder displacement cannot "
           "reach 10*tol: the off-lattice residual is interpolation-limited "
           "(measured ~1.6e-2 at 64/unit, scaling ~cell^0.9)",
    strict=True)
def test_grid_interpolation_residual_at_series_tolerance(grid_default):
    report = cj.grid_residual_probe(grid_default, n=2000, seed=0)
    assert report["max_residual"] < 10 * grid_default.tol


# -- inverse ------------------------------------------------------------------

def test_inverse_round_trip(grid_default, field_default):
    rng = np.random.default_rng(7)
    x0 = rng.uniform(0.0, 5.0, size=(1000, 2))
    y = field_default.h(x0)
    x = cj.conjugacy_inverse_eval(grid_default, y, tol=1e-9)
    assert distance(field_default.h(x), y, 5.0).max() < 1e-9
    assert distance(x, x0, 5.0).max() < 1e-8


def test_inverse_unperturbed_is_identity(L_default, frame_default):
    fmap = make_map(L_default, frame_default, t=0.0)
    grid = cj.build_grid(fmap, resolution=64, tol=1e-9)
    rng = np.random.default_rng(8)
    ys = rng.uniform(0.0, 5.0, size=(200, 2))
    assert distance(cj.conjugacy_inverse_eval(grid, ys), ys, 5.0).max() < 1e-12


def test_inverse_equivariance(grid_default):
    report = cj.equivariance_probe(grid_default, n=1000, seed=1, tol=1e-9)
    assert report["failures"] == 0
    assert report["max_gap"] < 1e-8


def test_transported_periodic_points(grid_default, map_default):
    for period in (1, 2, 3, 4):
        seeds = cj.transported_periodic_points(grid_default, period)
        assert seeds.shape == periodic_points_linear(map_default.L,
                                                     period).shape
        cur = seeds.copy()
        for _ in range(period):
            cur = map_default.apply_f(cur)
        assert distance(cur, seeds, 5.0).max() < 1e-8


# -- structural probes ---------------------------------------------------------

def test_injectivity_probe(grid_default):
    report = cj.injectivity_probe(grid_default, scale=0.25, n_pairs=20_000,
                                  seed=0)
    assert report["collapses"] == 0
    assert report["min_image_distance"] > 0.2
    assert 0.9 < report["min_ratio"] < 1.0 < report["max_ratio"] < 1.15


def test_injectivity_identity_case(L_default, frame_default):
    fmap = make_map(L_default, frame_default, t=0.0)
    grid = cj.build_grid(fmap, resolution=64, tol=1e-9)
    report = cj.injectivity_probe(grid, scale=0.25, n_pairs=5000, seed=0)
    assert report["min_ratio"] == pytest.approx(1.0, abs=1e-14)
    assert report["max_ratio"] == pytest.approx(1.0, abs=1e-14)


def test_injectivity_collapses_monotone_in_r(L_default, frame_default):
    counts = []
    for r in (0.25, 0.125, 0.0625):
        grid = cj.build_grid(make_map(L_default, frame_default, r=r),
                             resolution=64, tol=1e-9)
        counts.append(cj.injectivity_probe(grid, scale=r, n_pairs=5000,
                                           seed=4)["collapses"])
    assert counts[0] >= counts[1] >= counts[2]
    assert counts[0] == 0


def test_walters_closeness(grid_default):
    report = cj.walters_closeness_report(grid_default)
    # shortest lattice translate in eigenframe sup norm: z = (1, 0) at
    # k * max-component of the golden-ratio eigenvector
    assert report["product_constant"] == pytest.approx(
        2.5 * np.sqrt((5 + np.sqrt(5)) / 10), rel=1e-12)
    assert 0.04 < report["u_sup"] < 0.08
    assert report["ok"]
    assert report["ratio"] < 0.1
