import numpy as np
import pytest

from anosovlab.torus import (
    ToralAutomorphism,
    build_heteroclinic_frame,
    distance,
    eigen_data,
    fixed_points,
    nearest_lift,
    periodic_points_linear,
    wrap,
)

CAT = [[2, 1], [1, 1]]
CAT2 = [[5, 3], [3, 2]]  # cat map squared: symmetric, five fixed classes


def test_wrap_canonical_box():
    rng = np.random.default_rng(11)
    pts = rng.uniform(-20, 20, size=(500, 2))
    w = wrap(pts, 5.0)
    assert np.all(w >= 0.0) and np.all(w < 5.0)
    # wrapping is idempotent and lattice-periodic
    assert np.allclose(wrap(w, 5.0), w)
    assert np.allclose(wrap(pts + 5 * np.array([3, -7]), 5.0), w)


def test_nearest_lift_range_and_consistency():
    rng = np.random.default_rng(12)
    d = rng.uniform(-30, 30, size=(400, 2))
    lift = nearest_lift(d, 5.0)
    assert np.all(lift >= -2.5) and np.all(lift < 2.5)
    assert np.allclose(wrap(lift, 5.0), wrap(d, 5.0))


def test_distance_metric_properties():
    rng = np.random.default_rng(13)
    a, b, c = rng.uniform(0, 5, size=(3, 10_000, 2))
    dab = distance(a, b, 5.0)
    assert np.allclose(dab, distance(b, a, 5.0))
    assert np.all(dab <= distance(a, c, 5.0) + distance(c, b, 5.0) + 1e-12)
    # quotient beats the plain Euclidean distance
    assert np.all(dab <= np.linalg.norm(a - b, axis=-1) + 1e-12)
    # max possible distance on the k-torus is k*sqrt(2)/2
    assert np.all(dab <= 5.0 * np.sqrt(2) / 2 + 1e-12)


def test_eigen_data_cat_map_closed_form():
    lam, e_u, e_s = eigen_data(CAT)
    golden = (3 + np.sqrt(5)) / 2
    assert abs(lam - golden) < 1e-14
    # e_u proportional to (1, (sqrt(5)-1)/2)
    direction = np.array([1.0, (np.sqrt(5) - 1) / 2])
    direction /= np.linalg.norm(direction)
    assert np.allclose(e_u, direction, atol=1e-14)
    m = np.array(CAT, float)
    assert np.linalg.norm(m @ e_u - lam * e_u) < 1e-12
    assert np.linalg.norm(m @ e_s - (1 / lam) * e_s * np.sign(e_s @ (m @ e_s))) < 1e-12


def test_eigen_data_rejects_non_hyperbolic():
    with pytest.raises(ValueError, match="hyperbolic"):
        eigen_data([[1, 1], [0, 1]])
    with pytest.raises(ValueError, match="unimodular"):
        eigen_data([[2, 0], [0, 2]])


def test_eigen_data_independent_of_cover():
    L1 = ToralAutomorphism.from_matrix(CAT, k=1)
    L5 = ToralAutomorphism.from_matrix(CAT, k=5)
    assert L1.lam == L5.lam
    assert np.array_equal(L1.e_u, L5.e_u) and np.array_equal(L1.e_s, L5.e_s)


def test_default_matrix_eigendata_frozen():
    # frozen from the quadratic formula: lam = (7 + 3 sqrt(5)) / 2
    L = ToralAutomorphism.from_matrix(CAT2, k=5)
    assert abs(L.lam - (7 + 3 * np.sqrt(5)) / 2) < 1e-13
    assert abs(L.lam - 6.854101966249685) < 1e-12
    assert abs(L.mu_s - 0.14589803375031546) < 1e-15
    assert abs(L.lam * L.mu_s - 1.0) < 1e-12  # det = +1
    assert np.allclose(L.e_u, [0.8506508083520399, 0.5257311121191336], atol=1e-12)
    assert np.allclose(L.e_s, [-0.5257311121191336, 0.8506508083520399], atol=1e-12)
    assert abs(L.e_u @ L.e_s) < 1e-14  # symmetric matrix: orthogonal eigenframe


def test_apply_and_inverse_roundtrip():
    L = ToralAutomorphism.from_matrix(CAT2, k=5)
    rng = np.random.default_rng(14)
    pts = rng.uniform(0, 5, size=(1000, 2))
    assert np.all(distance(L.apply_inv(L.apply(pts)), pts, 5.0) < 1e-12)
    assert np.all(distance(L.apply(L.apply_inv(pts)), pts, 5.0) < 1e-12)


def test_eigenline_scaling_through_fixed_point():
    # L acts on its own eigenlines through a fixed point by exactly lam, 1/lam
    L = ToralAutomorphism.from_matrix(CAT2, k=5)
    rng = np.random.default_rng(15)
    s = rng.uniform(-0.3, 0.3, size=1000)
    on_u = wrap(s[:, None] * L.e_u, 5.0)
    on_s = wrap(s[:, None] * L.e_s, 5.0)
    assert np.all(np.abs(distance(L.apply(on_u), np.zeros(2), 5.0)
                         - L.lam * np.abs(s)) < 1e-10)
    assert np.all(np.abs(distance(L.apply(on_s), np.zeros(2), 5.0)
                         - np.abs(s) / L.lam) < 1e-10)


def test_fixed_points_cat_map_single_class():
    # |det(m - I)| = 1 for the cat map: one fixed class on every cover
    for k in (1, 5):
        L = ToralAutomorphism.from_matrix(CAT, k=k)
        pts = fixed_points(L)
        assert pts.shape == (1, 2)
        assert np.allclose(pts[0], [0.0, 0.0])


def test_fixed_points_default_matrix_frozen():
    # |det(m - I)| = |4*1 - 9| = 5; integer fixed points on the 5-cover
    L = ToralAutomorphism.from_matrix(CAT2, k=5)
    pts = fixed_points(L)
    assert pts.shape == (5, 2)
    got = {(round(x), round(y)) for x, y in pts}
    assert got == {(0, 0), (1, 2), (2, 4), (3, 1), (4, 3)}
    assert np.all(distance(L.apply(pts), pts, 5.0) < 1e-12)


def test_periodic_counts_match_determinant_formula():
    # |det(m^p - I)| = lam^p + lam^-p - 2 for det(m) = +1
    for matrix, k in ((CAT, 1), (CAT, 3), (CAT2, 5)):
        L = ToralAutomorphism.from_matrix(matrix, k=k)
        for p in range(1, 6):
            expected = round(L.lam ** p + L.lam ** (-p) - 2)
            pts = periodic_points_linear(L, p)
            assert pts.shape[0] == expected, (matrix, k, p)
            step = pts
            for _ in range(p):
                step = L.apply(step)
            assert np.all(distance(step, pts, float(k)) < 1e-9)


def test_periodic_counts_default_matrix_frozen():
    L = ToralAutomorphism.from_matrix(CAT2, k=5)
    counts = [periodic_points_linear(L, p).shape[0] for p in range(1, 7)]
    assert counts == [5, 45, 320, 2205, 15125, 103680]


def test_periodic_points_all_distinct():
    L = ToralAutomorphism.from_matrix(CAT2, k=5)
    pts = periodic_points_linear(L, 3)
    d = distance(pts[:, None, :], pts[None, :, :], 5.0)
    d[np.arange(len(pts)), np.arange(len(pts))] = 1.0
    assert d.min() > 1e-6


def test_periodic_cap_refuses_with_estimate():
    L = ToralAutomorphism.from_matrix(CAT2, k=5)
    with pytest.raises(ValueError, match="cap"):
        periodic_points_linear(L, 11)


def test_cat_map_period_two_count():
    # |det(m^2 - I)| = 5 for the cat map, on the unit cover
    L = ToralAutomorphism.from_matrix(CAT, k=1)
    pts = periodic_points_linear(L, 2)
    assert pts.shape[0] == 5


def test_frame_rejects_equal_or_unfixed_points():
    L = ToralAutomorphism.from_matrix(CAT2, k=5)
    with pytest.raises(ValueError, match="distinct"):
        build_heteroclinic_frame(L, (0, 0), (0, 0))
    with pytest.raises(ValueError, match="fixed point"):
        build_heteroclinic_frame(L, (0, 0), (1, 1))


def test_frame_default_geometry_frozen():
    L = ToralAutomorphism.from_matrix(CAT2, k=5)
    frame = build_heteroclinic_frame(L, (0, 0), (1, 2), search_radius=7.5)
    assert abs(frame.dist_pr - 6.4328816257762815) < 1e-10
    assert abs(frame.dist_qr - 6.6043950509300915) < 1e-10
    assert np.allclose(frame.r_point, [1.6180339887498947, 0.47213595499957956],
                       atol=1e-10)
    # spec invariant: near-equal leaf distances
    assert abs(frame.dist_pr - frame.dist_qr) / frame.dist_pr < 0.05


def test_frame_line_membership_residuals():
    L = ToralAutomorphism.from_matrix(CAT2, k=5)
    frame = build_heteroclinic_frame(L, (0, 0), (1, 2), search_radius=7.5)
    r = frame.r_point
    on_stable = wrap(frame.p + frame.s_signed * L.e_s, 5.0)
    on_unstable = wrap(frame.q + frame.t_signed * L.e_u, 5.0)
    assert distance(r, on_stable, 5.0) < 1e-10
    assert distance(r, on_unstable, 5.0) < 1e-10


def test_frame_orbit_clearance():
    # the orbit of R stays far from R itself: the bump at R never touches it
    L = ToralAutomorphism.from_matrix(CAT2, k=5)
    frame = build_heteroclinic_frame(L, (0, 0), (1, 2), search_radius=7.5)
    x = frame.r_point.copy()
    fwd = []
    for _ in range(8):
        x = L.apply(x)
        fwd.append(float(distance(x, frame.r_point, 5.0)))
    x = frame.r_point.copy()
    bwd = []
    for _ in range(8):
        x = L.apply_inv(x)
        bwd.append(float(distance(x, frame.r_point, 5.0)))
    assert min(fwd + bwd) > 1.6  # frozen: 1.6246 at depth 8
