import numpy as np
import pytest

from anosovlab.regions import RegionAtlas, build_region_atlas, segment_distance
from anosovlab.torus import wrap

from conftest import make_map


@pytest.fixture(scope="module")
def atlas(map_default):
    return build_region_atlas(map_default)


def at_local(atlas, anchor, xi_u, xi_s):
    E = atlas.fmap.eigenframe
    loc = np.column_stack([np.atleast_1d(xi_u), np.atleast_1d(xi_s)])
    return wrap(np.asarray(anchor, float) + loc @ E.T, atlas.fmap.L.k)


def test_segment_distance_basic():
    a, b = np.array([0.0, 0.0]), np.array([2.0, 0.0])
    pts = np.array([[1.0, 0.5], [3.0, 0.0], [4.5, 0.0]])
    d = segment_distance(pts, a, b, 5.0)
    assert abs(d[0] - 0.5) < 1e-12
    assert abs(d[1] - 1.0) < 1e-12
    assert abs(d[2] - 0.5) < 1e-12  # wraps: 4.5 is 0.5 left of the endpoint 0


def test_atlas_requires_frame_provenance(L_default, frame_default):
    from anosovlab.perturbation import BumpProfile, PerturbedMap
    bare = PerturbedMap(L=L_default, center=frame_default.r_point,
                        profile=BumpProfile(r=0.25), t=1.0)
    with pytest.raises(ValueError, match="provenance"):
        build_region_atlas(bare)


def test_atlas_rejects_oversized_rtilde(map_default):
    with pytest.raises(ValueError, match="rtilde"):
        build_region_atlas(map_default, rtilde=0.1)


def test_anchors_are_orbit_of_center(map_default, atlas):
    x = np.asarray(map_default.center, float)
    for i in range(atlas.depth + 1):
        assert np.allclose(atlas.anchors_u[i], x, atol=1e-9)
        x = map_default.apply_f(x)
    y = np.asarray(map_default.center, float)
    for i in range(atlas.depth + 1):
        y = map_default.apply_f_inv(y)
        assert np.allclose(atlas.anchors_s[i], y, atol=1e-9)


def test_center_classifies_to_finest_rectangle(map_default, atlas):
    assert atlas.classify(map_default.center) == "Bbar_0"


def test_forward_orbit_hits_rectangles(map_default, atlas):
    x = np.asarray(map_default.center, float)
    for i in range(atlas.depth + 1):
        assert atlas.classify(x) == f"Bbar_{i}"
        x = map_default.apply_f(x)


def test_backward_orbit_hits_mirror_rectangles(map_default, atlas):
    x = map_default.apply_f_inv(map_default.center)
    for i in range(atlas.depth + 1):
        assert atlas.classify(x) == f"Cbar_{i}"
        x = map_default.apply_f_inv(x)


def test_ball_point_outside_rectangle_is_component_zero(atlas):
    p = at_local(atlas, atlas.fmap.center, 0.2, 0.0)
    assert atlas.classify(p) == "B_0"


def test_component_membership_matches_backward_iteration(map_default, atlas):
    # closed-form membership agrees with literally pulling the point back
    # (ball hit at step i, orbit corridor within the tube)
    rng = np.random.default_rng(23)
    for i in (1, 2, 4):
        lam = map_default.L.lam
        xi_u = rng.uniform(-0.8, 0.8, size=40)
        xi_s = rng.uniform(-1.2, 1.2, size=40) * atlas.r * lam ** -i
        pts = at_local(atlas, atlas.anchors_u[i], xi_u, xi_s)
        claimed = atlas.in_component(pts, i)
        pulled = pts.copy()
        for _ in range(i):
            pulled = map_default.apply_f_inv(pulled)
        truth = atlas.in_ball(pulled) & (np.abs(xi_u) <= atlas.tube_halfwidth)
        assert np.array_equal(claimed, truth)


def test_rectangles_nest_inside_components(atlas):
    # interior sampling only up to i = 4: beyond that the vertical extent
    # rtilde*lam^{-3i} < 1e-14 falls under the float resolution of ambient
    # coordinates, so only the anchor itself is representable inside
    rng = np.random.default_rng(31)
    lam = atlas.fmap.L.lam
    for i in range(5):
        xi_u = rng.uniform(-1, 1, size=30) * atlas.rtilde * lam ** -i
        xi_s = rng.uniform(-1, 1, size=30) * atlas.rtilde * lam ** (-3 * i)
        pts = at_local(atlas, atlas.anchors_u[i], xi_u, xi_s)
        assert atlas.in_rectangle(pts, i).all()
        assert atlas.in_component(pts, i).all()


def test_components_nest_inside_u(atlas):
    rng = np.random.default_rng(37)
    lam = atlas.fmap.L.lam
    for i in range(atlas.depth + 1):
        xi_u = rng.uniform(-1, 1, size=30) * min(atlas.tube_halfwidth,
                                                 atlas.r * lam ** i)
        xi_s = rng.uniform(-1, 1, size=30) * atlas.r * lam ** -i
        pts = at_local(atlas, atlas.anchors_u[i], xi_u, xi_s)
        inside = atlas.in_component(pts, i)
        assert inside.any()
        assert atlas.in_u(pts[inside]).all()
        assert atlas.in_b_infinity(pts[inside]).all()


def test_mirror_components_nest_inside_v(atlas):
    rng = np.random.default_rng(41)
    lam = atlas.fmap.L.lam
    for i in range(atlas.depth + 1):
        xi_u = rng.uniform(-1, 1, size=30) * atlas.r * lam ** -(i + 1)
        xi_s = rng.uniform(-1, 1, size=30) * min(atlas.tube_halfwidth,
                                                 atlas.r * lam ** (i + 1))
        pts = at_local(atlas, atlas.anchors_s[i], xi_u, xi_s)
        inside = atlas.in_mirror_component(pts, i)
        assert inside.any()
        assert atlas.in_v(pts[inside]).all()


def test_segment_interior_classifies_as_u(atlas):
    frame = atlas.fmap.frame
    mid = wrap(np.asarray(frame.p, float)
               + 0.5 * frame.s_signed * atlas.fmap.L.e_s, atlas.fmap.L.k)
    assert atlas.classify(mid) == "U"


def test_v_segment_interior_classifies_as_v(atlas):
    frame = atlas.fmap.frame
    mid = wrap(np.asarray(frame.q, float)
               + 0.5 * atlas.fmap.L.e_u, atlas.fmap.L.k)
    assert atlas.classify(mid) == "V"


def test_far_point_is_outside_u(atlas):
    # clearance 1.69 from both segments, measured on a 400^2 scan
    assert atlas.classify(np.array([4.94, 3.31])) == "outside-U"


def test_u_and_v_are_disjoint_on_grid(atlas):
    g = np.linspace(0, 5, 160, endpoint=False)
    xx, yy = np.meshgrid(g, g)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    both = atlas.in_u(pts) & atlas.in_v(pts)
    assert not both.any()


def test_classify_vocabulary_and_determinism(atlas):
    rng = np.random.default_rng(43)
    pts = rng.uniform(0, 5, size=(300, 2))
    labels = atlas.classify(pts)
    allowed = {"U", "V", "outside-U"}
    for i in range(atlas.depth + 1):
        allowed |= {f"B_{i}", f"Bbar_{i}", f"C_{i}", f"Cbar_{i}"}
    assert set(labels) <= allowed
    assert np.array_equal(labels, atlas.classify(pts))


def test_component_index_validation(atlas):
    with pytest.raises(ValueError, match="depth"):
        atlas.in_component(np.array([0.1, 0.1]), atlas.depth + 1)


def test_unperturbed_map_still_builds_atlas(L_default, frame_default):
    # the atlas is pure frame geometry; it works for any t
    fmap = make_map(L_default, frame_default, t=0.0)
    atlas = build_region_atlas(fmap, depth=3)
    assert atlas.classify(fmap.center) == "Bbar_0"
