import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from focus_splat.colmap_io import CameraIntrinsics, CameraModel, PosedImage, parse_model
from focus_splat.geometry import (
    Aabb, RoiSpec, clip_polygon_to_rect, in_box_point_ids, point_in_aabb, project, projected_aabb,
    roi_visibility, shoelace_area,
)
from focus_splat.synthetic_scene import SceneRecipe, generate


def test_project_principal_point(pinhole_100, identity_pose):
    assert np.allclose(project(pinhole_100, identity_pose, (0.0, 0.0, 10.0)), (50.0, 50.0))
    assert np.allclose(project(pinhole_100, identity_pose, (1.0, 0.0, 10.0)), (60.0, 50.0))


@pytest.mark.parametrize("z", [0.0, -1.0, 1e-7])
def test_project_behind_near_plane(pinhole_100, identity_pose, z):
    assert project(pinhole_100, identity_pose, (0.0, 0.0, z)) is None


def test_project_with_translation(pinhole_100):
    # Caméra en (0, 0, -5) : t = -R c = (0, 0, 5)
    pose = PosedImage(2, (1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 5.0), 1, "moved.png")
    assert np.allclose(project(pinhole_100, pose, (1.0, 0.0, 5.0)), (60.0, 50.0))


def test_radial_distortion(identity_pose):
    plain = CameraIntrinsics(1, CameraModel.SIMPLE_PINHOLE, 100, 100, (100.0, 50.0, 50.0))
    flat = CameraIntrinsics(1, CameraModel.SIMPLE_RADIAL, 100, 100, (100.0, 50.0, 50.0, 0.0))
    bent = CameraIntrinsics(1, CameraModel.SIMPLE_RADIAL, 100, 100, (100.0, 50.0, 50.0, 0.1))
    p = (1.0, 0.0, 10.0)
    assert np.allclose(project(flat, identity_pose, p), project(plain, identity_pose, p))
    # x = 0.1, r² = 0.01 : u = 100 · 0.1 · 1.001 + 50
    assert project(bent, identity_pose, p)[0] == pytest.approx(60.01)


def test_opencv_without_distortion_matches_pinhole(pinhole_100, identity_pose):
    opencv = CameraIntrinsics(1, CameraModel.OPENCV, 100, 100, (100.0, 100.0, 50.0, 50.0, 0.0, 0.0, 0.0, 0.0))
    p = (0.3, -0.2, 4.0)
    assert np.allclose(project(opencv, identity_pose, p), project(pinhole_100, identity_pose, p))


def test_projected_unit_box(pinhole_100, identity_pose, unit_box_depth_10):
    polygon = projected_aabb(pinhole_100, identity_pose, unit_box_depth_10)

    # Valeurs attendues : la face avant (z = 9.5) donne un carré de demi-côté 100 · 0.5 / 9.5
    half = 50.0 / 9.5
    assert half == pytest.approx(5.263, abs=1e-3)
    assert polygon.area == pytest.approx((2 * half) ** 2, rel=1e-9)
    assert polygon.area == pytest.approx(110.8, abs=0.01)
    assert np.allclose(polygon.vertices.min(axis=0), 50.0 - half)
    assert shoelace_area(polygon.vertices) > 0


def test_box_behind_camera(pinhole_100, identity_pose):
    box = Aabb((-0.5, -0.5, -10.5), (0.5, 0.5, -9.5))
    assert projected_aabb(pinhole_100, identity_pose, box) is None


def test_box_outside_image(pinhole_100, identity_pose):
    box = Aabb((100.0, 100.0, 9.5), (101.0, 101.0, 10.5))
    assert projected_aabb(pinhole_100, identity_pose, box) is None


def test_camera_inside_box(pinhole_100, identity_pose):
    # Arêtes découpées par le plan proche : le polygone couvre toute l'image
    box = Aabb((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
    polygon = projected_aabb(pinhole_100, identity_pose, box)
    assert polygon.area == pytest.approx(100.0 * 100.0)


def test_box_partly_outside_image(pinhole_100, identity_pose):
    # Face avant de u = 50 à 50 + 100 · 6 / 9.5, découpée à u = 100
    box = Aabb((0.0, -0.5, 9.5), (6.0, 0.5, 10.5))
    polygon = projected_aabb(pinhole_100, identity_pose, box)
    height = 100.0 / 9.5
    assert polygon.vertices[:, 0].max() == pytest.approx(100.0)
    assert polygon.area == pytest.approx(50.0 * height, rel=1e-9)


def test_shoelace_orientation():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert shoelace_area(square) == pytest.approx(1.0)
    assert shoelace_area(square[::-1]) == pytest.approx(-1.0)
    assert shoelace_area(square[:2]) == 0.0


def test_clip_polygon_to_rect():
    square = np.array([[-10.0, -10.0], [50.0, -10.0], [50.0, 50.0], [-10.0, 50.0]])
    clipped = clip_polygon_to_rect(square, 100, 100)
    assert shoelace_area(clipped) == pytest.approx(2500.0)
    far = square + 500.0
    assert len(clip_polygon_to_rect(far, 100, 100)) == 0


def test_aabb_rules():
    box = Aabb((0, 0, 0), (1, 1, 1))
    assert point_in_aabb((1.0, 1.0, 1.0), box)
    assert point_in_aabb((0.0, 0.5, 1.0), box)
    assert not point_in_aabb((1.0 + 1e-12, 0.5, 0.5), box)
    assert np.array_equal(box.center, [0.5, 0.5, 0.5])
    assert len(box.corners()) == 8

    touching = Aabb((1, 0, 0), (2, 1, 1))
    apart = Aabb((1.5, 0, 0), (2, 1, 1))
    assert box.intersects(touching)
    assert not box.intersects(apart)


@pytest.mark.parametrize("lo, hi", [((0, 0, 0), (1, 1, 0)), ((1, 0, 0), (0, 1, 1)), ((0, 0), (1, 1))])
def test_aabb_invalid(lo, hi):
    with pytest.raises(ValueError):
        Aabb(lo, hi)


def test_roi_spec_validation():
    box = Aabb((0, 0, 0), (1, 1, 1))
    with pytest.raises(ValueError):
        RoiSpec("mug", box, weights=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        RoiSpec("mug", box, select_count=0)
    with pytest.raises(ValueError):
        RoiSpec("", box)
    assert RoiSpec("mug", box, feature_mode="six").feature_mode.dimension == 6


def test_roi_visibility(fixture_streams):
    model = parse_model(*fixture_streams)
    # Seul le point 7 (0.1, 0.2, 5.0) est dans la boîte
    box = Aabb((0.0, 0.0, 4.5), (1.0, 1.0, 5.5))
    assert in_box_point_ids(model, box).tolist() == [7]
    assert roi_visibility(model, box) == {1: [7], 2: [7]}

    empty = Aabb((10.0, 10.0, 10.0), (11.0, 11.0, 11.0))
    assert roi_visibility(model, empty) == {}


def test_point_in_aabb_matches_componentwise_check():
    box = Aabb((-1.0, 0.0, 2.0), (1.0, 0.5, 3.0))
    rng = np.random.default_rng(17)
    points = rng.uniform(-1.5, 3.5, size=(1000, 3))
    # un tiers des coordonnées posées exactement sur une face
    faces = rng.uniform(size=(1000, 3)) < 1 / 3
    on_max = rng.uniform(size=(1000, 3)) < 0.5
    points[faces] = np.where(on_max, np.asarray(box.max), np.asarray(box.min))[faces]
    for p in points:
        expected = all(lo <= c <= hi for c, lo, hi in zip(p, box.min, box.max))
        assert point_in_aabb(p, box) == expected


def visibility_scene():
    recipe = SceneRecipe(seed=5, n_points_in_roi=2000, n_points_background=500, n_cameras=12,
                         layout="hemisphere", dropout=0.3)
    model, _ = generate(recipe)
    return model, recipe.box


def test_roi_visibility_matches_double_loop():
    model, box = visibility_scene()
    expected = {}
    for iid in sorted(model.images):
        for pid, point in model.points.items():
            inside = all(lo <= c <= hi for c, lo, hi in zip(point.xyz, box.min, box.max))
            if inside and iid in point.image_ids.tolist():
                expected.setdefault(iid, []).append(pid)
    assert roi_visibility(model, box) == {iid: sorted(pids) for iid, pids in expected.items()}


def test_roi_visibility_monotone_when_box_shrinks():
    model, box = visibility_scene()
    previous = roi_visibility(model, box)
    center = box.center
    for factor in (0.75, 0.5, 0.25, 0.1):
        half = box.extent * factor / 2
        current = roi_visibility(model, Aabb(tuple(center - half), tuple(center + half)))
        assert set(current) <= set(previous)
        assert all(set(pids) <= set(previous[iid]) for iid, pids in current.items())
        previous = current


def test_projected_area_invariant_under_rigid_motion(pinhole_100):
    rotation = Rotation.from_euler("xyz", [5.0, -10.0, 3.0], degrees=True)
    x, y, z, w = rotation.as_quat()
    pose = PosedImage(1, (w, x, y, z), (0.2, -0.1, 0.3), 1, "pose.png")
    box = Aabb((0.1, -0.3, 8.0), (0.6, 0.2, 9.0))
    reference = projected_aabb(pinhole_100, pose, box)
    assert reference is not None

    # quart de tour autour de z puis translation : une boîte alignée reste alignée
    motion = Rotation.from_euler("z", 90.0, degrees=True).as_matrix()
    shift = np.array([3.0, -2.0, 1.0])
    corners = box.corners() @ motion.T + shift
    moved_box = Aabb(tuple(corners.min(axis=0)), tuple(corners.max(axis=0)))
    r_moved = pose.rotation_matrix() @ motion.T
    t_moved = np.asarray(pose.tvec) - r_moved @ shift
    x, y, z, w = Rotation.from_matrix(r_moved).as_quat()
    moved_pose = PosedImage(1, (w, x, y, z), tuple(t_moved), 1, "pose.png")

    moved = projected_aabb(pinhole_100, moved_pose, moved_box)
    assert moved.area == pytest.approx(reference.area, rel=1e-6)
