import struct

import numpy as np
import pytest

from focus_splat.colmap_io import CameraIntrinsics, CameraModel, PosedImage
from focus_splat.geometry import Aabb
from focus_splat.synthetic_scene import SceneRecipe


def pack_cameras(cameras):
    """cameras : liste de (id, modèle, largeur, hauteur, params)"""
    out = struct.pack("<Q", len(cameras))
    for cid, model_id, w, h, params in cameras:
        out += struct.pack("<iiQQ", cid, model_id, w, h) + struct.pack(f"<{len(params)}d", *params)
    return out


def pack_images(images):
    """images : liste de (id, q, t, caméra, nom, [(u, v, point3d_id)])"""
    out = struct.pack("<Q", len(images))
    for iid, q, t, cid, name, obs in images:
        out += struct.pack("<i4d3di", iid, *q, *t, cid) + name.encode() + b"\x00"
        out += struct.pack("<Q", len(obs))
        for u, v, pid in obs:
            out += struct.pack("<ddq", u, v, pid)
    return out


def pack_points(points):
    """points : liste de (id, xyz, rgb, erreur, [(image_id, indice)])"""
    out = struct.pack("<Q", len(points))
    for pid, xyz, rgb, err, track in points:
        out += struct.pack("<q3d3Bd", pid, *xyz, *rgb, err) + struct.pack("<Q", len(track))
        for image_id, idx in track:
            out += struct.pack("<ii", image_id, idx)
    return out


# Modèle de référence : 1 caméra PINHOLE, 2 images de 3 observations,
# 2 points dont les pistes ont 2 entrées
FIXTURE_CAMERAS = [(1, 1, 100, 100, (100.0, 100.0, 50.0, 50.0))]
FIXTURE_IMAGES = [
    (1, (1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 1, "a.png",
     [(10.5, 20.25, 7), (30.0, 40.0, -1), (50.0, 60.0, 9)]),
    (2, (1.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0), 1, "b.png",
     [(11.0, 21.0, -1), (31.0, 41.0, 9), (51.0, 61.0, 7)]),
]
FIXTURE_POINTS = [
    (7, (0.1, 0.2, 5.0), (255, 0, 10), 0.5, [(1, 0), (2, 2)]),
    (9, (-0.3, 0.0, 4.0), (1, 2, 3), 0.25, [(1, 2), (2, 1)]),
]


@pytest.fixture
def fixture_streams():
    return pack_cameras(FIXTURE_CAMERAS), pack_images(FIXTURE_IMAGES), pack_points(FIXTURE_POINTS)


@pytest.fixture
def pinhole_100():
    return CameraIntrinsics(1, CameraModel.PINHOLE, 100, 100, (100.0, 100.0, 50.0, 50.0))


@pytest.fixture
def identity_pose():
    return PosedImage(1, (1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 1, "identity.png")


@pytest.fixture
def unit_box_depth_10():
    return Aabb((-0.5, -0.5, 9.5), (0.5, 0.5, 10.5))


@pytest.fixture
def ring_recipe():
    return SceneRecipe(seed=3, n_points_in_roi=100, n_cameras=8, layout="ring", visibility_angle=90.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
