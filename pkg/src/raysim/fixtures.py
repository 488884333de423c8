"""Builders for the shipped example scenes and test fixtures.

Every builder returns a schema dict accepted by :func:`raysim.scene.scene_from_dict`,
so the shipped JSON files are just serialized outputs of these functions.
"""

from __future__ import annotations

import numpy as np


def box_faces(center, size):
    """Six quads of an axis-aligned box, wound arbitrarily (loader re-orients)."""
    cx, cy, cz = center
    sx, sy, sz = (s / 2.0 for s in size)
    x0, x1 = cx - sx, cx + sx
    y0, y1 = cy - sy, cy + sy
    z0, z1 = cz - sz, cz + sz
    return [
        [[x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0]],  # bottom
        [[x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]],  # top
        [[x0, y0, z0], [x1, y0, z0], [x1, y0, z1], [x0, y0, z1]],  # y-
        [[x0, y1, z0], [x1, y1, z0], [x1, y1, z1], [x0, y1, z1]],  # y+
        [[x0, y0, z0], [x0, y1, z0], [x0, y1, z1], [x0, y0, z1]],  # x-
        [[x1, y0, z0], [x1, y1, z0], [x1, y1, z1], [x1, y0, z1]],  # x+
    ]


def screen_faces(corners):
    """Zero-thickness screen: the quad plus its reversed copy (knife edges)."""
    quad = [list(map(float, c)) for c in corners]
    return [quad, quad[::-1]]


def ground_terrain(half=1000.0, z=0.0):
    """Two large triangles forming a square ground plate."""
    return [
        [[-half, -half, z], [half, -half, z], [half, half, z]],
        [[-half, -half, z], [half, half, z], [-half, half, z]],
    ]


DEFAULT_MATERIALS = [
    {"id": "concrete", "chi_r": 0.7, "kappa_r": 2.0, "alpha_R": 2},
    {"id": "ground", "chi_r": 0.5, "kappa_r": 1.0, "alpha_R": 1},
]


def unit_cube_scene():
    return {
        "fc": 2.3e9,
        "P0": 4.0 * np.pi,
        "materials": [{"id": "concrete", "chi_r": 0.7, "kappa_r": 2.0, "alpha_R": 2}],
        "objects": [{"id": "cube", "material": "concrete",
                     "faces": box_faces((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))}],
        "terminals": [],
    }


def empty_scene(fc=2.3e9):
    return {"fc": fc, "P0": 4.0 * np.pi,
            "materials": [{"id": "concrete", "chi_r": 0.7, "kappa_r": 2.0,
                           "alpha_R": 2}],
            "objects": []}


def ground_plane_scene(fc=2.3e9, half=1000.0):
    return {
        "fc": fc,
        "P0": 4.0 * np.pi,
        "materials": DEFAULT_MATERIALS,
        "objects": [],
        "terrain": [{"id": "plate", "material": "ground",
                     "faces": ground_terrain(half)}],
    }


def two_building_canyon():
    """Two boxes forming a street canyon: 12 surfaces, 24 edges, 2 materials."""
    return {
        "fc": 2.3e9,
        "P0": 4.0 * np.pi,
        "materials": [
            {"id": "brick", "chi_r": 0.65, "kappa_r": 2.0, "alpha_R": 2},
            {"id": "glass", "chi_r": 0.8, "kappa_r": 4.0, "alpha_R": 4},
        ],
        "objects": [
            {"id": "north", "material": "brick",
             "faces": box_faces((0.0, 15.0, 10.0), (60.0, 10.0, 20.0))},
            {"id": "south", "material": "glass",
             "faces": box_faces((0.0, -15.0, 10.0), (60.0, 10.0, 20.0))},
        ],
        "terminals": [
            {"id": "bs", "center": [-25.0, 0.0, 8.0],
             "array": {"n_hor": 1, "n_ver": 1, "spacing": 0.0, "pattern": "isotropic"}},
            {"id": "ue", "center": [25.0, 2.0, 1.5],
             "array": {"n_hor": 1, "n_ver": 1, "spacing": 0.0, "pattern": "isotropic"}},
        ],
    }


def knife_edge_scene(edge_z=10.0, half_width=120.0, fc=2.3e9):
    """Zero-thickness screen in the x=0 plane with its top edge at edge_z."""
    corners = [[0.0, -half_width, -50.0], [0.0, half_width, -50.0],
               [0.0, half_width, edge_z], [0.0, -half_width, edge_z]]
    return {
        "fc": fc,
        "P0": 4.0 * np.pi,
        "materials": [{"id": "absorber", "chi_r": 0.0, "kappa_r": 1.0, "alpha_R": 1}],
        "objects": [{"id": "screen", "material": "absorber",
                     "faces": screen_faces(corners)}],
    }


def urban_canyon_scene(fc=2.3e9, ue_speed=1.0):
    """Two perpendicular street canyons: six buildings plus four terrain
    facets, 40 reflecting surfaces in total.

    The UE route runs along the east-west street; the BS sits above the
    rooftops near the crossing. A side alley leaves shadowed pockets that are
    reached only by diffracted and reflected energy.
    """
    buildings = [
        ("b1", (-35.0, 20.0, 12.0), (50.0, 20.0, 24.0)),
        ("b2", (35.0, 20.0, 9.0), (50.0, 20.0, 18.0)),
        ("b3", (-35.0, -20.0, 15.0), (50.0, 20.0, 30.0)),
        ("b4", (35.0, -20.0, 10.0), (50.0, 20.0, 20.0)),
        ("b5", (0.0, 45.0, 11.0), (40.0, 30.0, 22.0)),
        ("b6", (0.0, -45.0, 13.0), (40.0, 30.0, 26.0)),
    ]
    objects = [{"id": name, "material": "concrete",
                "faces": box_faces(center, size)}
               for name, center, size in buildings]
    terrain = [{"id": "ground", "material": "ground",
                "faces": [
                    [[-120.0, -120.0, 0.0], [120.0, -120.0, 0.0], [120.0, 120.0, 0.0]],
                    [[-120.0, -120.0, 0.0], [120.0, 120.0, 0.0], [-120.0, 120.0, 0.0]],
                    [[-120.0, 120.0, 0.0], [120.0, 120.0, 0.0], [120.0, 200.0, 0.0]],
                    [[-120.0, 120.0, 0.0], [120.0, 200.0, 0.0], [-120.0, 200.0, 0.0]],
                ]}]
    return {
        "fc": fc,
        "P0": 4.0 * np.pi,
        "materials": DEFAULT_MATERIALS,
        "objects": objects,
        "terrain": terrain,
        "terminals": [
            {"id": "bs", "center": [2.0, 28.0, 26.0],
             "array": {"n_hor": 1, "n_ver": 1, "spacing": 0.0, "pattern": "isotropic"}},
            {"id": "ue", "center": [-45.0, 0.0, 1.5],
             "array": {"n_hor": 1, "n_ver": 1, "spacing": 0.0, "pattern": "isotropic"},
             "route": [[-45.0, 0.0, 1.5], [45.0, 0.0, 1.5]],
             "speed": ue_speed},
        ],
    }


def two_ray_scene(fc=2.3e9):
    base = ground_plane_scene(fc=fc)
    base["terminals"] = [
        {"id": "tx", "center": [0.0, 0.0, 10.0],
         "array": {"n_hor": 1, "n_ver": 1, "spacing": 0.0, "pattern": "isotropic"}},
        {"id": "rx", "center": [10.0, 0.0, 2.0],
         "array": {"n_hor": 1, "n_ver": 1, "spacing": 0.0, "pattern": "isotropic"}},
    ]
    return base


def moving_reflector_scene(fc=2.3e9, speed=5.0):
    """Static terminals facing a mobile reflecting slab (Doppler fixture)."""
    return {
        "fc": fc,
        "P0": 4.0 * np.pi,
        "materials": DEFAULT_MATERIALS,
        "objects": [{"id": "slab", "material": "concrete",
                     "faces": box_faces((0.0, 20.0, 5.0), (30.0, 2.0, 10.0))}],
        "terminals": [
            {"id": "tx", "center": [-20.0, 0.0, 5.0],
             "array": {"n_hor": 1, "n_ver": 1, "spacing": 0.0, "pattern": "isotropic"}},
            {"id": "rx", "center": [20.0, 0.0, 5.0],
             "array": {"n_hor": 1, "n_ver": 1, "spacing": 0.0, "pattern": "isotropic"}},
        ],
        "mobiles": [{"object": "slab",
                     "route": [[0.0, 20.0, 5.0], [0.0, 120.0, 5.0]],
                     "speed": speed}],
    }


def random_single_reflection_scene(rng):
    """One floating rectangle plus a random terminal pair that sees it."""
    cx = rng.uniform(-5, 5)
    cy = rng.uniform(-5, 5)
    w = rng.uniform(6, 20)
    h = rng.uniform(6, 20)
    z = 0.0
    quad = [[cx - w / 2, cy - h / 2, z], [cx + w / 2, cy - h / 2, z],
            [cx + w / 2, cy + h / 2, z], [cx - w / 2, cy + h / 2, z]]
    yaw = rng.uniform(0, 2 * np.pi)
    pitch = rng.uniform(-0.4, 0.4)
    rot = _rot_z(yaw) @ _rot_x(pitch)
    quad = [list(rot @ np.array(p)) for p in quad]
    tx = rot @ np.array([rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(4, 20)])
    rx = rot @ np.array([rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(4, 20)])
    return {
        "fc": 2.3e9, "P0": 4.0 * np.pi,
        "materials": [{"id": "m", "chi_r": 0.7, "kappa_r": 1.0, "alpha_R": 2}],
        "objects": [{"id": "panel", "material": "m", "faces": screen_faces(quad)}],
    }, list(map(float, tx)), list(map(float, rx))


def random_single_diffraction_scene(rng):
    """A screen separating tx and rx so the LoS is blocked."""
    top = rng.uniform(6, 14)
    half = rng.uniform(20, 60)
    scene = knife_edge_scene(edge_z=top, half_width=half)
    tx = [-rng.uniform(10, 40), rng.uniform(-6, 6), rng.uniform(1, top - 1)]
    rx = [rng.uniform(10, 40), rng.uniform(-6, 6), rng.uniform(1, top - 1)]
    return scene, tx, rx


def random_box_scene(rng, n_boxes):
    """Up to 8 surfaces worth of screens/boxes for BE-vs-exhaustive checks."""
    objects = []
    count = 0
    k = 0
    while count < n_boxes:
        cx, cy = rng.uniform(-20, 20, size=2)
        w, d = rng.uniform(4, 12, size=2)
        yaw = rng.uniform(0, np.pi)
        rot = _rot_z(yaw)
        quad = [[-w / 2, 0, 0], [w / 2, 0, 0], [w / 2, 0, d], [-w / 2, 0, d]]
        quad = [list(rot @ np.array(p) + np.array([cx, cy, 0.0])) for p in quad]
        objects.append({"id": f"s{k}", "material": "m",
                        "faces": screen_faces(quad)})
        count += 2
        k += 1
    return {
        "fc": 2.3e9, "P0": 4.0 * np.pi,
        "materials": [{"id": "m", "chi_r": 0.7, "kappa_r": 1.0, "alpha_R": 2}],
        "objects": objects,
    }


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
