"""Scene model: static geometry, materials, terminals, RIS panels, mobiles.

A Scene is immutable after loading. Time-dependent positions are produced by
:func:`state_at`, which returns an independent :class:`SceneState` snapshot.

Geometry files are JSON with the layout::

    {
      "fc": 2.3e9, "P0": 12.566,
      "materials": [{"id": "concrete", "chi_r": 0.7, "kappa_r": 2.0, "alpha_R": 2}],
      "objects":   [{"id": "bldg", "material": "concrete",
                     "faces": [[[x,y,z], ...], ...]}],
      "terrain":   [{"id": "ground", "material": "soil",
                     "faces": [[[x,y,z],[x,y,z],[x,y,z]], ...]}],
      "terminals": [{"id": "bs", "center": [x,y,z],
                     "array": {"n_hor": 1, "n_ver": 1, "spacing": 0.06,
                               "pattern": "isotropic"},
                     "route": [[x,y,z], ...], "speed": 1.0}],
      "ris":       [{"id": "panel", "center": [x,y,z], "e_x": [..], "e_y": [..],
                     "q_x": 8, "q_y": 8, "d_x": 1.0, "d_y": 1.0, "l_u": 1.0}],
      "mobiles":   [{"object": "car", "route": [[x,y,z], ...], "speed": 5.0}]
    }

All lengths are meters, speeds m/s, fc Hz, P0 watts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as g
from .ris import RisPanel

WEDGE_TOL = 1e-9


class SchemaError(ValueError):
    """Geometry file does not match the scene schema."""


class GeometryError(ValueError):
    """Scene geometry violates an invariant."""


@dataclass(frozen=True)
class Material:
    id: str
    chi_r: float        # reflecting coefficient, in [0, 1]
    kappa_r: float      # polarization coefficient, >= 0
    alpha_r: int        # scattering-lobe exponent, positive integer

    def __post_init__(self):
        if not (0.0 <= self.chi_r <= 1.0):
            raise SchemaError(f"material {self.id}: chi_r must be in [0,1]")
        if self.kappa_r < 0.0:
            raise SchemaError(f"material {self.id}: kappa_r must be >= 0")
        if int(self.alpha_r) != self.alpha_r or self.alpha_r < 1:
            raise SchemaError(f"material {self.id}: alpha_R must be a positive integer")


class Surface:
    """One planar facet of an object (or one terrain facet)."""

    __slots__ = ("id", "object_id", "material_id", "polygon", "is_terrain")

    def __init__(self, id, object_id, material_id, polygon, is_terrain=False):
        self.id = id
        self.object_id = object_id
        self.material_id = material_id
        self.polygon = polygon
        self.is_terrain = is_terrain

    @property
    def normal(self):
        return self.polygon.normal

    def translated(self, offset):
        s = Surface.__new__(Surface)
        s.id = self.id
        s.object_id = self.object_id
        s.material_id = self.material_id
        s.is_terrain = self.is_terrain
        poly = g.Polygon(self.polygon.vertices + offset, self.polygon.normal)
        s.polygon = poly
        return s


class Edge:
    """Diffracting wedge edge between two adjacent surfaces of one object.

    ``n`` is the wedge number: the exterior dihedral angle equals n*pi.
    ``face0_tangent`` points from the edge into face 0 (the o-face used for
    the UTD angle convention); angles rotate from it through the exterior.
    """

    __slots__ = ("id", "object_id", "p0", "p1", "surface_ids", "n",
                 "direction", "face0_tangent", "face0_normal")

    def __init__(self, id, object_id, p0, p1, surface_ids, n,
                 face0_tangent, face0_normal):
        self.id = id
        self.object_id = object_id
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)
        self.surface_ids = tuple(surface_ids)
        self.n = float(n)
        self.direction = g.unit(self.p1 - self.p0)
        self.face0_tangent = np.asarray(face0_tangent, dtype=float)
        self.face0_normal = np.asarray(face0_normal, dtype=float)

    def point(self, s):
        return self.p0 + s * (self.p1 - self.p0)

    @property
    def length(self):
        return g.norm(self.p1 - self.p0)

    def translated(self, offset):
        return Edge(self.id, self.object_id, self.p0 + offset, self.p1 + offset,
                    self.surface_ids, self.n, self.face0_tangent, self.face0_normal)


@dataclass(frozen=True)
class AntennaArray:
    """Uniform planar array: n_hor x n_ver elements at pitch ``spacing``.

    The orientation triad rows are (u_hor, u_ver, u_normal); u_normal is the
    broadside direction. Element n = i*n_ver + j (0-based, i horizontal) sits
    at center + ((i - (n_hor-1)/2) u_hor + (j - (n_ver-1)/2) u_ver) * spacing.
    """

    n_hor: int = 1
    n_ver: int = 1
    spacing: float = 0.0
    pattern: str = "isotropic"              # isotropic | dipole | table
    dipole_axis: tuple = (0.0, 0.0, 1.0)
    orientation: tuple = ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, -1.0, 0.0))

    def __post_init__(self):
        if self.n_hor < 1 or self.n_ver < 1:
            raise SchemaError("array counts must be >= 1")
        u_hor, u_ver, u_n = (np.asarray(r, dtype=float) for r in self.orientation)
        for a, b in ((u_hor, u_ver), (u_hor, u_n), (u_ver, u_n)):
            if abs(np.dot(a, b)) > 1e-9 or not g.is_unit(a, 1e-9):
                raise SchemaError("array orientation triad must be orthonormal")

    @property
    def size(self):
        return self.n_hor * self.n_ver

    @property
    def u_hor(self):
        return np.asarray(self.orientation[0], dtype=float)

    @property
    def u_ver(self):
        return np.asarray(self.orientation[1], dtype=float)

    @property
    def u_normal(self):
        return np.asarray(self.orientation[2], dtype=float)

    def element_offsets(self) -> np.ndarray:
        i = np.arange(self.n_hor) - (self.n_hor - 1) / 2.0
        j = np.arange(self.n_ver) - (self.n_ver - 1) / 2.0
        offs = (i[:, None, None] * self.u_hor + j[None, :, None] * self.u_ver)
        return (offs * self.spacing).reshape(self.size, 3)

    def element_positions(self, center) -> np.ndarray:
        return np.asarray(center, dtype=float) + self.element_offsets()


@dataclass(frozen=True)
class Terminal:
    id: str
    center: tuple
    array: AntennaArray
    route: tuple = ()           # polyline of positions; empty = static
    speed: float = 0.0

    def position(self, t):
        if not self.route:
            return np.asarray(self.center, dtype=float), np.zeros(3)
        return g.polyline_position(np.asarray(self.route, dtype=float), self.speed, t)


@dataclass(frozen=True)
class MobileObject:
    object_id: str
    route: tuple
    speed: float

    def displacement(self, t):
        pts = np.asarray(self.route, dtype=float)
        pos, vel = g.polyline_position(pts, self.speed, t)
        return pos - pts[0], vel


class Scene:
    """Immutable world description (geometry at route start positions)."""

    def __init__(self, surfaces, edges, materials, terminals, ris_panels,
                 mobiles, fc, p0, raw=None):
        self.surfaces = tuple(surfaces)
        self.edges = tuple(edges)
        self.materials = dict(materials)
        self.terminals = {t.id: t for t in terminals}
        self.ris_panels = {p.id: p for p in ris_panels}
        self.mobiles = tuple(mobiles)
        self.fc = float(fc)
        self.p0 = float(p0)
        self.raw = raw
        self._surface_by_id = {s.id: s for s in self.surfaces}
        self._edge_by_id = {e.id: e for e in self.edges}
        for s in self.surfaces:
            if s.material_id not in self.materials:
                raise SchemaError(f"surface {s.id} references unknown material "
                                  f"{s.material_id!r}")
        for m in self.mobiles:
            if not any(s.object_id == m.object_id for s in self.surfaces):
                raise SchemaError(f"mobile references unknown object {m.object_id!r}")

    def surface(self, sid) -> Surface:
        return self._surface_by_id[sid]

    def edge(self, eid) -> Edge:
        return self._edge_by_id[eid]

    def material_of(self, surface_id) -> Material:
        return self.materials[self._surface_by_id[surface_id].material_id]

    @property
    def num_facets(self):
        return len(self.surfaces)


class SceneState:
    """Snapshot of all geometry and terminal positions at one instant."""

    def __init__(self, scene: Scene, t: float):
        self.scene = scene
        self.t = float(t)
        offsets = {}
        self.object_velocity = {}
        for m in scene.mobiles:
            off, vel = m.displacement(t)
            offsets[m.object_id] = off
            self.object_velocity[m.object_id] = vel
        if offsets:
            self.surfaces = tuple(
                s.translated(offsets[s.object_id]) if s.object_id in offsets else s
                for s in scene.surfaces)
            self.edges = tuple(
                e.translated(offsets[e.object_id]) if e.object_id in offsets else e
                for e in scene.edges)
        else:
            self.surfaces = scene.surfaces
            self.edges = scene.edges
        self._surface_by_id = {s.id: s for s in self.surfaces}
        self._edge_by_id = {e.id: e for e in self.edges}
        self._edges_of_object = {}
        for e in self.edges:
            self._edges_of_object.setdefault(e.object_id, []).append(e)
        self.terminal_position = {}
        self.terminal_velocity = {}
        for tid, term in scene.terminals.items():
            pos, vel = term.position(t)
            self.terminal_position[tid] = pos
            self.terminal_velocity[tid] = vel
        self._cache = {}

    def surface(self, sid) -> Surface:
        return self._surface_by_id[sid]

    def edge(self, eid) -> Edge:
        return self._edge_by_id[eid]

    def edges_of_object(self, object_id):
        return self._edges_of_object.get(object_id, [])

    def material_of(self, surface_id) -> Material:
        return self.scene.materials[self._surface_by_id[surface_id].material_id]

    def velocity_of_object(self, object_id):
        return self.object_velocity.get(object_id, np.zeros(3))


def state_at(scene: Scene, t: float) -> SceneState:
    """Scene snapshot at time t (seconds, >= 0); routes clamp at their end."""
    if t < 0.0:
        raise ValueError("t must be >= 0")
    return SceneState(scene, t)


# ---------------------------------------------------------------------------
# loading


def load_scene(path) -> Scene:
    """Parse a geometry file and derive surfaces, wedge edges and invariants."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON: {e}") from e
    return scene_from_dict(raw)


def scene_from_dict(raw: dict) -> Scene:
    for key in ("materials", "objects", "fc", "P0"):
        if key not in raw:
            raise SchemaError(f"missing top-level field {key!r}")
    materials = {}
    for m in raw["materials"]:
        try:
            mat = Material(id=str(m["id"]), chi_r=float(m["chi_r"]),
                           kappa_r=float(m["kappa_r"]), alpha_r=int(m["alpha_R"]))
        except KeyError as e:
            raise SchemaError(f"material entry missing field {e}") from e
        materials[mat.id] = mat

    surfaces = []
    sid = 0
    for obj in raw["objects"]:
        surfaces_obj, sid = _object_surfaces(obj, sid, materials, is_terrain=False)
        surfaces.extend(surfaces_obj)
    for obj in raw.get("terrain", []):
        surfaces_obj, sid = _object_surfaces(obj, sid, materials, is_terrain=True)
        surfaces.extend(surfaces_obj)

    edges = derive_edges(surfaces)

    terminals = []
    for tdef in raw.get("terminals", []):
        adef = tdef.get("array", {})
        orientation = adef.get("orientation")
        kwargs = dict(
            n_hor=int(adef.get("n_hor", 1)),
            n_ver=int(adef.get("n_ver", 1)),
            spacing=float(adef.get("spacing", 0.0)),
            pattern=str(adef.get("pattern", "isotropic")),
            dipole_axis=tuple(adef.get("dipole_axis", (0.0, 0.0, 1.0))),
        )
        if orientation is not None:
            kwargs["orientation"] = tuple(tuple(map(float, r)) for r in orientation)
        array = AntennaArray(**kwargs)
        terminals.append(Terminal(
            id=str(tdef["id"]),
            center=tuple(map(float, tdef["center"])),
            array=array,
            route=tuple(tuple(map(float, p)) for p in tdef.get("route", [])),
            speed=float(tdef.get("speed", 0.0)),
        ))

    panels = []
    for rdef in raw.get("ris", []):
        panels.append(RisPanel(
            id=str(rdef["id"]),
            center=np.asarray(rdef["center"], dtype=float),
            e_x=np.asarray(rdef["e_x"], dtype=float),
            e_y=np.asarray(rdef["e_y"], dtype=float),
            q_x=int(rdef["q_x"]), q_y=int(rdef["q_y"]),
            d_x=float(rdef["d_x"]), d_y=float(rdef["d_y"]),
            l_u=float(rdef["l_u"]),
        ))

    mobiles = []
    for mdef in raw.get("mobiles", []):
        route = tuple(tuple(map(float, p)) for p in mdef["route"])
        if len(route) < 1:
            raise SchemaError("mobile route needs at least one point")
        mobiles.append(MobileObject(object_id=str(mdef["object"]),
                                    route=route, speed=float(mdef["speed"])))

    return Scene(surfaces, edges, materials, terminals, panels, mobiles,
                 fc=float(raw["fc"]), p0=float(raw["P0"]), raw=raw)


def _object_surfaces(obj, sid, materials, is_terrain):
    try:
        oid = str(obj["id"])
        mat = str(obj["material"])
        faces = obj["faces"]
    except KeyError as e:
        raise SchemaError(f"object entry missing field {e}") from e
    if mat not in materials:
        raise SchemaError(f"object {oid}: unknown material {mat!r}")
    polys = []
    for k, face in enumerate(faces):
        verts = np.asarray(face, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 3 or len(verts) < 3:
            raise SchemaError(f"object {oid} face {k}: need a list of [x,y,z] vertices")
        try:
            polys.append(g.Polygon(verts))
        except g.NonPlanarError as e:
            raise GeometryError(f"object {oid} face {k}: non-planar polygon "
                                f"(deviation {e.deviation:.3e} m)") from e
    polys = _orient_outward(polys, oid, is_terrain)
    out = []
    for k, poly in enumerate(polys):
        out.append(Surface(id=sid, object_id=oid, material_id=mat,
                           polygon=poly, is_terrain=is_terrain))
        sid += 1
    return out, sid


def _orient_outward(polys, oid, is_terrain):
    """Flip face normals away from the object's vertex centroid.

    Terrain faces always point up. Flat (zero-volume) objects such as screens
    keep the file winding, which encodes the two exterior sides.
    """
    if is_terrain:
        fixed = []
        for p in polys:
            if p.normal[2] < 0:
                p = g.Polygon(p.vertices[::-1])
            fixed.append(p)
        return fixed
    allv = np.concatenate([p.vertices for p in polys])
    centroid = allv.mean(axis=0)
    heights = [p.plane_height(centroid) for p in polys]
    span = np.ptp(allv @ np.array([1.0, 1.0, 1.0])) + 1.0
    if all(abs(h) < 1e-9 * span for h in heights):
        return polys  # degenerate flat object (screen): trust the winding
    fixed = []
    for p, h in zip(polys, heights):
        if h > 0:  # centroid in front -> normal points inward, flip
            p = g.Polygon(p.vertices[::-1])
        fixed.append(p)
    return fixed


def derive_edges(surfaces):
    """Wedge edges for every adjacent face pair whose dihedral deviates from pi.

    Two faces of the same object are adjacent when they share two vertices.
    The exterior dihedral angle is pi + angle(normal_a, normal_b) = n*pi with
    n in (1, 2]; n = 2 corresponds to a knife edge (coincident face pair).
    """
    by_object = {}
    for s in surfaces:
        by_object.setdefault(s.object_id, []).append(s)
    edges = []
    eid = 0
    for oid, faces in by_object.items():
        seen_pairs = set()
        for ia in range(len(faces)):
            for ib in range(ia + 1, len(faces)):
                a, b = faces[ia], faces[ib]
                shared = _shared_edges(a.polygon, b.polygon)
                cosw = float(np.clip(np.dot(a.normal, b.normal), -1.0, 1.0))
                omega = math.acos(cosw)
                n = 1.0 + omega / math.pi
                if n <= 1.0 + 1e-9:
                    continue  # coplanar pair, no wedge
                for p0, p1 in shared:
                    key = _edge_key(p0, p1)
                    if key in seen_pairs:
                        continue
                    seen_pairs.add(key)
                    tangent = _into_face_tangent(p0, p1, a.polygon)
                    edges.append(Edge(id=eid, object_id=oid, p0=p0, p1=p1,
                                      surface_ids=(a.id, b.id), n=n,
                                      face0_tangent=tangent, face0_normal=a.normal))
                    eid += 1
    return edges


def _edge_key(p0, p1):
    a = tuple(np.round(p0, 9))
    b = tuple(np.round(p1, 9))
    return (a, b) if a <= b else (b, a)


def _shared_edges(pa, pb, tol=1e-9):
    """Shared boundary edges of two polygons: usually one, four for a screen."""
    hits = []
    for va in pa.vertices:
        for vb in pb.vertices:
            if np.linalg.norm(va - vb) <= tol:
                hits.append(va)
                break
    if len(hits) < 2:
        return []
    if len(hits) > 2:
        # coincident face pair (zero-thickness screen): every boundary edge of
        # face a is a knife edge
        verts = pa.vertices
        return [(verts[i].copy(), verts[(i + 1) % len(verts)].copy())
                for i in range(len(verts))]
    return [(hits[0].copy(), hits[1].copy())]


def _into_face_tangent(p0, p1, poly):
    e = g.unit(p1 - p0)
    mid = 0.5 * (p0 + p1)
    t = poly.centroid() - mid
    t = t - np.dot(t, e) * e
    n = np.linalg.norm(t)
    if n < 1e-12:
        t = np.cross(poly.normal, e)
        n = np.linalg.norm(t)
    return t / n


# ---------------------------------------------------------------------------
# serialization


def scene_to_dict(scene: Scene) -> dict:
    if scene.raw is not None:
        return _canonical(scene.raw)
    raise ValueError("scene was not built from a schema dict")


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(dumps_scene(scene))


def dumps_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), sort_keys=True, indent=1)


def _canonical(value):
    if isinstance(value, dict):
        return {k: _canonical(value[k]) for k in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, float):
        return value
    return value
