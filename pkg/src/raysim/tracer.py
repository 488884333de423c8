"""Inverse ray tracing: image-method reflections plus bypassing-on-edge
diffraction.

The search runs in two phases. Phase one enumerates specular reflection
sequences up to the configured depth with the image method, pruning sequences
whose consecutive surfaces do not face each other or whose running transmitter
image falls behind the candidate surface. Phase two takes every candidate
whose segments are blocked and tries to bypass each blocking object over its
wedge edges; diffraction points are located by cyclic coordinate descent over
the edge parameters (Newton steps with a golden-section fallback), which
enforces Fermat stationarity and hence the Keller cone. Bypassed paths are
re-checked for blockage and may recurse until the diffraction budget is
exhausted, so mixed reflection/diffraction orders arise naturally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as g
from .scene import SceneState

EPS_BLOCK = 1e-6      # segment-to-surface clearance below which we call it blocked
EPS_FRONT = 1e-12
CONVERGE_M = 1e-9     # coordinate-descent stop: max IP displacement in meters
MAX_SOLVER_ITERS = 200
DEDUP_LENGTH_TOL = 1e-9


@dataclass(frozen=True)
class IP:
    """Important point: one interaction along a trajectory."""
    position: np.ndarray
    kind: str                     # reflection | diffraction | scatter-reflection |
                                  # scatter-diffraction | ris-cell
    object_id: str
    facet_id: int                 # surface id or edge id
    param: float = float("nan")   # edge parameter for diffraction points
    specular_out: np.ndarray = None  # reference direction for scatter IPs


@dataclass(frozen=True)
class Trajectory:
    """One candidate propagation path between a Tx and an Rx antenna."""
    interactions: tuple           # (("R", surface_id) | ("D", edge_id), ...)
    ips: tuple
    tx: np.ndarray
    rx: np.ndarray
    tx_antenna: int = 0
    rx_antenna: int = 0
    emission_time: float = 0.0

    def points(self):
        return [self.tx] + [ip.position for ip in self.ips] + [self.rx]

    def segments(self):
        pts = self.points()
        return [(pts[i], pts[i + 1]) for i in range(len(pts) - 1)]

    @property
    def length(self):
        pts = self.points()
        return float(sum(np.linalg.norm(pts[i + 1] - pts[i]) for i in range(len(pts) - 1)))

    @property
    def num_reflections(self):
        return sum(1 for k, _ in self.interactions if k == "R")

    @property
    def num_diffractions(self):
        return sum(1 for k, _ in self.interactions if k == "D")

    def kind_string(self):
        return "".join(k for k, _ in self.interactions) or "LoS"

    def object_sequence(self, state: SceneState):
        out = []
        for kind, fid in self.interactions:
            if kind == "R":
                out.append(state.surface(fid).object_id)
            else:
                out.append(state.edge(fid).object_id)
        return tuple(out)


@dataclass
class TraceDiagnostics:
    paths_per_depth: dict = field(default_factory=dict)
    blocked_candidates: int = 0
    discarded_solver: int = 0
    discarded_geometry: int = 0
    discarded_blocked: int = 0
    solver_iterations: int = 0

    def count_path(self, traj: Trajectory):
        key = (traj.num_reflections, traj.num_diffractions)
        self.paths_per_depth[key] = self.paths_per_depth.get(key, 0) + 1

    def as_dict(self):
        return {
            "paths_per_depth": {f"R{r}D{d}": v
                                for (r, d), v in sorted(self.paths_per_depth.items())},
            "blocked_candidates": self.blocked_candidates,
            "discarded_solver": self.discarded_solver,
            "discarded_geometry": self.discarded_geometry,
            "discarded_blocked": self.discarded_blocked,
            "solver_iterations": self.solver_iterations,
        }


# ---------------------------------------------------------------------------
# blockage


def _blockage_cache(state: SceneState):
    cache = state._cache.get("blockage")
    if cache is not None:
        return cache
    surfs = state.surfaces
    n = len(surfs)
    normals = np.zeros((n, 3))
    origins = np.zeros((n, 3))
    amin = np.zeros((n, 3))
    amax = np.zeros((n, 3))
    for i, s in enumerate(surfs):
        normals[i] = s.polygon.normal
        origins[i] = s.polygon.origin
        amin[i] = s.polygon.aabb_min
        amax[i] = s.polygon.aabb_max
    cache = {"normals": normals, "origins": origins, "amin": amin, "amax": amax,
             "surfaces": surfs, "ids": np.array([s.id for s in surfs])}
    state._cache["blockage"] = cache
    return cache


def blocking_surfaces(state: SceneState, a, b, exclude_facets=frozenset(),
                      eps_block=EPS_BLOCK):
    """Surfaces whose polygon comes within eps_block of the open segment a->b."""
    bk = _blockage_cache(state)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lo = np.minimum(a, b) - eps_block
    hi = np.maximum(a, b) + eps_block
    box = np.all((bk["amin"] <= hi) & (bk["amax"] >= lo), axis=1)
    if not np.any(box):
        return []
    idx = np.nonzero(box)[0]
    ha = np.einsum("ij,ij->i", a - bk["origins"][idx], bk["normals"][idx])
    hb = np.einsum("ij,ij->i", b - bk["origins"][idx], bk["normals"][idx])
    no_cross = ha * hb >= 0.0
    clear = no_cross & (np.minimum(np.abs(ha), np.abs(hb)) > eps_block)
    seglen = float(np.linalg.norm(b - a))
    shrink = 1e-9 * seglen
    d_unit = (b - a) / seglen
    hits = []
    for k, i in enumerate(idx):
        s = bk["surfaces"][i]
        if s.id in exclude_facets:
            continue
        if clear[k]:
            continue
        if not no_cross[k]:
            t = ha[k] / (ha[k] - hb[k])
            if shrink / seglen < t < 1.0 - shrink / seglen:
                hit = a + t * (b - a)
                poly = s.polygon
                q = poly.to_local2d(hit)
                if poly.contains2d(q, tol=-eps_block):
                    hits.append(s)
                    continue
                if poly._convex:
                    # separating half-plane margin: within the +-eps slab the
                    # segment wanders at most eps/slope in-plane, so a margin
                    # beyond eps(1 + 1/slope) guarantees clearance
                    scale = np.linalg.norm(poly.edge_normals2d, axis=1)
                    margin = -np.min((poly.edge_normals2d @ q
                                      - poly.edge_offsets) / scale)
                    slope = abs(float(np.dot(d_unit, poly.normal)))
                    if margin > eps_block * (1.0 + 1.0 / max(slope, 1e-6)):
                        continue
        if g.segment_polygon_distance(a, b, s.polygon, shrink=shrink) < eps_block:
            hits.append(s)
    return hits


def find_blockers(state: SceneState, a, b, exclude_facets=frozenset(),
                  eps_block=EPS_BLOCK):
    """Object ids blocking the open segment a->b, sorted for determinism."""
    if np.allclose(a, b):
        raise ValueError("degenerate segment")
    hits = blocking_surfaces(state, a, b, exclude_facets, eps_block)
    return sorted({s.object_id for s in hits})


def _segment_excludes(traj_interactions, state):
    """Per-segment facet-exclusion sets (IP owners do not block their segments)."""
    owner = []
    for kind, fid in traj_interactions:
        if kind == "R":
            owner.append(frozenset({fid}))
        else:
            owner.append(frozenset(state.edge(fid).surface_ids))
    excludes = []
    nseg = len(traj_interactions) + 1
    for i in range(nseg):
        ex = set()
        if i > 0:
            ex |= owner[i - 1]
        if i < len(owner):
            ex |= owner[i]
        excludes.append(frozenset(ex))
    return excludes


def blocked_segments(state: SceneState, traj: Trajectory, eps_block=EPS_BLOCK):
    """(segment_index, blocker object ids) for each blocked segment."""
    excludes = _segment_excludes(traj.interactions, state)
    out = []
    for i, (p, q) in enumerate(traj.segments()):
        objs = find_blockers(state, p, q, excludes[i], eps_block)
        if objs:
            out.append((i, objs))
    return out


# ---------------------------------------------------------------------------
# specular search


def _faces_matrix(state: SceneState):
    mat = state._cache.get("faces_matrix")
    if mat is not None:
        return mat
    surfs = state.surfaces
    n = len(surfs)
    front = np.zeros((n, n), dtype=bool)
    for i, si in enumerate(surfs):
        ni = si.polygon.normal
        oi = si.polygon.origin
        for j, sj in enumerate(surfs):
            if i == j:
                continue
            h = (sj.polygon.vertices - oi) @ ni
            front[i, j] = bool(np.max(h) > EPS_FRONT)
    mat = front & front.T
    state._cache["faces_matrix"] = mat
    return mat


def _recover_reflection_ips(images, surfaces, end_point):
    """Walk the image chain backward and intersect each mirror plane.

    Returns the IP positions in propagation order, or None when a segment
    misses its surface polygon or approaches from behind.
    """
    ips = [None] * len(surfaces)
    target = np.asarray(end_point, dtype=float)
    for j in range(len(surfaces) - 1, -1, -1):
        s = surfaces[j]
        t = g.ray_plane_param(images[j], target, s.polygon.origin, s.polygon.normal)
        if t is None or not (1e-12 < t < 1.0 - 1e-12):
            return None
        hit = images[j] + t * (target - images[j])
        if not s.polygon.contains(hit, tol=1e-9):
            return None
        if np.dot(target - hit, s.polygon.normal) <= 0.0:
            return None
        ips[j] = hit
        target = hit
    return ips


def trace_specular(state: SceneState, tx, rx, max_reflections,
                   blocked_sink=None, diagnostics=None, eps_block=EPS_BLOCK):
    """All unblocked reflection paths up to the given depth (LoS included).

    When ``blocked_sink`` is a list, geometrically valid but blocked candidates
    are appended to it as (Trajectory, blocker object ids) pairs for the
    diffraction bypass stage.
    """
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if np.allclose(tx, rx):
        raise ValueError("tx and rx must differ")
    diagnostics = diagnostics if diagnostics is not None else TraceDiagnostics()
    results = []

    def consider(interactions, ips):
        traj = Trajectory(interactions=interactions,
                          ips=tuple(ips), tx=tx, rx=rx)
        blocked = blocked_segments(state, traj, eps_block)
        if not blocked:
            results.append(traj)
            diagnostics.count_path(traj)
        else:
            diagnostics.blocked_candidates += 1
            if blocked_sink is not None:
                all_objs = sorted({o for _, objs in blocked for o in objs})
                blocked_sink.append((traj, all_objs))

    consider((), ())

    if max_reflections < 1:
        return results

    faces = _faces_matrix(state)
    surfs = state.surfaces
    index_of = {s.id: i for i, s in enumerate(surfs)}

    def dfs(seq, images):
        depth = len(seq)
        for s in surfs:
            i = index_of[s.id]
            if seq:
                if s.id == seq[-1].id:
                    continue
                if not faces[index_of[seq[-1].id], i]:
                    continue
            src = images[-1]
            if s.polygon.plane_height(src) <= EPS_FRONT:
                continue
            img = g.mirror_point(src, s.polygon.origin, s.polygon.normal)
            chain = seq + [s]
            ips = _recover_reflection_ips(images[1:] + [img], chain, rx)
            if ips is not None:
                interactions = tuple(("R", c.id) for c in chain)
                ip_objs = tuple(IP(position=p, kind="reflection",
                                   object_id=c.object_id, facet_id=c.id)
                                for p, c in zip(ips, chain))
                consider(interactions, ip_objs)
            else:
                diagnostics.discarded_geometry += 1
            if depth + 1 < max_reflections:
                dfs(chain, images + [img])

    dfs([], [tx])
    return results


# ---------------------------------------------------------------------------
# mixed reflection/diffraction sequence solving


def _unfold(point, surfaces):
    p = np.asarray(point, dtype=float)
    for s in surfaces:
        p = g.mirror_point(p, s.polygon.origin, s.polygon.normal)
    return p


def _golden_min(f, a, b, tol=1e-12, max_iter=200):
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _edge_1d_min(edge, m_left, m_right, s0):
    """Minimize |e(s)-m_left| + |e(s)-m_right| over s in [0,1].

    Newton on the derivative with a golden-section fallback; the objective is
    convex along the edge, so the interior stationary point is unique.
    """
    p0, w = edge.p0, edge.p1 - edge.p0
    ww = float(np.dot(w, w))

    def dists(s):
        e = p0 + s * w
        v1 = e - m_left
        v2 = e - m_right
        return e, v1, v2, np.linalg.norm(v1), np.linalg.norm(v2)

    s = min(1.0, max(0.0, s0))
    for _ in range(60):
        e, v1, v2, r1, r2 = dists(s)
        if r1 < 1e-12 or r2 < 1e-12:
            break
        gp = float(np.dot(w, v1) / r1 + np.dot(w, v2) / r2)
        gpp = (ww - (np.dot(w, v1) / r1) ** 2) / r1 + (ww - (np.dot(w, v2) / r2) ** 2) / r2
        if gpp <= 1e-300:
            break
        step = gp / gpp
        s_new = s - step
        if not (0.0 <= s_new <= 1.0):
            s_new = min(1.0, max(0.0, s_new))
        if abs(s_new - s) < 1e-15:
            s = s_new
            break
        s = s_new
    else:
        s = None
    if s is None or not (0.0 <= s <= 1.0):
        s = _golden_min(lambda t: dists(t)[3] + dists(t)[4], 0.0, 1.0)
    # polish endpoints: golden fallback when Newton parked on a boundary
    if s in (0.0, 1.0):
        s = _golden_min(lambda t: dists(t)[3] + dists(t)[4], 0.0, 1.0)
    return s


def solve_interactions(state: SceneState, interactions, tx, rx, s_init=None,
                       diagnostics=None):
    """Geometry of a mixed reflection/diffraction interaction sequence.

    Returns (Trajectory, converged) or (None, reason). Reflection points come
    from the image method between consecutive anchors; diffraction points come
    from cyclic coordinate descent over the edge parameters.
    """
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    diag = diagnostics if diagnostics is not None else TraceDiagnostics()

    d_slots = [i for i, (k, _) in enumerate(interactions) if k == "D"]
    edges = [state.edge(fid) for i, (k, fid) in enumerate(interactions) if k == "D"]

    # runs of reflection surfaces between anchors (tx, edge points..., rx)
    runs = []
    current = []
    for k, fid in interactions:
        if k == "R":
            current.append(state.surface(fid))
        else:
            runs.append(current)
            current = []
    runs.append(current)

    if edges:
        if s_init is None:
            s = [0.5] * len(edges)
        else:
            s = list(s_init)
        converged = False
        iters = 0
        for it in range(MAX_SOLVER_ITERS):
            iters += 1
            max_move = 0.0
            anchor_pts = [tx] + [e.point(si) for e, si in zip(edges, s)] + [rx]
            for j, e in enumerate(edges):
                m_left = _unfold(anchor_pts[j], runs[j])
                m_right = _unfold(anchor_pts[j + 2], list(reversed(runs[j + 1])))
                s_new = _edge_1d_min(e, m_left, m_right, s[j])
                max_move = max(max_move, abs(s_new - s[j]) * e.length)
                s[j] = s_new
                anchor_pts[j + 1] = e.point(s_new)
            if max_move < CONVERGE_M:
                converged = True
                break
        diag.solver_iterations += iters
        if not converged:
            diag.discarded_solver += 1
            return None, "solver"
        for sj in s:
            if not (1e-9 < sj < 1.0 - 1e-9):
                diag.discarded_geometry += 1
                return None, "edge-endpoint"
    else:
        s = []

    # recover reflection IPs run by run
    anchor_pts = [tx] + [e.point(si) for e, si in zip(edges, s)] + [rx]
    ips_by_slot = {}
    slot = 0
    for r, run in enumerate(runs):
        if run:
            a = anchor_pts[r]
            b = anchor_pts[r + 1]
            images = []
            img = a
            for surf in run:
                img = g.mirror_point(img, surf.polygon.origin, surf.polygon.normal)
                images.append(img)
            if np.dot(a - run[0].polygon.origin, run[0].polygon.normal) <= 0:
                diag.discarded_geometry += 1
                return None, "behind-surface"
            ips = _recover_reflection_ips(images, run, b)
            if ips is None:
                diag.discarded_geometry += 1
                return None, "reflection-invalid"
            for surf, p in zip(run, ips):
                ips_by_slot[slot] = IP(position=p, kind="reflection",
                                       object_id=surf.object_id, facet_id=surf.id)
                slot += 1
        if r < len(edges):
            e = edges[r]
            ips_by_slot[slot] = IP(position=e.point(s[r]), kind="diffraction",
                                   object_id=e.object_id, facet_id=e.id,
                                   param=s[r])
            slot += 1

    ips = tuple(ips_by_slot[i] for i in range(len(interactions)))
    traj = Trajectory(interactions=tuple(interactions), ips=ips, tx=tx, rx=rx)
    for (p, q) in traj.segments():
        if np.linalg.norm(q - p) < 1e-12:
            diag.discarded_geometry += 1
            return None, "degenerate-segment"
    return traj, "ok"


def bypass_diffraction(state: SceneState, blocked: Trajectory, blockers,
                       max_diffractions, diagnostics=None, eps_block=EPS_BLOCK):
    """Diffraction bypass paths around the blocking objects of a blocked path.

    For every blocked segment, every wedge edge of every blocking object is
    tried as an inserted diffraction point; geometrically valid results are
    re-checked for blockage and recursively bypassed while the diffraction
    budget allows. Only valid, unblocked trajectories are returned.
    """
    if max_diffractions < 1:
        return []
    diag = diagnostics if diagnostics is not None else TraceDiagnostics()
    out = []
    seen = set()

    def expand(traj: Trajectory):
        segs = blocked_segments(state, traj, eps_block)
        if not segs:
            return
        for seg_index, objs in segs:
            for obj in objs:
                for edge in state.edges_of_object(obj):
                    inter = list(traj.interactions)
                    inter.insert(seg_index, ("D", edge.id))
                    key = tuple(inter)
                    if key in seen:
                        continue
                    seen.add(key)
                    if sum(1 for k, _ in inter if k == "D") > max_diffractions:
                        continue
                    s_init = _insertion_param(edge, traj, seg_index)
                    s_full = _merge_params(inter, traj, s_init)
                    cand, status = solve_interactions(state, inter, traj.tx,
                                                      traj.rx, s_full, diag)
                    if cand is None:
                        continue
                    still = blocked_segments(state, cand, eps_block)
                    if not still:
                        out.append(cand)
                        diag.count_path(cand)
                    else:
                        diag.blocked_candidates += 1
                        expand(cand)

    expand(blocked)
    return out


def _insertion_param(edge, traj, seg_index):
    pts = traj.points()
    a, b = pts[seg_index], pts[seg_index + 1]
    # parameter of the edge point closest to the blocked segment
    best_s, best_d = 0.5, np.inf
    for s in np.linspace(0.0, 1.0, 17):
        p = edge.point(s)
        d = _point_segment_distance(p, a, b)
        if d < best_d:
            best_d, best_s = d, s
    return min(0.95, max(0.05, best_s))


def _merge_params(interactions, traj, s_new_value):
    """Initial edge parameters for a sequence derived from traj by insertion."""
    old_params = [ip.param for ip in traj.ips if ip.kind == "diffraction"]
    params = []
    old_keys = [key for key in traj.interactions if key[0] == "D"]
    new_keys = [key for key in interactions if key[0] == "D"]
    old_map = {}
    for key, par in zip(old_keys, old_params):
        old_map.setdefault(key, []).append(par)
    for key in new_keys:
        if old_map.get(key):
            params.append(old_map[key].pop(0))
        else:
            params.append(s_new_value)
    return params


def _point_segment_distance(p, a, b):
    ab = b - a
    t = float(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-300))
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(a + t * ab - p))


# ---------------------------------------------------------------------------
# top-level search


def trace(state: SceneState, tx, rx, max_reflections=3, max_diffractions=2,
          diagnostics=None, eps_block=EPS_BLOCK):
    """Full BE search: specular paths plus diffraction bypasses, deduplicated
    and deterministically ordered."""
    diag = diagnostics if diagnostics is not None else TraceDiagnostics()
    blocked = []
    paths = trace_specular(state, tx, rx, max_reflections,
                           blocked_sink=blocked, diagnostics=diag,
                           eps_block=eps_block)
    for traj, objs in blocked:
        paths.extend(bypass_diffraction(state, traj, objs, max_diffractions,
                                        diag, eps_block))
    return dedup_paths(paths, state), diag


def dedup_paths(paths, state: SceneState):
    """Drop coincident duplicates: same object sequence, same length within
    tolerance and the same IP positions (duplicates arise from coplanar or
    coincident facets). Keeps the smallest facet-id sequence. Symmetric paths
    with distinct geometry survive."""
    best = {}
    for p in paths:
        key = (tuple(k for k, _ in p.interactions),
               p.object_sequence(state),
               round(p.length / DEDUP_LENGTH_TOL),
               tuple(tuple(np.round(ip.position, 7)) for ip in p.ips))
        facets = tuple(fid for _, fid in p.interactions)
        if key not in best or facets < tuple(f for _, f in best[key].interactions):
            best[key] = p
    out = list(best.values())
    out.sort(key=lambda p: (len(p.interactions), p.kind_string(),
                            p.object_sequence(state), p.length,
                            tuple(f for _, f in p.interactions)))
    return out


def resolve_interactions(state: SceneState, interactions, tx, rx,
                         s_init=None, eps_block=EPS_BLOCK, diagnostics=None):
    """Re-solve a known interaction sequence for new endpoint positions.

    Used for per-antenna-pair recalibration (nearby antennas share candidate
    sequences) and for sweeping emission times. Returns None when the sequence
    is no longer geometrically valid or is blocked.
    """
    traj, status = solve_interactions(state, interactions, tx, rx, s_init,
                                      diagnostics)
    if traj is None:
        return None
    if blocked_segments(state, traj, eps_block):
        return None
    return traj


# ---------------------------------------------------------------------------
# validation helpers


def mirror_law_residual(traj: Trajectory, state: SceneState):
    """Max angle error and coplanarity defect over all reflection IPs."""
    pts = traj.points()
    worst_angle = 0.0
    worst_coplanar = 0.0
    for i, ip in enumerate(traj.ips):
        if ip.kind not in ("reflection", "scatter-reflection"):
            continue
        n = state.surface(ip.facet_id).polygon.normal
        d_in = g.unit(pts[i + 1] - pts[i])
        d_out = g.unit(pts[i + 2] - pts[i + 1])
        worst_angle = max(worst_angle,
                          abs(math.acos(np.clip(-np.dot(d_in, n), -1, 1))
                              - math.acos(np.clip(np.dot(d_out, n), -1, 1))))
        worst_coplanar = max(worst_coplanar, abs(float(np.dot(np.cross(d_in, d_out), n))))
    return worst_angle, worst_coplanar


def keller_residual(traj: Trajectory, state: SceneState):
    """Max |incidence - departure| edge angle over all diffraction IPs (rad)."""
    pts = traj.points()
    worst = 0.0
    for i, ip in enumerate(traj.ips):
        if ip.kind not in ("diffraction", "scatter-diffraction"):
            continue
        e = state.edge(ip.facet_id).direction
        d_in = g.unit(pts[i + 1] - pts[i])
        d_out = g.unit(pts[i + 2] - pts[i + 1])
        worst = max(worst, abs(math.acos(np.clip(np.dot(d_in, e), -1, 1))
                               - math.acos(np.clip(np.dot(d_out, e), -1, 1))))
    return worst


def fermat_perturbation_gain(traj: Trajectory, state: SceneState, delta=1e-4):
    """Largest length decrease achievable by perturbing any single IP by delta.

    Reflection IPs move along two in-plane axes, diffraction IPs along their
    edge. For a Fermat-stationary path this never exceeds ~delta^2 curvature.
    """
    base = traj.length
    best_gain = 0.0
    pts = traj.points()
    for i, ip in enumerate(traj.ips):
        if ip.kind in ("reflection", "scatter-reflection"):
            poly = state.surface(ip.facet_id).polygon
            dirs = [poly.u, poly.v]
        else:
            dirs = [state.edge(ip.facet_id).direction]
        for d in dirs:
            for sign in (+1.0, -1.0):
                p = ip.position + sign * delta * d
                length = (np.linalg.norm(p - pts[i])
                          + np.linalg.norm(pts[i + 2] - p)
                          + base
                          - np.linalg.norm(ip.position - pts[i])
                          - np.linalg.norm(pts[i + 2] - ip.position))
                best_gain = max(best_gain, base - length)
    return best_gain
