"""Deterministic 3D ray-tracing wireless channel simulator."""

from .scene import (Scene, SceneState, Material, Surface, Edge, AntennaArray,
                    Terminal, MobileObject, load_scene, scene_from_dict,
                    state_at, save_scene, SchemaError, GeometryError)
from .ris import RisPanel, set_steering
from .tracer import (IP, Trajectory, TraceDiagnostics, trace, trace_specular,
                     find_blockers, bypass_diffraction, resolve_interactions)

__all__ = [
    "Scene", "SceneState", "Material", "Surface", "Edge", "AntennaArray",
    "Terminal", "MobileObject", "load_scene", "scene_from_dict", "state_at",
    "save_scene", "SchemaError", "GeometryError", "RisPanel", "set_steering",
    "IP", "Trajectory", "TraceDiagnostics", "trace", "trace_specular",
    "find_blockers", "bypass_diffraction", "resolve_interactions",
]

__version__ = "0.1.0"
