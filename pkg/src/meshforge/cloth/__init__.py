"""Mass-spring garment simulation with implicit Euler and capsule contacts."""
from .collision import CapsuleSet, body_colliders, posed_joint_positions, resolve_collisions
from .model import (BEND, SHEAR, STRETCH, ClothState, GarmentPattern, Material, Panel, Pin, Seam,
                    build_garment, cape_pattern, load_pattern, pattern_from_dict, pattern_to_dict,
                    save_pattern, skirt_pattern, update_pin_anchors)
from .solver import (ForceJacobians, SimConfig, drape, explicit_euler_step, filtered_cg,
                     force_jacobians, internal_forces, max_speed, step)

__all__ = [
    "BEND", "SHEAR", "STRETCH", "CapsuleSet", "ClothState", "ForceJacobians", "GarmentPattern",
    "Material", "Panel", "Pin", "Seam", "SimConfig", "body_colliders", "build_garment", "cape_pattern",
    "drape", "explicit_euler_step", "filtered_cg", "force_jacobians", "internal_forces",
    "load_pattern", "max_speed", "pattern_from_dict", "pattern_to_dict", "posed_joint_positions",
    "resolve_collisions", "save_pattern", "skirt_pattern", "step", "update_pin_anchors",
]
