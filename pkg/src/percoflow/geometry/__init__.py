from .bodies import TOL, Ball, Box, ConvexBody, body_from_dict, orthonormal_frame, sphere_directions
from .cylinder import (
    Cylinder,
    LatticeSets,
    discretize_body,
    discretize_cylinder,
    edge_boundary,
    edge_keys,
)
from .polytope import (
    ConvexPolytope,
    Face,
    face_decomposition,
    face_distance,
    inner_polytope,
    outer_polytope,
    wulff_crystal,
)

__all__ = [
    "TOL", "Ball", "Box", "ConvexBody", "ConvexPolytope", "Cylinder", "Face", "LatticeSets",
    "body_from_dict", "discretize_body", "discretize_cylinder", "edge_boundary", "edge_keys",
    "face_decomposition", "face_distance", "inner_polytope", "orthonormal_frame",
    "outer_polytope", "sphere_directions", "wulff_crystal",
]
