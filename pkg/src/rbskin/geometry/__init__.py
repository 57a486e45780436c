"""Boundary representation and the geometric queries built on it."""
from .queries import (
    ClosestPoint,
    HashGrid,
    InteriorSample,
    SamplingError,
    WindingContext,
    closest_point,
    closest_point_brute,
    knn_median_distance,
    radius_neighbors,
    ray_visible,
    ray_visible_brute,
    sample_interior,
    unit_directions,
    winding_number,
)
from .shape import (
    BoundaryShape,
    GeometryError,
    Normalization,
    content_hash,
    load_shape,
    read_edge_csv,
    read_obj,
    write_edge_csv,
    write_obj,
)

__all__ = [
    "BoundaryShape", "ClosestPoint", "GeometryError", "HashGrid", "InteriorSample",
    "Normalization", "SamplingError", "WindingContext", "closest_point",
    "closest_point_brute", "content_hash", "knn_median_distance", "load_shape",
    "radius_neighbors", "ray_visible", "ray_visible_brute", "read_edge_csv", "read_obj",
    "sample_interior", "unit_directions", "winding_number", "write_edge_csv", "write_obj",
]
