"""
Semantic class tables shared by the scene harness, query selection and metrics.

Label 0 is empty space; labels 1..17 follow the Occ3D-nuScenes ordering
(``others`` first, then ten object classes, then six surface classes).
"""

from typing import Dict, FrozenSet, List

EMPTY_LABEL = 0

OCC_CLASS_NAMES: List[str] = [
    "empty",
    "others",
    "barrier",
    "bicycle",
    "bus",
    "car",
    "construction_vehicle",
    "motorcycle",
    "pedestrian",
    "traffic_cone",
    "trailer",
    "truck",
    "driveable_surface",
    "other_flat",
    "sidewalk",
    "terrain",
    "manmade",
    "vegetation",
]

# Semantic classes, excluding empty
NUM_SEMANTIC_CLASSES = len(OCC_CLASS_NAMES) - 1

CLASS_IDS: Dict[str, int] = {name: idx for idx, name in enumerate(OCC_CLASS_NAMES)}

DYNAMIC_CLASS_IDS: FrozenSet[int] = frozenset(
    CLASS_IDS[name]
    for name in (
        "barrier", "bicycle", "bus", "car", "construction_vehicle",
        "motorcycle", "pedestrian", "traffic_cone", "trailer", "truck",
    )
)

STATIC_CLASS_IDS: FrozenSet[int] = frozenset(
    CLASS_IDS[name]
    for name in (
        "driveable_surface", "other_flat", "sidewalk", "terrain", "manmade", "vegetation",
    )
)

# Default large/small split for query selection (by physical size)
LARGE_OBJECT_CLASSES: FrozenSet[str] = frozenset(
    {"bus", "truck", "trailer", "construction_vehicle", "car", "barrier"}
)
SMALL_OBJECT_CLASSES: FrozenSet[str] = frozenset(
    {"pedestrian", "bicycle", "motorcycle", "traffic_cone"}
)


def class_id(name: str) -> int:
    """Resolve a class name to its label id; raises KeyError for unknown names."""
    return CLASS_IDS[name]


def class_name(label: int) -> str:
    return OCC_CLASS_NAMES[label]
