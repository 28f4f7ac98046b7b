"""
Section-tree parsing for YAML config files.

Config files use flat top-level section names; a dot inside a name denotes
nesting::

    grid:         {...}
    dynamic.0:    {class_name: car, ...}
    dynamic.1:    {class_name: pedestrian, ...}
    camera.front: {...}

``parse_section_tree`` folds them into
``{"grid": {...}, "dynamic": {"0": ..., "1": ...}, "camera": {"front": ...}}``
and ``ordered_sections`` turns one folded group back into a list: numeric
keys in numeric order first, then named keys sorted.
"""

import logging
from typing import Any, Dict, List, Tuple

logger = logging.getLogger(__name__)

SECTION_SEP = "."
SECTION_KEY = "_key"

_BOOLS = {"true": True, "false": False}
_NULLS = {"null", "none", "~"}


def parse_section_tree(document: Dict[str, Any], sep: str = SECTION_SEP) -> Dict[str, Any]:
    """Fold dotted top-level section names of *document* into a nested dict.

    Only top-level keys are split.  A section always beats a scalar of the
    same name (``camera: 3`` next to ``camera.0``); the scalar is dropped
    with a warning.
    """
    tree: Dict[str, Any] = {}
    for key, value in document.items():
        path = [part for part in str(key).split(sep) if part]
        if not path:
            continue
        node = tree
        for depth, segment in enumerate(path[:-1]):
            child = node.get(segment)
            if not isinstance(child, dict):
                if child is not None:
                    logger.warning(
                        f"⚠️  CONFIG: Section '{key}' replaces value at '{sep.join(path[:depth + 1])}'"
                    )
                child = node[segment] = {}
            node = child
        leaf = path[-1]
        existing = node.get(leaf)
        if isinstance(existing, dict) and isinstance(value, dict):
            existing.update(value)
        elif isinstance(existing, dict):
            logger.warning(f"⚠️  CONFIG: Ignoring value '{key}', a section of that name exists")
        else:
            node[leaf] = value

    dotted = sum(1 for key in document if sep in str(key))
    if dotted:
        logger.debug(f"📋 CONFIG: Folded {dotted} dotted sections into {len(tree)} top-level sections")
    return tree


def coerce_value(value: Any) -> Any:
    """Coerce a quoted scalar: booleans, null, int, float; lists element-wise."""
    if isinstance(value, list):
        return [coerce_value(item) for item in value]
    if isinstance(value, dict):
        return coerce_dict(value)
    if not isinstance(value, str):
        return value
    text = value.strip()
    lower = text.lower()
    if lower in _BOOLS:
        return _BOOLS[lower]
    if lower in _NULLS:
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return value


def coerce_dict(d: Dict[str, Any]) -> Dict[str, Any]:
    return {key: coerce_value(value) for key, value in d.items()}


def _section_order(key: Any) -> Tuple[int, Any]:
    text = str(key)
    return (0, int(text)) if text.isdigit() else (1, text)


def ordered_sections(tree: Dict[str, Any], name: str) -> List[Dict[str, Any]]:
    """The sections folded under *name* as a list of field dicts.

    Each dict carries its original key under ``_key``.  A plain YAML list
    under *name* is returned as given.
    """
    node = tree.get(name)
    if isinstance(node, list):
        return list(node)
    if not isinstance(node, dict):
        return []
    sections = []
    for key in sorted(node, key=_section_order):
        fields = dict(node[key]) if isinstance(node[key], dict) else {}
        fields.setdefault(SECTION_KEY, str(key))
        sections.append(fields)
    return sections
