"""
Deterministic synthetic scenes: world layout, ego motion, camera rendering and
the depth-given lift into voxel space.
"""
