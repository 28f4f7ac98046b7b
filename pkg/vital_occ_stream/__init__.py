"""
Vital Occ Stream - streaming camera-only 3D semantic occupancy engine with
stream-based voxel aggregation, query-guided aggregation and a synthetic
scene harness.
"""

__version__ = "0.1.0"
__author__ = "Vital AI"
__email__ = "info@vital.ai"
