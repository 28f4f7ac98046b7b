"""
Stream-based voxel aggregation: feature pyramid, motion-aware warping,
attention refinement, fusion and the auxiliary supervision heads.
"""
