"""
Query-guided aggregation: instance-query sources, voxel-to-query deformable
attention, query selection, voxel/query indexing and dynamic query
aggregation with its residual feed-forward network.
"""
