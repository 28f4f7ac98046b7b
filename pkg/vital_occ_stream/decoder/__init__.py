"""
Occupancy decoding, training objectives and evaluation metrics.
"""
