"""
Test package for the occupancy stream engine.
"""
