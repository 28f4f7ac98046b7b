"""Command implementations behind the ``vital-occ-stream`` console script."""
