"""Algorithms: rendering, plane detection, training, meshing, metrics and synthesis."""
