"""Active-gaze scene exploration engine.

Foveates images around a fixation point, calibrates detector confidence
scores with per-distance Dirichlet observation models, fuses detections
into a cell-grid belief map, and picks the next fixation by minimizing
the map's expected uncertainty.
"""

__version__ = "0.1.0"
