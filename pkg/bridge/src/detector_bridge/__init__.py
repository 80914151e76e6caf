"""Detector bridge: a thin HTTP wrapper around an object detector.

Speaks the exploration engine's wire protocol: POST /detect with a PNG
and a fixation, answering one detection record with full per-class score
vectors padded by a synthesized background score.
"""

__version__ = "0.1.0"
