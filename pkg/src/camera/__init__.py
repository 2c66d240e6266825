"""Camera trajectory estimation by masked bundle adjustment."""

from src.camera.bundle_adjustment import BAWindow, PointTrack, ba_solve, mask_tracks, track_confidence
from src.camera.sequence import solve_sequence

__all__ = [
    "BAWindow",
    "PointTrack",
    "ba_solve",
    "mask_tracks",
    "track_confidence",
    "solve_sequence",
]
