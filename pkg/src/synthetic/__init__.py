"""Synthetic multi-shot scenes with ground truth."""

from src.synthetic.gait import GaitParams, generate_gait
from src.synthetic.generator import GroundTruthBundle, SceneSpec, generate, inject_noise

__all__ = [
    "GaitParams",
    "generate_gait",
    "GroundTruthBundle",
    "SceneSpec",
    "generate",
    "inject_noise",
]
