"""Pipeline layer: state schema, stage nodes and the LangGraph workflow."""

from src.pipeline.state import GroundTruth, PipelineState

__all__ = [
    "GroundTruth",
    "PipelineState",
]
