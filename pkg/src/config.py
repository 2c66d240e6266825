"""
Configuration management for motionstitch.

Every pipeline threshold lives in a dataclass section with its documented
default. Values can be overridden by a key=value file (``--config`` or the
``MOTIONSTITCH_CONFIG`` environment variable) and by ``--set KEY=VALUE``
flags. Keys are ``SECTION_FIELD`` in upper case, e.g. ``BA_WINDOW_SIZE=12``.
"""

import copy
import logging
import os
from dataclasses import dataclass, fields, replace
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values, load_dotenv

from src.errors import ConfigError

# Load .env file if present (may set MOTIONSTITCH_CONFIG)
load_dotenv()

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "MOTIONSTITCH_CONFIG"


@dataclass
class DetectorConfig:
    """Shot transition detector thresholds."""
    scene_threshold: float = 0.5
    bbox_threshold: float = 0.3
    keypoint_threshold: float = 0.4
    # keypoint match radius as a fraction of the previous bbox diagonal
    radius_fraction: float = 0.05
    min_shot_len: int = 10
    slack: int = 2
    # comma-separated subset of scene,bbox,pose
    stages: str = "scene,bbox,pose"

    @property
    def stage_list(self) -> tuple:
        return tuple(s.strip() for s in self.stages.split(",") if s.strip())


@dataclass
class RansacConfig:
    """Relative pose estimation across a shot transition."""
    iterations: int = 500
    inlier_threshold_px: float = 2.0
    seed: int = 0
    confidence: float = 0.999
    # advance the outgoing frame's keypoints one frame before matching
    extrapolate_keypoints: bool = True


@dataclass
class BAConfig:
    """Masked windowed bundle adjustment."""
    window_size: int = 12
    gn_iters: int = 2
    damping: float = 1e-4
    min_track_len: int = 5
    confidence_threshold: float = 0.2
    low_confidence_scale: float = 0.1
    cauchy_scale_floor_px: float = 1.0
    # ba_solve calls per window in solve_sequence
    max_rounds: int = 10
    convergence_tol: float = 1e-12
    default_depth_m: float = 5.0
    use_masks: bool = True


@dataclass
class AlignConfig:
    """Shot stitching."""
    half_window: int = 5
    align_orientation: bool = True
    smooth: bool = True
    # concatenate shots untouched (baseline)
    naive_concat: bool = False


@dataclass
class ContactConfig:
    """Foot contact detection and trajectory refinement."""
    height_thresh_m: float = 0.08
    vel_thresh_mps: float = 0.25
    ground_percentile: float = 5.0
    refine: bool = True
    smooth_window: int = 5


@dataclass
class MetricsConfig:
    """Evaluation conventions."""
    wa_chunk: int = 100
    rpe_delta: int = 1
    # foot sliding measured on contacts detected from the ground truth motion
    truth_contacts: bool = True


@dataclass
class SynthConfig:
    """Synthetic scene generator defaults."""
    fps: float = 30.0
    min_shot_len: int = 30
    ring_radius_m: float = 4.0
    camera_height_m: float = 1.5
    image_width: int = 1280
    image_height: int = 720
    focal_px: float = 1000.0


@dataclass
class RunConfig:
    """Process-level settings."""
    seed: int = 0
    verbose: bool = False
    # estimate per-shot cameras from point tracks when tracks are supplied
    solve_cameras: bool = True


_SECTIONS = {
    "detector": ("DETECTOR", DetectorConfig),
    "ransac": ("RANSAC", RansacConfig),
    "ba": ("BA", BAConfig),
    "align": ("ALIGN", AlignConfig),
    "contacts": ("CONTACT", ContactConfig),
    "metrics": ("METRICS", MetricsConfig),
    "synth": ("SYNTH", SynthConfig),
    "run": ("RUN", RunConfig),
}

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _coerce(key: str, kind: type, raw: Any) -> Any:
    if not isinstance(raw, str):
        return kind(raw)
    text = raw.strip()
    try:
        if kind is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"Invalid value for {key}: {raw!r} (expected {kind.__name__})")
    return text


class Config:
    """
    Central configuration for the pipeline.

    Usage:
        from src.config import Config

        cfg = Config.from_sources(path="run.cfg", overrides={"BA_WINDOW_SIZE": "8"})
        cfg.ba.window_size  # 8
    """

    def __init__(self, values: Optional[Mapping[str, Any]] = None):
        values = dict(values or {})
        unknown = sorted(set(values) - set(self.known_keys()))
        if unknown:
            raise ConfigError(f"Unknown config key(s): {', '.join(unknown)}")
        self._values = values
        self.detector = self._load_detector_config()
        self.ransac = self._load_ransac_config()
        self.ba = self._load_ba_config()
        self.align = self._load_align_config()
        self.contacts = self._load_contact_config()
        self.metrics = self._load_metrics_config()
        self.synth = self._load_synth_config()
        self.run = self._load_run_config()

    @staticmethod
    def known_keys() -> Dict[str, type]:
        """All accepted ``SECTION_FIELD`` keys mapped to their field types."""
        keys = {}
        for prefix, cls in _SECTIONS.values():
            for f in fields(cls):
                keys[f"{prefix}_{f.name.upper()}"] = f.type
        return keys

    def _section(self, prefix: str, cls: type) -> Any:
        kwargs = {}
        for f in fields(cls):
            key = f"{prefix}_{f.name.upper()}"
            if key in self._values:
                kwargs[f.name] = _coerce(key, f.type, self._values[key])
        return cls(**kwargs)

    def _load_detector_config(self) -> DetectorConfig:
        cfg = self._section("DETECTOR", DetectorConfig)
        unknown = set(cfg.stage_list) - {"scene", "bbox", "pose"}
        if unknown or not cfg.stage_list:
            raise ConfigError(f"DETECTOR_STAGES must name scene, bbox and/or pose, got {cfg.stages!r}")
        return cfg

    def _load_ransac_config(self) -> RansacConfig:
        cfg = self._section("RANSAC", RansacConfig)
        if cfg.iterations < 1:
            raise ConfigError("RANSAC_ITERATIONS must be positive")
        return cfg

    def _load_ba_config(self) -> BAConfig:
        cfg = self._section("BA", BAConfig)
        if cfg.window_size < 2:
            raise ConfigError("BA_WINDOW_SIZE must be at least 2")
        return cfg

    def _load_align_config(self) -> AlignConfig:
        cfg = self._section("ALIGN", AlignConfig)
        if cfg.half_window < 1:
            raise ConfigError("ALIGN_HALF_WINDOW must be at least 1")
        return cfg

    def _load_contact_config(self) -> ContactConfig:
        return self._section("CONTACT", ContactConfig)

    def _load_metrics_config(self) -> MetricsConfig:
        return self._section("METRICS", MetricsConfig)

    def _load_synth_config(self) -> SynthConfig:
        return self._section("SYNTH", SynthConfig)

    def _load_run_config(self) -> RunConfig:
        return self._section("RUN", RunConfig)

    @classmethod
    def from_sources(
        cls,
        path: Optional[str] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "Config":
        """
        Build a config from defaults, a key=value file and explicit overrides.

        Args:
            path: Config file; falls back to $MOTIONSTITCH_CONFIG when None
            overrides: Highest-precedence values (CLI ``--set`` and flags)

        Returns:
            Loaded Config
        """
        values: Dict[str, Any] = {}
        path = path or os.getenv(CONFIG_ENV_VAR)
        if path:
            if not os.path.isfile(path):
                raise ConfigError(f"Config file not found: {path}")
            for key, value in dotenv_values(path).items():
                if value is None:
                    raise ConfigError(f"{path}: key {key!r} has no value")
                values[key] = value
            logger.debug(f"Loaded {len(values)} config value(s) from {path}")
        values.update(overrides or {})
        return cls(values)

    def with_overrides(self, **sections: Dict[str, Any]) -> "Config":
        """Copy with some section fields replaced, e.g. ``with_overrides(align={"smooth": False})``."""
        clone = copy.copy(self)
        for name, changes in sections.items():
            setattr(clone, name, replace(getattr(clone, name), **changes))
        return clone

    def print_status(self) -> None:
        """Log the effective configuration."""
        logger.info("=== Configuration Status ===")
        for name in _SECTIONS:
            logger.info(f"{name}: {getattr(self, name)}")


_config: Optional[Config] = None


def get_config() -> Config:
    """Process-wide config built from the environment."""
    global _config
    if _config is None:
        _config = Config.from_sources()
    return _config
