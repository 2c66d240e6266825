import numpy as np
import pandas as pd
import pytest

from src.evaluation.benchmark import (
    DETECTOR_STAGE_SETS,
    PIPELINE_VARIANTS,
    corpus_specs,
    detector_ablation,
    pipeline_ablation,
    summarize,
)

SMALL = {"duration_frames": 120, "static_point_count": 0, "dynamic_point_count": 0}


@pytest.mark.metrics
class TestSummarize:

    def test_means_grouped_without_video(self):
        table = pd.DataFrame({
            "video": [0, 1, 0, 1],
            "variant": ["a", "a", "b", "b"],
            "roe": [1.0, 3.0, 5.0, 7.0],
        })
        out = summarize(table, "variant")
        assert list(out.columns) == ["variant", "roe"]
        assert out.set_index("variant")["roe"].to_dict() == {"a": 2.0, "b": 6.0}

    def test_corpus_cycles_shot_counts(self, config):
        specs = corpus_specs(config, [0, 1, 2, 3])
        assert [s.shot_count for s in specs] == [2, 3, 4, 2]
        assert [s.seed for s in specs] == [0, 1, 2, 3]


@pytest.mark.metrics
@pytest.mark.slow
class TestStudies:

    def test_detector_ablation_rows(self, config):
        table = detector_ablation([4], config, **SMALL, shot_count=2)
        assert set(table["stages"]) == set(DETECTOR_STAGE_SETS)
        assert (table["f1"] == 1.0).all()

    def test_pipeline_ablation_rows(self, config):
        table = pipeline_ablation([4], config, **SMALL)
        assert set(table["variant"]) == set(PIPELINE_VARIANTS)
        assert np.isfinite(table[["roe", "rte", "jitter"]].to_numpy()).all()
