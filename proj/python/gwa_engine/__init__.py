"""Gradient-weight alignment engine: per-sample alignment, streaming epoch
statistics, stopping decisions and trace ingestion."""

import json

from . import _core
from ._core import (
    ALIGNMENT_ROW_SIZE,
    TRACE_HEADER_SIZE,
    CentralMoments,
    GwaError,
    JlProjection,
    alignment,
    head_gradient,
    pairwise_alignment,
    read_trace,
)

__all__ = [
    "ALIGNMENT_ROW_SIZE",
    "TRACE_HEADER_SIZE",
    "CentralMoments",
    "GwaError",
    "JlProjection",
    "alignment",
    "head_gradient",
    "ingest",
    "pairwise_alignment",
    "read_trace",
    "select_scratch",
    "summarize_scores",
    "train",
]


def summarize_scores(gammas, epoch=0, beta=1.2, min_samples=30):
    return json.loads(_core.summarize_scores(list(gammas), epoch, beta, min_samples))


def select_scratch(gwa, warmup=0.10):
    return json.loads(_core.select_scratch(list(gwa), warmup))


def ingest(path, include_bias=False, projection_dim=None, projection_seed=0, retain_scores=False):
    return json.loads(
        _core.ingest(str(path), include_bias, projection_dim, projection_seed, retain_scores)
    )


def train(config_text, out_dir):
    return json.loads(_core.train(config_text, str(out_dir)))
