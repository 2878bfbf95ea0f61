"""Per-session processing chain: preprocess, segment, attributes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attributes import attribute_matrix
from .config import PipelineConfig
from .evaluation import FixationPoints, fixation_points
from .preprocess import preprocess
from .segmentation import Fixation, IvtThresholds, Saccade, segment
from .stream import GazeStream, SessionRecord


@dataclass
class ProcessedSession:
    session: SessionRecord
    stream: GazeStream  # preprocessed
    saccades: list[Saccade]
    fixations: list[Fixation]
    X: np.ndarray  # (n_saccades, 10) attribute matrix
    planted: Optional[np.ndarray] = None  # simulator only: saccade overlaps a curved truth saccade

    @property
    def fixation_points(self) -> FixationPoints:
        if not hasattr(self, "_fp"):
            self._fp = fixation_points(self.session.stimulus, self.fixations, self.stream)
        return self._fp


def planted_flags(session: SessionRecord, saccades) -> Optional[np.ndarray]:
    """Whether each detected saccade overlaps a simulator saccade with injected curvature."""
    if not session.true_saccades:
        return None
    on = np.array([ts.onset_t for ts in session.true_saccades])
    off = np.array([ts.offset_t for ts in session.true_saccades])
    curved = np.array([ts.curved for ts in session.true_saccades])
    flags = np.zeros(len(saccades), dtype=bool)
    for i, s in enumerate(saccades):
        overlap = np.minimum(off, s.offset_t) - np.maximum(on, s.onset_t)
        j = int(np.argmax(overlap))
        flags[i] = overlap[j] > 0 and curved[j]
    return flags


def process_session(session: SessionRecord, cfg: PipelineConfig = PipelineConfig()) -> ProcessedSession:
    stream = preprocess(session.stream, **cfg.preprocess_kwargs())
    thr = IvtThresholds(cfg.v_detect, cfg.v_start, cfg.v_final)
    saccades, fixations = segment(stream, thr, cfg.min_saccade_ms, cfg.min_amplitude_deg, cfg.min_fixation_ms)
    X = attribute_matrix(saccades, session.geom, session.stimulus)
    return ProcessedSession(session, stream, saccades, fixations, X, planted_flags(session, saccades))
