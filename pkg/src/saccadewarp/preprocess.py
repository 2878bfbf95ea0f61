"""Cleaning of raw gaze streams: jitter removal, gap filling, low-pass filtering.

The intended order is ``remove_jitter -> fill_gaps -> lowpass``; see
:func:`preprocess` and :class:`GazePreprocessor`.
"""
from __future__ import annotations

import numpy as np
from scipy import signal
from sklearn.base import BaseEstimator, TransformerMixin

from .geometry import deg_to_px
from .stream import GazeStream


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, stop) index ranges where ``mask`` is True."""
    m = np.concatenate([[False], np.asarray(mask, bool), [False]])
    d = np.diff(m.astype(np.int8))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def remove_jitter(
    stream: GazeStream,
    amplitude_deg: float = 1.0,
    freq_hz: float = 100.0,
    boundary_margin_px: float = 100.0,
) -> GazeStream:
    """Invalidate high-frequency back-and-forth bursts near the screen edge.

    A burst is a run of >= 3 consecutive sample steps, all between valid
    neighbours, whose lengths lie in [0.5, 2] x ``amplitude_deg`` and whose
    directions reverse at every step. Per-sample reversal oscillates at
    ``rate_hz / 2``; the rule is only active when that lies within a factor
    of two of ``freq_hz``. Burst samples within ``boundary_margin_px`` of an
    edge are marked invalid.
    """
    n = len(stream)
    if n < 4:
        return stream
    osc = stream.rate_hz / 2.0
    if not (0.5 * freq_hz <= osc <= 2.0 * freq_hz):
        return stream

    amp_px = deg_to_px(amplitude_deg, stream.geom)
    xy, valid = stream.xy, stream.valid
    step = np.diff(xy, axis=0)
    size = np.hypot(step[:, 0], step[:, 1])
    ok = valid[:-1] & valid[1:] & (size >= 0.5 * amp_px) & (size <= 2.0 * amp_px)
    reverse = np.einsum("ij,ij->i", step[:-1], step[1:]) < 0

    flagged = np.zeros(n, dtype=bool)
    k = 0
    while k < len(ok):
        if not ok[k]:
            k += 1
            continue
        j = k
        while j + 1 < len(ok) and ok[j + 1] and reverse[j]:
            j += 1
        if j - k + 1 >= 3:
            flagged[k : j + 2] = True
        k = j + 1

    if not flagged.any():
        return stream
    w, h = stream.geom.width_px, stream.geom.height_px
    x, y = xy[:, 0], xy[:, 1]
    edge_dist = np.minimum.reduce([x, w - x, y, h - y])
    drop = flagged & (edge_dist <= boundary_margin_px)
    if not drop.any():
        return stream
    return stream.with_data(valid=valid & ~drop)


def fill_gaps(stream: GazeStream, max_gap_ms: float = 50.0) -> GazeStream:
    """Linearly interpolate interior runs of invalid samples shorter than ``max_gap_ms``.

    The gap duration is the time covered by the missing samples, i.e. the
    span between the bounding valid samples minus one sample interval.
    """
    valid = stream.valid
    if valid.all() or not valid.any():
        return stream
    t = stream.t
    xy = stream.xy.copy()
    new_valid = valid.copy()
    changed = False
    for a, b in _runs(~valid):
        if a == 0 or b == len(valid):
            continue
        duration = t[b] - t[a - 1] - stream.dt_ms
        if duration >= max_gap_ms:
            continue
        frac = (t[a:b] - t[a - 1]) / (t[b] - t[a - 1])
        xy[a:b] = xy[a - 1] + frac[:, None] * (xy[b] - xy[a - 1])
        new_valid[a:b] = True
        changed = True
    if not changed:
        return stream
    return stream.with_data(xy=xy, valid=new_valid)


def design_lowpass(cutoff_hz: float, rate_hz: float, numtaps: int = 31) -> np.ndarray:
    nyq = rate_hz / 2.0
    if not 0 < cutoff_hz < nyq:
        raise ValueError(f"cutoff {cutoff_hz} Hz must lie in (0, {nyq}) Hz")
    return signal.firwin(numtaps, cutoff_hz, fs=rate_hz, window="hamming")


def lowpass(stream: GazeStream, cutoff_hz: float = 30.0, numtaps: int = 31) -> GazeStream:
    """Zero-phase FIR low-pass of x and y, applied per contiguous valid segment."""
    taps = design_lowpass(cutoff_hz, stream.rate_hz, numtaps)
    xy = stream.xy.copy()
    for a, b in _runs(stream.valid):
        if b - a < 2:
            continue
        padlen = min(3 * len(taps), b - a - 1)
        xy[a:b] = signal.filtfilt(taps, [1.0], stream.xy[a:b], axis=0, padlen=padlen)
    return stream.with_data(xy=xy)


def preprocess(
    stream: GazeStream,
    jitter_amplitude_deg: float = 1.0,
    jitter_freq_hz: float = 100.0,
    boundary_margin_px: float = 100.0,
    max_gap_ms: float = 50.0,
    cutoff_hz: float = 30.0,
    numtaps: int = 31,
) -> GazeStream:
    stream = remove_jitter(stream, jitter_amplitude_deg, jitter_freq_hz, boundary_margin_px)
    stream = fill_gaps(stream, max_gap_ms)
    return lowpass(stream, cutoff_hz, numtaps)


class GazePreprocessor(BaseEstimator, TransformerMixin):
    """Stateless transformer wrapping :func:`preprocess` for pipelines.

    ``transform`` accepts a :class:`GazeStream` or a list of them.
    """

    def __init__(
        self,
        jitter_amplitude_deg=1.0,
        jitter_freq_hz=100.0,
        boundary_margin_px=100.0,
        max_gap_ms=50.0,
        cutoff_hz=30.0,
        numtaps=31,
    ):
        self.jitter_amplitude_deg = jitter_amplitude_deg
        self.jitter_freq_hz = jitter_freq_hz
        self.boundary_margin_px = boundary_margin_px
        self.max_gap_ms = max_gap_ms
        self.cutoff_hz = cutoff_hz
        self.numtaps = numtaps

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        if isinstance(X, GazeStream):
            return preprocess(X, **self.get_params())
        return [preprocess(s, **self.get_params()) for s in X]
