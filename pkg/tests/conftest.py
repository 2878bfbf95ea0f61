import math

import numpy as np
import pytest

from saccadewarp.geometry import DEFAULT_GEOMETRY
from saccadewarp.simulator import SimConfig, generate_session
from saccadewarp.stream import GazeStream

GEOM = DEFAULT_GEOMETRY
PX_PER_DEG = math.tan(math.radians(1.0)) * 750.0 * 2560 / 640  # about 52.4


def make_stream(xy, valid=None, rate_hz=300.0, t0=0.0):
    xy = np.asarray(xy, float).reshape(-1, 2)
    t = t0 + np.arange(len(xy)) * 1000.0 / rate_hz
    return GazeStream(t, xy, np.ones(len(xy), bool) if valid is None else valid, rate_hz, GEOM)


@pytest.fixture(scope="session")
def smooth_session():
    return generate_session(SimConfig(rng_seed=3, natural_curve_fraction=0.2))


@pytest.fixture(scope="session")
def clean_session():
    return generate_session(SimConfig(rng_seed=5, noise_sd_deg=0.0, fixation_jitter_deg=0.0,
                                      distortion="identity"))


def minjerk_trace(start, end, duration_ms, pre_ms=150.0, post_ms=150.0, rate_hz=300.0, t0=0.0):
    """Fixation, minimum-jerk movement, fixation. Returns (t, xy, onset_ms, T_ms)."""
    dt = 1000.0 / rate_hz
    n = int(round((pre_ms + duration_ms + post_ms) / dt)) + 1
    t = t0 + np.arange(n) * dt
    tau = np.clip((t - t0 - pre_ms) / duration_ms, 0, 1)
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    start, end = np.asarray(start, float), np.asarray(end, float)
    xy = start + s[:, None] * (end - start)
    return t, xy, t0 + pre_ms, duration_ms


def minjerk_crossings(amplitude_px, duration_ms, threshold=60.0):
    """Closed-form times (ms after movement onset) where speed crosses ``threshold`` deg/s."""
    from saccadewarp.geometry import px_to_deg

    amp_deg = amplitude_px * px_to_deg(1.0, GEOM)  # per-step conversion is linear at this scale
    T = duration_ms / 1000.0
    u = math.sqrt(threshold * T / (30.0 * amp_deg))  # tau (1 - tau) at the crossing
    if u > 0.25:
        return None
    tau = (1 - math.sqrt(1 - 4 * u)) / 2
    return tau * duration_ms, (1 - tau) * duration_ms
