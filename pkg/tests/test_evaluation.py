import json
import warnings

import numpy as np
import pytest

from conftest import GEOM, make_stream
from saccadewarp.evaluation import (
    AccuracyReport,
    ImprovementReport,
    SubsetAccuracy,
    accuracy,
    associate_fixations,
    improvement,
    pooled_improvement,
)
from saccadewarp.harness import CONDITIONS, loso_harness, projection_comparison
from saccadewarp.pipeline import process_session
from saccadewarp.segmentation import Fixation
from saccadewarp.selection import ForestConfig
from saccadewarp.simulator import SimConfig, generate_session, generate_suite
from saccadewarp.stream import SessionRecord, StimulusEvent, StimulusLog
from saccadewarp.warpfield import ProjectionMode, calibrate, identity_grid


def _toy_session(offset_px):
    """Two targets, gaze parked ``offset_px`` to the right of each."""
    events = (
        StimulusEvent(0, "appear", 500, 400, 1, 1), StimulusEvent(400, "vanish", 500, 400, 1, 1),
        StimulusEvent(300, "appear", 1500, 800, 2, 3), StimulusEvent(900, "vanish", 1500, 800, 2, 3),
    )
    n = 270
    xy = np.tile([500.0 + offset_px, 400.0], (n, 1))
    xy[135:] = [1500.0 + offset_px, 800.0]
    stream = make_stream(xy)
    fixes = [Fixation(0, 119, float(stream.t[0]), float(stream.t[119]), (500 + offset_px, 400)),
             Fixation(140, 269, float(stream.t[140]), float(stream.t[269]), (1500 + offset_px, 800))]
    return SessionRecord(stream, StimulusLog(events), GEOM), fixes


def test_on_target_is_zero():
    s, fixes = _toy_session(0.0)
    rep = accuracy(s, fixes)
    assert rep.mean_error_deg == 0.0 and rep.n_fixations == 2


def test_one_degree_shift():
    s, fixes = _toy_session(52.4)
    rep = accuracy(s, fixes)
    assert rep.mean_error_deg == pytest.approx(1.0, abs=2e-3)
    assert rep.per_vertex_count[1, 1] == 120 and rep.per_vertex_count[2, 3] == 130
    assert np.isnan(rep.per_vertex_error[0, 0])


def test_association_rules():
    s, fixes = _toy_session(0.0)
    ep = associate_fixations(s.stimulus, fixes)
    assert (ep[0].row, ep[0].col) == (1, 1)
    assert (ep[1].row, ep[1].col) == (2, 3)
    # a fixation after every target has gone falls back to the nearest epoch in time
    late = Fixation(0, 1, 2000.0, 2100.0, (0, 0))
    assert associate_fixations(s.stimulus, [late])[0].row == 2


def test_no_fixations_is_error():
    s, _ = _toy_session(0.0)
    with pytest.raises(ValueError):
        accuracy(s, [])


def test_identity_warp_bit_exact(smooth_session):
    ps = process_session(smooth_session)
    a = accuracy(smooth_session, ps.fixations, None, ps.stream)
    b = accuracy(smooth_session, ps.fixations, identity_grid(GEOM), ps.stream)
    assert a.to_dict() == b.to_dict()
    imp = improvement(smooth_session, identity_grid(GEOM), ps.fixations, ps.stream)
    assert imp.improvement_pct == 0.0


def test_region_map_decomposes_overall(smooth_session):
    ps = process_session(smooth_session)
    grid = calibrate(ps.saccades, geom=GEOM)
    imp = improvement(smooth_session, grid, ps.fixations, ps.stream)
    w = imp.before.per_vertex_count
    has = w > 0
    weighted = (imp.region_map[has] * w[has]).sum() / w.sum()
    assert weighted == pytest.approx(imp.before.mean_error_deg - imp.after.mean_error_deg, abs=1e-9)
    assert imp.improvement_pct == pytest.approx(
        100 * (imp.before.mean_error_deg - imp.after.mean_error_deg) / imp.before.mean_error_deg)


def test_smooth_field_calibration_improves(smooth_session):
    s = generate_session(SimConfig(rng_seed=3))  # no planted curvature
    ps = process_session(s)
    imp = improvement(s, calibrate(ps.saccades, geom=GEOM), ps.fixations, ps.stream)
    assert imp.after.mean_error_deg < imp.before.mean_error_deg


def test_reports_round_trip(smooth_session):
    ps = process_session(smooth_session)
    imp = improvement(smooth_session, calibrate(ps.saccades, geom=GEOM), ps.fixations, ps.stream)
    back = ImprovementReport.from_dict(json.loads(imp.to_json()))
    assert back.to_dict() == imp.to_dict()
    rep = AccuracyReport.from_dict(json.loads(json.dumps(imp.before.to_dict())))
    assert rep.to_dict() == imp.before.to_dict()


@pytest.mark.parametrize("mode", list(ProjectionMode))
def test_subset_accuracy_matches_full_route(smooth_session, mode):
    ps = process_session(smooth_session)
    sub = SubsetAccuracy(ps.saccades, ps.fixation_points, GEOM, mode)
    rng = np.random.default_rng(0)
    for mask in (np.ones(len(ps.saccades), bool), rng.random(len(ps.saccades)) < 0.3):
        chosen = [s for s, m in zip(ps.saccades, mask) if m]
        grid = calibrate(chosen, None, mode, GEOM)
        want = accuracy(smooth_session, ps.fixations, grid, ps.stream).mean_error_deg
        assert sub(mask) == pytest.approx(want, abs=1e-10)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        base = accuracy(smooth_session, ps.fixations, None, ps.stream).mean_error_deg
    assert sub(np.zeros(len(ps.saccades), bool)) == pytest.approx(base, abs=1e-12)


def test_subset_accuracy_incremental_consistency(smooth_session):
    ps = process_session(smooth_session)
    sub = SubsetAccuracy(ps.saccades, ps.fixation_points, GEOM)
    mask = np.ones(len(ps.saccades), bool)
    sub(mask)
    mask[[3, 7]] = False
    fresh = SubsetAccuracy(ps.saccades, ps.fixation_points, GEOM)
    assert sub(mask) == pytest.approx(fresh(mask), abs=1e-10)
    with pytest.raises(ValueError):
        sub(np.ones(3, bool))


def test_pooled_improvement():
    b = [np.array([1.0, 1.0]), np.array([2.0])]
    a = [np.array([0.5, 1.0]), np.array([2.0])]
    assert pooled_improvement(list(zip(b, a))) == pytest.approx(100 * 0.5 / 4)


@pytest.fixture(scope="module")
def twin_suite():
    one = generate_suite(1, SimConfig(traversals=2, natural_curve_fraction=0.2), seed=4, poses=("none", "large"))
    sessions = one["p00"]
    twin = [generate_session(SimConfig(traversals=2, natural_curve_fraction=0.2, pose_label=s.pose_label,
                                       rng_seed=0, field_seed=0)) for s in sessions]
    for s in twin:
        s.participant_id = "p01"
    return {"p00": sessions, "p01": twin}


def test_harness_structure(twin_suite):
    res = loso_harness(twin_suite, ForestConfig(n_trees=5))
    assert set(res.participants) == {"p00", "p01"}
    assert len(res.sessions) == 4
    for o in res.sessions:
        assert set(o.reports) == set(CONDITIONS)
        assert o.retained["all"] == o.n_saccades
        assert o.retained["n50"] == min(50, o.n_saccades)
    doc = json.loads(res.to_json())
    assert doc["pooled"]["all"]["improvement_pct"] == res.pooled["all"].improvement_pct
    assert len(res.csv_rows()) == 1 + 4 * len(CONDITIONS)


def test_harness_identical_participants():
    base = SimConfig(traversals=2, natural_curve_fraction=0.2)
    a = [generate_session(base)]
    b = [generate_session(base)]
    b[0].participant_id = "p01"
    res = loso_harness({"p00": a, "p01": b}, ForestConfig(n_trees=5))
    ra, rb = res.participants["p00"], res.participants["p01"]
    for c in CONDITIONS:
        assert ra[c].to_dict() == rb[c].to_dict()


def test_harness_needs_two_participants(twin_suite):
    with pytest.raises(ValueError):
        loso_harness({"p00": twin_suite["p00"]})


def test_projection_comparison_identity_field():
    suite = generate_suite(2, SimConfig(distortion="identity", traversals=2, noise_sd_deg=0.0),
                           seed=0, poses=("none",))
    table = projection_comparison(suite, ForestConfig(n_trees=5))
    assert set(table) == {"bottom", "peak", "middle"}
    assert all(set(v) == {"all", "selected"} for v in table.values())
    res = loso_harness(suite, ForestConfig(n_trees=5), "middle")
    for c in ("all", "selected"):
        r = res.pooled[c]
        assert abs(r.before.mean_error_deg - r.after.mean_error_deg) < 1e-3
    again = projection_comparison(suite, ForestConfig(n_trees=5))
    assert again == table
