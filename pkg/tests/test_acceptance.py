"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (bypassing output capture) before
asserting, so ``pytest tests/test_acceptance.py`` doubles as a report.
"""
import json
import time

import numpy as np
import pytest

from conftest import GEOM, PX_PER_DEG, make_stream, minjerk_crossings, minjerk_trace
from saccadewarp import io
from saccadewarp.attributes import curvature_angle, curvature_area
from saccadewarp.cli import main
from saccadewarp.evaluation import accuracy
from saccadewarp.harness import loso_harness, prepare
from saccadewarp.pipeline import process_session
from saccadewarp.segmentation import segment
from saccadewarp.selection import (
    SUITABLE,
    UNSUITABLE,
    LabeledSaccade,
    SaccadeForestClassifier,
    downsample_majority,
)
from saccadewarp.simulator import POSE_BASELINE_DEG, SimConfig, generate_session, generate_suite
from saccadewarp.warpfield import PointPairSet, WarpGrid, apply, build_grid, calibrate, grid_layout, mls_rigid_map


@pytest.fixture
def verdict(capsys):
    def report(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok
    return report


def _vertices(quad_px=25.0):
    origin, nx, ny = grid_layout(GEOM, quad_px)
    gx, gy = np.meshgrid(origin[0] + quad_px * np.arange(nx), origin[1] + quad_px * np.arange(ny))
    return np.column_stack([gx.ravel(), gy.ravel()])


def test_c1_mls_identity_and_rigid_exactness(verdict):
    t0 = time.perf_counter()
    verts = _vertices()
    worst_id = worst_rigid = 0.0
    for trial in range(100):
        rng = np.random.default_rng(trial)
        p = rng.uniform([0, 0], GEOM.size, (int(rng.integers(2, 60)), 2))
        grid = build_grid(PointPairSet(p, p.copy()), GEOM)
        worst_id = max(worst_id, np.abs(grid.dx).max(), np.abs(grid.dy).max(),
                       np.abs(mls_rigid_map(PointPairSet(p, p.copy()), verts) - verts).max())
        theta = rng.uniform(-np.pi, np.pi)
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        shift = rng.uniform(-200, 200, 2)
        mapped = mls_rigid_map(PointPairSet(p, p @ R.T + shift), verts)
        worst_rigid = max(worst_rigid, np.abs(mapped - (verts @ R.T + shift)).max())
    elapsed = time.perf_counter() - t0
    ok = worst_id <= 1e-9 and worst_rigid <= 1e-6 and elapsed < 10
    verdict("C1 MLS identity/rigid exactness", ok,
            f"identity max {worst_id:.2e} px, rigid max {worst_rigid:.2e} px, {elapsed:.1f} s")
    assert ok


def test_c2_curvature_correctness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst_area = worst_angle = 0.0
    axis_exact = True
    for _ in range(200):
        m = int(rng.integers(3, 40))
        frac = np.sort(rng.uniform(0.01, 0.99, m - 2))
        frac = np.concatenate([[0.0], frac, [1.0]])
        length = rng.uniform(20, 1500)
        line = np.column_stack([frac * length, np.zeros(m)])
        axis_exact &= curvature_area(line) == 0.0 and curvature_angle(line) == 0.0
        theta = rng.uniform(-np.pi, np.pi)
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        posed = line @ R.T + rng.uniform(-500, 2500, 2)
        worst_area = max(worst_area, curvature_area(posed))
        worst_angle = max(worst_angle, curvature_angle(posed))
    tri_area = curvature_area([(0, 0), (5, 3), (10, 0)])
    tri_angle = curvature_angle([(0, 0), (5, 5), (10, 0)])
    elapsed = time.perf_counter() - t0
    # rotated lines are straight only up to floating-point rounding of the coordinates
    ok = (axis_exact and worst_area < 1e-6 and worst_angle < 1e-6
          and tri_area == 15.0 and tri_angle == 15.0 and elapsed < 1)
    verdict("C2 curvature correctness", ok,
            f"posed straight max area {worst_area:.1e} px^2 / angle {worst_angle:.1e} deg, "
            f"triangles {tri_area} px^2 / {tri_angle} deg, {elapsed:.2f} s")
    assert ok


def test_c3_ivt_recovery(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    dt = 1000.0 / 300.0
    hits = total = 0
    while total < 1000:
        amp_deg = rng.uniform(2, 30)
        duration = 2.2 * amp_deg + 21 + rng.uniform(-3, 3)
        angle = rng.uniform(-np.pi, np.pi)
        start = np.array([1280.0, 800.0]) - 0.5 * amp_deg * PX_PER_DEG * np.array([np.cos(angle), np.sin(angle)])
        end = start + amp_deg * PX_PER_DEG * np.array([np.cos(angle), np.sin(angle)])
        crossing = minjerk_crossings(amp_deg * PX_PER_DEG, duration)
        if crossing is None:
            continue
        t, xy, onset, _ = minjerk_trace(start, end, duration, t0=rng.uniform(0, dt))
        total += 1
        sacc, _ = segment(make_stream(xy, t0=t[0]))
        if len(sacc) != 1:
            continue
        t_on, t_off = onset + crossing[0], onset + crossing[1]
        # expected bounds: last sample at or below threshold on each side
        exp_on = int(np.floor((t_on - t[0]) / dt))
        exp_off = int(np.ceil((t_off - t[0]) / dt))
        s = sacc[0]
        hits += abs(s.start_idx - exp_on) <= 2 and abs(s.end_idx - exp_off) <= 2
    elapsed = time.perf_counter() - t0
    rate = hits / total
    ok = rate >= 0.99 and elapsed < 30
    verdict("C3 I-VT onset/offset recovery", ok, f"{hits}/{total} within +-2 samples ({100 * rate:.1f}%), {elapsed:.1f} s")
    assert ok


def test_c4_translation_oracle(verdict):
    t0 = time.perf_counter()
    s = generate_session(SimConfig(rng_seed=4, distortion="translation", noise_sd_deg=0.0,
                                   fixation_jitter_deg=0.0, natural_curve_fraction=0.0))
    ps = process_session(s)
    grid = calibrate(ps.saccades, geom=GEOM)
    before = accuracy(s, ps.fixations, None, ps.stream).mean_error_deg
    after = accuracy(s, ps.fixations, grid, ps.stream).mean_error_deg
    oracle = WarpGrid(grid.origin, grid.quad_px, np.full_like(grid.dx, -30.0), np.zeros_like(grid.dy), grid.smoothing_kernel)
    after_oracle = accuracy(s, ps.fixations, oracle, ps.stream).mean_error_deg
    reduction = (before - after) / before
    oracle_reduction = (before - after_oracle) / before
    elapsed = time.perf_counter() - t0
    ok = len(ps.saccades) >= 100 and reduction >= 0.8 * oracle_reduction and elapsed < 60
    verdict("C4 translation oracle", ok,
            f"{len(ps.saccades)} saccades, error {before:.4f} -> {after:.4f} deg, reduction {100 * reduction:.1f}% "
            f"vs oracle {100 * oracle_reduction:.1f}% (need >= 80% of it), {elapsed:.1f} s")
    assert ok


def test_c5_smooth_field_end_to_end(verdict):
    t0 = time.perf_counter()
    suite = generate_suite(10, SimConfig(natural_curve_fraction=0.2), seed=0)
    res = loso_harness(suite)
    elapsed = time.perf_counter() - t0
    base_dev = max(abs(o.reports["all"].before.mean_error_deg - POSE_BASELINE_DEG[o.session_id.split("_")[-1]])
                   for o in res.sessions)
    pooled = res.pooled["selected"].improvement_pct
    frac = res.fraction_improved("selected")
    ok = len(res.sessions) == 30 and base_dev <= 0.05 and pooled > 0 and frac >= 0.7 and elapsed < 300
    table = ", ".join(f"{c} {res.pooled[c].improvement_pct:.2f}%" for c in ("n50", "n100", "all", "selected"))
    verdict("C5 smooth-field LOSO", ok,
            f"baseline max deviation {base_dev:.3f} deg, pooled {table}, "
            f"participants improved {100 * frac:.0f}%, {elapsed:.0f} s")
    assert ok


def test_c6_selection_efficacy(verdict):
    t0 = time.perf_counter()
    suite = generate_suite(10, SimConfig(natural_curve_fraction=0.2), seed=0, poses=("none",))
    prepared = prepare(suite)
    planted_total = planted_unsuitable = 0
    for group in prepared.values():
        for p in group:
            flags = p.ps.planted
            labels = np.array([lab.label == UNSUITABLE for lab in p.labels])
            planted_total += int(flags.sum())
            planted_unsuitable += int((labels & flags).sum())
    label_rate = planted_unsuitable / planted_total
    correct = count = 0
    pids = sorted(prepared)
    for pid in pids:
        train_ps = [p.ps for other in pids if other != pid for p in prepared[other]]
        X_train = np.vstack([ps.X for ps in train_ps])
        y_train = (~np.concatenate([ps.planted for ps in train_ps])).astype(int)
        data = [LabeledSaccade(None, SUITABLE if y else UNSUITABLE, index=i) for i, y in enumerate(y_train)]
        keep = [d.index for d in downsample_majority(data, 0)]
        forest = SaccadeForestClassifier(n_trees=20, attrs_per_tree=5, max_depth=50).fit(X_train[keep], y_train[keep])
        for p in prepared[pid]:
            pred = forest.predict(p.ps.X)
            correct += int((pred == (~p.ps.planted).astype(int)).sum())
            count += len(pred)
    acc = correct / count
    elapsed = time.perf_counter() - t0
    ok = label_rate >= 0.8 and acc >= 0.85 and elapsed < 120
    verdict("C6 selection efficacy", ok,
            f"planted labeled unsuitable {planted_unsuitable}/{planted_total} ({100 * label_rate:.1f}%), "
            f"held-out forest accuracy {100 * acc:.1f}% (balanced training), {elapsed:.0f} s")
    assert ok


def _chain(root):
    root.mkdir()
    steps = [
        ["simulate", "--out", str(root / "suite"), "--participants", "2", "--traversals", "2",
         "--poses", "none,large", "--seed", "3"],
        ["label", str(root / "suite" / "p00"), "--out", str(root / "labels.csv")],
        ["train-selector", str(root / "labels.csv"), "--out", str(root / "forest.json")],
        ["calibrate", str(root / "suite" / "p01" / "s0_none"), "--forest", str(root / "forest.json"),
         "--out", str(root / "warp.json")],
        ["evaluate", str(root / "suite" / "p01" / "s0_none"), "--warp", str(root / "warp.json"),
         "--out", str(root / "report.json"), "--csv", str(root / "map.csv")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c7_determinism(tmp_path, verdict):
    t0 = time.perf_counter()
    a = _chain(tmp_path / "a")
    b = _chain(tmp_path / "b")
    differing = [str(k) for k in a if a[k] != b.get(k)]
    ok = a.keys() == b.keys() and not differing and len(a) >= 14
    verdict("C7 determinism", ok, f"{len(a)} files compared, {len(differing)} differ, {time.perf_counter() - t0:.1f} s")
    assert ok


def test_c8_serialization_round_trips(tmp_path, smooth_session, verdict):
    ps = process_session(smooth_session)
    labels = [LabeledSaccade(None, UNSUITABLE if f else SUITABLE) for f in ps.planted]
    y = np.array([lab.label == SUITABLE for lab in labels], dtype=int)
    forest = SaccadeForestClassifier(random_state=1).fit(ps.X, y)
    io.dump_json(forest.to_dict(), tmp_path / "forest.json")
    forest2 = io.load_artifact(tmp_path / "forest.json", SaccadeForestClassifier.from_dict)
    X = np.vstack([ps.X, np.where(np.random.default_rng(0).random(ps.X.shape) < 0.1, np.nan, ps.X)])
    forest_same = (np.array_equal(forest.predict(X), forest2.predict(X))
                   and np.array_equal(forest.predict_proba(X), forest2.predict_proba(X))
                   and np.array_equal(forest.feature_importances_, forest2.feature_importances_))

    grid = calibrate(ps.saccades, forest, geom=GEOM, stimulus=smooth_session.stimulus)
    io.dump_json(grid.to_dict(), tmp_path / "warp.json")
    grid2 = io.load_artifact(tmp_path / "warp.json", WarpGrid.from_dict)
    pts = np.random.default_rng(1).uniform(-50, GEOM.size[0] + 50, (5000, 2))
    grid_same = (np.array_equal(grid.dx, grid2.dx) and np.array_equal(grid.dy, grid2.dy)
                 and np.array_equal(apply(grid, pts), apply(grid2, pts)))
    again = json.loads(json.dumps(grid2.to_dict())) == json.loads((tmp_path / "warp.json").read_text())
    ok = forest_same and grid_same and again
    verdict("C8 serialization round-trips", ok,
            f"forest.json identical predictions: {forest_same}, warp.json identical displacements: {grid_same}")
    assert ok
