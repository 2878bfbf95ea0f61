"""File formats: gaze/events CSV, JSON artifacts, labeled-saccade tables."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Iterator, Optional, TextIO

import numpy as np

from .attributes import ATTRIBUTE_NAMES, SaccadeAttributes
from .geometry import DEFAULT_GEOMETRY, ScreenGeometry
from .selection import SUITABLE, UNSUITABLE, LabeledSaccade
from .stream import GazeStream, SessionRecord, StimulusEvent, StimulusLog, TrueSaccade

GAZE_HEADER = ["t_ms", "x_px", "y_px", "valid"]
EVENTS_HEADER = ["t_ms", "kind", "x_px", "y_px", "row", "col"]
SCHEMA_VERSION = "1.0"


class InputError(ValueError):
    """Malformed input file; carries a location for diagnostics."""

    def __init__(self, message: str, path=None, line: Optional[int] = None, column: Optional[int] = None):
        self.path = None if path is None else str(path)
        self.line = line
        self.column = column
        self.message = message
        loc = ":".join(str(v) for v in (self.path, line, column) if v is not None)
        super().__init__(f"{loc}: {message}" if loc else message)

    def to_dict(self) -> dict:
        return {"error": "malformed_input", "message": self.message, "path": self.path,
                "line": self.line, "column": self.column}


def fmt(v: float) -> str:
    return f"{v:.6f}"


# CSV ------------------------------------------------------------------------

def _rows(fh: TextIO, header: list, path) -> Iterator[tuple[int, list]]:
    reader = csv.reader(fh)
    try:
        first = next(reader)
    except StopIteration:
        raise InputError("empty file, header required", path, 1, 1) from None
    if [c.strip() for c in first] != header:
        raise InputError(f"expected header {','.join(header)}", path, 1, 1)
    for row in reader:
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise InputError(f"expected {len(header)} fields, got {len(row)}", path, reader.line_num, 1)
        yield reader.line_num, row


def _num(text: str, path, line: int, col: int, integer: bool = False) -> float:
    try:
        v = float(text)
    except ValueError:
        raise InputError(f"not a number: {text!r}", path, line, col) from None
    if integer:
        if not math.isfinite(v) or v != int(v):
            raise InputError(f"not an integer: {text!r}", path, line, col)
        return int(v)
    return v


def parse_gaze_row(row: list, path=None, line: int = 0) -> tuple[float, float, float, bool]:
    t = _num(row[0], path, line, 1)
    if not math.isfinite(t):
        raise InputError("timestamp must be finite", path, line, 1)
    x = _num(row[1], path, line, 2)
    y = _num(row[2], path, line, 3)
    flag = row[3].strip()
    if flag not in ("0", "1"):
        raise InputError(f"valid must be 0 or 1, got {flag!r}", path, line, 4)
    return t, x, y, flag == "1"


def format_gaze_row(t: float, x: float, y: float, valid: bool) -> str:
    if not valid:
        x = x if math.isfinite(x) else 0.0
        y = y if math.isfinite(y) else 0.0
    return f"{fmt(t)},{fmt(x)},{fmt(y)},{int(bool(valid))}\n"


def read_gaze(path, rate_hz: float = 300.0, geom: ScreenGeometry = DEFAULT_GEOMETRY) -> GazeStream:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_gaze_fh(fh, rate_hz, geom, path)


def read_gaze_fh(fh: TextIO, rate_hz=300.0, geom=DEFAULT_GEOMETRY, path="<stdin>") -> GazeStream:
    t, xy, valid = [], [], []
    prev = -math.inf
    for line, row in _rows(fh, GAZE_HEADER, path):
        ti, x, y, v = parse_gaze_row(row, path, line)
        if ti <= prev:
            raise InputError("timestamps must be strictly increasing", path, line, 1)
        prev = ti
        t.append(ti)
        xy.append((x, y))
        valid.append(v)
    if not t:
        raise InputError("no samples", path, 2, 1)
    try:
        return GazeStream(np.array(t), np.array(xy), np.array(valid), rate_hz, geom)
    except ValueError as e:
        raise InputError(str(e), path) from None


def write_gaze(stream: GazeStream, path_or_fh) -> None:
    def _write(fh):
        fh.write(",".join(GAZE_HEADER) + "\n")
        for t, (x, y), v in zip(stream.t, stream.xy, stream.valid):
            fh.write(format_gaze_row(t, x, y, v))
    _open_write(path_or_fh, _write)


def _open_write(path_or_fh, fn) -> None:
    if hasattr(path_or_fh, "write"):
        fn(path_or_fh)
    else:
        with open(path_or_fh, "w", encoding="utf-8", newline="\n") as fh:
            fn(fh)


def read_events(path) -> StimulusLog:
    events = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line, row in _rows(fh, EVENTS_HEADER, path):
            kind = row[1].strip()
            if kind not in ("appear", "vanish"):
                raise InputError(f"kind must be appear or vanish, got {kind!r}", path, line, 2)
            events.append(StimulusEvent(_num(row[0], path, line, 1), kind, _num(row[2], path, line, 3),
                                        _num(row[3], path, line, 4), _num(row[4], path, line, 5, True),
                                        _num(row[5], path, line, 6, True)))
    try:
        return StimulusLog(tuple(events))
    except ValueError as e:
        raise InputError(str(e), path) from None


def write_events(log: StimulusLog, path) -> None:
    def _write(fh):
        fh.write(",".join(EVENTS_HEADER) + "\n")
        for e in log.events:
            fh.write(f"{fmt(e.t)},{e.kind},{fmt(e.x)},{fmt(e.y)},{e.row},{e.col}\n")
    _open_write(path, _write)


def write_table(rows: Iterable[list], path_or_fh) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerows(rows)
    _open_write(path_or_fh, _write)


# JSON -----------------------------------------------------------------------

def dump_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_json(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(e.msg, path, e.lineno, e.colno) from None
    if not isinstance(data, dict):
        raise InputError("expected a JSON object", path, 1, 1)
    version = str(data.get("schema_version", ""))
    try:
        major = int(version.split(".")[0])
    except ValueError:
        raise InputError(f"missing or bad schema_version {version!r}", path, 1, 1) from None
    if major > int(SCHEMA_VERSION.split(".")[0]):
        raise InputError(f"unsupported schema_version {version}", path, 1, 1)
    return data


def load_artifact(path, factory):
    """Read a JSON artifact and build it with ``factory``; structural problems become InputError."""
    data = load_json(path)
    try:
        return factory(data)
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise InputError(f"invalid content: {e}", path) from None


# sessions -------------------------------------------------------------------

def session_meta(session: SessionRecord) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "session_id": session.session_id,
        "participant_id": session.participant_id,
        "pose_label": session.pose_label,
        "rate_hz": session.stream.rate_hz,
        "geometry": session.geom.to_dict(),
        "true_saccades": [
            {"onset_t": s.onset_t, "offset_t": s.offset_t, "start": list(s.start), "end": list(s.end),
             "curved": s.curved, "bump_px": s.bump_px}
            for s in session.true_saccades
        ],
    }


def write_session(session: SessionRecord, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_gaze(session.stream, d / "gaze.csv")
    write_events(session.stimulus, d / "events.csv")
    if session.truth_stream is not None:
        write_gaze(session.truth_stream, d / "truth.csv")
    if session.distortion is not None:
        dump_json(session.distortion.to_dict(), d / "field.json")
    dump_json(session_meta(session), d / "session.json")
    return d


def read_session(directory, geom: Optional[ScreenGeometry] = None) -> SessionRecord:
    """Load a session directory (gaze.csv, events.csv, optional session.json/truth.csv)."""
    d = Path(directory)
    if not (d / "gaze.csv").is_file():
        raise InputError("missing gaze.csv", d)
    meta = load_json(d / "session.json") if (d / "session.json").is_file() else {}
    try:
        rate = float(meta.get("rate_hz", 300.0))
        if geom is None:
            geom = ScreenGeometry.from_dict(meta["geometry"]) if "geometry" in meta else DEFAULT_GEOMETRY
        truth_sacc = [TrueSaccade(s["onset_t"], s["offset_t"], tuple(s["start"]), tuple(s["end"]),
                                  bool(s["curved"]), s.get("bump_px", 0.0))
                      for s in meta.get("true_saccades", [])]
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"invalid session.json: {e}", d / "session.json") from None
    stream = read_gaze(d / "gaze.csv", rate, geom)
    if not (d / "events.csv").is_file():
        raise InputError("missing events.csv", d)
    stimulus = read_events(d / "events.csv")
    truth = read_gaze(d / "truth.csv", rate, geom) if (d / "truth.csv").is_file() else None
    distortion = None
    if (d / "field.json").is_file():
        from .simulator import DistortionField

        distortion = load_artifact(d / "field.json", DistortionField.from_dict)
    return SessionRecord(stream, stimulus, geom, truth, distortion, meta.get("pose_label", "none"),
                         meta.get("session_id", d.name), meta.get("participant_id", d.parent.name), truth_sacc)


def find_sessions(root) -> list[Path]:
    """Session directories (those holding a gaze.csv) below ``root``, sorted."""
    root = Path(root)
    if (root / "gaze.csv").is_file():
        return [root]
    return sorted(p.parent for p in root.rglob("gaze.csv"))


# labeled saccades -----------------------------------------------------------

LABEL_HEADER = ["session_id", "participant_id", "index", *ATTRIBUTE_NAMES, "label"]


def labels_rows(labels: Iterable[LabeledSaccade]) -> list[list]:
    rows = [list(LABEL_HEADER)]
    for lab in labels:
        vals = ["" if v is None else (str(v) if isinstance(v, int) else repr(float(v)))
                for v in (getattr(lab.attributes, n) for n in ATTRIBUTE_NAMES)]
        rows.append([lab.session_id, lab.participant_id, lab.index, *vals, lab.label])
    return rows


def read_labels(path) -> list[LabeledSaccade]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line, row in _rows(fh, LABEL_HEADER, path):
            vals = {}
            for k, name in enumerate(ATTRIBUTE_NAMES):
                text = row[3 + k].strip()
                col = 4 + k
                if name == "latency_ms" and text == "":
                    vals[name] = None
                elif name == "turns":
                    vals[name] = _num(text, path, line, col, True)
                else:
                    vals[name] = _num(text, path, line, col)
            label = row[-1].strip()
            if label not in (SUITABLE, UNSUITABLE):
                raise InputError(f"label must be suitable or unsuitable, got {label!r}", path, line, len(row))
            out.append(LabeledSaccade(SaccadeAttributes(**vals), label, row[0], row[1],
                                      _num(row[2], path, line, 3, True)))
    return out


def saccade_rows(saccades, X) -> list[list]:
    rows = [["index", "onset_t", "offset_t", "start_x", "start_y", "end_x", "end_y", *ATTRIBUTE_NAMES]]
    for i, (s, x) in enumerate(zip(saccades, X)):
        rows.append([i, fmt(s.onset_t), fmt(s.offset_t), fmt(s.start[0]), fmt(s.start[1]),
                     fmt(s.end[0]), fmt(s.end[1]), *["" if np.isnan(v) else repr(float(v)) for v in x]])
    return rows


def fixation_rows(fixations) -> list[list]:
    rows = [["start_t", "end_t", "x_px", "y_px"]]
    for f in fixations:
        rows.append([fmt(f.start_t), fmt(f.end_t), fmt(f.centroid[0]), fmt(f.centroid[1])])
    return rows


def to_text(rows) -> str:
    buf = io.StringIO()
    write_table(rows, buf)
    return buf.getvalue()
