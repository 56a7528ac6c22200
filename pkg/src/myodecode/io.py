"""On-disk formats for raw EMG, features, selections, models and reports.

All text formats are CSV with a single header row; binary formats are
little-endian.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .analysis import CategoryDecision, RmseReport, TrialScore
from .errors import CorruptionError, DataError
from .kalman import KalmanModel
from .selection import SelectionResult

MODEL_MAGIC = b"MKF1"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sIII")

RAW_DTYPE = lambda n_channels: np.dtype([("t", "<u8"), ("samples", "<f8", (n_channels,))])  # noqa: E731


def _loadtxt(path: Path, what: str, comments: str = "#") -> tuple[list[str], np.ndarray]:
    path = Path(path)
    try:
        with open(path) as fh:
            header = fh.readline()
            while header.startswith(comments):
                header = fh.readline()
            names = header.strip().split(",")
            data = np.loadtxt(fh, delimiter=",", comments=comments, ndmin=2)
    except FileNotFoundError:
        raise
    except ValueError as exc:
        raise DataError(f"{path}: malformed {what} file ({exc})") from exc
    if data.size and data.shape[1] != len(names):
        raise DataError(f"{path}: {data.shape[1]} columns but header names {len(names)}")
    if data.size == 0:
        data = np.zeros((0, len(names)))
    return names, data


# -- raw EMG --------------------------------------------------------------

def write_raw_csv(path, samples: np.ndarray, t0: int = 0):
    samples = np.asarray(samples, dtype=float)
    n, c = samples.shape
    header = ",".join(["t"] + [f"ch{i}" for i in range(c)])
    table = np.column_stack([np.arange(t0, t0 + n), samples])
    np.savetxt(path, table, fmt=["%d"] + ["%.6f"] * c, delimiter=",", header=header, comments="")


def read_raw_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(ticks, samples)``."""
    names, data = _loadtxt(path, "raw EMG")
    if names[0] != "t" or any(n != f"ch{i}" for i, n in enumerate(names[1:])):
        raise DataError(f"{path}: expected header t,ch0..chN")
    ticks = data[:, 0].astype(np.int64)
    _check_ticks(path, ticks)
    return ticks, np.ascontiguousarray(data[:, 1:])


def write_raw_bin(path, samples: np.ndarray, t0: int = 0):
    samples = np.asarray(samples, dtype=float)
    rec = np.empty(len(samples), dtype=RAW_DTYPE(samples.shape[1]))
    rec["t"] = np.arange(t0, t0 + len(samples))
    rec["samples"] = samples
    rec.tofile(path)


def read_raw_bin(path, n_channels: int = 32) -> tuple[np.ndarray, np.ndarray]:
    dtype = RAW_DTYPE(n_channels)
    size = Path(path).stat().st_size
    if size % dtype.itemsize:
        raise DataError(f"{path}: size {size} is not a whole number of {dtype.itemsize}-byte frames")
    rec = np.fromfile(path, dtype=dtype)
    ticks = rec["t"].astype(np.int64)
    _check_ticks(path, ticks)
    return ticks, np.ascontiguousarray(rec["samples"])


def _check_ticks(path, ticks):
    if len(ticks) > 1 and np.any(np.diff(ticks) <= 0):
        raise DataError(f"{path}: sample ticks are not strictly increasing")


def read_raw(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    return read_raw_bin(path) if path.suffix == ".bin" else read_raw_csv(path)


# -- kinematics -----------------------------------------------------------

def write_kinematics_csv(path, kinematics: np.ndarray, dof_names, rest=None):
    kinematics = np.asarray(kinematics, dtype=float)
    rest = np.zeros(len(kinematics), dtype=bool) if rest is None else np.asarray(rest, dtype=bool)
    header = ",".join(["k", *dof_names, "rest"])
    table = np.column_stack([np.arange(len(kinematics)), kinematics, rest.astype(int)])
    np.savetxt(path, table, fmt=["%d"] + ["%.9f"] * kinematics.shape[1] + ["%d"],
               delimiter=",", header=header, comments="")


def read_kinematics_csv(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    names, data = _loadtxt(path, "kinematics")
    if names[0] != "k" or names[-1] != "rest":
        raise DataError(f"{path}: expected header k,<dofs...>,rest")
    return names[1:-1], data[:, 1:-1], data[:, -1].astype(bool)


# -- features -------------------------------------------------------------

def write_features_csv(path, k: np.ndarray, features: np.ndarray, baseline_applied: bool):
    features = np.asarray(features, dtype=float)
    header = ",".join(["k"] + [f"f{i}" for i in range(features.shape[1])])
    with open(path, "w") as fh:
        fh.write(f"#baseline={'applied' if baseline_applied else 'raw'}\n")
        np.savetxt(fh, np.column_stack([k, features]),
                   fmt=["%d"] + ["%.6g"] * features.shape[1], delimiter=",", header=header, comments="")


def read_features_csv(path) -> tuple[np.ndarray, np.ndarray, bool]:
    with open(path) as fh:
        first = fh.readline().strip()
    if first not in ("#baseline=applied", "#baseline=raw"):
        raise DataError(f"{path}: missing '#baseline=applied|raw' header line")
    _, data = _loadtxt(path, "feature")
    return data[:, 0].astype(np.int64), data[:, 1:], first.endswith("applied")


def write_baseline_csv(path, means: np.ndarray, n_frames: int):
    with open(path, "w", newline="") as fh:
        fh.write(f"#n_frames={n_frames}\n")
        w = csv.writer(fh)
        w.writerow(["feature", "mean"])
        for i, v in enumerate(means):
            w.writerow([i, repr(float(v))])


def read_baseline_csv(path) -> tuple[np.ndarray, int]:
    with open(path) as fh:
        first = fh.readline().strip()
    if not first.startswith("#n_frames="):
        raise DataError(f"{path}: missing '#n_frames=' header line")
    _, data = _loadtxt(path, "baseline")
    return data[:, 1], int(first.split("=", 1)[1])


# -- selection ------------------------------------------------------------

def write_selection_csv(path, result: SelectionResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "feature_index", "score"])
        for step, (idx, score) in enumerate(zip(result.order, result.score_per_step)):
            w.writerow([step, idx, repr(float(score))])


def read_selection_csv(path) -> SelectionResult:
    names, data = _loadtxt(path, "selection")
    if names != ["step", "feature_index", "score"]:
        raise DataError(f"{path}: expected header step,feature_index,score")
    if len(data) and not np.array_equal(data[:, 0], np.arange(len(data))):
        raise CorruptionError(f"{path}: selection steps are not 0..n-1")
    return SelectionResult(tuple(int(i) for i in data[:, 1]), tuple(float(s) for s in data[:, 2]))


# -- Kalman model ---------------------------------------------------------

def model_to_bytes(model: KalmanModel) -> bytes:
    parts = [_MODEL_HEADER.pack(MODEL_MAGIC, model.D, model.k, MODEL_VERSION)]
    for m in (model.A, model.W, model.H, model.Q, model.P0):
        parts.append(np.ascontiguousarray(m, dtype="<f8").tobytes())
    return b"".join(parts)


def model_from_bytes(blob: bytes) -> KalmanModel:
    if len(blob) < _MODEL_HEADER.size:
        raise CorruptionError("model blob shorter than its header")
    magic, D, k, version = _MODEL_HEADER.unpack_from(blob)
    if magic != MODEL_MAGIC:
        raise CorruptionError(f"bad model magic {magic!r}")
    if version != MODEL_VERSION:
        raise CorruptionError(f"unsupported model version {version}")
    shapes = [(D, D), (D, D), (k, D), (k, k), (D, D)]
    need = _MODEL_HEADER.size + 8 * sum(r * c for r, c in shapes)
    if len(blob) != need:
        raise CorruptionError(f"model blob is {len(blob)} bytes, expected {need}")
    flat = np.frombuffer(blob, dtype="<f8", offset=_MODEL_HEADER.size)
    mats, pos = [], 0
    for r, c in shapes:
        mats.append(flat[pos: pos + r * c].reshape(r, c).copy())
        pos += r * c
    return KalmanModel(*mats)


def write_model(path, model: KalmanModel):
    Path(path).write_bytes(model_to_bytes(model))


def read_model(path) -> KalmanModel:
    return model_from_bytes(Path(path).read_bytes())


def write_model_csv(path, model: KalmanModel):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["matrix", "row", "col", "value"])
        for name in ("A", "W", "H", "Q", "P0"):
            m = getattr(model, name)
            for (r, c), v in np.ndenumerate(m):
                w.writerow([name, r, c, repr(float(v))])


def read_model_csv(path) -> KalmanModel:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cells: dict = {}
    for row in rows:
        cells.setdefault(row["matrix"], []).append((int(row["row"]), int(row["col"]), float(row["value"])))
    mats = []
    for name in ("A", "W", "H", "Q", "P0"):
        entries = cells.get(name, [])
        if not entries:
            raise CorruptionError(f"{path}: matrix {name} missing")
        shape = (max(e[0] for e in entries) + 1, max(e[1] for e in entries) + 1)
        m = np.zeros(shape)
        for r, c, v in entries:
            m[r, c] = v
        mats.append(m)
    return KalmanModel(*mats)


# -- reports --------------------------------------------------------------

REPORT_FIELDS = ["run", "condition", "trial", "category", "rmse"]


def write_report_csv(path, report: RmseReport):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_FIELDS)
        for t in report.per_trial:
            w.writerow([t.run, t.condition, t.trial, t.category, repr(t.rmse)])


def read_report_csv(path) -> RmseReport:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_FIELDS:
            raise DataError(f"{path}: expected header {','.join(REPORT_FIELDS)}")
        try:
            trials = [TrialScore(r["trial"], r["category"], float(r["rmse"]), int(r["run"]), r["condition"])
                      for r in reader]
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}: malformed report row ({exc})") from exc
    return RmseReport.from_trials(trials)


DECISION_FIELDS = ["category", "t", "p", "adjusted_p", "rejected", "outliers_dropped"]


def write_decisions_csv(path, decisions):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DECISION_FIELDS)
        for d in decisions:
            w.writerow([d.category, repr(d.t), repr(d.p), repr(d.adjusted_p), int(d.rejected),
                        ";".join(str(x) for x in d.outliers_dropped)])


def read_decisions_csv(path) -> list[CategoryDecision]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        CategoryDecision(r["category"], float(r["t"]), float(r["p"]), float(r["adjusted_p"]),
                         bool(int(r["rejected"])),
                         tuple(x for x in r["outliers_dropped"].split(";") if x))
        for r in rows
    ]


# -- manifest -------------------------------------------------------------

def write_manifest(path, entries: dict):
    lines = [f"{key}={entries[key]}" for key in sorted(entries)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{n}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
