"""File formats: MatrixMarket (coordinate and array), CSV features and requests."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import scipy.io

from .data import FeatureMatrix, ObservedMatrix, SyntheticInstance
from .errors import InputError, ParameterError

COORDINATE_HEADER = "%%MatrixMarket matrix coordinate real general"
ARRAY_HEADER = "%%MatrixMarket matrix array real general"


def _data_lines(path):
    """Yield ``(line_number, stripped_line)`` skipping the banner, comments and blanks."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if lineno == 1:
                yield lineno, s
                continue
            if not s or s.startswith("%"):
                continue
            yield lineno, s


def read_observed(path) -> ObservedMatrix:
    """Read a coordinate MatrixMarket file (1-based) into an :class:`ObservedMatrix`.

    Errors name the file and the offending line.
    """
    path = Path(path)
    try:
        lines = _data_lines(path)
        lineno, banner = next(lines, (1, ""))
    except OSError as exc:
        raise InputError(f"cannot read file: {exc.strerror}", path) from exc
    if banner.lower().split() != COORDINATE_HEADER.lower().split():
        raise InputError(f"expected header '{COORDINATE_HEADER}'", path, lineno)
    try:
        lineno, size = next(lines)
    except StopIteration:
        raise InputError("missing size line", path, lineno + 1) from None
    try:
        n, m, nnz = (int(x) for x in size.split())
    except ValueError:
        raise InputError("size line must be 'rows cols entries'", path, lineno) from None
    if n < 1 or m < 1 or nnz < 0:
        raise InputError("dimensions must be positive", path, lineno)

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    seen = 0
    where = {}
    for lineno, line in lines:
        parts = line.split()
        if seen >= nnz:
            raise InputError(f"more entries than the {nnz} declared", path, lineno)
        if len(parts) != 3:
            raise InputError("entry must be 'row col value'", path, lineno)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise InputError("entry must be 'row col value'", path, lineno) from None
        if not (1 <= i <= n and 1 <= j <= m):
            raise InputError(f"index ({i}, {j}) out of bounds for {n} x {m}", path, lineno)
        if not np.isfinite(v):
            raise InputError("value must be finite", path, lineno)
        if (i, j) in where:
            raise InputError(f"duplicate entry ({i}, {j}), first on line {where[(i, j)]}",
                             path, lineno)
        where[(i, j)] = lineno
        rows[seen], cols[seen], vals[seen] = i - 1, j - 1, v
        seen += 1
    if seen != nnz:
        raise InputError(f"declared {nnz} entries but found {seen}", path)
    return ObservedMatrix.from_triplets(rows, cols, vals, (n, m))


def write_observed(path, obs: ObservedMatrix):
    e = obs.entries()
    with open(path, "w") as fh:
        fh.write(COORDINATE_HEADER + "\n")
        fh.write(f"{obs.n_rows} {obs.n_cols} {obs.omega_size}\n")
        for i, j, v in zip(e.rows, e.cols, e.values):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def write_dense(path, array):
    """Dense matrix as MatrixMarket array format, or CSV when the suffix is .csv."""
    path = Path(path)
    array = np.asarray(array, dtype=np.float64)
    if path.suffix.lower() == ".csv":
        np.savetxt(path, array, delimiter=",", fmt="%.17g")
    else:
        scipy.io.mmwrite(str(path), array, field="real", precision=17)


def read_dense(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv_matrix(path)
    try:
        return np.asarray(scipy.io.mmread(str(path)))
    except (OSError, ValueError) as exc:
        raise InputError(str(exc), path) from exc


def read_csv_matrix(path) -> np.ndarray:
    rows = []
    width = None
    try:
        with open(path, newline="") as fh:
            for lineno, rec in enumerate(csv.reader(fh), start=1):
                if not rec or all(not c.strip() for c in rec):
                    continue
                try:
                    row = [float(c) for c in rec]
                except ValueError:
                    raise InputError("non-numeric value", path, lineno) from None
                if width is None:
                    width = len(row)
                elif len(row) != width:
                    raise InputError(f"expected {width} columns, got {len(row)}", path, lineno)
                rows.append(row)
    except OSError as exc:
        raise InputError(f"cannot read file: {exc.strerror}", path) from exc
    if not rows:
        raise InputError("empty matrix", path)
    return np.array(rows)


def read_features(path, n_cols=None) -> FeatureMatrix:
    """``p x m`` feature CSV without a header."""
    data = read_csv_matrix(path)
    if n_cols is not None and data.shape[1] != n_cols:
        raise InputError(f"feature matrix has {data.shape[1]} columns, expected {n_cols}", path)
    try:
        return FeatureMatrix.dense(data)
    except ParameterError as exc:
        raise InputError(str(exc), path) from exc


def write_features(path, B: FeatureMatrix):
    np.savetxt(path, B.to_dense(), delimiter=",", fmt="%.17g")


def read_requests(path, shape=None):
    """``(rows, cols)`` 0-based arrays from a CSV of 1-based ``row,col`` pairs."""
    rows, cols = [], []
    try:
        with open(path, newline="") as fh:
            for lineno, rec in enumerate(csv.reader(fh), start=1):
                if not rec or all(not c.strip() for c in rec):
                    continue
                if len(rec) < 2:
                    raise InputError("request must be 'row,col'", path, lineno)
                try:
                    i, j = int(rec[0]), int(rec[1])
                except ValueError:
                    if lineno == 1:
                        continue  # header
                    raise InputError("request must be 'row,col'", path, lineno) from None
                if shape is not None and not (1 <= i <= shape[0] and 1 <= j <= shape[1]):
                    raise InputError(f"index ({i}, {j}) out of bounds for {shape[0]} x {shape[1]}",
                                     path, lineno)
                rows.append(i - 1)
                cols.append(j - 1)
    except OSError as exc:
        raise InputError(f"cannot read file: {exc.strerror}", path) from exc
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)


def write_predictions(path, rows, cols, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for i, j, v in zip(rows, cols, values):
            w.writerow([int(i) + 1, int(j) + 1, repr(float(v))])


def write_trace(path, traces):
    """Per-step descent trace; a ``block`` column is added when there are several."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        blocked = len(traces) > 1
        w.writerow((["block"] if blocked else []) + ["t", "eta", "m_t", "n_t", "wall_ms"])
        for b, trace in enumerate(traces):
            for s in trace:
                w.writerow(([b] if blocked else []) + [s.t, repr(s.eta), s.m_t, s.n_t,
                                                         f"{s.wall_ms:.3f}"])


def save_instance(directory, inst: SyntheticInstance):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_dense(directory / "truth.mtx", inst.truth)
    write_observed(directory / "observed.mtx", inst.observed)
    if not inst.features.is_identity:
        write_features(directory / "features.csv", inst.features)
    (directory / "meta.json").write_text(json.dumps(inst.params, indent=2) + "\n")


def load_instance(directory) -> SyntheticInstance:
    directory = Path(directory)
    params = json.loads((directory / "meta.json").read_text())
    truth = read_dense(directory / "truth.mtx")
    observed = read_observed(directory / "observed.mtx")
    feat_path = directory / "features.csv"
    features = read_features(feat_path) if feat_path.exists() else FeatureMatrix.identity(truth.shape[1])
    return SyntheticInstance(truth, observed, features, params)
