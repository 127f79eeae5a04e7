"""Study data container, CSV ingestion and validation.

Two files describe a study:

``subjects.csv``
    header ``id,treatment,outcome,<cov1>,<cov2>,...``
``mediator.csv``
    long format with header ``id,time,value``; every subject observed on the
    same time points.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

REQUIRED_SUBJECT_COLUMNS = ("id", "treatment", "outcome")


class DataError(ValueError):
    """Raised when an input file violates the study data contract."""


@dataclass(frozen=True)
class StudyData:
    """One study: scalar per-subject data plus mediator curves on a shared grid.

    The design matrix used everywhere downstream is ``[1, A, X]`` with the
    covariate columns in file order.
    """

    subject_ids: Tuple[str, ...]
    treatment: np.ndarray
    covariates: np.ndarray
    outcome: np.ndarray
    grid: np.ndarray
    mediator: np.ndarray
    covariate_names: Tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return len(self.subject_ids)

    @property
    def n_time(self) -> int:
        return len(self.grid)

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def design(self, treatment=None) -> np.ndarray:
        """Return ``Z = [1, A, X]``, optionally with the treatment column overridden."""
        a = self.treatment if treatment is None else np.broadcast_to(treatment, (self.n,))
        return np.column_stack([np.ones(self.n), a, self.covariates])

    def design_labels(self) -> List[str]:
        return ["intercept", "treatment", *self.covariate_names]


@dataclass
class ValidationReport:
    errors: List[Tuple[int, str, str]] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __str__(self) -> str:
        lines = [f"row {r}, {f}: {m}" for r, f, m in self.errors]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines) if lines else "ok"


def _parse_int(text: str) -> int | None:
    try:
        value = float(text)
    except ValueError:
        return None
    if not np.isfinite(value) or value != int(value):
        return None
    return int(value)


def load_subjects(path):
    """Read ``subjects.csv``.

    Returns
    -------
    ids : list of str
    treatment : (n,) int array
    covariates : (n, p) float array
    outcome : (n,) int array
    covariate_names : list of str
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for col in REQUIRED_SUBJECT_COLUMNS:
            if col not in header:
                raise DataError(f"{path}: missing required column '{col}'")
        idx = {name: header.index(name) for name in REQUIRED_SUBJECT_COLUMNS}
        cov_names = [h for h in header if h not in REQUIRED_SUBJECT_COLUMNS]
        cov_idx = [header.index(h) for h in cov_names]

        ids, a, y, x = [], [], [], []
        seen = set()
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_no} has {len(row)} fields, expected {len(header)}")
            sid = row[idx["id"]].strip()
            if sid in seen:
                raise DataError(f"{path}: row {row_no}: duplicate id '{sid}'")
            seen.add(sid)
            treat = _parse_int(row[idx["treatment"]])
            if treat not in (0, 1):
                raise DataError(f"{path}: row {row_no}: non-binary treatment '{row[idx['treatment']]}'")
            out = _parse_int(row[idx["outcome"]])
            if out is None or out < 0:
                raise DataError(
                    f"{path}: row {row_no}: outcome must be a nonnegative integer, got '{row[idx['outcome']]}'"
                )
            try:
                covs = [float(row[j]) for j in cov_idx]
            except ValueError:
                raise DataError(f"{path}: row {row_no}: non-numeric covariate") from None
            if not all(np.isfinite(covs)):
                raise DataError(f"{path}: row {row_no}: missing covariate value")
            ids.append(sid)
            a.append(treat)
            y.append(out)
            x.append(covs)

    X = np.asarray(x, dtype=float).reshape(len(ids), len(cov_names))
    return ids, np.asarray(a, dtype=int), X, np.asarray(y, dtype=int), cov_names


def rescale_grid(times) -> np.ndarray:
    """Affine map of sorted unique times onto [0, 1]."""
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        return np.zeros_like(times)
    lo, hi = times[0], times[-1]
    return (times - lo) / (hi - lo)


def load_mediator_long(path, ids: Sequence[str]):
    """Read ``mediator.csv`` in long format and pivot it to an ``n x T`` matrix.

    Rows of the returned matrix follow the order of ``ids``. Times are rescaled
    onto [0, 1].
    """
    path = Path(path)
    pos = {sid: i for i, sid in enumerate(ids)}
    records = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in (reader.fieldnames or [])]
        if set(fields) != {"id", "time", "value"}:
            raise DataError(f"{path}: header must be 'id,time,value'")
        reader.fieldnames = fields
        for row_no, row in enumerate(reader, start=1):
            sid = row["id"].strip()
            if sid not in pos:
                raise DataError(f"{path}: row {row_no}: unknown id '{sid}'")
            try:
                t = float(row["time"])
                v = float(row["value"])
            except (TypeError, ValueError):
                raise DataError(f"{path}: row {row_no}: non-numeric time or value") from None
            if not (np.isfinite(t) and np.isfinite(v)):
                raise DataError(f"{path}: row {row_no}: missing mediator value")
            per_subject = records.setdefault(sid, {})
            if t in per_subject:
                raise DataError(f"{path}: row {row_no}: duplicate (id, time) = ({sid}, {t})")
            per_subject[t] = v

    times = sorted({t for rec in records.values() for t in rec})
    for sid in ids:
        rec = records.get(sid)
        if rec is None or len(rec) != len(times):
            raise DataError(f"{path}: ragged grid: subject '{sid}' is missing time points")
    M = np.array([[records[sid][t] for t in times] for sid in ids], dtype=float).reshape(len(ids), len(times))
    return rescale_grid(times), M


def load_study(subjects_path, mediator_path) -> StudyData:
    ids, a, X, y, cov_names = load_subjects(subjects_path)
    grid, M = load_mediator_long(mediator_path, ids)
    study = StudyData(tuple(ids), a, X, y, grid, M, tuple(cov_names))
    report = validate(study)
    if not report.ok:
        raise DataError(str(report))
    return study


def _atomic_write_rows(path: Path, header, rows) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def write_study(study: StudyData, directory, prefix: str = "") -> Tuple[Path, Path]:
    """Write ``subjects.csv`` and ``mediator.csv``; floats use shortest round-trip repr."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = list(study.covariate_names) or [f"x{k + 1}" for k in range(study.p)]
    subj = directory / f"{prefix}subjects.csv"
    _atomic_write_rows(
        subj,
        ["id", "treatment", "outcome", *names],
        (
            [sid, int(study.treatment[i]), int(study.outcome[i]), *map(repr, map(float, study.covariates[i]))]
            for i, sid in enumerate(study.subject_ids)
        ),
    )
    med = directory / f"{prefix}mediator.csv"
    grid = [repr(float(t)) for t in study.grid]
    _atomic_write_rows(
        med,
        ["id", "time", "value"],
        (
            [sid, grid[j], repr(float(study.mediator[i, j]))]
            for i, sid in enumerate(study.subject_ids)
            for j in range(study.n_time)
        ),
    )
    return subj, med


def validate(study: StudyData) -> ValidationReport:
    """Check every StudyData invariant; violations become report entries."""
    rep = ValidationReport()
    n = len(study.subject_ids)
    a = np.asarray(study.treatment)
    y = np.asarray(study.outcome)
    X = np.asarray(study.covariates)
    grid = np.asarray(study.grid, dtype=float)
    M = np.asarray(study.mediator)

    for name, arr in (("treatment", a), ("outcome", y)):
        if arr.shape != (n,):
            rep.errors.append((-1, name, f"expected length {n}, got shape {arr.shape}"))
    if X.ndim != 2 or X.shape[0] != n:
        rep.errors.append((-1, "covariates", f"expected {n} rows, got shape {X.shape}"))
    if M.ndim != 2 or M.shape != (n, len(grid)):
        rep.errors.append((-1, "mediator", f"expected shape {(n, len(grid))}, got {M.shape}"))
    if len(set(study.subject_ids)) != n:
        rep.errors.append((-1, "subject_ids", "duplicate ids"))
    if rep.errors:
        return rep

    for i in np.flatnonzero(~np.isin(a, (0, 1))):
        rep.errors.append((int(i), "treatment", f"non-binary treatment {a[i]}"))
    y_f = y.astype(float)
    bad_y = ~np.isfinite(y_f) | (y_f < 0) | (y_f != np.round(y_f))
    for i in np.flatnonzero(bad_y):
        rep.errors.append((int(i), "outcome", f"outcome must be a nonnegative integer, got {y[i]}"))
    for i in np.flatnonzero(~np.isfinite(X).all(axis=1)):
        rep.errors.append((int(i), "covariates", "missing or nonfinite value"))
    for i in np.flatnonzero(~np.isfinite(M).all(axis=1)):
        rep.errors.append((int(i), "mediator", "missing or nonfinite value"))

    if len(grid) >= 2 and np.any(np.diff(grid) <= 0):
        rep.errors.append((-1, "grid", "grid not increasing"))
    if len(grid) and (grid[0] < 0 or grid[-1] > 1):
        rep.errors.append((-1, "grid", "grid outside [0, 1]"))
    if not np.isfinite(grid).all():
        rep.errors.append((-1, "grid", "nonfinite grid value"))

    if n and a.size and np.all(a == a[0]):
        rep.warnings.append("treatment is constant; effects are not identifiable")
    if n and np.all(y == 0):
        rep.warnings.append("all outcomes are zero")
    return rep
