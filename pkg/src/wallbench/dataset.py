"""Dataset model, split protocol, tensor layouts, feature scaling and file formats.

On-disk dataset layout (UTF-8, LF, floats written with 17 significant digits)::

    <dir>/conditions.csv   id,mach,aoa_deg,p_i,split
    <dir>/geometry.csv     point_id,x,y,z,nx,ny,nz
    <dir>/fields/<id>.csv  point_id,cp,cfx,cfy,cfz
    <dir>/manifest.json    {"format": ..., "version": ...}   (optional on read)

A submission directory holds ``fields/<id>.csv`` for every test condition.
"""

from __future__ import annotations

import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SubmissionError, ValidationError
from .flow import FlowCondition

__all__ = [
    "VARIABLES",
    "SurfaceGeometry",
    "WallField",
    "Dataset",
    "Scaler",
    "FORCED_TRAIN_MACHS",
    "split_dataset",
    "inner_split",
    "assemble_pointwise",
    "assemble_global",
    "fit_scaler",
    "save_dataset",
    "load_dataset",
    "save_submission",
    "load_submission",
]

VARIABLES = ("cp", "cfx", "cfy", "cfz")
FORCED_TRAIN_MACHS = (0.30, 0.82, 0.96)
N_TEST_PER_GROUP = 4

DATASET_FORMAT = "wallbench-dataset"
SUBMISSION_FORMAT = "wallbench-submission"
FORMAT_VERSION = 1

_COND_HEADER = "id,mach,aoa_deg,p_i,split"
_GEO_HEADER = "point_id,x,y,z,nx,ny,nz"
_FIELD_HEADER = "point_id,cp,cfx,cfy,cfz"
_FLOAT_FMT = "%.17g"


@dataclass(frozen=True, eq=False)
class SurfaceGeometry:
    coords: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        n = np.asarray(self.normals, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 3 or c.shape[0] == 0:
            raise ValidationError(f"coords must be (n_p>0, 3), got {c.shape}")
        if n.shape != c.shape:
            raise ValidationError(f"normals shape {n.shape} != coords shape {c.shape}")
        if not (np.isfinite(c).all() and np.isfinite(n).all()):
            raise ValidationError("geometry contains non-finite values")
        norms = np.linalg.norm(n, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-6)
        if bad.size:
            raise ValidationError(f"{bad.size} normals are not unit length (first point {bad[0]})")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "normals", n)

    @property
    def n_p(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True, eq=False)
class WallField:
    condition_id: str
    values: np.ndarray  # (n_p, 4): Cp, Cfx, Cfy, Cfz

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 4:
            raise ValidationError(f"field {self.condition_id}: values must be (n_p, 4), got {v.shape}")
        if not np.isfinite(v).all():
            raise ValidationError(f"field {self.condition_id}: contains non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(eq=False)
class Dataset:
    geometry: SurfaceGeometry
    conditions: list[FlowCondition]
    fields: dict[str, WallField]
    split: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ids = [c.id for c in self.conditions]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate condition ids in dataset")
        known = set(ids)
        for cid, f in self.fields.items():
            if cid not in known:
                raise ValidationError(f"field for unknown condition {cid!r}")
            if f.values.shape[0] != self.geometry.n_p:
                raise ValidationError(
                    f"field {cid} has {f.values.shape[0]} rows, geometry has {self.geometry.n_p}"
                )
        if self.split:
            unknown = sorted(set(self.split) - known)
            if unknown:
                raise ValidationError(f"split labels refer to unknown conditions: {unknown}")
            missing = sorted(known - set(self.split))
            if missing:
                raise ValidationError(f"conditions without split label: {missing}")
            bad = sorted({v for v in self.split.values()} - {"train", "test"})
            if bad:
                raise ValidationError(f"invalid split labels {bad}")

    @property
    def by_id(self) -> dict[str, FlowCondition]:
        return {c.id: c for c in self.conditions}

    def ids(self, label: str) -> list[str]:
        """Condition ids with split label ``label``, in dataset order."""
        return [c.id for c in self.conditions if self.split.get(c.id) == label]

    @property
    def train_ids(self) -> list[str]:
        return self.ids("train")

    @property
    def test_ids(self) -> list[str]:
        return self.ids("test")


# -- split protocol ----------------------------------------------------------

def _is_forced(mach: float) -> bool:
    return any(abs(mach - m) < 1e-9 for m in FORCED_TRAIN_MACHS)


def split_dataset(conditions: list[FlowCondition], seed: int) -> dict[str, str]:
    """Quasi-random 2:1 train/test split.

    Groups of equal (M, p_i) are visited in ascending (M, p_i) order. In each
    group the AoA are sorted ascending; for forced Mach numbers the first and
    last are removed from the candidates, then 4 candidate indices are drawn
    without replacement from a PCG64 generator seeded with ``seed``.
    """
    groups: dict[tuple[float, float], list[FlowCondition]] = defaultdict(list)
    for c in conditions:
        groups[(c.mach, c.p_i)].append(c)
    rng = np.random.Generator(np.random.PCG64(seed))
    split = {}
    for key in sorted(groups):
        members = sorted(groups[key], key=lambda c: c.aoa_deg)
        if len(members) != 12:
            raise ValidationError(
                f"incomplete group (M={key[0]}, p_i={key[1]}): {len(members)} conditions, expected 12"
            )
        candidates = np.arange(12)
        if _is_forced(key[0]):
            candidates = candidates[1:-1]
        test_idx = set(rng.choice(candidates, size=N_TEST_PER_GROUP, replace=False).tolist())
        for i, c in enumerate(members):
            split[c.id] = "test" if i in test_idx else "train"
    return split


def inner_split(train_ids: list[str], fraction: float = 0.75, seed: int = 0) -> tuple[list[str], list[str]]:
    """Deterministic inner-train / validation partition of the train ids."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n = len(train_ids)
    if n < 2:
        raise ValueError(f"need at least 2 train ids, got {n}")
    n_in = int(math.floor(fraction * n + 0.5))
    n_in = min(max(n_in, 1), n - 1)
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    keep = set(perm[:n_in].tolist())
    inner = [t for i, t in enumerate(train_ids) if i in keep]
    val = [t for i, t in enumerate(train_ids) if i not in keep]
    return inner, val


# -- tensor layouts -----------------------------------------------------------

def _stored(ds: Dataset, ids):
    missing = [i for i in ids if i not in ds.fields]
    if missing:
        raise ValidationError(f"no stored field for conditions: {missing}")
    return [ds.fields[i].values for i in ids]


def assemble_pointwise(ds: Dataset, ids: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """X (n_p*len(ids), 9) and Y (n_p*len(ids), 4), condition-major rows."""
    Y = np.concatenate(_stored(ds, ids), axis=0) if ids else np.empty((0, 4))
    X = pointwise_inputs(ds.geometry, [ds.by_id[i] for i in ids])
    return X, Y


def pointwise_inputs(geo: SurfaceGeometry, conds: list[FlowCondition]) -> np.ndarray:
    """Pointwise feature matrix (x, y, z, nx, ny, nz, M, AoA, p_i) for ``conds``."""
    n_p = geo.n_p
    X = np.empty((n_p * len(conds), 9))
    for k, c in enumerate(conds):
        rows = slice(k * n_p, (k + 1) * n_p)
        X[rows, 0:3] = geo.coords
        X[rows, 3:6] = geo.normals
        X[rows, 6:9] = c.params
    return X


def assemble_global(ds: Dataset, ids: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """X_g (len(ids), 3) and Y_g (len(ids), n_p, 4)."""
    by_id = ds.by_id
    Xg = np.array([by_id[i].params for i in ids], dtype=np.float64).reshape(len(ids), 3)
    fields = _stored(ds, ids)
    Yg = np.stack(fields) if fields else np.empty((0, ds.geometry.n_p, 4))
    return Xg, Yg


# -- scaling -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scaler:
    """Column-wise z-score with population std; constant columns are only shifted."""

    means: np.ndarray
    stds: np.ndarray

    def apply(self, X):
        return (np.asarray(X, dtype=np.float64) - self.means) / self.stds

    def invert(self, Xs):
        return np.asarray(Xs, dtype=np.float64) * self.stds + self.means

    def to_arrays(self) -> dict:
        return {"means": self.means, "stds": self.stds}


def fit_scaler(X) -> Scaler:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise ValueError("cannot fit a scaler on empty data")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    constant = np.ptp(X, axis=0) == 0
    stds[constant | (stds == 0)] = 1.0
    return Scaler(means, stds)


# -- file I/O ----------------------------------------------------------------

def _write_table(path: Path, header: str, arr: np.ndarray) -> None:
    n = arr.shape[0]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        if n:
            ids = np.arange(n)
            cols = ",".join([_FLOAT_FMT] * arr.shape[1])
            fh.writelines(f"{i},{cols % tuple(row)}\n" for i, row in zip(ids, arr.tolist()))


def _read_table(path: Path, header: str, ncols: int, what: str) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().rstrip("\r\n")
            if first != header:
                raise ValidationError(f"{what}: bad header {first!r}, expected {header!r}")
            body = fh.read()
    except FileNotFoundError as exc:
        raise ValidationError(f"{what}: missing file {path}") from exc
    if not body.strip():
        raise ValidationError(f"{what}: no data rows")
    try:
        data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"{what}: unparsable row ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != ncols + 1:
        raise ValidationError(f"{what}: expected {ncols + 1} columns")
    if not np.array_equal(data[:, 0], np.arange(data.shape[0])):
        raise ValidationError(f"{what}: point_id column must be 0..n-1 in order")
    values = data[:, 1:]
    if not np.isfinite(values).all():
        bad = int(np.flatnonzero(~np.isfinite(values).all(axis=1))[0])
        raise ValidationError(f"{what}: non-finite value at point_id {bad}")
    return values


def _write_manifest(path: Path, fmt: str, extra: dict | None = None) -> None:
    doc = {"format": fmt, "version": FORMAT_VERSION}
    doc.update(extra or {})
    (path / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _check_manifest(path: Path, fmt: str) -> None:
    mf = path / "manifest.json"
    if not mf.exists():
        return
    doc = json.loads(mf.read_text(encoding="utf-8"))
    if doc.get("format") != fmt:
        raise ValidationError(f"{path}: manifest format {doc.get('format')!r}, expected {fmt!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported format version {doc.get('version')!r}")


def save_dataset(ds: Dataset, path, include_test_fields: bool = True, manifest_extra: dict | None = None) -> None:
    """Write ``ds`` to a directory; ``include_test_fields=False`` gives a challenge-mode copy."""
    path = Path(path)
    path.mkdir(exist_ok=True)
    (path / "fields").mkdir(exist_ok=True)
    with open(path / "conditions.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_COND_HEADER + "\n")
        for c in ds.conditions:
            fh.write(
                f"{c.id},{_FLOAT_FMT % c.mach},{_FLOAT_FMT % c.aoa_deg},"
                f"{_FLOAT_FMT % c.p_i},{ds.split.get(c.id, '')}\n"
            )
    _write_table(path / "geometry.csv", _GEO_HEADER, np.hstack([ds.geometry.coords, ds.geometry.normals]))
    for c in ds.conditions:
        if c.id not in ds.fields:
            continue
        if not include_test_fields and ds.split.get(c.id) == "test":
            continue
        _write_table(path / "fields" / f"{c.id}.csv", _FIELD_HEADER, ds.fields[c.id].values)
    _write_manifest(path, DATASET_FORMAT, manifest_extra)


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {path}")
    _check_manifest(path, DATASET_FORMAT)
    conds, split = [], {}
    try:
        text = (path / "conditions.csv").read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ValidationError(f"{path}: missing conditions.csv") from exc
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines or lines[0].rstrip("\r") != _COND_HEADER:
        raise ValidationError(f"conditions.csv: bad header, expected {_COND_HEADER!r}")
    for k, ln in enumerate(lines[1:], start=2):
        parts = ln.rstrip("\r").split(",")
        if len(parts) != 5:
            raise ValidationError(f"conditions.csv line {k}: expected 5 columns")
        cid, m, a, p, s = parts
        try:
            conds.append(FlowCondition(cid, float(m), float(a), float(p)))
        except ValueError as exc:
            raise ValidationError(f"conditions.csv line {k}: {exc}") from exc
        if s:
            split[cid] = s
    geo = _read_table(path / "geometry.csv", _GEO_HEADER, 6, "geometry.csv")
    geometry = SurfaceGeometry(geo[:, :3], geo[:, 3:])
    fields = {}
    for c in conds:
        fp = path / "fields" / f"{c.id}.csv"
        if fp.exists():
            fields[c.id] = WallField(c.id, _read_table(fp, _FIELD_HEADER, 4, f"fields/{c.id}.csv"))
    return Dataset(geometry, conds, fields, split)


def save_submission(predictions: dict, path) -> None:
    """Write predicted fields (id -> (n_p, 4) array or WallField) as a submission."""
    path = Path(path)
    path.mkdir(exist_ok=True)
    (path / "fields").mkdir(exist_ok=True)
    for cid in sorted(predictions):
        v = predictions[cid]
        values = v.values if isinstance(v, WallField) else np.asarray(v, dtype=np.float64)
        _write_table(path / "fields" / f"{cid}.csv", _FIELD_HEADER, values)
    _write_manifest(path, SUBMISSION_FORMAT)


def load_submission(path, test_ids, n_p: int | None = None) -> dict[str, WallField]:
    """Read and validate a submission against the expected test ids."""
    path = Path(path)
    fdir = path / "fields"
    if not fdir.is_dir():
        raise SubmissionError(f"submission has no fields/ directory: {path}")
    try:
        _check_manifest(path, SUBMISSION_FORMAT)
    except ValidationError as exc:
        raise SubmissionError(str(exc)) from exc
    present = {p.name[:-4] for p in fdir.iterdir() if p.name.endswith(".csv")}
    expected = set(test_ids)
    missing = sorted(expected - present)
    extra = sorted(present - expected)
    problems = []
    if missing:
        problems.append(f"missing test conditions: {missing}")
    if extra:
        problems.append(f"unexpected conditions: {extra}")
    if problems:
        raise SubmissionError("; ".join(problems))
    out = {}
    for cid in test_ids:
        try:
            values = _read_table(fdir / f"{cid}.csv", _FIELD_HEADER, 4, f"submission fields/{cid}.csv")
        except ValidationError as exc:
            raise SubmissionError(str(exc)) from exc
        if n_p is not None and values.shape[0] != n_p:
            raise SubmissionError(f"submission fields/{cid}.csv: {values.shape[0]} rows, expected {n_p}")
        out[cid] = WallField(cid, values)
    return out
