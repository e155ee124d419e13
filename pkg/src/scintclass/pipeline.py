"""Preprocessing from raw observations to labelled feature tables.

The steps run in this order:

1. drop rows below the elevation cutoff and rows with negative S4
2. unwrap negative IPP longitudes by adding 360 degrees
3. drop rows with S4 below the no-scintillation floor
4. attach daily Kp, SSN and F10.7, dropping days without F10.7
5. bin S4 into weak / moderate / severe
6. tally the classes (the imbalanced dataset)
7. optionally draw an equal-size sample from each class (the balanced dataset)

Every step's retained count is written into the dataset provenance.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import IO, Iterable, Sequence

import numpy as np

from .geo import ShellModel, compute_ipp_array
from .ingest import ScintRecord, SolarDay, join_by_day

FEATURE_NAMES = ("doy", "hod", "ipp_lat_deg", "ipp_lon_deg", "kp", "ssn", "f107")
CLASSES = (1, 2, 3)

DEFAULT_ELEVATION_CUTOFF = 20.0
DEFAULT_S4_FLOOR = 0.05
MODERATE_S4 = 0.2
SEVERE_S4 = 0.3


class PipelineError(ValueError):
    pass


class SeverityClass(IntEnum):
    WEAK = 1
    MODERATE = 2
    SEVERE = 3


@dataclass(frozen=True)
class FeatureVector:
    doy: int
    hod: int
    ipp_lat_deg: float
    ipp_lon_deg: float
    kp: float
    ssn: float
    f107: float

    def __post_init__(self):
        if self.ipp_lon_deg < 0:
            raise PipelineError(f"IPP longitude {self.ipp_lon_deg} not unwrapped")
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise PipelineError(f"non-finite feature in {self}")

    def as_tuple(self) -> tuple:
        return (self.doy, self.hod, self.ipp_lat_deg, self.ipp_lon_deg, self.kp, self.ssn, self.f107)

    def to_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``X`` (n, 7) with labels ``y`` in {1, 2, 3}.

    Arrays are copied and made read-only on construction.
    """

    X: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float).reshape(-1, len(FEATURE_NAMES))
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if len(X) != len(y):
            raise PipelineError(f"{len(X)} feature rows but {len(y)} labels")
        if y.size and not np.isin(y, CLASSES).all():
            raise PipelineError("labels must be 1, 2 or 3")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))

    def __len__(self) -> int:
        return len(self.y)

    def class_counts(self) -> dict[int, int]:
        return {c: int(np.sum(self.y == c)) for c in CLASSES}

    def subset(self, idx, **provenance) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], {**self.provenance, **provenance})

    def rows(self) -> list[tuple[FeatureVector, SeverityClass]]:
        return [
            (FeatureVector(int(x[0]), int(x[1]), *map(float, x[2:])), SeverityClass(int(c)))
            for x, c in zip(self.X, self.y)
        ]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class SplitPlan:
    kind: str = "kfold"
    k: int = 10
    holdout_train_fraction: float = 0.9
    seed: int = 0
    stratify: bool = False

    def __post_init__(self):
        if self.kind not in ("kfold", "holdout"):
            raise PipelineError(f"split kind must be 'kfold' or 'holdout', got {self.kind!r}")
        if self.kind == "kfold" and self.k < 2:
            raise PipelineError(f"k must be at least 2, got {self.k}")
        if self.kind == "holdout" and not 0 < self.holdout_train_fraction < 1:
            raise PipelineError("holdout_train_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# -- step 1 -----------------------------------------------------------------

def apply_elevation_cutoff(
    records: Iterable[ScintRecord], cutoff_deg: float = DEFAULT_ELEVATION_CUTOFF
) -> list[ScintRecord]:
    """Keep rows at or above the cutoff elevation whose S4 is non-negative."""
    return [r for r in records if r.elevation_deg >= cutoff_deg and r.s4 >= 0]


# -- step 2 -----------------------------------------------------------------

def unwrap_longitude(lon_deg):
    """Add 360 to negative longitudes; works on scalars and arrays."""
    if np.ndim(lon_deg) == 0:
        lon = float(lon_deg)
        return lon + 360.0 if lon < 0 else lon
    lon = np.asarray(lon_deg, dtype=float)
    return np.where(lon < 0, lon + 360.0, lon)


# -- step 3 -----------------------------------------------------------------

def apply_s4_floor(
    records: Iterable[ScintRecord], floor: float = DEFAULT_S4_FLOOR
) -> list[ScintRecord]:
    return [r for r in records if r.s4 >= floor]


# -- step 5 -----------------------------------------------------------------

def classify_s4(s4: float) -> SeverityClass:
    if s4 < MODERATE_S4:
        return SeverityClass.WEAK
    if s4 < SEVERE_S4:
        return SeverityClass.MODERATE
    return SeverityClass.SEVERE


def classify_s4_array(s4) -> np.ndarray:
    s4 = np.asarray(s4, dtype=float)
    return np.where(s4 < MODERATE_S4, 1, np.where(s4 < SEVERE_S4, 2, 3)).astype(np.int64)


# -- step 7 -----------------------------------------------------------------

def balance(dataset: Dataset, seed: int) -> Dataset:
    """Subsample every class down to the smallest class size.

    Rows are drawn without replacement; the output keeps the input's relative
    row order so identical seeds give identical datasets.
    """
    counts = dataset.class_counts()
    absent = [c for c, n in counts.items() if n == 0]
    if absent:
        names = ", ".join(SeverityClass(c).name.lower() for c in absent)
        raise PipelineError(f"cannot balance: class {absent} ({names}) has no rows")
    n_min = min(counts.values())
    rng = np.random.default_rng(seed)
    keep = []
    for c in CLASSES:
        members = np.flatnonzero(dataset.y == c)
        keep.append(rng.choice(members, size=n_min, replace=False))
    idx = np.sort(np.concatenate(keep))
    return dataset.subset(idx, balanced=True, balance_seed=seed, balance_per_class=n_min)


# -- splitting --------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_splits(data: Dataset | int, plan: SplitPlan) -> list[tuple[np.ndarray, np.ndarray]]:
    """Train/validation index pairs for a holdout or k-fold plan.

    k-fold deals shuffled positions round-robin, so when ``n % k = r`` the
    first ``r`` folds carry one extra row.
    """
    n = data if isinstance(data, int) else len(data)
    if n == 0:
        raise PipelineError("cannot split an empty dataset")
    rng = np.random.default_rng(plan.seed)
    if plan.kind == "holdout":
        n_train = _round_half_up(plan.holdout_train_fraction * n)
        if plan.stratify and not isinstance(data, int):
            return [_stratified_holdout(data.y, plan.holdout_train_fraction, rng)]
        perm = rng.permutation(n)
        return [(np.sort(perm[:n_train]), np.sort(perm[n_train:]))]
    if plan.k > n:
        raise PipelineError(f"k={plan.k} folds exceed {n} rows")
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % plan.k
    all_idx = np.arange(n)
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(plan.k)]


def _stratified_holdout(y: np.ndarray, fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    train, val = [], []
    for c in CLASSES:
        members = rng.permutation(np.flatnonzero(y == c))
        n_train = _round_half_up(fraction * len(members))
        train.append(members[:n_train])
        val.append(members[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


# -- features ---------------------------------------------------------------

def extract_features(record: ScintRecord, solar_day: SolarDay, ipp) -> FeatureVector:
    """Build the seven model inputs for one joined observation.

    ``ipp`` is any object with ``lat_deg``/``lon_deg`` or a (lat, lon) pair.
    """
    if hasattr(ipp, "lat_deg"):
        lat, lon = ipp.lat_deg, ipp.lon_deg
    else:
        lat, lon = ipp
    ts = record.timestamp
    return FeatureVector(
        doy=ts.timetuple().tm_yday,
        hod=ts.hour,
        ipp_lat_deg=float(lat),
        ipp_lon_deg=unwrap_longitude(float(lon)),
        kp=solar_day.kp,
        ssn=solar_day.ssn,
        f107=solar_day.f107,
    )


# -- whole pipeline ---------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    elevation_cutoff_deg: float = DEFAULT_ELEVATION_CUTOFF
    s4_floor: float = DEFAULT_S4_FLOOR
    balance: bool = False
    seed: int = 0
    # IPP source: coordinates carried by the file, else computed from the receiver
    use_file_ipp: bool = True
    receiver_lat_deg: float | None = None
    receiver_lon_deg: float | None = None
    shell: ShellModel = ShellModel()

    def __post_init__(self):
        def real(name):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise PipelineError(f"{name}: must be a finite number, got {v!r}")
            return v

        if not 0.0 <= real("elevation_cutoff_deg") <= 90.0:
            raise PipelineError("elevation_cutoff_deg: must lie in [0, 90]")
        if real("s4_floor") < 0.0:
            raise PipelineError("s4_floor: must be >= 0")
        for name in ("balance", "use_file_ipp"):
            if not isinstance(getattr(self, name), bool):
                raise PipelineError(f"{name}: must be true or false")
        if self.receiver_lat_deg is not None and not -90.0 <= real("receiver_lat_deg") <= 90.0:
            raise PipelineError("receiver_lat_deg: must lie in [-90, 90]")
        if self.receiver_lon_deg is not None:
            real("receiver_lon_deg")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "shell"}
        d["shell_height_km"] = self.shell.shell_height_km
        d["earth_radius_km"] = self.shell.earth_radius_km
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        shell = ShellModel(
            d.pop("shell_height_km", ShellModel().shell_height_km),
            d.pop("earth_radius_km", ShellModel().earth_radius_km),
        )
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise PipelineError(f"unknown pipeline keys: {sorted(unknown)}")
        return cls(shell=shell, **d)


@dataclass
class PipelineResult:
    imbalanced: Dataset
    balanced: Dataset | None
    counts: dict
    hod_fraction: np.ndarray

    @property
    def dataset(self) -> Dataset:
        return self.balanced if self.balanced is not None else self.imbalanced


def _ipp_for(records: Sequence[ScintRecord], cfg: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    n = len(records)
    lat = np.full(n, np.nan)
    lon = np.full(n, np.nan)
    if cfg.use_file_ipp:
        for i, r in enumerate(records):
            if r.ipp_lat_deg is not None and r.ipp_lon_deg is not None:
                lat[i], lon[i] = r.ipp_lat_deg, r.ipp_lon_deg
    todo = np.flatnonzero(np.isnan(lat))
    if todo.size:
        if cfg.receiver_lat_deg is None or cfg.receiver_lon_deg is None:
            raise PipelineError(
                f"{todo.size} rows lack IPP coordinates and no receiver position was given"
            )
        el = np.array([records[i].elevation_deg for i in todo])
        az = np.array([records[i].azimuth_deg for i in todo])
        lat[todo], lon[todo] = compute_ipp_array(
            cfg.receiver_lat_deg, cfg.receiver_lon_deg, el, az, cfg.shell
        )
    return lat, lon


def run_pipeline(
    records: Sequence[ScintRecord],
    solar: Sequence[SolarDay],
    cfg: PipelineConfig = PipelineConfig(),
) -> PipelineResult:
    counts: dict = {"raw": len(records)}

    kept = [r for r in records if r.elevation_deg >= cfg.elevation_cutoff_deg]
    counts["after_elevation_cutoff"] = len(kept)
    kept = [r for r in kept if r.s4 >= 0]
    counts["after_negative_s4"] = len(kept)

    lat, lon = _ipp_for(kept, cfg)
    counts["negative_longitudes_unwrapped"] = int(np.sum(lon < 0))
    lon = unwrap_longitude(lon)

    mask = np.array([r.s4 >= cfg.s4_floor for r in kept], dtype=bool)
    counts["below_s4_floor"] = int((~mask).sum())
    kept = [r for r, m in zip(kept, mask) if m]
    lat, lon = lat[mask], lon[mask]
    counts["after_s4_floor"] = len(kept)

    by_id = {id(r): i for i, r in enumerate(kept)}
    joined = join_by_day(kept, solar)
    counts["no_solar_day"] = joined.n_unmatched
    counts["missing_f107"] = joined.n_missing_index
    counts["after_index_join"] = len(joined.pairs)

    n = len(joined.pairs)
    X = np.empty((n, len(FEATURE_NAMES)))
    s4 = np.empty(n)
    hod_fraction = np.empty(n)
    for row, (rec, day) in enumerate(joined.pairs):
        i = by_id[id(rec)]
        fv = extract_features(rec, day, (lat[i], lon[i]))
        X[row] = fv.as_tuple()
        s4[row] = rec.s4
        ts = rec.timestamp
        hod_fraction[row] = ts.hour + ts.minute / 60 + ts.second / 3600
    y = classify_s4_array(s4)

    provenance = {
        "steps": [
            "elevation_cutoff",
            "negative_s4",
            "unwrap_longitude",
            "s4_floor",
            "index_join",
            "classify",
        ],
        "config": cfg.to_dict(),
    }
    imbalanced = Dataset(X, y, provenance)
    counts["class_counts"] = {str(c): v for c, v in imbalanced.class_counts().items()}
    counts["imbalanced_total"] = len(imbalanced)

    balanced = None
    if cfg.balance:
        balanced = balance(imbalanced, cfg.seed)
        balanced.provenance["steps"] = provenance["steps"] + ["balance"]
        counts["balanced_per_class"] = balanced.provenance["balance_per_class"]
        counts["balanced_total"] = len(balanced)
    for ds in (imbalanced, balanced):
        if ds is not None:
            ds.provenance["counts"] = counts
    return PipelineResult(imbalanced, balanced, counts, hod_fraction)


# -- dataset files ----------------------------------------------------------

DATASET_COLUMNS = FEATURE_NAMES + ("class",)


def write_dataset_csv(dataset: Dataset, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(DATASET_COLUMNS)
    for x, c in zip(dataset.X, dataset.y):
        writer.writerow(
            [int(x[0]), int(x[1])] + [repr(float(v)) for v in x[2:]] + [int(c)]
        )


def read_dataset_csv(stream: IO[str], provenance: dict | None = None) -> Dataset:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise PipelineError("dataset file is empty")
    header = [h.strip() for h in header]
    missing = [c for c in FEATURE_NAMES if c not in header]
    if missing:
        raise PipelineError(f"dataset file lacks column {missing[0]!r}")
    cols = [header.index(c) for c in FEATURE_NAMES]
    label_col = header.index("class") if "class" in header else None
    X, y = [], []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            X.append([float(row[i]) for i in cols])
            y.append(int(row[label_col]) if label_col is not None else 1)
        except (ValueError, IndexError) as exc:
            raise PipelineError(f"line {line_no}: {exc}") from None
    return Dataset(np.array(X).reshape(-1, len(FEATURE_NAMES)), np.array(y, dtype=np.int64), provenance or {})


def write_provenance(dataset: Dataset, stream: IO[str]) -> None:
    json.dump(dataset.provenance, stream, indent=2, sort_keys=True, default=str)
    stream.write("\n")
