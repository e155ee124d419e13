"""Seeded synthetic scintillation data for desk-scale runs.

Each class is a Gaussian cluster in IPP latitude, IPP longitude and hour of
day, centred ``separation`` noise-widths apart, with the moderate class in the
middle. Solar indices carry a weaker signal: each class prefers days of
higher or lower Kp rank. S4 values are drawn inside each class's bin, so the
class counts are exact by construction.

The same draw is returned two ways: as a labelled :class:`Dataset` and as raw
records plus daily solar indices that reproduce that dataset through the
preprocessing pipeline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .ingest import ScintRecord, SolarDay
from .pipeline import CLASSES, Dataset, unwrap_longitude

STATION_LAT_DEG = -77.83
STATION_LON_DEG = 166.66
START = date(2011, 1, 18)
END = date(2014, 11, 14)

# cluster widths per unit of noise_scale
LAT_WIDTH_DEG = 1.0
LON_WIDTH_DEG = 4.0
HOD_WIDTH_H = 2.0
SOLAR_RANK_SHIFT = 0.15

# S4 bins in thousandths, [lo, hi)
S4_BINS = {1: (50, 200), 2: (200, 300), 3: (300, 1000)}


@dataclass(frozen=True)
class SynthSpec:
    n_rows: int = 3000
    class_proportions: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    separation: float = 3.0
    noise_scale: float = 1.0
    seed: int = 0
    start: date = START
    end: date = END

    def __post_init__(self):
        p = np.asarray(self.class_proportions, dtype=float)
        if p.shape != (3,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("class_proportions must be three non-negative numbers summing to 1")
        if self.n_rows < 0:
            raise ValueError("n_rows must be non-negative")
        if self.separation < 0 or self.noise_scale <= 0:
            raise ValueError("separation must be >= 0 and noise_scale > 0")
        if self.end < self.start:
            raise ValueError("end date precedes start date")

    @classmethod
    def from_counts(cls, counts, **kw) -> "SynthSpec":
        counts = [int(c) for c in counts]
        total = sum(counts)
        return cls(n_rows=total, class_proportions=tuple(c / total for c in counts), **kw)


@dataclass
class SynthData:
    dataset: Dataset
    records: list[ScintRecord]
    solar: list[SolarDay]
    s4: np.ndarray
    extra_counts: dict = field(default_factory=dict)


def largest_remainder(n: int, proportions) -> list[int]:
    """Integer counts summing to ``n``; leftover units go to the largest
    fractional parts, ties to the lower class."""
    quotas = np.asarray(proportions, dtype=float) * n
    base = np.floor(quotas).astype(int)
    left = n - int(base.sum())
    order = sorted(range(len(base)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base.tolist()


def _solar_days(rng, start: date, end: date) -> list[SolarDay]:
    n = (end - start).days + 1
    kp = np.round(np.clip(rng.gamma(2.0, 1.0, n), 0.0, 9.0), 1)
    ssn = rng.integers(0, 200, n).astype(float)
    f107 = np.round(65.0 + 0.8 * ssn + rng.normal(0, 8, n), 1)
    return [
        SolarDay(start + timedelta(days=i), float(kp[i]), float(ssn[i]), float(f107[i]), False)
        for i in range(n)
    ]


def generate(spec: SynthSpec) -> SynthData:
    rng = np.random.default_rng(spec.seed)
    counts = largest_remainder(spec.n_rows, spec.class_proportions)
    labels = rng.permutation(np.repeat(np.array(CLASSES), counts))
    n = len(labels)
    offset = spec.separation * (labels - 2)
    noise = spec.noise_scale

    days = _solar_days(rng, spec.start, spec.end)
    by_kp = np.argsort([d.kp for d in days], kind="stable")
    shift = SOLAR_RANK_SHIFT * math.tanh(spec.separation) * (labels - 2)
    q = np.clip(rng.normal(0.5 + shift, 0.3), 0.0, 1.0)
    day_idx = by_kp[np.round(q * (len(days) - 1)).astype(int)]

    lat = np.clip(STATION_LAT_DEG + LAT_WIDTH_DEG * (offset + noise * rng.standard_normal(n)), -89.9, 89.9)
    lon = np.mod(STATION_LON_DEG + LON_WIDTH_DEG * (offset + noise * rng.standard_normal(n)), 360.0)
    raw_lon = np.where(lon >= 180.0, lon - 360.0, lon)
    hod = np.floor(np.mod(12.0 + HOD_WIDTH_H * (offset + noise * rng.standard_normal(n)), 24.0)).astype(int)
    minute = rng.integers(0, 60, n)
    s4_milli = np.array([rng.integers(*S4_BINS[c]) for c in labels], dtype=int)
    s4 = s4_milli / 1000.0
    elevation = np.round(rng.uniform(20.0, 90.0, n), 2)
    azimuth = np.round(rng.uniform(0.0, 360.0, n), 2) % 360.0
    sats = rng.integers(1, 33, n)

    records, X = [], np.empty((n, 7))
    for i in range(n):
        day = days[day_idx[i]]
        ts = datetime(day.date.year, day.date.month, day.date.day, int(hod[i]), int(minute[i]),
                      tzinfo=timezone.utc)
        records.append(ScintRecord(ts, f"G{sats[i]:02d}", float(elevation[i]), float(azimuth[i]),
                                   float(s4[i]), float(lat[i]), float(raw_lon[i])))
        X[i] = (ts.timetuple().tm_yday, hod[i], lat[i], unwrap_longitude(float(raw_lon[i])),
                day.kp, day.ssn, day.f107)
    provenance = {"source": "synth", "spec": _spec_dict(spec), "class_counts": counts}
    return SynthData(Dataset(X, labels, provenance), records, days, s4)


def _spec_dict(spec: SynthSpec) -> dict:
    return {
        "n_rows": spec.n_rows,
        "class_proportions": list(spec.class_proportions),
        "separation": spec.separation,
        "noise_scale": spec.noise_scale,
        "seed": spec.seed,
        "start": spec.start.isoformat(),
        "end": spec.end.isoformat(),
    }


def add_rejects(
    data: SynthData,
    n_low_elevation: int = 0,
    n_negative_s4: int = 0,
    n_below_floor: int = 0,
    n_missing_f107: int = 0,
    n_no_solar_day: int = 0,
    seed: int = 0,
) -> SynthData:
    """Append rows that each preprocessing step must drop.

    Low-elevation rows sit below 20 degrees, negative-S4 rows below zero,
    sub-floor rows in [0, 0.05). Missing-F10.7 rows fall on a day appended
    with F10.7 = 999; no-solar rows fall on a day absent from the listing.
    All other fields are copied from existing clean rows, so every reject
    would otherwise survive the pipeline.
    """
    rng = np.random.default_rng(seed)
    records = list(data.records)
    solar = list(data.solar)
    base = [data.records[i] for i in rng.integers(0, len(data.records), 5 * len(data.records) + 1)]
    pick = iter(base)

    for _ in range(n_low_elevation):
        records.append(replace(next(pick), elevation_deg=float(np.round(rng.uniform(0.0, 19.99), 2))))
    for _ in range(n_negative_s4):
        records.append(replace(next(pick), s4=-float(rng.integers(1, 100)) / 1000.0))
    for _ in range(n_below_floor):
        records.append(replace(next(pick), s4=float(rng.integers(0, 50)) / 1000.0))
    if n_missing_f107:
        bad_day = solar[-1].date + timedelta(days=1)
        solar.append(SolarDay(bad_day, 2.0, 50.0, 999.0, True))
        for _ in range(n_missing_f107):
            r = next(pick)
            records.append(replace(r, timestamp=r.timestamp.replace(
                year=bad_day.year, month=bad_day.month, day=bad_day.day)))
    if n_no_solar_day:
        orphan = solar[0].date - timedelta(days=1)
        for _ in range(n_no_solar_day):
            r = next(pick)
            records.append(replace(r, timestamp=r.timestamp.replace(
                year=orphan.year, month=orphan.month, day=orphan.day)))
    order = rng.permutation(len(records))
    extra = {
        "low_elevation": n_low_elevation,
        "negative_s4": n_negative_s4,
        "below_floor": n_below_floor,
        "missing_f107": n_missing_f107,
        "no_solar_day": n_no_solar_day,
    }
    return SynthData(data.dataset, [records[i] for i in order], solar, data.s4, extra)
