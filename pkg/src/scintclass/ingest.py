"""Readers for scintillation observation files and daily solar-index listings.

Observation files are delimited text with one receiver observation per line.
Receiver vendors lay these out differently, so the reader is driven by a
:class:`ColumnMap` that says which column holds what. The S4 field is taken as
delivered by the receiver (standard deviation of signal power over its mean);
nothing here recomputes it.

Bad rows never abort a parse. They land in ``ParseResult.diagnostics`` with
their line number so a multi-year archive can be audited afterwards.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import IO, Iterable, Iterator, Sequence, Union

Source = Union[str, os.PathLike, IO[bytes], IO[str]]
ColumnRef = Union[str, int]

GPS_EPOCH = datetime(1980, 1, 6, tzinfo=timezone.utc)

CANONICAL_COLUMNS = (
    "timestamp",
    "sat_id",
    "elevation_deg",
    "azimuth_deg",
    "s4",
    "ipp_lat_deg",
    "ipp_lon_deg",
)


class FormatError(ValueError):
    """A file does not match the layout it was declared to have."""


@dataclass(frozen=True)
class RowDiagnostic:
    line_no: int
    reason: str
    text: str


@dataclass(frozen=True)
class ScintRecord:
    """One receiver observation.

    ``s4`` is kept as delivered and may be negative in raw files.
    ``ipp_lon_deg`` keeps the file's own convention (possibly negative).
    """

    timestamp: datetime
    sat_id: str
    elevation_deg: float
    azimuth_deg: float
    s4: float
    ipp_lat_deg: float | None = None
    ipp_lon_deg: float | None = None

    @property
    def day(self) -> date:
        return self.timestamp.astimezone(timezone.utc).date()


@dataclass(frozen=True)
class SolarDay:
    date: date
    kp: float
    ssn: float
    f107: float
    f107_missing: bool


@dataclass
class ParseResult:
    records: list
    diagnostics: list[RowDiagnostic] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.records) + len(self.diagnostics)


@dataclass
class JoinResult:
    pairs: list[tuple[ScintRecord, SolarDay]]
    n_unmatched: int = 0
    n_missing_index: int = 0

    @property
    def n_excluded(self) -> int:
        return self.n_unmatched + self.n_missing_index


@dataclass(frozen=True)
class ColumnMap:
    """Where each field lives in an observation file.

    Column references are header names when ``header`` is true and 0-based
    positions otherwise. ``time`` is a single column for ``"iso"`` or a
    ``strptime`` pattern, a (week, seconds-of-week) pair for
    ``"gps_week_tow"``, or (year, month, day, hour, minute[, second]) for
    ``"components"``. ``gps_utc_offset_s`` is subtracted from GPS time to
    get UTC.
    """

    time: ColumnRef | tuple[ColumnRef, ...] = "timestamp"
    sat: ColumnRef = "sat_id"
    elevation: ColumnRef = "elevation_deg"
    azimuth: ColumnRef = "azimuth_deg"
    s4: ColumnRef = "s4"
    ipp_lat: ColumnRef | None = "ipp_lat_deg"
    ipp_lon: ColumnRef | None = "ipp_lon_deg"
    time_format: str = "iso"
    header: bool = True
    delimiter: str | None = None
    comment: str = "#"
    gps_utc_offset_s: float = 0.0
    optional_ipp: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMap":
        d = dict(d)
        if isinstance(d.get("time"), list):
            d["time"] = tuple(d["time"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise FormatError(f"unknown column map keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if isinstance(out["time"], tuple):
            out["time"] = list(out["time"])
        return out


# Septentrio PolaRxS ISMR: headerless CSV, WN, TOW, SVID, RxState, Azimuth,
# Elevation, C/N0, total S4 on signal 1, ...
SEPTENTRIO_ISMR = ColumnMap(
    time=(0, 1),
    sat=2,
    azimuth=4,
    elevation=5,
    s4=7,
    ipp_lat=None,
    ipp_lon=None,
    time_format="gps_week_tow",
    header=False,
    delimiter=",",
)


@dataclass(frozen=True)
class SolarFormat:
    """Layout of a daily solar-index listing.

    Each data row is either ``DATE KP SSN F107`` with an ISO date, or the
    OMNIWeb shape ``YEAR DOY [HR] KP SSN F107``. ``kp_scale`` multiplies the
    raw Kp (OMNIWeb prints Kp*10, so 0.1 there).
    """

    delimiter: str | None = None
    header: bool = False
    comment: str = "#"
    kp_scale: float = 1.0
    f107_sentinel: float = 999.0

    @classmethod
    def from_dict(cls, d: dict) -> "SolarFormat":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise FormatError(f"unknown solar format keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _numbered_lines(source: Source, comment: str) -> Iterator[tuple[int, str]]:
    wrapped = False
    if isinstance(source, (str, os.PathLike)):
        fh = open(source, "r", encoding="utf-8", newline="")
    elif not isinstance(source, io.TextIOBase) and isinstance(source.read(0), bytes):
        fh = io.TextIOWrapper(source, encoding="utf-8", newline="")
        wrapped = True
    else:
        fh = source
    try:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or (comment and stripped.startswith(comment)):
                continue
            yield line_no, stripped
    finally:
        if wrapped:
            fh.detach()
        elif fh is not source:
            fh.close()


def _splitter(delimiter: str | None, sample: str):
    if delimiter is None:
        delimiter = "," if "," in sample else None
    if delimiter is None:
        return lambda s: s.split()
    if delimiter == ",":
        return lambda s: [t.strip() for t in next(csv.reader([s]))]
    return lambda s: [t.strip() for t in s.split(delimiter)]


def _finite(text: str, name: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"non-numeric {name} {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"non-finite {name} {text!r}")
    return value


def _as_utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_time(fields: Sequence[str], fmt: str, offset_s: float) -> datetime:
    if fmt == "iso":
        text = fields[0]
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        return _as_utc(datetime.fromisoformat(text))
    if fmt == "gps_week_tow":
        week = int(float(fields[0]))
        tow = float(fields[1])
        return GPS_EPOCH + timedelta(weeks=week, seconds=tow - offset_s)
    if fmt == "components":
        parts = [float(f) for f in fields]
        y, mo, d, h, mi = (int(p) for p in parts[:5])
        sec = parts[5] if len(parts) > 5 else 0.0
        return datetime(y, mo, d, h, mi, tzinfo=timezone.utc) + timedelta(seconds=sec)
    return _as_utc(datetime.strptime(fields[0], fmt))


def parse_ismr(source: Source, columns: ColumnMap = ColumnMap()) -> ParseResult:
    """Parse an observation file into :class:`ScintRecord` rows in file order."""
    lines = _numbered_lines(source, columns.comment)
    try:
        first_no, first = next(lines)
    except StopIteration:
        return ParseResult([], [])
    split = _splitter(columns.delimiter, first)

    time_refs = columns.time if isinstance(columns.time, tuple) else (columns.time,)
    refs = {
        "time": time_refs,
        "sat": (columns.sat,),
        "elevation": (columns.elevation,),
        "azimuth": (columns.azimuth,),
        "s4": (columns.s4,),
    }
    for name in ("ipp_lat", "ipp_lon"):
        ref = getattr(columns, name)
        if ref is not None:
            refs[name] = (ref,)

    pending: list[tuple[int, str]] = []
    if columns.header:
        names = split(first)
        index: dict[str, tuple[int, ...]] = {}
        for key, group in refs.items():
            try:
                index[key] = tuple(names.index(str(r)) for r in group)
            except ValueError:
                missing = [str(r) for r in group if str(r) not in names]
                if key in ("ipp_lat", "ipp_lon") and columns.optional_ipp:
                    continue
                raise FormatError(
                    f"header lacks column {missing[0]!r} (needed for {key})"
                ) from None
    else:
        index = {key: tuple(int(r) for r in group) for key, group in refs.items()}
        pending.append((first_no, first))

    width = 1 + max(i for group in index.values() for i in group)
    records: list[ScintRecord] = []
    diagnostics: list[RowDiagnostic] = []

    def rows() -> Iterator[tuple[int, str]]:
        yield from pending
        yield from lines

    for line_no, text in rows():
        fields = split(text)
        try:
            if len(fields) < width:
                raise ValueError(f"expected at least {width} fields, got {len(fields)}")
            pick = lambda key: [fields[i] for i in index[key]]  # noqa: E731
            ts = _parse_time(pick("time"), columns.time_format, columns.gps_utc_offset_s)
            elevation = _finite(pick("elevation")[0], "elevation")
            if not 0.0 <= elevation <= 90.0:
                raise ValueError(f"elevation {elevation} outside [0, 90]")
            azimuth = _finite(pick("azimuth")[0], "azimuth") % 360.0
            s4 = _finite(pick("s4")[0], "S4")
            lat = lon = None
            if "ipp_lat" in index and "ipp_lon" in index:
                lat_txt, lon_txt = pick("ipp_lat")[0], pick("ipp_lon")[0]
                if lat_txt or lon_txt:
                    lat = _finite(lat_txt, "IPP latitude")
                    lon = _finite(lon_txt, "IPP longitude")
                    if not -90.0 <= lat <= 90.0:
                        raise ValueError(f"IPP latitude {lat} outside [-90, 90]")
            sat = pick("sat")[0]
            if not sat:
                raise ValueError("empty satellite id")
        except (ValueError, OverflowError) as exc:
            diagnostics.append(RowDiagnostic(line_no, str(exc), text))
            continue
        records.append(ScintRecord(ts, sat, elevation, azimuth, s4, lat, lon))
    return ParseResult(records, diagnostics)


def _parse_solar_date(tokens: Sequence[str]) -> tuple[date, list[str]]:
    if len(tokens) == 4:
        return date.fromisoformat(tokens[0]), list(tokens[1:])
    if len(tokens) in (5, 6):
        year, doy = int(tokens[0]), int(tokens[1])
        if not 1 <= doy <= (366 if _is_leap(year) else 365):
            raise ValueError(f"day of year {doy} out of range for {year}")
        return date(year, 1, 1) + timedelta(days=doy - 1), list(tokens[-3:])
    raise ValueError(f"expected 4, 5 or 6 fields, got {len(tokens)}")


def _is_leap(year: int) -> bool:
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


def parse_solar(source: Source, fmt: SolarFormat = SolarFormat()) -> ParseResult:
    """Parse a daily solar-index listing into :class:`SolarDay` rows.

    Raises :class:`FormatError` on a repeated date.
    """
    lines = list(_numbered_lines(source, fmt.comment))
    if fmt.header and lines:
        lines = lines[1:]
    if not lines:
        return ParseResult([], [])
    split = _splitter(fmt.delimiter, lines[0][1])
    days: list[SolarDay] = []
    diagnostics: list[RowDiagnostic] = []
    seen: dict[date, int] = {}
    for line_no, text in lines:
        try:
            day, values = _parse_solar_date(split(text))
            kp = _finite(values[0], "Kp") * fmt.kp_scale
            ssn = _finite(values[1], "SSN")
            f107 = _finite(values[2], "F10.7")
        except ValueError as exc:
            diagnostics.append(RowDiagnostic(line_no, str(exc), text))
            continue
        if day in seen:
            raise FormatError(
                f"duplicate date {day.isoformat()} on lines {seen[day]} and {line_no}"
            )
        seen[day] = line_no
        days.append(SolarDay(day, kp, ssn, f107, f107 == fmt.f107_sentinel))
    return ParseResult(days, diagnostics)


def join_by_day(
    records: Iterable[ScintRecord], solar: Iterable[SolarDay]
) -> JoinResult:
    """Pair each record with the solar indices of its UTC calendar day.

    Records whose day is absent, or whose day has a missing F10.7, are
    counted and left out.
    """
    by_date = {d.date: d for d in solar}
    result = JoinResult([])
    for rec in records:
        day = by_date.get(rec.day)
        if day is None:
            result.n_unmatched += 1
        elif day.f107_missing:
            result.n_missing_index += 1
        else:
            result.pairs.append((rec, day))
    return result


def _fmt(value: float | None, precision: int | None) -> str:
    if value is None:
        return ""
    if precision is None:
        return repr(float(value))
    return f"{value:.{precision}f}"


def format_timestamp(ts: datetime) -> str:
    return _as_utc(ts).strftime("%Y-%m-%dT%H:%M:%S") + "Z"


def write_normalized_csv(
    records: Iterable[ScintRecord],
    stream: IO[str],
    precision: int | dict[str, int] | None = None,
) -> int:
    """Write records in canonical column order; returns the row count.

    ``precision`` fixes decimals for every float column (or per column via a
    dict); ``None`` writes the shortest round-tripping repr.
    """
    if not isinstance(precision, dict):
        precision = {c: precision for c in CANONICAL_COLUMNS}
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CANONICAL_COLUMNS)
    n = 0
    for r in records:
        writer.writerow(
            [
                format_timestamp(r.timestamp),
                r.sat_id,
                _fmt(r.elevation_deg, precision.get("elevation_deg")),
                _fmt(r.azimuth_deg, precision.get("azimuth_deg")),
                _fmt(r.s4, precision.get("s4")),
                _fmt(r.ipp_lat_deg, precision.get("ipp_lat_deg")),
                _fmt(r.ipp_lon_deg, precision.get("ipp_lon_deg")),
            ]
        )
        n += 1
    return n


def write_solar_csv(days: Iterable[SolarDay], stream: IO[str]) -> int:
    writer = csv.writer(stream, lineterminator="\n")
    n = 0
    for d in days:
        writer.writerow([d.date.isoformat(), repr(d.kp), repr(d.ssn), repr(d.f107)])
        n += 1
    return n


def write_diagnostics_csv(diagnostics: Iterable[RowDiagnostic], stream: IO[str]) -> int:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["line_no", "reason", "text"])
    n = 0
    for d in diagnostics:
        writer.writerow([d.line_no, d.reason, d.text])
        n += 1
    return n
