"""Hourly electricity price ingestion.

Parses `timestamp,price` CSV files, assembles complete 24-hour day
windows, and splits them into train/test datasets by calendar year.
Incomplete days (daylight-saving transitions, gaps, duplicated hours)
are dropped and tallied, never imputed.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from datetime import date, datetime
from typing import Iterable, TextIO

import numpy as np

HOURS_PER_DAY = 24


class MalformedRowError(ValueError):
    """A CSV data row that cannot be accepted; carries the 1-based row index."""

    def __init__(self, row: int, reason: str):
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class EmptyTrainSetError(ValueError):
    """The requested training years matched no days."""


@dataclass(frozen=True)
class PriceRecord:
    timestamp: datetime
    price: float


@dataclass(frozen=True)
class PriceDay:
    """One calendar day's 24 hourly prices, ordered hour 0..23."""

    date: date
    prices: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.prices, dtype=float)
        if arr.shape != (HOURS_PER_DAY,):
            raise ValueError(f"day {self.date} needs {HOURS_PER_DAY} prices, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"day {self.date} has non-finite prices")
        arr.setflags(write=False)
        object.__setattr__(self, "prices", arr)

    @property
    def year(self) -> int:
        return self.date.year


@dataclass(frozen=True)
class Dataset:
    train_days: tuple[PriceDay, ...]
    test_days: tuple[PriceDay, ...]


@dataclass(frozen=True)
class GroupDiagnostics:
    days_kept: int
    days_dropped: int

    def to_json(self) -> dict:
        return {"days_kept": self.days_kept, "days_dropped": self.days_dropped}


def parse_price_csv(source: str | TextIO) -> list[PriceRecord]:
    """Parse a `timestamp,price` CSV into records, preserving file order.

    Timestamps are naive local market time at hour resolution.  Raises
    MalformedRowError with the offending data-row index (1-based) for bad
    shapes, unparseable timestamps, non-numeric or non-finite prices, and
    duplicate timestamps.
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    header = stream.readline()
    if header == "":
        raise MalformedRowError(0, "empty input, expected header 'timestamp,price'")
    if [c.strip() for c in header.strip().split(",")] != ["timestamp", "price"]:
        raise MalformedRowError(0, f"bad header {header.strip()!r}, expected 'timestamp,price'")
    records: list[PriceRecord] = []
    seen: set[datetime] = set()
    row = 0
    for line in stream:
        line = line.strip()
        if not line:
            continue
        row += 1
        parts = line.split(",")
        if len(parts) != 2:
            raise MalformedRowError(row, f"expected 2 fields, got {len(parts)}")
        ts_text, price_text = parts[0].strip(), parts[1].strip()
        try:
            ts = datetime.fromisoformat(ts_text)
        except ValueError:
            raise MalformedRowError(row, f"bad timestamp {ts_text!r}") from None
        if ts.tzinfo is not None:
            raise MalformedRowError(row, "timestamps must be naive local time")
        if ts.minute or ts.second or ts.microsecond:
            raise MalformedRowError(row, f"timestamp {ts_text!r} is not on the hour")
        try:
            price = float(price_text)
        except ValueError:
            raise MalformedRowError(row, f"non-numeric price {price_text!r}") from None
        if not math.isfinite(price):
            raise MalformedRowError(row, f"non-finite price {price_text!r}")
        if ts in seen:
            raise MalformedRowError(row, f"duplicate timestamp {ts_text!r}")
        seen.add(ts)
        records.append(PriceRecord(ts, price))
    return records


def records_to_csv(records: Iterable[PriceRecord]) -> str:
    """Serialize records back to the CSV format accepted by parse_price_csv."""
    lines = ["timestamp,price"]
    for rec in records:
        lines.append(f"{rec.timestamp.isoformat(timespec='minutes')},{rec.price!r}")
    return "\n".join(lines) + "\n"


def group_days(records: Iterable[PriceRecord]) -> tuple[list[PriceDay], GroupDiagnostics]:
    """Assemble records (sorted by timestamp) into complete 24-hour days.

    A date qualifies only if hours 0..23 each appear exactly once; every
    other date is dropped and counted in the diagnostics tally.
    """
    by_date: dict[date, list[PriceRecord]] = {}
    for rec in records:
        by_date.setdefault(rec.timestamp.date(), []).append(rec)
    days: list[PriceDay] = []
    dropped = 0
    for day in sorted(by_date):
        recs = by_date[day]
        hours = sorted(r.timestamp.hour for r in recs)
        if hours != list(range(HOURS_PER_DAY)):
            dropped += 1
            continue
        prices = np.empty(HOURS_PER_DAY)
        for r in recs:
            prices[r.timestamp.hour] = r.price
        days.append(PriceDay(day, prices))
    return days, GroupDiagnostics(days_kept=len(days), days_dropped=dropped)


def split_by_years(
    days: Iterable[PriceDay],
    train_years: Iterable[int],
    test_years: Iterable[int],
) -> Dataset:
    """Partition days into train/test by calendar year, preserving order."""
    train_set = frozenset(int(y) for y in train_years)
    test_set = frozenset(int(y) for y in test_years)
    overlap = train_set & test_set
    if overlap:
        raise ValueError(f"train and test years overlap: {sorted(overlap)}")
    train = tuple(d for d in days if d.year in train_set)
    test = tuple(d for d in days if d.year in test_set)
    if not train:
        raise EmptyTrainSetError(f"no days found for training years {sorted(train_set)}")
    return Dataset(train_days=train, test_days=test)


def days_to_json(days: Iterable[PriceDay], diagnostics: GroupDiagnostics | None = None) -> str:
    """Versioned JSON day cache used by the CLI ingest/calibrate split."""
    doc = {
        "version": 1,
        "days": [
            {"date": d.date.isoformat(), "prices": [float(p) for p in d.prices]} for d in days
        ],
    }
    if diagnostics is not None:
        doc["diagnostics"] = diagnostics.to_json()
    return json.dumps(doc, sort_keys=True)


def days_from_json(text: str) -> list[PriceDay]:
    doc = json.loads(text)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported day cache version {doc.get('version')!r}")
    return [
        PriceDay(date.fromisoformat(entry["date"]), np.asarray(entry["prices"], dtype=float))
        for entry in doc["days"]
    ]
