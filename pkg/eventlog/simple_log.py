"""
Simple event logs: CSV ingestion, trace reconstruction, export and statistics.

A simple event log is a multiset of trace variants. Each case contributes the
ordered sequence of its activities (ordered by timestamp, ties by file order)
to exactly one variant.
"""

import io
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
import pandas as pd
from loguru import logger

from config import ACTIVITY_COLUMN, CASE_COLUMN, TIMESTAMP_COLUMN
from errors import EmptyLogError, LogFormatError

TraceVariant = tuple[str, ...]

# Synthetic timestamps written by write_csv start here and advance one second per event
EXPORT_EPOCH = datetime(2000, 1, 1)

_PANDAS_LINE = re.compile(r"line (\d+)")


@dataclass(frozen=True)
class EventSchema:
    """Column names of the case id, activity and timestamp fields."""

    case_id: str = CASE_COLUMN
    activity: str = ACTIVITY_COLUMN
    timestamp: str = TIMESTAMP_COLUMN

    @property
    def columns(self) -> list[str]:
        return [self.case_id, self.activity, self.timestamp]


@dataclass(frozen=True)
class EventRecord:
    case_id: str
    activity: str
    timestamp: datetime

    def __post_init__(self):
        if not self.case_id:
            raise LogFormatError("empty case id")
        if not self.activity:
            raise LogFormatError("empty activity")


@dataclass
class SimpleEventLog:
    """
    Multiset of trace variants.

    Attributes:
        variants: dict mapping variant (tuple of activity labels) -> number of cases
    """

    variants: dict[TraceVariant, int] = field(default_factory=dict)

    def __post_init__(self):
        cleaned = {}
        for variant, frequency in self.variants.items():
            if int(frequency) < 1:
                raise ValueError(f"Variant {variant} has non-positive frequency {frequency}")
            cleaned[tuple(variant)] = int(frequency)
        self.variants = cleaned

    @classmethod
    def from_traces(cls, traces) -> "SimpleEventLog":
        """Build a log from an iterable of traces, one per case."""
        return cls(dict(Counter(tuple(t) for t in traces)))

    @property
    def n_cases(self) -> int:
        return sum(self.variants.values())

    @property
    def n_variants(self) -> int:
        return len(self.variants)

    def is_empty(self) -> bool:
        return not self.variants

    def frequency(self, variant) -> int:
        return self.variants.get(tuple(variant), 0)

    def support(self) -> set[TraceVariant]:
        return set(self.variants)

    def ordered_variants(self) -> list[TraceVariant]:
        """Variants by descending frequency, ties by activity sequence."""
        return sorted(self.variants, key=lambda v: (-self.variants[v], v))

    def traces(self) -> list[TraceVariant]:
        """One trace per case, grouped in ordered_variants() order."""
        return [v for v in self.ordered_variants() for _ in range(self.variants[v])]

    def __len__(self) -> int:
        return self.n_cases

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimpleEventLog):
            return NotImplemented
        return self.variants == other.variants

    def __repr__(self) -> str:
        shown = ", ".join(
            f"<{','.join(v)}>^{self.variants[v]}" for v in self.ordered_variants()[:5]
        )
        more = ", ..." if self.n_variants > 5 else ""
        return f"SimpleEventLog([{shown}{more}])"


@dataclass(frozen=True)
class LogStats:
    n_events: int
    n_cases: int
    n_activities: int
    n_variants: int
    trace_uniqueness: float

    def to_dict(self) -> dict:
        return {
            "n_events": self.n_events,
            "n_cases": self.n_cases,
            "n_activities": self.n_activities,
            "n_variants": self.n_variants,
            "trace_uniqueness": self.trace_uniqueness,
        }

    def render_table(self) -> str:
        rows = [
            ("#Events", str(self.n_events)),
            ("#Cases", str(self.n_cases)),
            ("#Activities", str(self.n_activities)),
            ("#Variants", str(self.n_variants)),
            ("Trace Uniqueness", format_uniqueness(self.trace_uniqueness)),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:>8}" for name, value in rows)


def format_uniqueness(ratio: float) -> str:
    """
    Render trace uniqueness as a truncated percentage.

    Whole percent from 1% upward (846/1050 -> "80%"), two decimals below that
    (17/13087 -> "0.12%").
    """
    percent = ratio * 100
    if percent >= 1:
        return f"{math.floor(percent)}%"
    return f"{math.floor(percent * 100) / 100:.2f}%"


def ingest_csv(source, schema: EventSchema | None = None) -> SimpleEventLog:
    """
    Read an event CSV and reconstruct one trace variant per case.

    Args:
        source: Binary (UTF-8) or text stream, or a path
        schema: Column names for case id, activity and timestamp

    Returns:
        SimpleEventLog of the traces found in the file

    Raises:
        LogFormatError: missing columns, malformed rows, empty fields or bad timestamps
    """
    schema = schema or EventSchema()

    try:
        frame = pd.read_csv(
            source,
            dtype=str,
            keep_default_na=False,
            encoding="utf-8",
            on_bad_lines="error",
        )
    except pd.errors.EmptyDataError as e:
        raise LogFormatError("no CSV header found") from e
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        line = int(match.group(1)) if match else None
        raise LogFormatError(f"malformed row ({e})", line=line) from e
    except UnicodeDecodeError as e:
        raise LogFormatError(f"input is not UTF-8: {e}") from e

    missing = [c for c in schema.columns if c not in frame.columns]
    if missing:
        raise LogFormatError(f"missing columns {missing}; header has {list(frame.columns)}")

    frame = frame[schema.columns].copy()
    # Line numbers are 1-based and the header is line 1
    frame["_line"] = np.arange(len(frame)) + 2

    for column in (schema.case_id, schema.activity):
        blank = frame[frame[column].str.strip() == ""]
        if not blank.empty:
            raise LogFormatError(f"empty {column}", line=int(blank["_line"].iloc[0]))

    parsed = pd.to_datetime(frame[schema.timestamp], format="ISO8601", errors="coerce", utc=True)
    bad = frame[parsed.isna()]
    if not bad.empty:
        first = bad.iloc[0]
        raise LogFormatError(
            f"unparsable timestamp {first[schema.timestamp]!r}", line=int(first["_line"])
        )
    frame["_ts"] = parsed

    frame = frame.sort_values([schema.case_id, "_ts", "_line"], kind="mergesort")
    traces = frame.groupby(schema.case_id, sort=False)[schema.activity].agg(tuple)

    log = SimpleEventLog.from_traces(traces.tolist())
    logger.info(f"Ingested {len(frame)} events over {log.n_cases} cases ({log.n_variants} variants)")
    return log


def read_log(path: str, schema: EventSchema | None = None) -> SimpleEventLog:
    with open(path, "rb") as f:
        return ingest_csv(f, schema)


def export_events(log: SimpleEventLog):
    """Yield EventRecords with synthetic case ids and one-second-spaced timestamps."""
    clock = EXPORT_EPOCH
    for case_number, trace in enumerate(log.traces(), start=1):
        case_id = f"case_{case_number:06d}"
        for activity in trace:
            yield EventRecord(case_id, activity, clock)
            clock += timedelta(seconds=1)


def write_csv(log: SimpleEventLog, sink, schema: EventSchema | None = None) -> None:
    """
    Write one row per event with synthetic case ids and timestamps.

    Case ids are case_000001, case_000002, ...; timestamps advance one second per
    event from EXPORT_EPOCH, so every case is strictly increasing and
    ingest_csv(write_csv(log)) == log.

    Args:
        log: Log to export
        sink: Binary or text stream
        schema: Column names for the header
    """
    schema = schema or EventSchema()
    rows = [(e.case_id, e.activity, e.timestamp.isoformat()) for e in export_events(log)]

    frame = pd.DataFrame(rows, columns=schema.columns)

    if isinstance(sink, io.TextIOBase):
        frame.to_csv(sink, index=False)
        return

    text = io.TextIOWrapper(sink, encoding="utf-8", newline="")
    try:
        frame.to_csv(text, index=False)
        text.flush()
    finally:
        text.detach()
    logger.debug(f"Wrote {len(rows)} events for {log.n_cases} cases")


def save_log(log: SimpleEventLog, path: str, schema: EventSchema | None = None) -> None:
    with open(path, "wb") as f:
        write_csv(log, f, schema)
    logger.info(f"Saved {log.n_cases} cases to {path}")


def log_stats(log: SimpleEventLog) -> LogStats:
    """
    Descriptive statistics of a log (events, cases, activities, variants, uniqueness).

    Raises:
        EmptyLogError: log has no cases
    """
    if log.is_empty():
        raise EmptyLogError()

    n_events = sum(len(v) * f for v, f in log.variants.items())
    activities = {a for v in log.variants for a in v}
    return LogStats(
        n_events=n_events,
        n_cases=log.n_cases,
        n_activities=len(activities),
        n_variants=log.n_variants,
        trace_uniqueness=log.n_variants / log.n_cases,
    )


def downsample(log: SimpleEventLog, size: int, rng: np.random.Generator) -> SimpleEventLog:
    """
    Draw `size` cases uniformly without replacement.

    Post-processing of an already anonymized log, so it costs no privacy budget.

    Raises:
        ValueError: size is negative or larger than the log
    """
    if size < 0 or size > log.n_cases:
        raise ValueError(f"Cannot downsample {log.n_cases} cases to {size}")

    variants = log.ordered_variants()
    counts = np.array([log.variants[v] for v in variants])
    case_to_variant = np.repeat(np.arange(len(variants)), counts)
    chosen = rng.choice(case_to_variant, size=size, replace=False)
    kept = np.bincount(chosen, minlength=len(variants))
    return SimpleEventLog({variants[i]: int(c) for i, c in enumerate(kept) if c > 0})


def scale_frequencies(log: SimpleEventLog, factor: float) -> SimpleEventLog:
    """
    Scale every variant frequency by factor, keeping at least one case per variant.

    Used to find the smallest log a model still converges on.
    """
    if not 0 < factor <= 1:
        raise ValueError(f"Scale factor must be in (0, 1], got {factor}")
    return SimpleEventLog({v: max(1, round(f * factor)) for v, f in log.variants.items()})


def uniform_reference(log: SimpleEventLog, rng: np.random.Generator) -> SimpleEventLog:
    """Log of the same size whose cases pick variants of `log` uniformly at random."""
    if log.is_empty():
        raise EmptyLogError()
    variants = log.ordered_variants()
    picks = np.bincount(rng.integers(0, len(variants), size=log.n_cases), minlength=len(variants))
    return SimpleEventLog({variants[i]: int(c) for i, c in enumerate(picks) if c > 0})
