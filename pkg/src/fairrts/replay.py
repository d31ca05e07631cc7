"""Replay log format (``.frlog``) and the APM/EPM/camera metrics engine.

A log is one UTF-8 header line followed by one line per action record,
each a JSON array with a fixed field order so that
``write_log(read_log(b)) == b`` byte for byte.
"""
from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field, replace

from .actions import CAMERA_KINDS, HUMAN_KINDS
from .sim import NO_OP

MAGIC = "#frlog1"
LOG_EXTENSION = ".frlog"

KNOWN_KINDS = frozenset(HUMAN_KINDS) | {NO_OP}

SIDE_AGENT = "agent"
SIDE_PLAYER = "player"

INSTANT_WINDOW_SECONDS = 5


class FormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateLog(ValueError):
    """A log that admits no rate (zero duration or empty base count)."""


class DegenerateInput(ValueError):
    """An aggregation input with nothing to aggregate."""


@dataclass(frozen=True)
class ActionRecord:
    step: int
    side: str
    action_kind: str
    is_camera: bool
    is_effective: bool
    was_rejected: bool
    payload: str = ""


@dataclass(frozen=True)
class LogHeader:
    spec: str
    seed: int
    config_hash: str
    sides: tuple[str, ...]
    steps_per_second: int
    duration_steps: int
    manifest: str = ""


@dataclass(frozen=True)
class ReplayLog:
    header: LogHeader
    records: tuple[ActionRecord, ...]

    def duration_seconds(self) -> float:
        return self.header.duration_steps / self.header.steps_per_second


def _validate(log: ReplayLog) -> None:
    last = -1
    for i, r in enumerate(log.records):
        if r.action_kind not in KNOWN_KINDS:
            raise FormatError(f"unknown action_kind {r.action_kind!r}", i + 2)
        if r.step < last:
            raise FormatError(f"step regression {last} -> {r.step}", i + 2)
        if r.is_camera != (r.action_kind in CAMERA_KINDS):
            raise FormatError("is_camera inconsistent with action_kind", i + 2)
        last = r.step
    if log.records and log.header.duration_steps < log.records[-1].step:
        raise FormatError("duration_steps earlier than last record")


def write_log(log: ReplayLog) -> bytes:
    _validate(log)
    h = log.header
    head = json.dumps(
        {
            "spec": h.spec,
            "seed": h.seed,
            "config_hash": h.config_hash,
            "sides": list(h.sides),
            "steps_per_second": h.steps_per_second,
            "duration_steps": h.duration_steps,
            "manifest": h.manifest,
        },
        separators=(",", ":"),
    )
    lines = [f"{MAGIC} {head}"]
    for r in log.records:
        lines.append(
            json.dumps(
                [
                    r.step,
                    r.side,
                    r.action_kind,
                    int(r.is_camera),
                    int(r.is_effective),
                    int(r.was_rejected),
                    r.payload,
                ],
                separators=(",", ":"),
            )
        )
    return ("\n".join(lines) + "\n").encode()


def read_log(data: bytes) -> ReplayLog:
    text = data.decode("utf-8")
    if not text.endswith("\n"):
        raise FormatError("truncated final line", text.count("\n") + 1)
    lines = text.split("\n")[:-1]
    if not lines or not lines[0].startswith(MAGIC + " "):
        raise FormatError("header missing", 1)
    try:
        head = json.loads(lines[0][len(MAGIC) + 1 :])
        header = LogHeader(
            spec=head["spec"],
            seed=head["seed"],
            config_hash=head["config_hash"],
            sides=tuple(head["sides"]),
            steps_per_second=head["steps_per_second"],
            duration_steps=head["duration_steps"],
            manifest=head.get("manifest", ""),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"bad header: {exc}", 1) from exc
    records = []
    for n, line in enumerate(lines[1:], start=2):
        try:
            row = json.loads(line)
            step, side, kind, cam, eff, rej, payload = row
            records.append(
                ActionRecord(
                    int(step), side, kind, bool(cam), bool(eff), bool(rej), payload
                )
            )
        except (json.JSONDecodeError, ValueError, TypeError) as exc:
            raise FormatError(f"malformed record: {exc}", n) from exc
    log = ReplayLog(header=header, records=tuple(records))
    _validate(log)
    return log


@dataclass(frozen=True)
class SideMetrics:
    apm: float | None = None
    epm: float | None = None
    co: float | None = None
    ao: float | None = None
    ncr: float | None = None
    nc_epm: float | None = None
    instant_apm: tuple[float, ...] | None = None
    instant_epm: tuple[float, ...] | None = None

    def complete(self) -> bool:
        return None not in (self.apm, self.epm, self.co, self.ao, self.ncr)


@dataclass(frozen=True)
class MetricsReport:
    sides: dict[str, SideMetrics] = field(default_factory=dict)
    label: str = ""
    n_reports: int = 1
    n_excluded: int = 0

    def complete(self) -> bool:
        return bool(self.sides) and all(
            m.complete() for m in self.sides.values()
        )


def _side_records(log: ReplayLog, side: str) -> list[ActionRecord]:
    return [r for r in log.records if r.side == side]


def compute_apm(log: ReplayLog, side: str) -> float:
    """All issued (non-rejected) actions per minute of game time."""
    dur = log.duration_seconds()
    if dur <= 0:
        raise DegenerateLog("zero-duration log")
    n = sum(1 for r in _side_records(log, side) if not r.was_rejected)
    return n * 60.0 / dur


def compute_epm(log: ReplayLog, side: str) -> float:
    """Effective (state-changing, non-rejected) actions per minute."""
    dur = log.duration_seconds()
    if dur <= 0:
        raise DegenerateLog("zero-duration log")
    n = sum(
        1
        for r in _side_records(log, side)
        if r.is_effective and not r.was_rejected
    )
    return n * 60.0 / dur


def camera_stats(log: ReplayLog, side: str) -> tuple[int, int, float]:
    """(camera ops, all ops, non-camera rate) over effective,
    non-rejected records."""
    base = [
        r
        for r in _side_records(log, side)
        if r.is_effective and not r.was_rejected
    ]
    ao = len(base)
    if ao == 0:
        raise DegenerateLog("no effective operations")
    co = sum(1 for r in base if r.is_camera)
    return co, ao, 1.0 - co / ao


def non_camera_epm(metrics: SideMetrics) -> float:
    if metrics.epm is None or metrics.ncr is None:
        raise DegenerateInput("incomplete metrics")
    return metrics.epm * metrics.ncr


def instant_rates(
    log: ReplayLog, side: str, window_seconds: int = INSTANT_WINDOW_SECONDS
) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Per-second instantaneous APM/EPM over a trailing window."""
    sps = log.header.steps_per_second
    window = window_seconds * sps
    recs = [r for r in _side_records(log, side) if not r.was_rejected]
    seconds = int(log.header.duration_steps // sps)
    apm, epm = [], []
    for s in range(1, seconds + 1):
        now = s * sps
        in_win = [r for r in recs if now - window < r.step <= now]
        apm.append(len(in_win) * 60.0 / window_seconds)
        epm.append(
            sum(1 for r in in_win if r.is_effective) * 60.0 / window_seconds
        )
    return tuple(apm), tuple(epm)


def analyze_log(log: ReplayLog, label: str = "") -> MetricsReport:
    sides = {}
    for side in log.header.sides:
        apm = compute_apm(log, side)
        epm = compute_epm(log, side)
        try:
            co, ao, ncr = camera_stats(log, side)
        except DegenerateLog:
            co = ao = 0
            ncr = None
        iapm, iepm = instant_rates(log, side)
        sides[side] = SideMetrics(
            apm=apm,
            epm=epm,
            co=float(co),
            ao=float(ao),
            ncr=ncr,
            nc_epm=epm * ncr if ncr is not None else None,
            instant_apm=iapm,
            instant_epm=iepm,
        )
    return MetricsReport(sides=sides, label=label)


def aggregate(reports: list[MetricsReport]) -> MetricsReport:
    """Arithmetic mean of each per-replay metric over complete reports.

    Rates (including NCR) are averaged per replay, not pooled over
    records.  Incomplete reports are excluded and counted.
    """
    complete = [r for r in reports if r.complete()]
    if not complete:
        raise DegenerateInput("no complete reports to aggregate")
    side_names: list[str] = []
    for r in complete:
        for s in r.sides:
            if s not in side_names:
                side_names.append(s)
    sides = {}
    for s in side_names:
        rows = [r.sides[s] for r in complete if s in r.sides]
        def mean(attr):
            vals = [getattr(m, attr) for m in rows if getattr(m, attr) is not None]
            return statistics.fmean(vals) if vals else None
        epm = mean("epm")
        ncr = mean("ncr")
        sides[s] = SideMetrics(
            apm=mean("apm"),
            epm=epm,
            co=mean("co"),
            ao=mean("ao"),
            ncr=ncr,
            nc_epm=epm * ncr if epm is not None and ncr is not None else None,
        )
    return MetricsReport(
        sides=sides,
        label="aggregate",
        n_reports=len(complete),
        n_excluded=len(reports) - len(complete),
    )


TABLE_COLUMNS = {
    "epm_agent": (SIDE_AGENT, "epm"),
    "epm_player": (SIDE_PLAYER, "epm"),
    "apm_agent": (SIDE_AGENT, "apm"),
    "apm_player": (SIDE_PLAYER, "apm"),
    "co_agent": (SIDE_AGENT, "co"),
    "ao_agent": (SIDE_AGENT, "ao"),
    "ncr_agent": (SIDE_AGENT, "ncr"),
    "co_player": (SIDE_PLAYER, "co"),
    "ao_player": (SIDE_PLAYER, "ao"),
    "ncr_player": (SIDE_PLAYER, "ncr"),
}


def ingest_table_csv(path) -> list[MetricsReport]:
    """Read a replay-statistics table CSV into one report per row.

    Cells holding ``-`` mark the row incomplete; incomplete rows are
    kept (and later excluded by :func:`aggregate`).
    """
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise FormatError("empty CSV", 1)
        missing = set(TABLE_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise FormatError(f"missing required columns: {sorted(missing)}")
        reports = []
        for n, row in enumerate(reader, start=2):
            values: dict[str, dict[str, float | None]] = {
                SIDE_AGENT: {},
                SIDE_PLAYER: {},
            }
            for col, (side, attr) in TABLE_COLUMNS.items():
                cell = (row[col] or "").strip()
                if cell == "-" or cell == "":
                    values[side][attr] = None
                else:
                    try:
                        values[side][attr] = float(cell)
                    except ValueError as exc:
                        raise FormatError(
                            f"bad value {cell!r} in column {col}", n
                        ) from exc
            sides = {}
            for side, vals in values.items():
                epm, ncr = vals.get("epm"), vals.get("ncr")
                sides[side] = SideMetrics(
                    nc_epm=epm * ncr if epm is not None and ncr is not None else None,
                    **vals,
                )
            reports.append(
                MetricsReport(sides=sides, label=row.get("id", str(n)))
            )
    if not reports:
        raise DegenerateInput("CSV has no data rows")
    return reports


def apm_epm_ratio(reports: list[MetricsReport]) -> dict[str, dict[str, float]]:
    """APM/EPM ratio per side, under both estimators.

    ``ratio_of_means`` divides the mean APM by the mean EPM;
    ``mean_of_ratios`` averages the per-replay APM/EPM quotients.  The
    two differ in general, so both are reported.
    """
    complete = [r for r in reports if r.complete()]
    if not complete:
        raise DegenerateInput("no complete reports")
    agg = aggregate(complete)
    out: dict[str, dict[str, float]] = {}
    for side, m in agg.sides.items():
        ratios = [
            r.sides[side].apm / r.sides[side].epm
            for r in complete
            if side in r.sides and r.sides[side].epm
        ]
        out[side] = {
            "ratio_of_means": m.apm / m.epm,
            "mean_of_ratios": statistics.fmean(ratios),
        }
    return out
