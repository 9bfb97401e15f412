"""Timeline handling: uniform time steps, resampling of sporadic data and
partitioning of the series into trips and at-berth legs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import (
    KNOT,
    ProcessingReport,
    QualityFlag,
    Sample,
    VoyageDataset,
    iso_timestamp,
    new_dataset,
)

AT_BERTH = "At Berth"


class SegmentationError(ValueError):
    """Trip segmentation could not run with the data at hand."""


@dataclass(frozen=True)
class Trip:
    trip_id: int
    start: int
    end: int


@dataclass(frozen=True)
class TripIndex:
    """Partition of the timeline into enumerated trips and at-berth legs."""

    trips: tuple[Trip, ...]
    berth_legs: tuple[tuple[int, int], ...]
    method: str

    def __post_init__(self) -> None:
        spans = [(t.start, t.end, "trip") for t in self.trips]
        spans += [(a, b, "berth") for a, b in self.berth_legs]
        spans.sort()
        for (s1, e1, _), (s2, _, _) in zip(spans, spans[1:]):
            if s2 <= e1:
                raise SegmentationError("trips and berth legs must be disjoint")

    def trip_of(self, timestamp: int) -> int | None:
        for t in self.trips:
            if t.start <= timestamp <= t.end:
                return t.trip_id
        return None


def regularize(
    dataset: VoyageDataset, interval_s: int, report: ProcessingReport | None = None
) -> VoyageDataset:
    """Force a constant timestamp gradient of ``interval_s``.

    Samples are snapped to the nearest lattice point anchored at the first
    timestamp (ties to the earlier point); missing lattice points become
    empty rows flagged ``missing_inserted``. When two samples land on the
    same point the nearer wins, the slot is flagged ``dropout`` and the loss
    is reported.
    """
    if interval_s <= 0:
        raise ValueError("interval_s must be strictly positive")
    entry = report.stage("regularize") if report is not None else None
    if len(dataset) == 0:
        return dataset.with_interval(interval_s)

    t0 = int(dataset.samples[0].timestamp)
    slots: dict[int, tuple[Sample, int]] = {}  # lattice index -> (sample, |offset|)
    collisions: list[tuple[int, int]] = []  # (lost ts, lattice index)
    snapped = 0
    for s in dataset.samples:
        delta = int(s.timestamp) - t0
        q, r = divmod(delta, interval_s)
        idx = q + (1 if r > interval_s / 2 else 0)  # exact half rounds down
        offset = abs(delta - idx * interval_s)
        if offset:
            snapped += 1
            if entry is not None:
                entry.check(
                    "snapped",
                    timestamp=s.timestamp,
                    variable="timestamp",
                    expected=t0 + idx * interval_s,
                    observed=int(s.timestamp),
                )
        if idx in slots:
            keep, keep_off = slots[idx]
            lose = s
            if offset < keep_off:
                keep, keep_off, lose = s, offset, keep
            slots[idx] = (replace(keep, flags=keep.flags | {QualityFlag.DROPOUT}), keep_off)
            collisions.append((int(lose.timestamp), idx))
        else:
            slots[idx] = (s, offset)

    last_idx = max(slots)
    samples: list[Sample] = []
    inserted = 0
    for idx in range(last_idx + 1):
        ts = t0 + idx * interval_s
        if idx in slots:
            samples.append(replace(slots[idx][0], timestamp=ts))
        else:
            inserted += 1
            samples.append(Sample(ts, {}, frozenset({QualityFlag.MISSING_INSERTED})))
    if entry is not None:
        entry.summary["inserted_rows"] = inserted
        entry.summary["snapped_samples"] = snapped
        entry.count_flag(QualityFlag.MISSING_INSERTED, inserted)
        entry.count_flag(QualityFlag.DROPOUT, len(collisions))
        for ts, idx in collisions:
            entry.check(
                "dropout",
                timestamp=t0 + idx * interval_s,
                variable="timestamp",
                expected=None,
                observed=iso_timestamp(ts),
            )
    return new_dataset(
        dataset.schema, samples, sampling_interval=interval_s,
        source_kind=dataset.source_kind,
    )


def _circular_mean(degrees: list[float]) -> float:
    rad = np.deg2rad(degrees)
    ang = math.degrees(math.atan2(np.mean(np.sin(rad)), np.mean(np.cos(rad))))
    return ang % 360.0


def resample(
    dataset: VoyageDataset,
    interval_s: int,
    mode: str = "down_mean",
    naive_angular: bool = False,
    report: ProcessingReport | None = None,
) -> VoyageDataset:
    """Resample onto a uniform ``interval_s`` lattice.

    ``down_mean`` averages each bin: arithmetic mean for linear variables and
    the circular mean for angular ones (``naive_angular=True`` switches to
    the arithmetic mean on angles, which commits the well-known 0/360
    averaging fault; it exists only to build test fixtures of that fault).
    ``up_hold`` repeats the previous sample's values onto the finer lattice,
    flagging held rows. Bins with no source data become empty flagged rows.
    """
    if len(dataset) == 0:
        raise ValueError("cannot resample an empty dataset")
    if mode not in ("down_mean", "up_hold"):
        raise ValueError(f"unknown resample mode {mode!r}")
    entry = report.stage("resample") if report is not None else None

    ts = dataset.timestamps
    t0 = int(ts[0] // interval_s * interval_s)
    numeric = [s for s in dataset.schema if s.kind != "text"]
    text_vars = [s for s in dataset.schema if s.kind == "text"]

    samples: list[Sample] = []
    if mode == "down_mean":
        n_bins = int((int(ts[-1]) - t0) // interval_s) + 1
        bins: list[list[Sample]] = [[] for _ in range(n_bins)]
        for s in dataset.samples:
            bins[(int(s.timestamp) - t0) // interval_s].append(s)
        for k, members in enumerate(bins):
            bts = t0 + k * interval_s
            if not members:
                samples.append(Sample(bts, {}, frozenset({QualityFlag.MISSING_INSERTED})))
                continue
            values: dict[str, float | str] = {}
            for spec in numeric:
                got = [m.values[spec.name] for m in members if spec.name in m.values]
                if not got:
                    continue
                if spec.kind == "angular" and not naive_angular:
                    values[spec.name] = _circular_mean(got)  # type: ignore[arg-type]
                else:
                    values[spec.name] = float(np.mean(got))
            for spec in text_vars:
                got = [m.values[spec.name] for m in members if spec.name in m.values]
                if got:
                    values[spec.name] = got[-1]
            flags = frozenset().union(*(m.flags for m in members))
            samples.append(Sample(bts, values, flags))
    else:  # up_hold
        lattice_end = int(ts[-1])
        by_ts = {int(s.timestamp): s for s in dataset.samples}
        held: Sample | None = None
        t = t0 if t0 >= int(ts[0]) else t0 + interval_s
        while t <= lattice_end:
            src = by_ts.get(t)
            if src is not None:
                samples.append(replace(src, timestamp=t))
                held = src
            elif held is not None:
                samples.append(
                    Sample(
                        t,
                        dict(held.values),
                        held.flags | {QualityFlag.MISSING_INSERTED},
                    )
                )
            else:
                samples.append(Sample(t, {}, frozenset({QualityFlag.MISSING_INSERTED})))
            t += interval_s

    out = new_dataset(
        dataset.schema, samples, sampling_interval=interval_s,
        source_kind=dataset.source_kind,
    )
    if entry is not None:
        n_inserted = sum(
            1 for s in out.samples if QualityFlag.MISSING_INSERTED in s.flags
        )
        entry.count_flag(QualityFlag.MISSING_INSERTED, n_inserted)
        entry.summary["mode"] = mode
        entry.summary["rows_out"] = len(out)
    return out


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, end] index runs where mask is True."""
    runs = []
    start = None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def _build_index(
    dataset: VoyageDataset, trip_runs: list[tuple[int, int]],
    berth_runs: list[tuple[int, int]], method: str,
) -> tuple[TripIndex, VoyageDataset]:
    ts = dataset.timestamps
    trips = tuple(
        Trip(i + 1, int(ts[a]), int(ts[b])) for i, (a, b) in enumerate(trip_runs)
    )
    legs = tuple((int(ts[a]), int(ts[b])) for a, b in berth_runs)
    ids: list[int | None] = [None] * len(dataset)
    for t, (a, b) in zip(trips, trip_runs):
        for i in range(a, b + 1):
            ids[i] = t.trip_id
    return TripIndex(trips, legs, method), dataset.with_trip_ids(ids)


def segment_by_state(
    dataset: VoyageDataset,
    state_variable: str = "state",
    berth_label: str = AT_BERTH,
) -> tuple[TripIndex, VoyageDataset]:
    """Trips are the gaps between continuous at-berth legs of the state
    variable; leading/trailing non-berth runs count as trips too."""
    if not dataset.has_data(state_variable):
        raise SegmentationError(
            f"state variable {state_variable!r} absent; use segment_by_thresholds"
        )
    states = dataset.text_column(state_variable)
    present = sum(1 for s in states if s is not None)
    if present < 0.9 * len(dataset):
        raise SegmentationError(
            f"state variable {state_variable!r} present on {present}/{len(dataset)} "
            "samples (< 90%); use segment_by_thresholds"
        )
    berth = np.array([s == berth_label for s in states])
    berth_runs = _runs(berth)
    trip_runs = _runs(~berth)
    return _build_index(dataset, trip_runs, berth_runs, "state_variable")


def segment_by_thresholds(
    dataset: VoyageDataset,
    rpm_threshold: float = 10.0,
    sog_threshold: float = 3.0 * KNOT,
    pad_samples: int = 2,
) -> tuple[TripIndex, VoyageDataset]:
    """A sample is in-trip when shaft rpm or speed-over-ground exceeds its
    threshold; maximal runs are padded by ``pad_samples`` on each side and
    overlapping padded runs merge. Padding never crosses an at-berth leg
    boundary when a state variable exists."""
    have_rpm = dataset.has_data("shaft_rpm")
    have_sog = dataset.has_data("sog")
    if not have_rpm and not have_sog:
        raise SegmentationError("neither shaft_rpm nor sog present")

    n = len(dataset)
    in_trip = np.zeros(n, dtype=bool)
    if have_rpm:
        rpm = dataset.column("shaft_rpm")
        in_trip |= np.nan_to_num(rpm, nan=-np.inf) > rpm_threshold
    if have_sog:
        sog = dataset.column("sog")
        in_trip |= np.nan_to_num(sog, nan=-np.inf) > sog_threshold

    berth_mask = np.zeros(n, dtype=bool)
    if dataset.declares("state") and dataset.has_data("state"):
        states = dataset.text_column("state")
        berth_mask = np.array([s == AT_BERTH for s in states])

    padded: list[tuple[int, int]] = []
    for a, b in _runs(in_trip):
        lo = a
        for _ in range(pad_samples):
            if lo - 1 >= 0 and not berth_mask[lo - 1]:
                lo -= 1
            else:
                break
        hi = b
        for _ in range(pad_samples):
            if hi + 1 < n and not berth_mask[hi + 1]:
                hi += 1
            else:
                break
        padded.append((lo, hi))

    merged: list[tuple[int, int]] = []
    for run in padded:
        if merged and run[0] <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], run[1]))
        else:
            merged.append(run)

    covered = np.zeros(n, dtype=bool)
    for a, b in merged:
        covered[a : b + 1] = True
    berth_runs = _runs(~covered)
    return _build_index(dataset, merged, berth_runs, "thresholds")


def segment_by_ports(
    dataset: VoyageDataset, port_variable: str = "port"
) -> tuple[TripIndex, VoyageDataset]:
    """Noon-report style grouping: each maximal run of one port label is a
    trip; samples with no port join the preceding run."""
    if not dataset.has_data(port_variable):
        raise SegmentationError(f"port variable {port_variable!r} absent")
    ports = dataset.text_column(port_variable)
    runs: list[tuple[int, int]] = []
    current: str | None = None
    start = 0
    for i, p in enumerate(ports):
        if p is None or p == current:
            continue
        if current is not None:
            runs.append((start, i - 1))
        current, start = p, i
    if current is not None:
        runs.append((start, len(ports) - 1))
    return _build_index(dataset, runs, [], "port_names")
