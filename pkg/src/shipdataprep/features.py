"""Derived features: great-circle distances and bearings, anemometer height
correction, ship-frame wind/wave/current components and AIS rationality
checks.

Sign convention (documented once, used everywhere): the longitudinal
relative wind is positive for head wind, so with zero true wind a ship
moving at ``sog`` sees ``+sog``. The transverse component is positive for
wind from starboard. Direction variables use the meteorological
from-convention in degrees.
"""

from __future__ import annotations

import math

import numpy as np

from .model import (
    ProcessingReport,
    QualityFlag,
    ShipParticulars,
    VariableSpec,
    VoyageDataset,
)
from .tables import service_speed_range  # re-exported lookup  # noqa: F401

EARTH_RADIUS_M = 6_371_000.0


def haversine(
    lat1: float, lon1: float, lat2: float, lon2: float, r: float = EARTH_RADIUS_M
) -> float:
    """Great-circle distance in metres between two (lat, lon) points."""
    if r <= 0:
        raise ValueError("earth radius must be strictly positive")
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * r * math.asin(min(1.0, math.sqrt(a)))


def initial_bearing(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Initial great-circle bearing from point 1 to point 2, degrees [0, 360)."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dlam = math.radians(lon2 - lon1)
    x = math.sin(dlam) * math.cos(phi2)
    y = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    return math.degrees(math.atan2(x, y)) % 360.0


def angular_difference(a: float, b: float) -> float:
    """Smallest absolute difference between two angles in degrees, [0, 180]."""
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def wind_to_reference_height(v_wt: float, z_ref: float, z_a: float) -> float:
    """Correct an anemometer wind speed to the reference height assuming a
    1/9-power vertical wind profile."""
    if z_ref <= 0 or z_a <= 0:
        raise ValueError("heights must be strictly positive")
    if v_wt < 0:
        raise ValueError("wind speed must be non-negative")
    return v_wt * (z_ref / z_a) ** (1.0 / 9.0)


def _position_ok(dataset: VoyageDataset) -> np.ndarray:
    lat = dataset.column("lat")
    lon = dataset.column("lon")
    ok = ~np.isnan(lat) & ~np.isnan(lon)
    for i, s in enumerate(dataset.samples):
        if QualityFlag.IRRATIONAL_POSITION in s.flags:
            ok[i] = False
    return ok


def _groups(dataset: VoyageDataset) -> list[np.ndarray]:
    ids = dataset.trip_ids
    if (ids >= 0).any():
        return [np.nonzero(ids == t)[0] for t in sorted(set(ids[ids >= 0].tolist()))]
    return [np.arange(len(dataset))]


def gps_heading(dataset: VoyageDataset) -> list[float | None]:
    """Per-sample heading estimated from consecutive GPS positions.

    Each sample takes the initial bearing towards the next one; the last
    sample of a trip (and any sample that cannot see a valid next position)
    holds the previous bearing. Samples with flagged or missing positions
    get no value.
    """
    lat = dataset.column("lat")
    lon = dataset.column("lon")
    ok = _position_ok(dataset)
    out: list[float | None] = [None] * len(dataset)
    for idx in _groups(dataset):
        prev: float | None = None
        for k, i in enumerate(idx):
            if not ok[i]:
                prev = None
                continue
            j = idx[k + 1] if k + 1 < len(idx) else None
            if j is not None and ok[j] and (lat[i] != lat[j] or lon[i] != lon[j]):
                b = initial_bearing(lat[i], lon[i], lat[j], lon[j])
                out[i] = b
                prev = b
            else:
                out[i] = prev
    return out


def add_gps_heading(dataset: VoyageDataset) -> VoyageDataset:
    if not (dataset.has_data("lat") and dataset.has_data("lon")):
        return dataset
    values = gps_heading(dataset)
    return dataset.adding_variable(
        VariableSpec("gps_heading", "deg", "angular", role="navigation"), values
    )


def add_leg_distance(dataset: VoyageDataset) -> VoyageDataset:
    """Distance in metres from the previous sample, per trip."""
    if not (dataset.has_data("lat") and dataset.has_data("lon")):
        return dataset
    lat = dataset.column("lat")
    lon = dataset.column("lon")
    ok = _position_ok(dataset)
    values: list[float | None] = [None] * len(dataset)
    for idx in _groups(dataset):
        for k in range(1, len(idx)):
            i, j = idx[k - 1], idx[k]
            if ok[i] and ok[j]:
                values[j] = haversine(lat[i], lon[i], lat[j], lon[j])
    return dataset.adding_variable(
        VariableSpec("leg_distance", "m", "linear", role="navigation"), values
    )


def add_reference_height_wind(
    dataset: VoyageDataset, particulars: ShipParticulars
) -> VoyageDataset:
    """Anemometer wind corrected to the reference height, as
    ``rel_wind_speed_ref``; skipped when either height is unknown."""
    if (
        particulars.anemometer_height is None
        or particulars.wind_reference_height is None
        or not dataset.has_data("rel_wind_speed")
    ):
        return dataset
    v = dataset.column("rel_wind_speed")
    out = [
        None
        if math.isnan(x)
        else wind_to_reference_height(
            x, particulars.wind_reference_height, particulars.anemometer_height
        )
        for x in v
    ]
    return dataset.adding_variable(
        VariableSpec("rel_wind_speed_ref", "m/s", "linear",
                     role="operational_environment"),
        out,
    )


def heading_series(dataset: VoyageDataset) -> np.ndarray:
    """Best available heading per sample: corrected value, then the measured
    compass heading, then the GPS estimate."""
    n = len(dataset)
    out = np.full(n, np.nan)
    for name in ("fixed_heading", "heading", "gps_heading"):
        if dataset.declares(name) and dataset.has_data(name):
            col = dataset.column(name)
            take = np.isnan(out) & ~np.isnan(col)
            out[take] = col[take]
    return out


def resolve_ship_frame(
    dataset: VoyageDataset, report: ProcessingReport | None = None
) -> VoyageDataset:
    """Resolve hindcast wind/current vectors into the ship frame and derive
    the relative wave direction and a speed-through-water estimate.

    Adds (where inputs exist): ``rel_wind_long`` / ``rel_wind_trans`` (m/s,
    head wind and starboard wind positive), ``rel_wave_dir`` (deg),
    ``stw_estimate`` (m/s).
    """
    entry = report.stage("derive:ship_frame") if report is not None else None
    n = len(dataset)
    psi = heading_series(dataset)
    sog = dataset.column("sog") if dataset.has_data("sog") else np.full(n, np.nan)
    rad = np.deg2rad(psi)
    sin_p, cos_p = np.sin(rad), np.cos(rad)

    out = dataset
    added = []

    if dataset.has_data("hc_wind_u") and dataset.has_data("hc_wind_v"):
        u = dataset.column("hc_wind_u")
        v = dataset.column("hc_wind_v")
        long_true = u * sin_p + v * cos_p  # toward-bow component of wind vector
        trans_true = u * cos_p - v * sin_p  # toward-starboard component
        rel_long = sog - long_true  # head wind positive
        rel_trans = -trans_true  # wind from starboard positive
        out = out.adding_variable(
            VariableSpec("rel_wind_long", "m/s", "linear",
                         role="operational_environment"),
            [None if math.isnan(x) else float(x) for x in rel_long],
        )
        out = out.adding_variable(
            VariableSpec("rel_wind_trans", "m/s", "linear",
                         role="operational_environment"),
            [None if math.isnan(x) else float(x) for x in rel_trans],
        )
        added += ["rel_wind_long", "rel_wind_trans"]

    if dataset.has_data("hc_mean_wave_dir"):
        wave = dataset.column("hc_mean_wave_dir")
        rel_wave = (wave - psi) % 360.0
        out = out.adding_variable(
            VariableSpec("rel_wave_dir", "deg", "angular",
                         role="operational_environment"),
            [None if math.isnan(x) else float(x) for x in rel_wave],
        )
        added.append("rel_wave_dir")

    if dataset.has_data("hc_current_u") and dataset.has_data("hc_current_v"):
        cu = dataset.column("hc_current_u")
        cv = dataset.column("hc_current_v")
        current_long = cu * sin_p + cv * cos_p  # following current positive
        stw_est = sog - current_long
        out = out.adding_variable(
            VariableSpec("stw_estimate", "m/s", "linear", role="operating_point"),
            [None if math.isnan(x) else float(x) for x in stw_est],
        )
        added.append("stw_estimate")

    if entry is not None:
        entry.summary["variables_added"] = added
        if not added:
            entry.notes.append("no hindcast wind/wave/current inputs; nothing derived")
    return out


def ais_speed_consistency(
    dataset: VoyageDataset,
    tolerance_fraction: float = 0.3,
    window: int = 5,
    min_leg_seconds: float = 60.0,
    distance_floor_m: float = 100.0,
    report: ProcessingReport | None = None,
    particulars: ShipParticulars | None = None,
) -> VoyageDataset:
    """Flag speed-over-ground values inconsistent with the distance actually
    covered between consecutive positions, and replace them with the nearest
    unflagged neighbour's value.

    Each sample is checked against its forward leg (the last sample against
    its backward leg). For very short legs (< ``min_leg_seconds``) the
    implied speed comes from a ``window``-leg average trend instead of the
    single leg. Originals are preserved under ``raw_sog``.
    """
    entry = report.stage("ais_speed_consistency") if report is not None else None
    if not dataset.has_data("sog") or not (
        dataset.has_data("lat") and dataset.has_data("lon")
    ):
        if entry is not None:
            entry.notes.append("sog or positions absent; check skipped")
        return dataset

    lat = dataset.column("lat")
    lon = dataset.column("lon")
    sog = dataset.column("sog")
    ts = dataset.timestamps.astype(float)
    ok = _position_ok(dataset)
    n = len(dataset)

    # leg k joins sample k to k+1
    leg_dist = np.full(n - 1 if n > 1 else 0, np.nan)
    leg_dt = np.full(n - 1 if n > 1 else 0, np.nan)
    for k in range(n - 1):
        if ok[k] and ok[k + 1] and ts[k + 1] > ts[k]:
            leg_dist[k] = haversine(lat[k], lon[k], lat[k + 1], lon[k + 1])
            leg_dt[k] = ts[k + 1] - ts[k]

    def implied_over(leg: int) -> tuple[float, float] | None:
        """(distance, dt) for the check at this leg, trend-averaged when the
        leg is too short."""
        if math.isnan(leg_dist[leg]):
            return None
        if leg_dt[leg] >= min_leg_seconds:
            return float(leg_dist[leg]), float(leg_dt[leg])
        half = window // 2
        lo, hi = max(0, leg - half), min(len(leg_dist), leg + half + 1)
        d = leg_dist[lo:hi]
        t = leg_dt[lo:hi]
        good = ~np.isnan(d)
        if not good.any():
            return None
        return float(d[good].sum()), float(t[good].sum())

    flagged: list[int] = []
    details: list[tuple[int, float, float]] = []  # (index, observed, implied)
    for i in range(n):
        if math.isnan(sog[i]):
            continue
        leg = i if i < n - 1 else i - 1
        if leg < 0:
            continue
        got = implied_over(leg)
        if got is None:
            continue
        dist, dt = got
        reported = sog[i] * dt
        mismatch = abs(reported - dist) / max(reported, dist, distance_floor_m)
        if mismatch > tolerance_fraction:
            flagged.append(i)
            details.append((i, float(sog[i]), dist / dt))

    out = dataset
    if flagged and not out.declares("raw_sog"):
        raw = [None] * n
        for i in flagged:
            raw[i] = float(sog[i])
        out = out.adding_variable(
            VariableSpec("raw_sog", "m/s", "linear", role="navigation"), raw
        )

    flagged_set = set(flagged)
    replacements: dict[int, float | None] = {}
    unreplaced: list[int] = []
    for i in flagged:
        candidate = None
        for d in range(1, window + 1):
            for j in (i - d, i + d):
                if 0 <= j < n and j not in flagged_set and not math.isnan(sog[j]):
                    candidate = float(sog[j])
                    break
            if candidate is not None:
                break
        if candidate is None:
            unreplaced.append(i)
            replacements[i] = None  # no trustworthy neighbour: clear the value
        else:
            replacements[i] = candidate

    out = out.with_values("sog", replacements)
    out = out.adding_flags({i: {QualityFlag.IRRATIONAL_SPEED} for i in flagged})

    if entry is not None:
        entry.count_flag(QualityFlag.IRRATIONAL_SPEED, len(flagged))
        for i, observed, implied in details:
            entry.check(
                "replaced" if replacements[i] is not None else "left_missing",
                timestamp=int(ts[i]),
                variable="sog",
                expected=round(implied, 6),
                observed=observed,
            )
        if unreplaced:
            note = (
                f"{len(unreplaced)} flagged sample(s) had no valid neighbour "
                f"within {window}; values cleared"
            )
            if particulars is not None:
                lo, hi = service_speed_range(particulars.ship_type)
                note += (
                    f"; service-speed fallback range for {particulars.ship_type.value}: "
                    f"{lo:.3f}-{hi:.3f} m/s"
                )
            entry.notes.append(note)
    return out


def ais_status_check(
    dataset: VoyageDataset,
    port_speed_threshold: float = 0.5,
    report: ProcessingReport | None = None,
) -> VoyageDataset:
    """Cross-check the AIS navigation status against the measured speed.

    Status 1 (at anchorage) or 5 (moored) while moving faster than the port
    speed threshold, or status 0 (under way) while stationary inside a berth
    leg, means the manually updated fields are stale; the sample is flagged
    and the draft/destination fields should be treated with suspicion.
    """
    entry = report.stage("ais_status_check") if report is not None else None
    if not dataset.has_data("nav_status") or not dataset.has_data("sog"):
        if entry is not None:
            entry.notes.append("nav_status or sog absent; check skipped")
        return dataset
    status = dataset.column("nav_status")
    sog = dataset.column("sog")
    in_trip = dataset.in_trip_mask()
    has_trips = in_trip.any()

    flags: dict[int, set] = {}
    for i in range(len(dataset)):
        if math.isnan(status[i]) or math.isnan(sog[i]):
            continue
        st = int(round(status[i]))
        moving = sog[i] > port_speed_threshold
        if st in (1, 5) and moving:
            flags[i] = {QualityFlag.STALE_AIS_STATUS}
        elif st == 0 and sog[i] == 0.0 and has_trips and not in_trip[i]:
            flags[i] = {QualityFlag.STALE_AIS_STATUS}
    out = dataset.adding_flags(flags)
    if entry is not None:
        entry.count_flag(QualityFlag.STALE_AIS_STATUS, len(flags))
        for i in sorted(flags):
            entry.check(
                "stale_ais_status",
                timestamp=out.samples[i].timestamp,
                variable="nav_status",
                expected=None,
                observed=(int(round(status[i])), float(sog[i])),
            )
        if flags:
            entry.notes.append(
                "manually entered fields (draft, destination, ETA) of flagged "
                "samples are suspect"
            )
    return out
