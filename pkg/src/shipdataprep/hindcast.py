"""GPS track cleaning and interpolation of gridded hindcast fields to the
ship's position and time.

The steady-state filter lives here because irrational GPS positions are its
first customer, but the corrections and cleaning stages reuse it on draft,
shaft rpm and speed series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ingest import GridVariable, HindcastGrid
from .model import (
    ProcessingReport,
    QualityFlag,
    VariableSpec,
    VoyageDataset,
)


# -- Student t quantile -------------------------------------------------------
#
# Self-contained so the runtime dependency stays numpy-only. Exact CDF via
# the regularized incomplete beta (Lentz continued fraction), inverted by
# bisection; far tighter than the 1e-4 the filter needs.


def _betacf(a: float, b: float, x: float) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 200):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            break
    return h


def _betainc(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: int) -> float:
    """CDF of Student's t distribution with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    x = df / (df + t * t)
    p = 0.5 * _betainc(df / 2.0, 0.5, x)
    return 1.0 - p if t >= 0 else p

def t_quantile(p: float, df: int) -> float:
    """Inverse t CDF by bisection (absolute accuracy far below 1e-4)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -t_quantile(1.0 - p, df)
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < p:
        hi *= 2.0
        if hi > 1e12:  # pragma: no cover - p astronomically close to 1
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


# -- two-stage steady-state filter ---------------------------------------------


@dataclass(frozen=True)
class SteadyFilterParams:
    """Sliding-window t-test on the local slope (stage 1) followed by a
    local-gradient check that retains misidentified samples (stage 2).

    ``gradient_tolerance`` is an absolute rate limit in unit/s; None skips
    stage 2 entirely (no retention)."""

    window: int = 11
    alpha: float = 0.01
    gradient_tolerance: float | None = None

    def __post_init__(self) -> None:
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be an odd sample count >= 3")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.gradient_tolerance is not None and self.gradient_tolerance <= 0:
            raise ValueError("gradient_tolerance must be strictly positive")


@dataclass
class SteadyFilterResult:
    unsteady: np.ndarray  # aligned to the input series, missing -> False
    stage1_rejected: int
    retained_by_gradient: int
    warning: str | None = None


def steady_state_filter(
    timestamps: np.ndarray, values: np.ndarray, params: SteadyFilterParams
) -> SteadyFilterResult:
    """Mark unsteady samples of one timestamped series.

    Missing values (NaN) are dropped before windowing and never marked.
    Stage 1 fits a least-squares slope in each centered window and rejects
    zero slope at level alpha (two-sided t-test, window-2 dof). Stage 2
    clears the mark when the local gradient |x[i+1]-x[i-1]| / (t[i+1]-t[i-1])
    stays within the tolerance.
    """
    timestamps = np.asarray(timestamps, dtype=float)
    values = np.asarray(values, dtype=float)
    n_all = len(values)
    unsteady = np.zeros(n_all, dtype=bool)
    present = np.nonzero(~np.isnan(values))[0]
    w = params.window
    if len(present) < w:
        return SteadyFilterResult(
            unsteady, 0, 0,
            warning=f"series has {len(present)} valid samples, window is {w}; "
            "all samples pass",
        )

    tt = timestamps[present]
    vv = values[present]
    h = w // 2

    tw = np.lib.stride_tricks.sliding_window_view(tt, w)
    vw = np.lib.stride_tricks.sliding_window_view(vv, w)
    tc = tw - tw.mean(axis=1, keepdims=True)
    sxx = (tc * tc).sum(axis=1)
    sxy = (tc * vw).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = sxy / sxx
    fit = vw.mean(axis=1, keepdims=True) + slope[:, None] * tc
    sse = ((vw - fit) ** 2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.sqrt(sse / (w - 2) / sxx)

    crit = t_quantile(1.0 - params.alpha / 2.0, w - 2)
    tstat = np.zeros_like(slope)
    nz = se > 0
    tstat[nz] = np.abs(slope[nz]) / se[nz]
    # a perfect nonconstant line has zero residual but a real slope
    tstat[~nz & (np.abs(slope) > 0)] = np.inf
    reject = tstat > crit

    stage1 = 0
    retained = 0
    tol = params.gradient_tolerance
    centers = np.arange(h, len(vv) - h)
    for k, i in enumerate(centers):
        if not reject[k]:
            continue
        stage1 += 1
        if tol is not None and 0 < i < len(vv) - 1:
            dt = tt[i + 1] - tt[i - 1]
            grad = abs(vv[i + 1] - vv[i - 1]) / dt if dt > 0 else math.inf
            if grad <= tol:
                retained += 1
                continue
        unsteady[present[i]] = True
    return SteadyFilterResult(unsteady, stage1, retained)


def _series_groups(dataset: VoyageDataset) -> list[np.ndarray]:
    """Index groups the filters run over: one per trip when trips are
    assigned, else the whole series."""
    ids = dataset.trip_ids
    if (ids >= 0).any():
        return [np.nonzero(ids == t)[0] for t in sorted(set(ids[ids >= 0].tolist()))]
    return [np.arange(len(dataset))]


def clean_gps(
    dataset: VoyageDataset,
    params: SteadyFilterParams,
    report: ProcessingReport | None = None,
) -> VoyageDataset:
    """Flag irrational GPS positions found by the two-stage filter applied
    to the latitude and (unwrapped) longitude series. Coordinates are never
    altered; flagged positions are simply excluded from interpolation."""
    entry = report.stage("gps_clean") if report is not None else None
    if not (dataset.has_data("lat") and dataset.has_data("lon")):
        if entry is not None:
            entry.notes.append("lat/lon absent; GPS cleaning skipped")
        return dataset

    ts = dataset.timestamps.astype(float)
    lat = dataset.column("lat")
    lon = dataset.column("lon")
    flags: dict[int, set] = {}
    stage1_total = 0
    for idx in _series_groups(dataset):
        lat_g = lat[idx]
        lon_g = lon[idx].copy()
        ok = ~np.isnan(lon_g)
        if ok.sum() >= 2:
            lon_g[ok] = np.unwrap(lon_g[ok], period=360.0)
        for series in (lat_g, lon_g):
            res = steady_state_filter(ts[idx], series, params)
            stage1_total += res.stage1_rejected
            for local_i in np.nonzero(res.unsteady)[0]:
                flags.setdefault(int(idx[local_i]), set()).add(
                    QualityFlag.IRRATIONAL_POSITION
                )
            if res.warning and entry is not None:
                entry.notes.append(res.warning)
    out = dataset.adding_flags(flags)
    if entry is not None:
        entry.count_flag(QualityFlag.IRRATIONAL_POSITION, len(flags))
        entry.summary["stage1_rejected"] = stage1_total
        for i in sorted(flags):
            s = out.samples[i]
            entry.check(
                "irrational_position",
                timestamp=s.timestamp,
                variable="lat/lon",
                observed=(s.values.get("lat"), s.values.get("lon")),
            )
    return out


# -- hindcast interpolation ----------------------------------------------------


def _time_stencil(times: np.ndarray, t: float, count: int) -> np.ndarray | None:
    """Indices of the ``count`` grid timestamps around t (consecutive,
    containing the bracketing pair, nearest overall; ties biased to the
    past). None when t lies outside the grid span or the grid is too short."""
    n = len(times)
    if count > n or t < times[0] or t > times[-1]:
        return None
    j = int(np.searchsorted(times, t))  # times[j-1] < t <= times[j]
    best_s = None
    best_cost = math.inf
    for s in range(max(0, j - count), min(j + 1, n - count) + 1):
        window = times[s : s + count]
        if not (window[0] <= t <= window[-1]) and count > 1:
            continue
        cost = float(np.abs(window - t).sum())
        if cost < best_cost - 1e-12:
            best_cost = cost
            best_s = s
    if best_s is None:  # count == 1 or degenerate; fall back to nearest
        best_s = int(np.clip(j - 1, 0, n - count))
    return np.arange(best_s, best_s + count)


def _cell(axis: np.ndarray, x: float) -> tuple[int, float] | None:
    """Bracketing cell index and fractional position along a monotonic axis."""
    n = len(axis)
    if n < 2 or x < axis[0] or x > axis[-1]:
        return None
    i = int(np.clip(np.searchsorted(axis, x, side="right") - 1, 0, n - 2))
    frac = (x - axis[i]) / (axis[i + 1] - axis[i])
    return i, float(frac)


def _lon_cell(lons: np.ndarray, lon: float) -> tuple[int, int, float] | None:
    """Like _cell but handles the +-180 seam: when the grid nearly spans the
    globe and the point falls in the seam gap, interpolate between the last
    and first longitude columns."""
    direct = _cell(lons, lon)
    if direct is not None:
        i, f = direct
        return i, i + 1, f
    if len(lons) < 2:
        return None
    span_gap = (lons[0] + 360.0) - lons[-1]
    if span_gap <= 0 or span_gap > 2.0 * float(np.max(np.diff(lons))):
        return None
    offset = (lon - lons[-1]) % 360.0
    if offset > span_gap:
        return None
    return len(lons) - 1, 0, float(offset / span_gap)


def _bilinear(
    values: np.ndarray,
    mask: np.ndarray,
    yi: int,
    x0: int,
    x1: int,
    fy: float,
    fx: float,
    policy: str,
) -> float | None:
    nodes = np.array(
        [values[yi, x0], values[yi, x1], values[yi + 1, x0], values[yi + 1, x1]]
    )
    masked = np.array(
        [mask[yi, x0], mask[yi, x1], mask[yi + 1, x0], mask[yi + 1, x1]]
    )
    if masked.all():
        return None
    if masked.any():
        if policy == "zero_fill":
            nodes = np.where(masked, 0.0, nodes)
        else:  # neighbor_mean
            fill = nodes[~masked].mean()
            nodes = np.where(masked, fill, nodes)
    w = np.array(
        [(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx]
    )
    return float((w * nodes).sum())


def _lagrange(ts: np.ndarray, ys: np.ndarray, t: float) -> float:
    total = 0.0
    for j in range(len(ts)):
        term = ys[j]
        for m in range(len(ts)):
            if m != j:
                term *= (t - ts[m]) / (ts[j] - ts[m])
        total += term
    return float(total)


def _interp_variable_at(
    var: GridVariable,
    grid: HindcastGrid,
    t: float,
    lat: float,
    lon: float,
    order: int,
    policy: str,
) -> float | None:
    stencil = _time_stencil(grid.timestamps.astype(float), t, order + 1)
    if stencil is None:
        return None
    cy = _cell(grid.latitudes, lat)
    cx = _lon_cell(grid.longitudes, lon)
    if cy is None or cx is None:
        return None
    yi, fy = cy
    x0, x1, fx = cx

    def spatial(values: np.ndarray) -> list[float] | None:
        out = []
        for ti in stencil:
            v = _bilinear(values[ti], var.mask[ti], yi, x0, x1, fy, fx, policy)
            if v is None:
                return None
            out.append(v)
        return out

    times = grid.timestamps[stencil].astype(float)
    if var.is_angular:
        rad = np.deg2rad(var.values)
        sins = spatial(np.sin(rad))
        coss = spatial(np.cos(rad))
        if sins is None or coss is None:
            return None
        s = _lagrange(times, np.array(sins), t)
        c = _lagrange(times, np.array(coss), t)
        if s == 0.0 and c == 0.0:
            return None
        value = math.degrees(math.atan2(s, c)) % 360.0
        if var.convention == "toward":
            value = (value + 180.0) % 360.0
        return value
    vals = spatial(var.values)
    if vals is None:
        return None
    return _lagrange(times, np.array(vals), t)


def interpolate(
    grid: HindcastGrid,
    dataset: VoyageDataset,
    order: int = 1,
    mask_policy: str = "neighbor_mean",
    report: ProcessingReport | None = None,
    prefix: str = "hc_",
) -> VoyageDataset:
    """Interpolate every grid variable to each sample's position and time.

    Per variable and sample: bilinear over the 4 bracketing grid nodes at the
    ``order + 1`` nearest grid timestamps around t, then polynomial (degree =
    order) interpolation in time. Masked nodes follow ``mask_policy``
    (``zero_fill`` or ``neighbor_mean``); a fully masked cell yields a
    missing value. Samples with flagged or missing positions, or outside the
    grid's bounding box or time span, stay missing and are counted.

    Results land in new ``hc_*`` variables; direction fields declared with a
    ``toward`` convention are converted to the internal from-convention.
    """
    if order < 1:
        raise ValueError("interpolation order must be >= 1")
    if mask_policy not in ("zero_fill", "neighbor_mean"):
        raise ValueError(f"unknown mask policy {mask_policy!r}")
    entry = report.stage("interpolate") if report is not None else None

    ids = dataset.trip_ids
    candidates = (
        np.nonzero(ids >= 0)[0] if (ids >= 0).any() else np.arange(len(dataset))
    )
    lat = dataset.column("lat") if dataset.declares("lat") else np.full(len(dataset), np.nan)
    lon = dataset.column("lon") if dataset.declares("lon") else np.full(len(dataset), np.nan)
    ts = dataset.timestamps.astype(float)
    pos_ok = ~np.isnan(lat) & ~np.isnan(lon)
    for i, s in enumerate(dataset.samples):
        if QualityFlag.IRRATIONAL_POSITION in s.flags:
            pos_ok[i] = False

    out = dataset
    counts = {"no_position": 0, "outside": 0, "interpolated": 0, "masked_missing": 0}
    for var in grid.variables:
        name = prefix + var.name
        column: list[float | None] = [None] * len(dataset)
        for i in candidates:
            if not pos_ok[i]:
                counts["no_position"] += 1
                continue
            stencil_ok = (
                grid.timestamps[0] <= ts[i] <= grid.timestamps[-1]
                and len(grid.timestamps) >= order + 1
            )
            if not stencil_ok:
                counts["outside"] += 1
                continue
            v = _interp_variable_at(
                var, grid, ts[i], float(lat[i]), float(lon[i]), order, mask_policy
            )
            if v is None:
                in_box = (
                    _cell(grid.latitudes, float(lat[i])) is not None
                    and _lon_cell(grid.longitudes, float(lon[i])) is not None
                )
                counts["masked_missing" if in_box else "outside"] += 1
                continue
            counts["interpolated"] += 1
            column[i] = v
        kind = "angular" if var.is_angular else "linear"
        spec = VariableSpec(name, var.unit, kind, role="operational_environment")
        out = out.adding_variable(spec, column)
    if entry is not None:
        entry.summary.update(
            {f"samples_{k}": v for k, v in sorted(counts.items())}
        )
        entry.summary["order"] = order
        entry.summary["mask_policy"] = mask_policy
    return out


def order_check(
    grid: HindcastGrid,
    dataset: VoyageDataset,
    report: ProcessingReport,
    mask_policy: str = "neighbor_mean",
) -> None:
    """Compare order-1 against order-2 interpolation per variable and append
    the difference distribution to the report; the gap quantifies how much a
    linear-in-time surface loses."""
    if len(grid.timestamps) < 3:
        raise ValueError("order check needs a grid with at least 3 time steps")
    entry = report.stage("order_check")
    d1 = interpolate(grid, dataset, 1, mask_policy, prefix="oc1_")
    d2 = interpolate(grid, dataset, 2, mask_policy, prefix="oc2_")
    for var in grid.variables:
        a = d1.column("oc1_" + var.name)
        b = d2.column("oc2_" + var.name)
        diff = np.abs(a - b)
        diff = diff[~np.isnan(diff)]
        if len(diff) == 0:
            entry.summary[var.name] = {"count": 0}
            continue
        entry.summary[var.name] = {
            "count": int(len(diff)),
            "mean_abs": float(diff.mean()),
            "max_abs": float(diff.max()),
            "p95_abs": float(np.quantile(diff, 0.95)),
        }
