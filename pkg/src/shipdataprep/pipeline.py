"""Pipeline driver: wires the stages together in processing order, runs the
error-detection loop around interpolation and feature derivation, and writes
the processed dataset, reports and plot-data files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cleaning, corrections, features, timeline, validation
from .hindcast import SteadyFilterParams, clean_gps, interpolate
from .ingest import (
    HindcastGrid,
    IngestError,
    PipelineConfig,
    load_hindcast,
    load_particulars,
    load_ship_csv,
)
from .model import (
    ProcessingReport,
    QualityFlag,
    ShipParticulars,
    VoyageDataset,
    iso_timestamp,
)
from .timeline import SegmentationError, TripIndex

# stage-2 retention limits (unit/s) when the config does not override them
DEFAULT_GRADIENT_TOLERANCE = {
    "lat": 5.0e-4,
    "lon": 5.0e-4,
    "draft_fore": 2.0e-3,
    "draft_aft": 2.0e-3,
    "shaft_rpm": 0.05,
    "sog": 0.02,
}

SOG_RELAX_ALPHA = 0.1  # relaxed pass rejects less: alpha scaled down
SOG_RELAX_TOLERANCE = 4.0  # and retains more: tolerance scaled up


@dataclass
class PipelineResult:
    dataset: VoyageDataset
    report: ProcessingReport
    trip_index: TripIndex | None
    particulars: ShipParticulars | None
    exit_code: int
    stage_failures: list[str] = field(default_factory=list)


def _steady_params(config: PipelineConfig, variable: str) -> SteadyFilterParams:
    tol = config.gradient_tolerance.get(
        variable,
        config.gradient_tolerance.get("default", DEFAULT_GRADIENT_TOLERANCE.get(variable)),
    )
    return SteadyFilterParams(config.steady_window, config.steady_alpha, tol)


def _copy_flags(base: VoyageDataset, flagged: VoyageDataset) -> VoyageDataset:
    extra = {}
    for i, (b, f) in enumerate(zip(base.samples, flagged.samples)):
        new = f.flags - b.flags
        if new:
            extra[i] = new
    return base.adding_flags(extra) if extra else base


def _carry_fixed(base: VoyageDataset, work: VoyageDataset) -> VoyageDataset:
    """Attach fixed_* substitution columns produced by validation onto the
    pre-derivation snapshot so the next iteration derives from them."""
    for spec in work.schema:
        if not spec.name.startswith("fixed_") or base.declares(spec.name):
            continue
        col = work.column(spec.name)
        base = base.adding_variable(
            spec, [None if np.isnan(v) else float(v) for v in col]
        )
    return base


def _derive(
    work: VoyageDataset,
    config: PipelineConfig,
    particulars: ShipParticulars,
    report: ProcessingReport,
) -> VoyageDataset:
    work = features.add_gps_heading(work)
    work = features.add_leg_distance(work)
    work = features.add_reference_height_wind(work, particulars)
    work = features.resolve_ship_frame(work, report)
    if work.source_kind == "ais":
        work = features.ais_speed_consistency(
            work,
            tolerance_fraction=config.ais_tolerance,
            window=config.ais_window,
            report=report,
            particulars=particulars,
        )
    if work.has_data("nav_status"):
        work = features.ais_status_check(
            work, port_speed_threshold=config.port_speed_threshold, report=report
        )
    return work


def _validate(
    work: VoyageDataset,
    config: PipelineConfig,
    particulars: ShipParticulars,
    report: ProcessingReport,
    use_fixed: bool,
) -> tuple[VoyageDataset, dict]:
    work = validation.check_power_identity(work, config.power_tolerance, report)
    work = validation.check_speed_power(work, particulars, report)
    pre_fault = sum(
        1 for s in work.samples if QualityFlag.ANGULAR_AVERAGING_FAULT in s.flags
    )
    for variable in ("heading", "rel_wind_dir"):
        if work.declares(variable) and work.has_data(variable):
            work = validation.detect_angular_fault(work, variable, report=report)
    post_fault = sum(
        1 for s in work.samples if QualityFlag.ANGULAR_AVERAGING_FAULT in s.flags
    )
    validation.check_stw(work, config.stw_tolerance, report)
    # first pass validates the data as recorded, exposing any fault cluster;
    # loop iterations validate with the substituted values applied
    wind = validation.check_longitudinal_wind(
        work, config.wind_tolerance, report, use_fixed=use_fixed
    )
    signals = {
        "new_angular_faults": post_fault - pre_fault,
        "wind_cross_referenced": wind.get("cross_referenced", 0),
    }
    return work, signals


def run_pipeline(
    config: PipelineConfig, report: ProcessingReport | None = None
) -> PipelineResult:
    """Execute the configured stages in processing order.

    Fatal input problems raise :class:`IngestError`/:class:`ConfigError`;
    anything recoverable lands in the report and processing continues.
    Unexpected stage failures are recorded and reflected in the exit code.
    """
    report = report if report is not None else ProcessingReport()
    failures: list[str] = []
    enabled = set(config.stages)

    if not config.ship_csv:
        raise IngestError("config does not name a ship_csv input")
    particulars = load_particulars(config.particulars, report) if config.particulars else None
    dataset = load_ship_csv(
        config.ship_csv,
        unit_map=config.unit_map,
        source_kind=config.source_kind,
        report=report,
    )
    grid: HindcastGrid | None = None
    if config.hindcast:
        grid = load_hindcast(config.hindcast)
    hydro_table = (
        corrections.HydroTable.from_csv(config.hydro_table) if config.hydro_table else None
    )
    models = [
        corrections.TableDrivenModel.from_csv(p) for p in config.resistance_tables
    ]

    trip_index: TripIndex | None = None

    # -- uniform time steps ---------------------------------------------------
    if "regularize" in enabled and len(dataset):
        try:
            if dataset.source_kind == "ais":
                dataset = timeline.resample(
                    dataset, config.sampling_interval, "down_mean", report=report
                )
            dataset = timeline.regularize(dataset, config.sampling_interval, report)
        except Exception as exc:  # pragma: no cover - defensive
            failures.append(f"regularize: {exc}")
            report.stage("regularize:failure").notes.append(str(exc))

    # -- trips ------------------------------------------------------------------
    if "trips" in enabled:
        entry = report.stage("trips")
        try:
            if config.trip_method == "state_variable":
                trip_index, dataset = timeline.segment_by_state(dataset)
            elif config.trip_method == "port_names":
                trip_index, dataset = timeline.segment_by_ports(dataset)
            else:
                rpm_thr = config.rpm_threshold
                sog_thr = config.sog_threshold
                if particulars is not None:
                    rpm_thr = rpm_thr if rpm_thr is not None else particulars.rpm_threshold
                    sog_thr = sog_thr if sog_thr is not None else particulars.sog_threshold
                trip_index, dataset = timeline.segment_by_thresholds(
                    dataset,
                    rpm_threshold=rpm_thr if rpm_thr is not None else 10.0,
                    sog_threshold=sog_thr if sog_thr is not None else 3.0 * 1852 / 3600,
                    pad_samples=config.pad_samples,
                )
            entry.summary["method"] = trip_index.method
            entry.summary["trips"] = len(trip_index.trips)
            entry.summary["berth_legs"] = len(trip_index.berth_legs)
        except SegmentationError as exc:
            entry.notes.append(f"segmentation skipped: {exc}")

    # -- GPS cleaning ------------------------------------------------------------
    if "gps_clean" in enabled:
        if dataset.has_data("lat") and dataset.has_data("lon"):
            dataset = clean_gps(dataset, _steady_params(config, "lat"), report)
        else:
            report.stage("gps_clean").notes.append("lat/lon absent; stage skipped")

    # -- interpolate + derive + validate, with the error loop --------------------
    base = dataset
    final = dataset
    have_positions = dataset.has_data("lat") and dataset.has_data("lon")
    loop_entry = report.stage("error_loop")
    iterations = 0
    for iteration in range(1, config.max_iterations + 1):
        iterations = iteration
        work = base
        if "interpolate" in enabled:
            if grid is not None and have_positions:
                work = interpolate(
                    grid,
                    work,
                    order=config.interpolation_order,
                    mask_policy=config.mask_policy,
                    report=report,
                )
            elif iteration == 1:
                report.stage("interpolate").notes.append(
                    "hindcast grid or GPS positions unavailable; stage skipped"
                )
        if "derive" in enabled and particulars is not None:
            try:
                work = _derive(work, config, particulars, report)
            except Exception as exc:
                failures.append(f"derive: {exc}")
                report.stage("derive:failure").notes.append(str(exc))
                break
        if "validate" in enabled and particulars is not None:
            try:
                work, signals = _validate(
                    work, config, particulars, report, use_fixed=iteration > 1
                )
            except Exception as exc:
                failures.append(f"validate: {exc}")
                report.stage("validate:failure").notes.append(str(exc))
                final = work
                break
        else:
            signals = {"new_angular_faults": 0, "wind_cross_referenced": 0}
        final = work
        errors = signals["new_angular_faults"] > 0 or signals["wind_cross_referenced"] > 0
        loop_entry.notes.append(
            f"iteration {iteration}: new_angular_faults="
            f"{signals['new_angular_faults']} wind_cross_referenced="
            f"{signals['wind_cross_referenced']}"
        )
        if not errors:
            break
        if iteration == config.max_iterations:
            loop_entry.notes.append(
                "processing errors persist after max_iterations; continuing"
            )
            break
        base = _carry_fixed(_copy_flags(base, work), work)
    loop_entry.summary["iterations"] = iterations
    dataset = final

    # -- draft corrections ---------------------------------------------------------
    if "draft_fix" in enabled:
        if trip_index is not None and trip_index.trips and (
            dataset.has_data("draft_fore") or dataset.has_data("draft_aft")
        ):
            try:
                for trip in trip_index.trips:
                    events = corrections.detect_draft_events(
                        dataset, trip, _steady_params(config, "draft_fore"),
                        n_avg=config.n_avg,
                    )
                    if events:
                        dataset = corrections.fix_draft_ramp(
                            dataset, trip, events, n_avg=config.n_avg, report=report
                        )
                    else:
                        dataset = corrections.fix_draft_simple(
                            dataset, trip, n_anchor=config.n_avg, report=report
                        )
            except Exception as exc:
                failures.append(f"draft_fix: {exc}")
                report.stage("draft_fix:failure").notes.append(str(exc))
        else:
            report.stage("draft_fix").notes.append(
                "no trips or no draft sensors; stage skipped"
            )

    # -- hydrostatics ------------------------------------------------------------------
    if "hydrostatics" in enabled and particulars is not None:
        dataset = _hydrostatics_stage(dataset, particulars, hydro_table, config, report)

    # -- resistance ----------------------------------------------------------------------
    if "resistance" in enabled:
        if models:
            try:
                dataset = corrections.resistance_components(dataset, models, report)
            except Exception as exc:
                failures.append(f"resistance: {exc}")
                report.stage("resistance:failure").notes.append(str(exc))
        else:
            report.stage("resistance").notes.append(
                "no resistance coefficient tables configured; stage skipped"
            )

    # -- cleaning ---------------------------------------------------------------------------
    if "clean" in enabled:
        try:
            dataset = cleaning.contextual_filter(
                dataset,
                repeat_run=config.repeat_run,
                dropout_max=config.dropout_max,
                spike_scales=config.spike_scales,
                report=report,
            )
            rpm_params = _steady_params(config, "shaft_rpm")
            sog_base = _steady_params(config, "sog")
            sog_params = SteadyFilterParams(
                sog_base.window,
                sog_base.alpha * SOG_RELAX_ALPHA,
                None
                if sog_base.gradient_tolerance is None
                else sog_base.gradient_tolerance * SOG_RELAX_TOLERANCE,
            )
            dataset = cleaning.quasi_steady_filter(dataset, rpm_params, sog_params, report)
            dataset = _pca_stage(dataset, config, report)
        except Exception as exc:
            failures.append(f"clean: {exc}")
            report.stage("clean:failure").notes.append(str(exc))

    exit_code = 2 if failures else 0
    return PipelineResult(dataset, report, trip_index, particulars, exit_code, failures)


def _hydrostatics_stage(
    dataset: VoyageDataset,
    particulars: ShipParticulars,
    hydro_table,
    config: PipelineConfig,
    report: ProcessingReport,
) -> VoyageDataset:
    from .model import VariableSpec

    entry = report.stage("hydrostatics")
    if not (dataset.has_data("draft_fore") and dataset.has_data("draft_aft")):
        entry.notes.append("draft sensors absent; stage skipped")
        return dataset
    fore = dataset.column("draft_fore")
    aft = dataset.column("draft_aft")
    in_trip = dataset.in_trip_mask()
    if not in_trip.any():
        in_trip = np.ones(len(dataset), dtype=bool)

    mean_draft = [None] * len(dataset)
    trim = [None] * len(dataset)
    disp = [None] * len(dataset)
    wsa = [None] * len(dataset)
    failed = 0
    for i in range(len(dataset)):
        if not in_trip[i] or np.isnan(fore[i]) or np.isnan(aft[i]):
            continue
        t = (fore[i] + aft[i]) / 2.0
        if t <= 0:
            failed += 1
            continue
        mean_draft[i] = t
        trim[i] = aft[i] - fore[i]
        try:
            h = corrections.hydrostatics(t, aft[i] - fore[i], particulars, hydro_table)
        except corrections.CorrectionError:
            failed += 1
            continue
        disp[i] = h.displacement_volume
        wsa[i] = h.wetted_surface
    for name, unit, col in (
        ("mean_draft", "m", mean_draft),
        ("trim", "m", trim),
        ("displacement", "m3", disp),
        ("wsa", "m2", wsa),
    ):
        if not dataset.declares(name):
            dataset = dataset.adding_variable(
                VariableSpec(name, unit, "linear", role="loading_condition"), col
            )
    entry.summary["computed"] = sum(1 for v in disp if v is not None)
    entry.summary["failed"] = failed
    if particulars.design_draft and any(v is not None for v in mean_draft):
        got = [v for v in mean_draft if v is not None]
        verdict = corrections.check_draft_ratio(
            float(np.mean(got)), particulars, config.voyage_kind
        )
        entry.summary["draft_ratio"] = {
            "ratio": verdict.ratio,
            "reference": verdict.reference,
            "verdict": verdict.verdict,
        }
        if verdict.replacement is not None:
            entry.notes.append(
                f"draft ratio deviates excessively; replacement candidate "
                f"{verdict.replacement:.2f} m"
            )
    return dataset


def _pca_stage(
    dataset: VoyageDataset, config: PipelineConfig, report: ProcessingReport
) -> VoyageDataset:
    candidates = config.pca_features or ("shaft_rpm", "shaft_power", "sog", "stw")
    present = [f for f in candidates if dataset.declares(f) and dataset.has_data(f)]
    if len(present) < 2:
        report.stage("clean:pca").notes.append(
            "fewer than two PCA features have data; detector skipped"
        )
        return dataset
    try:
        detector = cleaning.pca_fit(
            dataset,
            present,
            k=config.pca_components or None,
            quantile=config.pca_quantile,
        )
    except cleaning.CleaningError as exc:
        report.stage("clean:pca").notes.append(f"detector skipped: {exc}")
        return dataset
    return cleaning.pca_score(detector, dataset, report)


# -- output artifacts -----------------------------------------------------------


def write_processed_csv(
    dataset: VoyageDataset, path: str | Path, timestamp_header: bool = True
) -> None:
    """Processed data: original + derived columns, trip ids and one 0/1
    column per quality flag. Floats use repr for lossless round-trips."""
    import csv
    import datetime

    path = Path(path)
    names = [s.name for s in dataset.schema]
    flag_names = [f.value for f in QualityFlag]
    with path.open("w", newline="") as fh:
        if timestamp_header:
            now = datetime.datetime.now(datetime.timezone.utc)
            fh.write(f"# generated {now.strftime('%Y-%m-%dT%H:%M:%SZ')}\n")
        w = csv.writer(fh)
        w.writerow(["timestamp"] + names + ["trip_id"] + [f"flag_{n}" for n in flag_names])
        for s in dataset.samples:
            row = [iso_timestamp(s.timestamp)]
            for name in names:
                v = s.values.get(name)
                row.append("" if v is None else (v if isinstance(v, str) else repr(v)))
            row.append("" if s.trip_id is None else str(s.trip_id))
            present = {f.value for f in s.flags}
            row.extend("1" if n in present else "0" for n in flag_names)
            w.writerow(row)


def write_report_files(
    report: ProcessingReport, out_dir: str | Path, timestamp_header: bool = True
) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    txt = out_dir / "report.txt"
    js = out_dir / "report.json"
    txt.write_text(report.to_text(timestamp_header=timestamp_header))
    js.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    return txt, js


PLOT_VARIABLES = (
    "sog",
    "stw",
    "shaft_rpm",
    "shaft_power",
    "draft_fore",
    "draft_aft",
    "heading",
    "lat",
    "lon",
)


def emit_plotdata(
    dataset: VoyageDataset,
    trip_index: TripIndex | None,
    out_dir: str | Path,
    particulars: ShipParticulars | None = None,
) -> list[Path]:
    """Write plain-CSV plot inputs: one time-series file per trip, a
    speed-power scatter with curve overlays, the longitudinal wind
    comparison, and the draft correction before/after series."""
    import csv

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def write_csv(name: str, header: list[str], rows: list[list]) -> None:
        p = out_dir / name
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        written.append(p)

    present_vars = [
        v for v in PLOT_VARIABLES if dataset.declares(v) and dataset.has_data(v)
    ]
    if trip_index is not None:
        for trip in trip_index.trips:
            idx = np.nonzero(dataset.trip_ids == trip.trip_id)[0]
            rows = []
            for i in idx:
                s = dataset.samples[i]
                row = [iso_timestamp(s.timestamp)]
                for v in present_vars:
                    val = s.values.get(v)
                    row.append("" if val is None else repr(val))
                rows.append(row)
            write_csv(
                f"trip_{trip.trip_id:03d}.csv", ["timestamp"] + present_vars, rows
            )

    # speed-power scatter with the calm-water curve value at the same speed
    rows = []
    curve = particulars.curve() if particulars is not None else None
    if dataset.declares("stw") and dataset.declares("shaft_power"):
        stw = dataset.column("stw")
        pwr = dataset.column("shaft_power")
        for i in range(len(dataset)):
            if np.isnan(stw[i]) or np.isnan(pwr[i]):
                continue
            ref = curve.power_at(float(stw[i])) if curve is not None else None
            rows.append(
                [
                    iso_timestamp(dataset.samples[i].timestamp),
                    repr(float(stw[i])),
                    repr(float(pwr[i])),
                    "" if ref is None else repr(ref),
                ]
            )
    write_csv(
        "speed_power.csv",
        ["timestamp", "stw", "shaft_power", "curve_power"],
        rows,
    )

    # longitudinal wind comparison: ship-derived vs hindcast (head positive)
    rows = []
    if dataset.declares("rel_wind_long") and (
        dataset.declares("rel_wind_speed") or dataset.declares("rel_wind_speed_ref")
    ):
        onboard = validation.onboard_longitudinal_wind(dataset)
        hc = dataset.column("rel_wind_long")
        sog = dataset.column("sog") if dataset.declares("sog") else np.full(len(dataset), np.nan)
        for i in range(len(dataset)):
            if np.isnan(onboard[i]) or np.isnan(hc[i]) or np.isnan(sog[i]):
                continue
            faulted = QualityFlag.ANGULAR_AVERAGING_FAULT in dataset.samples[i].flags
            rows.append(
                [
                    iso_timestamp(dataset.samples[i].timestamp),
                    repr(float(onboard[i] - sog[i])),
                    repr(float(hc[i] - sog[i])),
                    "1" if faulted else "0",
                ]
            )
    write_csv(
        "wind_comparison.csv",
        ["timestamp", "ship_long_wind", "hindcast_long_wind", "angular_fault"],
        rows,
    )

    # draft correction before/after
    rows = []
    draft_cols = [
        c
        for c in ("raw_draft_fore", "draft_fore", "raw_draft_aft", "draft_aft")
        if dataset.declares(c)
    ]
    if draft_cols:
        for s in dataset.samples:
            row = [iso_timestamp(s.timestamp), "" if s.trip_id is None else str(s.trip_id)]
            got_any = False
            for c in draft_cols:
                v = s.values.get(c)
                row.append("" if v is None else repr(v))
                got_any = got_any or v is not None
            if got_any:
                rows.append(row)
    write_csv("draft_correction.csv", ["timestamp", "trip_id"] + draft_cols, rows)
    return written
