"""File ingestion: ship CSV, hindcast grid files, ship particulars and
pipeline configuration, plus the matching writers.

All loaders convert to the internal SI unit system at the boundary
(m, m/s, W, N*m, degrees) so later stages never see mixed units. Unit
conversion is a pure per-column scale factor and is exactly inverted by
the writers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    KNOT,
    CalmWaterCurve,
    ProcessingReport,
    Sample,
    SchemaError,
    ShipParticulars,
    ShipType,
    StageEntry,
    VariableSpec,
    VoyageDataset,
    iso_timestamp,
    new_dataset,
    parse_iso_timestamp,
)
from .tables import block_coefficient_midpoint


class IngestError(ValueError):
    """Fatal problem with an input file."""


class ConfigError(ValueError):
    """Fatal problem with the pipeline configuration."""


# Multiplicative factors into SI. Angles stay in degrees by design.
UNIT_TO_SI: dict[str, float] = {
    "": 1.0,
    "m/s": 1.0,
    "mps": 1.0,
    "knots": KNOT,
    "kn": KNOT,
    "kt": KNOT,
    "W": 1.0,
    "kW": 1000.0,
    "MW": 1.0e6,
    "Nm": 1.0,
    "kNm": 1000.0,
    "m": 1.0,
    "cm": 0.01,
    "deg": 1.0,
    "degrees": 1.0,
    "rpm": 1.0,
    "s": 1.0,
}

# Variables from the bare-minimum list; a mostly-unparseable column among
# these is a fatal ingest error rather than a silent pile of missing values.
BARE_MINIMUM_VARIABLES = frozenset(
    {
        "shaft_rpm",
        "rudder_angle",
        "prop_pitch",
        "draft_fore",
        "draft_aft",
        "rel_wind_speed",
        "rel_wind_dir",
        "sig_wave_height",
        "rel_wave_dir",
        "mean_wave_period",
        "shaft_power",
        "stw",
    }
)


def default_schema() -> list[VariableSpec]:
    """Canonical variable declarations with physically-motivated valid ranges."""
    return [
        VariableSpec("lat", "deg", "linear", -90.0, 90.0, "navigation"),
        VariableSpec("lon", "deg", "linear", -180.0, 180.0, "navigation"),
        VariableSpec("sog", "m/s", "linear", 0.0, 26.0, "navigation"),
        VariableSpec("stw", "m/s", "linear", 0.0, 26.0, "operating_point"),
        VariableSpec("shaft_rpm", "rpm", "linear", 0.0, 300.0, "operational_control"),
        VariableSpec("shaft_torque", "Nm", "linear", 0.0, 5.0e7, "operational_control"),
        VariableSpec("shaft_power", "W", "linear", 0.0, 1.0e8, "operating_point"),
        VariableSpec("rudder_angle", "deg", "linear", -90.0, 90.0, "operational_control"),
        VariableSpec("prop_pitch", "deg", "linear", -90.0, 90.0, "operational_control"),
        VariableSpec("draft_fore", "m", "linear", 0.0, 30.0, "loading_condition"),
        VariableSpec("draft_aft", "m", "linear", 0.0, 30.0, "loading_condition"),
        VariableSpec("rel_wind_speed", "m/s", "linear", 0.0, 90.0, "operational_environment"),
        VariableSpec("rel_wind_dir", "deg", "angular", role="operational_environment"),
        VariableSpec("heading", "deg", "angular", role="navigation"),
        VariableSpec("nav_status", "", "linear", 0.0, 15.0, "state"),
        VariableSpec("state", "", "text", role="state"),
        VariableSpec("port", "", "text", role="state"),
    ]


def _unit_factor(unit: str) -> float:
    try:
        return UNIT_TO_SI[unit]
    except KeyError:
        raise IngestError(f"unknown unit {unit!r}; known: {sorted(UNIT_TO_SI)}") from None


def load_ship_csv(
    path: str | Path,
    schema: list[VariableSpec] | None = None,
    unit_map: dict[str, str] | None = None,
    source_kind: str = "in_service",
    report: ProcessingReport | None = None,
) -> VoyageDataset:
    """Parse a ship data CSV into a :class:`VoyageDataset`.

    The first column must be ``timestamp`` (ISO-8601 UTC). Empty cells are
    missing values. ``unit_map`` maps column names to their source units;
    unmapped numeric columns are assumed SI already. Header columns not in
    the schema are auto-declared so that ingest is loss-free.
    """
    path = Path(path)
    schema = list(schema) if schema is not None else default_schema()
    unit_map = dict(unit_map or {})
    entry = report.stage("ingest:ship_csv") if report is not None else StageEntry("ingest")

    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise IngestError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    if "timestamp" not in header:
        raise IngestError(f"{path}: missing timestamp column")
    ts_col = header.index("timestamp")

    spec_map = {s.name: s for s in schema}
    body = rows[1:]
    # auto-declare unknown columns; sniff text vs numeric from the data
    for col in header:
        if col == "timestamp" or col in spec_map:
            continue
        idx = header.index(col)
        cells = [r[idx].strip() for r in body if idx < len(r) and r[idx].strip()]
        kind = "linear"
        for c in cells:
            try:
                float(c)
            except ValueError:
                kind = "text"
                break
        spec = VariableSpec(col, "", kind)
        schema.append(spec)
        spec_map[col] = spec

    factors = {}
    for col, unit in unit_map.items():
        factors[col] = _unit_factor(unit)

    samples: list[Sample] = []
    unparseable: dict[str, int] = {}
    nonempty: dict[str, int] = {}
    skipped_rows = 0
    for rownum, row in enumerate(body, start=2):
        raw_ts = row[ts_col].strip() if ts_col < len(row) else ""
        if not raw_ts:
            skipped_rows += 1
            continue
        try:
            ts = parse_iso_timestamp(raw_ts)
        except ValueError:
            skipped_rows += 1
            continue
        values: dict[str, float | str] = {}
        for i, col in enumerate(header):
            if i == ts_col or i >= len(row):
                continue
            cell = row[i].strip()
            if not cell:
                continue
            nonempty[col] = nonempty.get(col, 0) + 1
            spec = spec_map[col]
            if spec.kind == "text":
                values[col] = cell
                continue
            try:
                v = float(cell) * factors.get(col, 1.0)
            except ValueError:
                unparseable[col] = unparseable.get(col, 0) + 1
                continue
            if col == "lat" and not -90.0 <= v <= 90.0:
                unparseable[col] = unparseable.get(col, 0) + 1
                continue
            values[col] = v
        samples.append(Sample(ts, values))

    for col, bad in sorted(unparseable.items()):
        total = nonempty.get(col, 0)
        entry.notes.append(f"column {col}: {bad} unparseable cell(s) -> missing")
        if col in BARE_MINIMUM_VARIABLES and total and bad / total > 0.5:
            raise IngestError(
                f"{path}: column {col}: {bad}/{total} cells unparseable "
                "(bare-minimum variable, more than 50% lost)"
            )
    missing_counts = {
        s.name: sum(1 for smp in samples if s.name not in smp.values)
        for s in schema
        if any(s.name in smp.values for smp in samples)
    }
    entry.summary["rows"] = len(samples)
    entry.summary["rows_skipped_bad_timestamp"] = skipped_rows
    entry.summary["missing_cells"] = {
        k: v for k, v in sorted(missing_counts.items()) if v
    }
    return new_dataset(schema, samples, source_kind=source_kind)


def write_ship_csv(
    dataset: VoyageDataset,
    path: str | Path,
    unit_map: dict[str, str] | None = None,
    timestamp_header: bool = False,
) -> None:
    """Write a dataset back to ship-CSV form, inverting unit conversion.

    Values are written with ``repr`` so a reload reproduces them bit-exact
    (when no unit conversion is applied).
    """
    unit_map = dict(unit_map or {})
    factors = {col: _unit_factor(u) for col, u in unit_map.items()}
    names = [s.name for s in dataset.schema]
    path = Path(path)
    with path.open("w", newline="") as fh:
        if timestamp_header:
            import datetime

            now = datetime.datetime.now(datetime.timezone.utc)
            fh.write(f"# generated {now.strftime('%Y-%m-%dT%H:%M:%SZ')}\n")
        w = csv.writer(fh)
        w.writerow(["timestamp"] + names)
        for s in dataset.samples:
            row = [iso_timestamp(s.timestamp)]
            for name in names:
                v = s.values.get(name)
                if v is None:
                    row.append("")
                elif isinstance(v, str):
                    row.append(v)
                else:
                    row.append(repr(v / factors.get(name, 1.0)))
            w.writerow(row)


def save_dataset(dataset: VoyageDataset, path: str | Path) -> None:
    """Self-describing dump: schema header lines, then CSV with flags and
    trip ids. Round-trips exactly through :func:`load_dataset`."""
    path = Path(path)
    names = [s.name for s in dataset.schema]
    with path.open("w", newline="") as fh:
        for s in dataset.schema:
            vmin = "" if s.valid_min is None else repr(s.valid_min)
            vmax = "" if s.valid_max is None else repr(s.valid_max)
            fh.write(f"#schema {s.name};{s.unit};{s.kind};{s.role};{vmin};{vmax}\n")
        fh.write(f"#source {dataset.source_kind}\n")
        if dataset.sampling_interval is not None:
            fh.write(f"#interval {dataset.sampling_interval}\n")
        w = csv.writer(fh)
        w.writerow(["timestamp"] + names + ["trip_id", "flags"])
        for s in dataset.samples:
            row = [iso_timestamp(s.timestamp)]
            for name in names:
                v = s.values.get(name)
                row.append("" if v is None else (v if isinstance(v, str) else repr(v)))
            row.append("" if s.trip_id is None else str(s.trip_id))
            row.append("|".join(sorted(f.value for f in s.flags)))
            w.writerow(row)


def load_dataset(path: str | Path) -> VoyageDataset:
    """Reload a dataset written by :func:`save_dataset`."""
    from .model import QualityFlag

    path = Path(path)
    schema: list[VariableSpec] = []
    source_kind = "in_service"
    interval: int | None = None
    data_lines: list[str] = []
    with path.open() as fh:
        for line in fh:
            if line.startswith("#schema "):
                name, unit, kind, role, vmin, vmax = line[len("#schema "):].rstrip("\n").split(";")
                schema.append(
                    VariableSpec(
                        name,
                        unit,
                        kind,
                        float(vmin) if vmin else None,
                        float(vmax) if vmax else None,
                        role,
                    )
                )
            elif line.startswith("#source "):
                source_kind = line.split(None, 1)[1].strip()
            elif line.startswith("#interval "):
                interval = int(line.split(None, 1)[1])
            elif line.startswith("#"):
                continue
            else:
                data_lines.append(line)
    rows = list(csv.reader(data_lines))
    if not rows:
        raise IngestError(f"{path}: missing header row")
    header = rows[0]
    names = header[1:-2]
    samples = []
    for row in rows[1:]:
        ts = parse_iso_timestamp(row[0])
        values: dict[str, float | str] = {}
        spec_by_name = {s.name: s for s in schema}
        for name, cell in zip(names, row[1:-2]):
            if cell == "":
                continue
            values[name] = cell if spec_by_name[name].kind == "text" else float(cell)
        trip = None if row[-2] == "" else int(row[-2])
        flags = frozenset(QualityFlag(f) for f in row[-1].split("|") if f)
        samples.append(Sample(ts, values, flags, trip))
    return new_dataset(schema, samples, sampling_interval=interval, source_kind=source_kind)


# -- hindcast grid -----------------------------------------------------------

MASK_TOKEN = "M"


@dataclass(frozen=True)
class GridVariable:
    """One gridded field: values[time, lat, lon] plus a validity mask
    (True = invalid/land). Direction fields carry their convention."""

    name: str
    unit: str
    values: np.ndarray
    mask: np.ndarray
    convention: str | None = None  # 'from' | 'toward' for direction fields

    def __post_init__(self) -> None:
        if self.values.shape != self.mask.shape:
            raise IngestError(f"grid variable {self.name!r}: mask shape mismatch")

    @property
    def is_angular(self) -> bool:
        return self.unit in ("deg", "degree", "degrees")


@dataclass(frozen=True)
class HindcastGrid:
    """Gridded environmental field set on a (time, lat, lon) lattice."""

    variables: tuple[GridVariable, ...]
    latitudes: np.ndarray
    longitudes: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self) -> None:
        for axis, name in ((self.latitudes, "lat"), (self.longitudes, "lon"),
                           (self.timestamps, "time")):
            if len(axis) >= 2 and not np.all(np.diff(axis) > 0):
                raise IngestError(f"{name} axis must be strictly ascending")
        shape = (len(self.timestamps), len(self.latitudes), len(self.longitudes))
        for v in self.variables:
            if v.values.shape != shape:
                raise IngestError(
                    f"grid variable {v.name!r}: shape {v.values.shape} != {shape}"
                )

    def variable(self, name: str) -> GridVariable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(f"no grid variable {name!r}")


def load_hindcast(path: str | Path) -> HindcastGrid:
    """Parse the plain-text gridded format.

    Header: ``#var <name> <unit>`` (one per variable, in block order),
    ``#lat``/``#lon``/``#time`` comma lists, optional ``#conv <var> from|toward``.
    Body: per variable, per time step, one line of ``|lon|`` comma-separated
    values for each latitude; the token ``M`` marks a masked cell.
    """
    path = Path(path)
    var_decls: list[tuple[str, str]] = []
    conventions: dict[str, str] = {}
    lats: list[float] = []
    lons: list[float] = []
    times: list[int] = []
    body: list[tuple[int, str]] = []

    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#var "):
                parts = line.split()
                if len(parts) < 3:
                    raise IngestError(f"{path}:{lineno}: malformed #var line")
                var_decls.append((parts[1], parts[2]))
            elif line.startswith("#lat "):
                lats = [float(x) for x in line[len("#lat "):].split(",")]
            elif line.startswith("#lon "):
                lons = [float(x) for x in line[len("#lon "):].split(",")]
            elif line.startswith("#time "):
                times = [parse_iso_timestamp(x) for x in line[len("#time "):].split(",")]
            elif line.startswith("#conv "):
                parts = line.split()
                if len(parts) != 3 or parts[2] not in ("from", "toward"):
                    raise IngestError(f"{path}:{lineno}: malformed #conv line")
                conventions[parts[1]] = parts[2]
            elif line.startswith("#"):
                continue
            else:
                body.append((lineno, line))

    if not var_decls:
        raise IngestError(f"{path}: no #var declarations")
    for axis, label in ((lats, "#lat"), (lons, "#lon"), (times, "#time")):
        if not axis:
            raise IngestError(f"{path}: missing {label} header")

    nt, ny, nx = len(times), len(lats), len(lons)
    expected = len(var_decls) * nt * ny
    if len(body) != expected:
        # name the first slice that comes up short
        got = len(body)
        var_i = min(got // (nt * ny), len(var_decls) - 1)
        time_i = (got % (nt * ny)) // ny
        raise IngestError(
            f"{path}: expected {expected} data rows ({len(var_decls)} variable(s) x "
            f"{nt} time step(s) x {ny} latitude(s)), got {got}; first incomplete "
            f"slice: variable {var_decls[var_i][0]!r}, time index {time_i}"
        )

    variables = []
    row = 0
    for name, unit in var_decls:
        values = np.zeros((nt, ny, nx))
        mask = np.zeros((nt, ny, nx), dtype=bool)
        for ti in range(nt):
            for yi in range(ny):
                lineno, line = body[row]
                row += 1
                cells = [c.strip() for c in line.split(",")]
                if len(cells) != nx:
                    raise IngestError(
                        f"{path}:{lineno}: variable {name!r}, time index {ti}, "
                        f"lat index {yi}: expected {nx} values, got {len(cells)}"
                    )
                for xi, cell in enumerate(cells):
                    if cell == MASK_TOKEN:
                        mask[ti, yi, xi] = True
                        continue
                    try:
                        values[ti, yi, xi] = float(cell)
                    except ValueError:
                        raise IngestError(
                            f"{path}:{lineno}: variable {name!r}, time index {ti}, "
                            f"lat index {yi}, lon index {xi}: unknown token {cell!r}"
                        ) from None
        variables.append(
            GridVariable(name, unit, values, mask, conventions.get(name))
        )
    return HindcastGrid(
        tuple(variables),
        np.asarray(lats, dtype=float),
        np.asarray(lons, dtype=float),
        np.asarray(times, dtype=np.int64),
    )


# -- ship particulars --------------------------------------------------------


def _read_kv_file(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise IngestError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _parse_points(text: str) -> tuple[tuple[float, float], ...]:
    pts = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        a, _, b = chunk.partition(":")
        pts.append((float(a), float(b)))
    return tuple(pts)


def load_particulars(
    path: str | Path, report: ProcessingReport | None = None
) -> ShipParticulars:
    """Read a ship-particulars key=value file.

    Mandatory: ``ship_type``, ``beam``, ``design_draft`` and at least one of
    ``lwl``/``lpp``. A missing block coefficient is filled with the type's
    table midpoint and the fill is recorded in the report.
    """
    path = Path(path)
    kv = _read_kv_file(path)
    entry = report.stage("ingest:particulars") if report is not None else None

    try:
        raw_type = kv["ship_type"]
    except KeyError:
        raise IngestError(f"{path}: missing mandatory key ship_type") from None
    try:
        ship_type = ShipType(raw_type)
    except ValueError:
        accepted = ", ".join(t.value for t in ShipType)
        raise IngestError(
            f"{path}: unknown ship type {raw_type!r}; accepted types: {accepted}"
        ) from None

    def fnum(key: str) -> float | None:
        return float(kv[key]) if key in kv else None

    for key in ("beam", "design_draft"):
        if key not in kv:
            raise IngestError(f"{path}: missing mandatory key {key}")
    if "lwl" not in kv and "lpp" not in kv:
        raise IngestError(f"{path}: one of lwl, lpp is mandatory")

    cb = fnum("block_coefficient")
    if cb is None:
        cb = block_coefficient_midpoint(ship_type)
        if entry is not None:
            entry.corrections.append(
                f"block_coefficient absent; filled with table midpoint {cb} "
                f"for {ship_type.value}"
            )

    curves = []
    for key in sorted(kv):
        if key.startswith("curve."):
            curves.append(CalmWaterCurve(key[len("curve."):], _parse_points(kv[key])))
    envelope = _parse_points(kv["envelope"]) if "envelope" in kv else None

    try:
        return ShipParticulars(
            ship_type=ship_type,
            beam=float(kv["beam"]),
            design_draft=float(kv["design_draft"]),
            lwl=fnum("lwl"),
            lpp=fnum("lpp"),
            block_coefficient=cb,
            anemometer_height=fnum("anemometer_height"),
            wind_reference_height=fnum("wind_reference_height"),
            calm_water_curves=tuple(curves),
            envelope=envelope,
            rpm_threshold=fnum("rpm_threshold") or 10.0,
            sog_threshold=fnum("sog_threshold") or 3.0 * KNOT,
        )
    except SchemaError as exc:
        raise IngestError(f"{path}: {exc}") from None


# -- pipeline configuration ---------------------------------------------------

PIPELINE_STAGES = (
    "regularize",
    "trips",
    "gps_clean",
    "interpolate",
    "derive",
    "validate",
    "draft_fix",
    "hydrostatics",
    "resistance",
    "clean",
)

TRIP_METHODS = ("state_variable", "thresholds", "port_names")
MASK_POLICIES = ("zero_fill", "neighbor_mean")


@dataclass
class PipelineConfig:
    """Everything the pipeline driver needs, parsed from a key=value file."""

    ship_csv: str = ""
    particulars: str = ""
    hindcast: str | None = None
    hydro_table: str | None = None
    resistance_tables: tuple[str, ...] = ()
    source_kind: str = "in_service"
    sampling_interval: int = 900
    trip_method: str = "thresholds"
    interpolation_order: int = 1
    mask_policy: str = "neighbor_mean"
    steady_window: int = 11
    steady_alpha: float = 0.01
    gradient_tolerance: dict[str, float] = field(default_factory=dict)
    pca_components: int = 0  # 0 = choose k for >= 95% explained variance
    pca_quantile: float = 0.995
    pca_features: tuple[str, ...] = ()
    stages: tuple[str, ...] = PIPELINE_STAGES
    rpm_threshold: float | None = None
    sog_threshold: float | None = None
    pad_samples: int = 2
    max_iterations: int = 2
    ais_tolerance: float = 0.3
    ais_window: int = 5
    port_speed_threshold: float = 0.5
    power_tolerance: float = 0.02
    stw_tolerance: float = 1.0
    wind_tolerance: float = 4.0
    repeat_run: int = 20
    dropout_max: int = 3
    spike_scales: float = 6.0
    n_avg: int = 10
    voyage_kind: str = "unknown"
    unit_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.sampling_interval <= 0:
            raise ConfigError("sampling_interval must be strictly positive")
        if self.trip_method not in TRIP_METHODS:
            raise ConfigError(f"unknown trip method {self.trip_method!r}")
        if self.interpolation_order < 1:
            raise ConfigError("interpolation order must be >= 1")
        if self.mask_policy not in MASK_POLICIES:
            raise ConfigError(f"unknown mask policy {self.mask_policy!r}")
        if not 0.0 < self.steady_alpha < 1.0:
            raise ConfigError("steady_alpha must lie in (0, 1)")
        if not 0.0 < self.pca_quantile < 1.0:
            raise ConfigError("pca_quantile must lie in (0, 1)")
        for key in ("steady_window", "pad_samples", "max_iterations", "ais_window",
                    "repeat_run", "dropout_max", "n_avg"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be strictly positive")
        for key in ("ais_tolerance", "port_speed_threshold", "power_tolerance",
                    "stw_tolerance", "wind_tolerance", "spike_scales"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be strictly positive")
        unknown = set(self.stages) - set(PIPELINE_STAGES)
        if unknown:
            raise ConfigError(f"unknown stage(s): {sorted(unknown)}")


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a pipeline config key=value file; see README for the key list."""
    path = Path(path)
    kv = _read_kv_file(path)
    kwargs: dict = {}
    gradient: dict[str, float] = {}
    units: dict[str, str] = {}
    for key, value in kv.items():
        if key.startswith("gradient_tolerance."):
            gradient[key.split(".", 1)[1]] = float(value)
        elif key.startswith("unit."):
            units[key.split(".", 1)[1]] = value
        elif key in ("sampling_interval", "interpolation_order", "steady_window",
                     "pca_components", "pad_samples", "max_iterations", "ais_window",
                     "repeat_run", "dropout_max", "n_avg"):
            kwargs[key] = int(value)
        elif key in ("steady_alpha", "pca_quantile", "rpm_threshold", "sog_threshold",
                     "ais_tolerance", "port_speed_threshold", "power_tolerance",
                     "stw_tolerance", "wind_tolerance", "spike_scales"):
            kwargs[key] = float(value)
        elif key == "stages":
            kwargs["stages"] = tuple(s.strip() for s in value.split(",") if s.strip())
        elif key == "pca_features":
            kwargs["pca_features"] = tuple(s.strip() for s in value.split(",") if s.strip())
        elif key == "resistance_tables":
            kwargs["resistance_tables"] = tuple(
                _resolve(path, s.strip()) for s in value.split(",") if s.strip()
            )
        elif key in ("ship_csv", "particulars", "hindcast", "hydro_table"):
            kwargs[key] = _resolve(path, value)
        elif key in ("source_kind", "trip_method", "mask_policy", "voyage_kind"):
            kwargs[key] = value
        else:
            raise ConfigError(f"{path}: unknown config key {key!r}")
    try:
        return PipelineConfig(gradient_tolerance=gradient, unit_map=units, **kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _resolve(config_path: Path, value: str) -> str:
    """Paths in a config file are relative to the config file itself."""
    p = Path(value)
    return str(p if p.is_absolute() else (config_path.parent / p))
