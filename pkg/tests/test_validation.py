"""Validation-check battery: power identity, speed-power accumulation, stw
estimate, longitudinal wind comparison and the angular-averaging detector."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle_values as oracle
from conftest import series_dataset
from shipdataprep.model import (
    CalmWaterCurve,
    ProcessingReport,
    QualityFlag,
    ShipParticulars,
    ShipType,
)
from shipdataprep.validation import (
    check_longitudinal_wind,
    check_power_identity,
    check_speed_power,
    check_stw,
    detect_angular_fault,
    shaft_power,
)


class TestPowerIdentity:
    def test_pure_function_oracle(self):
        assert shaft_power(2.0, 1000.0) == pytest.approx(oracle.POWER_IDENTITY_W, abs=1e-9)
        assert shaft_power(2.0, 1000.0) == pytest.approx(12_566.4, abs=0.1)

    def test_zero_case_passes(self):
        ds = series_dataset(
            {"shaft_rpm": [0.0], "shaft_torque": [0.0], "shaft_power": [0.0]}
        )
        out = check_power_identity(ds)
        assert not out.samples[0].flags

    def test_third_variable_derived(self):
        # n = 2 rev/s stored as 120 rpm, torque 1000 N*m -> power derived
        ds = series_dataset({"shaft_rpm": [120.0], "shaft_torque": [1000.0]})
        out = check_power_identity(ds)
        assert out.samples[0].values["derived_shaft_power"] == pytest.approx(
            12_566.4, abs=0.1
        )

    def test_mismatch_flagged(self):
        ds = series_dataset(
            {"shaft_rpm": [120.0], "shaft_torque": [1000.0], "shaft_power": [20_000.0]}
        )
        report = ProcessingReport()
        out = check_power_identity(ds, rel_tolerance=0.05, report=report)
        assert QualityFlag.INVALID_RANGE in out.samples[0].flags
        assert report.stage_entries[0].summary["failed"] == 1

    def test_within_tolerance_not_flagged(self):
        ds = series_dataset(
            {"shaft_rpm": [120.0], "shaft_torque": [1000.0], "shaft_power": [12_600.0]}
        )
        out = check_power_identity(ds, rel_tolerance=0.02)
        assert not out.samples[0].flags

    def test_derivation_is_fixed_point(self):
        ds = series_dataset({"shaft_rpm": [90.0], "shaft_torque": [5_000.0]})
        out = check_power_identity(ds)
        derived = out.samples[0].values["derived_shaft_power"]
        # feeding the derived power back in passes the identity exactly
        again = series_dataset(
            {"shaft_rpm": [90.0], "shaft_torque": [5_000.0], "shaft_power": [derived]}
        )
        out2 = check_power_identity(again, rel_tolerance=1e-12)
        assert not out2.samples[0].flags


def particulars(envelope=None):
    curve = CalmWaterCurve(
        "sea_trial", tuple((v, 800.0 * v**3) for v in (1.0, 2.0, 4.0, 6.0, 8.0))
    )
    return ShipParticulars(
        ship_type=ShipType.CRUDE_OIL_CARRIER,
        beam=46.0,
        design_draft=15.0,
        lwl=270.0,
        block_coefficient=0.8,
        calm_water_curves=(curve,),
        envelope=envelope,
    )


class TestSpeedPower:
    def on_curve_dataset(self, shift=0.0, speeds=None):
        speeds = speeds if speeds is not None else np.linspace(2.0, 7.5, 40)
        power = [800.0 * v**3 * (1.0 + shift) for v in speeds]
        return series_dataset(
            {"stw": list(speeds), "shaft_power": power, "shaft_rpm": [80.0] * len(speeds)}
        )

    def test_on_curve_zero_bias(self):
        report = ProcessingReport()
        check_speed_power(self.on_curve_dataset(), particulars(), report)
        entry = report.stage_entries[0]
        # curve is piecewise linear, cubic samples sit slightly above chords
        assert abs(entry.summary["bias_median"]) < 0.15
        assert entry.summary["compared"] == 40

    def test_shifted_power_recovers_bias(self):
        base = ProcessingReport()
        check_speed_power(self.on_curve_dataset(), particulars(), base)
        shifted = ProcessingReport()
        check_speed_power(self.on_curve_dataset(shift=0.10), particulars(), shifted)
        delta = (
            (1.0 + shifted.stage_entries[0].summary["bias_median"])
            / (1.0 + base.stage_entries[0].summary["bias_median"])
        ) - 1.0
        assert delta == pytest.approx(0.10, abs=0.01)

    def test_dense_curve_on_curve_bias_zero_shifted_recovers_exactly(self):
        # with a curve sampled densely enough, chord error vanishes: on-curve
        # bias ~ 0 and a +10% power shift is recovered as bias 0.10 +- 0.01
        speeds = tuple(np.linspace(1.0, 8.0, 200))
        dense = CalmWaterCurve("sea_trial", tuple((v, 800.0 * v**3) for v in speeds))
        p = ShipParticulars(
            ship_type=ShipType.CRUDE_OIL_CARRIER, beam=46.0, design_draft=15.0,
            lwl=270.0, block_coefficient=0.8, calm_water_curves=(dense,),
        )
        on_curve = ProcessingReport()
        check_speed_power(self.on_curve_dataset(), p, on_curve)
        assert on_curve.stage_entries[0].summary["bias_median"] == pytest.approx(
            0.0, abs=1e-3
        )
        shifted = ProcessingReport()
        check_speed_power(self.on_curve_dataset(shift=0.10), p, shifted)
        assert shifted.stage_entries[0].summary["bias_median"] == pytest.approx(
            0.10, abs=0.01
        )

    def test_point_outside_envelope_flagged_once(self):
        env = ((60.0, 0.0), (60.0, 300_000.0), (100.0, 300_000.0), (100.0, 0.0))
        ds = series_dataset(
            {
                "stw": [4.0, 5.0],
                "shaft_power": [51_200.0, 500_000.0],
                "shaft_rpm": [80.0, 85.0],
            }
        )
        report = ProcessingReport()
        out = check_speed_power(ds, particulars(envelope=env), report)
        flagged = [
            i for i, s in enumerate(out.samples) if QualityFlag.INVALID_RANGE in s.flags
        ]
        assert flagged == [1]

    def test_outside_curve_span_skipped(self):
        ds = series_dataset(
            {"stw": [0.5, 9.5], "shaft_power": [100.0, 1e6], "shaft_rpm": [80.0, 80.0]}
        )
        report = ProcessingReport()
        check_speed_power(ds, particulars(), report)
        assert report.stage_entries[0].summary["skipped_outside_curve"] == 2

    def test_bias_invariant_under_reordering(self):
        speeds = np.linspace(2.0, 7.5, 31)
        rng = np.random.default_rng(4)
        shuffled = speeds.copy()
        rng.shuffle(shuffled)
        a = ProcessingReport()
        check_speed_power(self.on_curve_dataset(speeds=speeds), particulars(), a)
        b = ProcessingReport()
        check_speed_power(self.on_curve_dataset(speeds=shuffled), particulars(), b)
        assert (
            a.stage_entries[0].summary["bias_median"]
            == b.stage_entries[0].summary["bias_median"]
        )


class TestStwCheck:
    def test_zero_current_zero_residual(self):
        ds = series_dataset({"stw": [5.0], "stw_estimate": [5.0]})
        report = ProcessingReport()
        check_stw(ds, 0.5, report)
        assert report.stage_entries[0].summary["residual_mean"] == 0.0

    def test_following_current_residual_zero(self):
        # sog 6, following current 1 -> estimate 5 matches measured stw 5
        ds = series_dataset({"stw": [5.0], "stw_estimate": [6.0 - 1.0]})
        report = ProcessingReport()
        check_stw(ds, 0.5, report)
        assert report.stage_entries[0].summary["residual_mean"] == 0.0

    def test_ground_tracking_fault_reported_not_flagged(self):
        # speed log stuck in ground-tracking mode: stw == sog despite a
        # steady 1 m/s current -> residuals identically 1
        n = 20
        ds = series_dataset(
            {"stw": [6.0] * n, "stw_estimate": [5.0] * n}
        )
        report = ProcessingReport()
        check_stw(ds, 0.5, report)
        entry = report.stage_entries[0]
        assert entry.summary["residual_mean"] == pytest.approx(1.0)
        assert entry.summary["beyond_tolerance"] == n
        # report-only: no flags appear on the dataset
        assert all(not s.flags for s in ds.samples)


def wind_check_dataset(n=30, faulted=()):
    """Head-wind scenario: heading 0, true wind from north 8 m/s, sog 5.
    Onboard relative wind: speed 13, direction 0 (head). Faulted samples
    record direction 180 instead (the 0/360 averaging fault)."""
    heading = [0.0] * n
    sog = [5.0] * n
    wind_u = [0.0] * n
    wind_v = [-8.0] * n
    rel_speed = [13.0] * n
    rel_dir = [180.0 if i in faulted else 0.0 for i in range(n)]
    return series_dataset(
        {
            "heading": heading,
            "sog": sog,
            "hc_wind_u": wind_u,
            "hc_wind_v": wind_v,
            "rel_wind_speed": rel_speed,
            "rel_wind_dir": rel_dir,
        }
    )


class TestLongitudinalWind:
    def run(self, ds, report=None):
        from shipdataprep.features import resolve_ship_frame

        ds = resolve_ship_frame(ds)
        return ds, check_longitudinal_wind(ds, tolerance=4.0, report=report)

    def test_consistent_fixture_zero_residual(self):
        report = ProcessingReport()
        ds, result = self.run(wind_check_dataset(), report)
        assert result["compared"] == 30
        assert result["beyond_tolerance"] == 0
        assert report.stage_entries[-1].summary["residual_mean"] == pytest.approx(
            0.0, abs=1e-9
        )

    def test_faulted_directions_produce_residual_cluster_and_cross_reference(self):
        ds = wind_check_dataset(faulted=range(10, 20))
        from shipdataprep.features import resolve_ship_frame

        ds = resolve_ship_frame(ds)
        # detector first: it flags the angular fault and writes fixed_ values
        ds = detect_angular_fault(ds, "rel_wind_dir")
        report = ProcessingReport()
        result = check_longitudinal_wind(ds, tolerance=4.0, report=report, use_fixed=False)
        assert result["beyond_tolerance"] == 10
        assert result["cross_referenced"] == 10

    def test_fixed_values_clear_the_residuals(self):
        ds = wind_check_dataset(faulted=range(10, 20))
        from shipdataprep.features import resolve_ship_frame

        ds = resolve_ship_frame(ds)
        ds = detect_angular_fault(ds, "rel_wind_dir")
        result = check_longitudinal_wind(ds, tolerance=4.0, use_fixed=True)
        assert result["beyond_tolerance"] == 0

    def test_missing_hindcast_wind_skips(self):
        ds = series_dataset({"sog": [5.0], "rel_wind_speed": [10.0]})
        result = check_longitudinal_wind(ds)
        assert result["compared"] == 0


class TestAngularFaultDetector:
    def build(self, recorded, reference):
        ds = series_dataset({"rel_wind_dir": recorded})
        ref = np.asarray(reference, dtype=float)
        return ds, ref

    def test_fault_near_wrap_flagged_and_fixed(self):
        ds, ref = self.build([180.0], [2.0])
        out = detect_angular_fault(ds, "rel_wind_dir", reference=ref)
        assert QualityFlag.ANGULAR_AVERAGING_FAULT in out.samples[0].flags
        assert out.samples[0].values["fixed_rel_wind_dir"] == pytest.approx(2.0)

    def test_agreement_not_flagged(self):
        ds, ref = self.build([90.0], [88.0])
        out = detect_angular_fault(ds, "rel_wind_dir", reference=ref)
        assert not out.samples[0].flags

    def test_reference_away_from_wrap_not_flagged(self):
        ds, ref = self.build([180.0], [175.0])
        out = detect_angular_fault(ds, "rel_wind_dir", reference=ref)
        assert not out.samples[0].flags

    def test_no_reference_skips_with_note(self):
        ds = series_dataset({"rel_wind_dir": [10.0]})
        report = ProcessingReport()
        out = detect_angular_fault(ds, "rel_wind_dir", report=report)
        assert out is not ds or True  # unchanged dataset is fine
        assert any("skipped" in n for n in report.stage_entries[0].notes)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(min_value=0.0, max_value=359.999))
    def test_never_fires_when_recorded_equals_reference(self, theta):
        ds, ref = self.build([theta], [theta])
        out = detect_angular_fault(ds, "rel_wind_dir", reference=ref)
        assert not out.samples[0].flags
