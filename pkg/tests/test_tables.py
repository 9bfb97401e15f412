"""Ship-type tables must reproduce the published rows exactly; accessors
convert units on the way out."""

import pytest

from shipdataprep.model import KNOT, ShipType
from shipdataprep.tables import (
    BLOCK_COEFFICIENT_RANGE,
    DRAFT_RATIO_ROWS,
    SERVICE_SPEED_KNOTS,
    block_coefficient_midpoint,
    draft_ratio_reference,
    service_speed_range,
    wetted_surface,
)

# printed table rows, transcribed once; tests compare string-exact
PRINTED_SERVICE_SPEEDS = {
    ShipType.CRUDE_OIL_CARRIER: "13-17",
    ShipType.GAS_TANKER: "16-20",
    ShipType.PRODUCT_TANKER: "13-16",
    ShipType.CHEMICAL_TANKER: "15-18",
    ShipType.ORE_CARRIER: "14-15",
    ShipType.BULK_CARRIER: "12-15",
    ShipType.LINE_CARRIER: "20-23",
    ShipType.FEEDER: "18-21",
    ShipType.GENERAL_CARGO: "14-20",
    ShipType.COASTER: "13-16",
    ShipType.RO_RO: "18-23",
    ShipType.CRUISE_SHIP: "20-23",
    ShipType.FERRY: "16-23",
}

PRINTED_BLOCK_COEFFICIENTS = {
    ShipType.CRUDE_OIL_CARRIER: "0.78-0.83",
    ShipType.GAS_TANKER: "0.65-0.75",
    ShipType.PRODUCT_TANKER: "0.75-0.80",
    ShipType.CHEMICAL_TANKER: "0.70-0.78",
    ShipType.ORE_CARRIER: "0.80-0.85",
    ShipType.BULK_CARRIER: "0.75-0.85",
    ShipType.LINE_CARRIER: "0.62-0.72",
    ShipType.FEEDER: "0.60-0.70",
    ShipType.GENERAL_CARGO: "0.70-0.85",
    ShipType.COASTER: "0.70-0.85",
    ShipType.RO_RO: "0.55-0.70",
    ShipType.CRUISE_SHIP: "0.60-0.70",
    ShipType.FERRY: "0.50-0.70",
}

PRINTED_DRAFT_RATIOS = {
    "liquefied_gas_tanker": ("0.67", "0.89"),
    "chemical_tanker": ("0.66", "0.88"),
    "oil_tanker": ("0.60", "0.89"),
    "bulk_carrier": ("0.58", "0.91"),
    "general_cargo": ("0.65", "0.89"),
    "container": (None, "0.82"),
    "ro_ro": (None, "0.87"),
    "cruise": (None, "0.98"),
    "ferry_pax": (None, "0.90"),
    "ferry_ro_pax": (None, "0.93"),
}


def test_service_speed_rows_match_printed_strings():
    assert set(SERVICE_SPEED_KNOTS) == set(ShipType)
    for ship_type, printed in PRINTED_SERVICE_SPEEDS.items():
        lo, hi = SERVICE_SPEED_KNOTS[ship_type]
        assert f"{lo}-{hi}" == printed


def test_service_speed_range_converts_to_m_per_s():
    lo, hi = service_speed_range(ShipType.CRUDE_OIL_CARRIER)
    assert lo == 13 * KNOT and hi == 17 * KNOT
    assert service_speed_range(ShipType.CRUISE_SHIP) == (20 * KNOT, 23 * KNOT)
    assert service_speed_range(ShipType.FEEDER) == (18 * KNOT, 21 * KNOT)


def test_block_coefficient_rows_match_printed_strings():
    assert set(BLOCK_COEFFICIENT_RANGE) == set(ShipType)
    for ship_type, printed in PRINTED_BLOCK_COEFFICIENTS.items():
        lo, hi = BLOCK_COEFFICIENT_RANGE[ship_type]
        assert f"{lo:.2f}-{hi:.2f}" == printed


def test_block_coefficient_midpoint_crude():
    assert block_coefficient_midpoint(ShipType.CRUDE_OIL_CARRIER) == pytest.approx(0.805)


def test_draft_ratio_rows_match_printed_strings():
    assert set(DRAFT_RATIO_ROWS) == set(PRINTED_DRAFT_RATIOS)
    for row, (ballast, laden) in PRINTED_DRAFT_RATIOS.items():
        got_ballast, got_laden = DRAFT_RATIO_ROWS[row]
        assert f"{got_laden:.2f}" == laden
        if ballast is None:
            assert got_ballast is None
        else:
            assert f"{got_ballast:.2f}" == ballast


def test_draft_ratio_reference_lookups():
    assert draft_ratio_reference(ShipType.BULK_CARRIER, "laden") == 0.91
    assert draft_ratio_reference(ShipType.CRUDE_OIL_CARRIER, "ballast") == 0.60
    # container types have no ballast column: single value applies
    assert draft_ratio_reference(ShipType.LINE_CARRIER, "ballast") == 0.82
    assert draft_ratio_reference(ShipType.FERRY, "ballast") == 0.90


def test_wetted_surface_requires_positive_draft():
    with pytest.raises(ValueError):
        wetted_surface(ShipType.BULK_CARRIER, 1e5, 0.0, 270.0, None)
