"""shipdataprep: batch processing of raw ship operational time-series into a
validated, feature-enriched dataset for performance analysis."""

from .model import (
    KNOT,
    CalmWaterCurve,
    DatasetError,
    ProcessingReport,
    QualityFlag,
    Sample,
    SchemaError,
    ShipParticulars,
    ShipType,
    VariableSpec,
    VoyageDataset,
    new_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "KNOT",
    "CalmWaterCurve",
    "DatasetError",
    "ProcessingReport",
    "QualityFlag",
    "Sample",
    "SchemaError",
    "ShipParticulars",
    "ShipType",
    "VariableSpec",
    "VoyageDataset",
    "new_dataset",
    "__version__",
]
