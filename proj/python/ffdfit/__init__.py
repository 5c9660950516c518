"""Template retrieval and free-form deformation fitting for point clouds."""

from ._core import (
    ConfigError,
    ControlLattice,
    DegenerateGeometry,
    FileNotFound,
    FitDiverged,
    ParseError,
    SizeMismatch,
    UnsupportedFormat,
    chamfer,
    chamfer_grad,
    deform,
    descriptor,
    emd,
    fit,
    lifted_loss,
    load_mesh,
    margin_violations,
    normalize,
    read_point_cloud,
    resample,
    sample_surface,
    write_point_cloud,
)

__all__ = [
    "ConfigError",
    "ControlLattice",
    "DegenerateGeometry",
    "FileNotFound",
    "FitDiverged",
    "ParseError",
    "SizeMismatch",
    "UnsupportedFormat",
    "chamfer",
    "chamfer_grad",
    "deform",
    "descriptor",
    "emd",
    "fit",
    "lifted_loss",
    "load_mesh",
    "margin_violations",
    "normalize",
    "read_point_cloud",
    "resample",
    "sample_surface",
    "write_point_cloud",
]
