"""Design-based estimation for forest inventory databases.

Load a CSV database, pick evaluations, and produce population estimates
(totals, per-acre ratios, sampling errors) for trees, biomass, land area,
growth and mortality, down woody material, diversity, and more — with
temporally-indifferent or annual panel combining.

    >>> import timberline as tl
    >>> db = tl.load_database("data/", ["CT"])
    >>> db = tl.clip(db, most_recent=True)
    >>> tl.tpa(db, tree_domain="DIA >= 10")
"""

from .attributes import (
    FAMILIES,
    EstimatorRequest,
    area,
    biomass,
    diversity,
    dwm,
    estimate,
    grow_mort,
    invasive,
    make_classes,
    seedling,
    stand_struct,
    tpa,
    vital_rates,
)
from .core import EstimateTable
from .errors import (
    DomainBindError,
    DomainSyntaxError,
    EstimationError,
    FetchError,
    GeometryError,
    LoadError,
    TimberlineError,
    UsageError,
)
from .evals import ClipOptions, clip, find_evaluations
from .io import fetch_state, load_database, write_database
from .model import ForestDatabase, validate_integrity
from .oracle import brute_force_estimate, compare_tables
from .spatial import PolygonSet
from .synth import build_fixture, random_database

__version__ = "0.3.1"

__all__ = [
    "FAMILIES",
    "EstimatorRequest",
    "EstimateTable",
    "ForestDatabase",
    "PolygonSet",
    "ClipOptions",
    "TimberlineError",
    "UsageError",
    "LoadError",
    "FetchError",
    "DomainSyntaxError",
    "DomainBindError",
    "EstimationError",
    "GeometryError",
    "load_database",
    "write_database",
    "fetch_state",
    "validate_integrity",
    "find_evaluations",
    "clip",
    "estimate",
    "tpa",
    "biomass",
    "area",
    "grow_mort",
    "vital_rates",
    "dwm",
    "diversity",
    "invasive",
    "seedling",
    "stand_struct",
    "make_classes",
    "brute_force_estimate",
    "compare_tables",
    "build_fixture",
    "random_database",
    "__version__",
]
