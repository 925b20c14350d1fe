"""Executable constructions of functions with prescribed gradients and blowups on measures."""

from .blowup import (
    Decomposition,
    EnReport,
    GridFunction,
    admissible_decompose,
    estimate_En_mass,
    rescale,
    scan_blowups,
    sup_distance,
)
from .covering import (
    CubeCover,
    IntervalCover,
    OffsetResult,
    RectCover,
    cover_centered_intervals,
    cover_good_cubes,
    cover_good_rectangles,
    find_good_offset,
)
from .errors import BudgetExhausted, InvalidInput, SearchFailure
from .gradient import (
    BumpSum,
    LayeredBumpSum,
    VectorField,
    iterate_constant,
    lp_constant,
    lusin_iterate,
    lusin_step,
    truncate_field,
)
from .measures import (
    Atomic,
    BoxRegion,
    Cantor,
    LebesgueDensity,
    MeasureModel,
    Product,
    Subspace,
    dyadic_partition,
    frame_mass,
    integrate,
    load_measure,
    mass,
    measure_from_spec,
    tangent_measure,
)
from .oned import BlowupTarget, PwlFunction, collapse, insert_target, prescribe_blowup_1d
from .reports import VerifyReport
from .tiles import TileParams, TileSum, TransverseTarget, blueprint_eval, cutoff_phi, cutoff_psi, tile_rectangles

__version__ = "0.1.0"
