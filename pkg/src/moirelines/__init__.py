"""Level lines of quasi-periodic superpositions of two periodic potentials.

The package builds a planar potential by superposing two doubly periodic
layers, the second one rotated and shifted, then traces its level lines over
arbitrarily large regions, classifies the open ones, recovers the integer
quadruple labelling the regular ones, and maps out the stability zones of
that label over the twist angle.
"""

from .geometry import (
    DegenerateLatticeError,
    EuclideanTransform,
    Lattice2,
    Rect,
    apply_transform,
    embed,
    reciprocal_basis,
    rot90,
)
from .potential import (
    Combiner,
    CombinerRangeError,
    FourierTerm,
    PeriodicPotential,
    Product,
    Sum,
    SuperpositionPotential,
    TableLookup,
    WeightedSum,
    eval_periodic,
    eval_superposition,
    hexagonal_lattice,
    is_commensurate,
    lift_F,
    period_generators,
    square_lattice,
    three_cosine_potential,
    two_cosine_potential,
)
from .tracer import (
    BudgetError,
    ChunkedField,
    EnergyInterval,
    LevelLine,
    LineStatus,
    SeedNotOnLevelError,
    TraceBudget,
    energy_interval,
    find_seeds,
    trace_level_line,
)
from .classifier import (
    Chaotic,
    Classification,
    Closed,
    DirectionFit,
    LineFitError,
    Quadruple,
    Regular,
    ShiftFamilyReport,
    Undetermined,
    ZeroAnnihilatorError,
    classification_to_dict,
    classify,
    classify_first_open,
    direction_from_quadruple,
    first_open_line,
    fit_direction,
    quadruple_basis,
    recover_quadruple,
    shift_family_check,
    strip_width,
)
from .sweep import (
    AlphaSample,
    StabilityZone,
    SweepConfig,
    SweepResult,
    ZoneSet,
    detect_zones,
    make_point_fn,
    result_to_dict,
    sample_shifts,
    sweep_angle,
    sweep_to_csv,
    zones_to_csv,
    zones_to_svg,
)
from .config import ConfigError, ParsedConfig, load_config, parse_config
from .output import (
    fmt_float,
    lines_to_svg,
    manifests_equivalent,
    run_manifest,
    stable_json,
    write_text,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # geometry
    "DegenerateLatticeError",
    "EuclideanTransform",
    "Lattice2",
    "Rect",
    "apply_transform",
    "embed",
    "reciprocal_basis",
    "rot90",
    # potential
    "Combiner",
    "CombinerRangeError",
    "FourierTerm",
    "PeriodicPotential",
    "Product",
    "Sum",
    "SuperpositionPotential",
    "TableLookup",
    "WeightedSum",
    "eval_periodic",
    "eval_superposition",
    "hexagonal_lattice",
    "is_commensurate",
    "lift_F",
    "period_generators",
    "square_lattice",
    "three_cosine_potential",
    "two_cosine_potential",
    # tracer
    "BudgetError",
    "ChunkedField",
    "EnergyInterval",
    "LevelLine",
    "LineStatus",
    "SeedNotOnLevelError",
    "TraceBudget",
    "energy_interval",
    "find_seeds",
    "trace_level_line",
    # classifier
    "Chaotic",
    "Classification",
    "Closed",
    "DirectionFit",
    "LineFitError",
    "Quadruple",
    "Regular",
    "ShiftFamilyReport",
    "Undetermined",
    "ZeroAnnihilatorError",
    "classification_to_dict",
    "classify",
    "classify_first_open",
    "direction_from_quadruple",
    "first_open_line",
    "fit_direction",
    "quadruple_basis",
    "recover_quadruple",
    "shift_family_check",
    "strip_width",
    # sweep
    "AlphaSample",
    "StabilityZone",
    "SweepConfig",
    "SweepResult",
    "ZoneSet",
    "detect_zones",
    "make_point_fn",
    "result_to_dict",
    "sample_shifts",
    "sweep_angle",
    "sweep_to_csv",
    "zones_to_csv",
    "zones_to_svg",
    # config / output
    "ConfigError",
    "ParsedConfig",
    "load_config",
    "parse_config",
    "fmt_float",
    "lines_to_svg",
    "manifests_equivalent",
    "run_manifest",
    "stable_json",
    "write_text",
]
