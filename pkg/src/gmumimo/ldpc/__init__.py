from .degrees import (
    DegreeDistribution,
    design_rate,
    load_degree_file,
    write_degree_file,
    fixture_path,
    load_fixture,
    FIXTURE_SETS,
)
from .graph import LdpcCode, build_graph
from .decoder import spa_decode, spa_decode_batch
from .measure import TransferCurveEstimate, measure_transfer_curve
from .threshold import se_threshold
from .dens_evo import ga_de_curve
from .optimize import optimize_degrees

__all__ = [
    "DegreeDistribution",
    "design_rate",
    "load_degree_file",
    "write_degree_file",
    "fixture_path",
    "load_fixture",
    "FIXTURE_SETS",
    "LdpcCode",
    "build_graph",
    "spa_decode",
    "spa_decode_batch",
    "TransferCurveEstimate",
    "measure_transfer_curve",
    "se_threshold",
    "ga_de_curve",
    "optimize_degrees",
]
