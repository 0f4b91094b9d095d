"""qcap: quasistatic capacitance matrices of 2D multiconductor lines by the method of moments."""

__version__ = "0.1.0"

from .adaptive import (  # noqa: E402
    AdaptiveConfig,
    ConvergenceTrace,
    DiagonalElement,
    FrobeniusNorm,
    RefineAll,
    RefineTopP,
    Status,
    control_scalar,
    run_adaptive,
)
from .estimator import CapacitanceExtractor, check_cross_section, check_overrides  # noqa: E402
from .geometry import (  # noqa: E402
    CrossSection,
    GeometryError,
    eval_param_expr,
    load_cross_section,
    parse_cross_section,
    resolve_geometry,
    validate_geometry,
)
from .mesh import Mesh, build_initial_mesh, refine_all, refine_top_fraction  # noqa: E402
from .sweep import SweepSpec, reference_run, run_sweep  # noqa: E402
from .system import assemble_system, extract_capacitance, factor_solve  # noqa: E402


def data_path(name: str):
    """Path of a geometry file shipped with the package (e.g. ``"mtl2_like.json"``)."""
    from importlib.resources import files

    return files("qcap") / "data" / name
