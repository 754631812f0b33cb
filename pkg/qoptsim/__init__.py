from . import circuit, experiments, optics, setups  # noqa: F401
from .circuit import compile_circuit, format_circuit, parse_circuit, validate  # noqa: F401
from .experiments import chsh, fringe_scan, hom_scan, run_exact  # noqa: F401
