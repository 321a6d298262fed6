"""Random geometric (Cech) complexes: sampling, homology, and Monte Carlo checks.

The package builds Cech complexes over sampled point processes, computes
their simplicial homology exactly over a prime field, and provides the
stabilization diagnostics and experiment harness used to probe strong laws,
variance scaling, concentration, and central limit behavior of Betti numbers
in the thermodynamic regime.
"""

__version__ = "0.1.0"

from . import complexes, geometry, homology, point_process, stabilization

__all__ = [
    "point_process",
    "geometry",
    "complexes",
    "homology",
    "stabilization",
    "__version__",
]
