"""empic: a parallel electromagnetic particle-in-cell engine.

Explicit FDTD field solver on the Yee lattice, relativistic Boris pusher,
charge-conserving current deposition, Cartesian domain decomposition with
nearest-neighbor exchange, hierarchical aggregated binary output (PICB),
and a region-timer / scaling harness.
"""

__version__ = "0.1.0"
