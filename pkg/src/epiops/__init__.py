"""epiops: epidemic operations engine.

Cohort-level clinical analytics, an 11-compartment forecasting model with
per-region fitting and backtesting, policy-response regression trees with
scenario simulation, and exact multi-period ventilator allocation —
exposed as a library, a CLI, and an HTTP service.
"""

from ._kernel import BACKEND as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]
