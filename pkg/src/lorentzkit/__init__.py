"""Fully hyperbolic neural networks on the Lorentz model.

The core geometry lives in :mod:`lorentzkit.lorentz` and
:mod:`lorentzkit.gyro`; layers, normalization and optimization build on the
tape-based autodiff in :mod:`lorentzkit.autodiff`.
"""

from . import autodiff
from .errors import (
    ConfigurationError,
    ContractError,
    ConvergenceError,
    DegenerateHyperplaneError,
    DimensionError,
    LorentzError,
    NumericDomainError,
    NumericError,
    StateError,
    TrainingAborted,
)
from .gyro import gyro_add, gyro_inverse, gyro_scale
from .lorentz import (
    DEFAULT_K,
    exp_map,
    exp_origin,
    geodesic_dist,
    is_on_manifold,
    log_map,
    log_origin,
    lorentz_sq_chord,
    lorentz_to_poincare,
    minkowski_inner,
    origin,
    parallel_transport,
    poincare_to_lorentz,
)
from .normstats import GyroLBN, NormState, gyrobn_forward, gyrolbn_forward, lorentzian_centroid

__version__ = "0.1.0"
