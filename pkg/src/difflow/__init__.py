"""Diffeomorphism-based evolution operators on the periodic 2-torus.

Fields evolve by pullback through chains of conforming spline maps; the
one-step maps come either from reference semi-Lagrangian solvers or from
learned lifting operators acting on recent field history.
"""

from .diffeo import (
    DiffeoMap,
    MapChain,
    chain_displacement,
    chain_evaluate,
    identity_map,
    map_from_displacement,
    project,
    random_map,
    translation_map,
)
from .grid import (
    Grid,
    PeriodicField,
    Spectrum,
    dft,
    effective_bandwidth,
    energy_spectrum,
    idft,
    sample_bilinear,
    simpson_integral,
)
from .lifting import (
    ConstantLifter,
    OracleLifter,
    RegistrationConfig,
    RegistrationLifter,
    SpectralLifter,
    build_dataset,
    fit_spectral_lifter,
    register_pair,
)
from .rollout import RolloutConfig, pullback_field, rollout, transport_density
from .solvers import (
    AnalyticVelocity,
    GridVelocity,
    Trajectory,
    advect_cmm,
    biot_savart,
    constant_velocity,
    euler_cmm,
    integrate_backward_map,
    random_vorticity,
    slotted_cylinder,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticVelocity",
    "ConstantLifter",
    "DiffeoMap",
    "Grid",
    "GridVelocity",
    "MapChain",
    "OracleLifter",
    "PeriodicField",
    "RegistrationConfig",
    "RegistrationLifter",
    "RolloutConfig",
    "SpectralLifter",
    "Spectrum",
    "Trajectory",
    "advect_cmm",
    "biot_savart",
    "build_dataset",
    "chain_displacement",
    "chain_evaluate",
    "constant_velocity",
    "dft",
    "effective_bandwidth",
    "energy_spectrum",
    "euler_cmm",
    "fit_spectral_lifter",
    "identity_map",
    "idft",
    "integrate_backward_map",
    "map_from_displacement",
    "project",
    "pullback_field",
    "random_map",
    "random_vorticity",
    "register_pair",
    "rollout",
    "sample_bilinear",
    "simpson_integral",
    "slotted_cylinder",
    "transport_density",
    "translation_map",
]
