"""Discrete two-temperature MHD model."""

from .closures import (
    DerivedFields,
    anisotropic_flux,
    density_corrections,
    derived_fields,
    heat_exchange_Qie,
    heat_flux,
    poloidal_field,
    resistivity,
    spitzer_eta,
    stability_bounds,
    stability_dt,
    viscous_force,
    viscous_heating_Qpi,
)
from .rhs import TERM_LAYOUT, RhsTerms, apply_boundary_conditions, compute_rhs, compute_terms
from .state import (
    E_CHARGE,
    FIELDS,
    M_PROTON,
    MU0,
    BoundaryConditions,
    PhysicsCoefficients,
    PlasmaState,
    conservation_bcs,
)
from .stepping import SCHEMES, integrate_step, step

__all__ = [
    "BoundaryConditions", "DerivedFields", "E_CHARGE", "FIELDS", "MU0", "M_PROTON", "PhysicsCoefficients",
    "PlasmaState", "RhsTerms", "SCHEMES", "TERM_LAYOUT", "anisotropic_flux", "apply_boundary_conditions",
    "compute_rhs", "compute_terms", "conservation_bcs", "density_corrections", "derived_fields",
    "heat_exchange_Qie", "heat_flux", "integrate_step", "poloidal_field", "resistivity", "spitzer_eta",
    "stability_bounds", "stability_dt", "step", "viscous_force", "viscous_heating_Qpi",
]
