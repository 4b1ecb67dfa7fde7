"""State, coefficients and boundary-condition containers for the MHD solver."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.constants as const

from ..mesh import BoundaryFrame

MU0 = const.mu_0
E_CHARGE = const.e  # J per eV
M_PROTON = const.m_p

FIELDS = ("n", "vr", "vphi", "vz", "pi", "pe", "psi", "f")


@dataclass
class PlasmaState:
    """The eight evolved nodal fields at time ``t`` (SI units, ψ per radian)."""

    n: np.ndarray
    vr: np.ndarray
    vphi: np.ndarray
    vz: np.ndarray
    pi: np.ndarray
    pe: np.ndarray
    psi: np.ndarray
    f: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, n_nodes: int, t: float = 0.0) -> "PlasmaState":
        return cls(*np.zeros((len(FIELDS), n_nodes)), t=t)

    @classmethod
    def unpack(cls, y: np.ndarray, t: float = 0.0) -> "PlasmaState":
        return cls(*(np.array(row) for row in y), t=t)

    def pack(self) -> np.ndarray:
        return np.stack([getattr(self, k) for k in FIELDS])

    def copy(self) -> "PlasmaState":
        return PlasmaState(*(getattr(self, k).copy() for k in FIELDS), t=self.t)

    def replace(self, **changes) -> "PlasmaState":
        return dataclasses.replace(self, **changes)

    @property
    def n_nodes(self) -> int:
        return len(self.n)


@dataclass(frozen=True)
class PhysicsCoefficients:
    """Transport coefficients and closure parameters.

    Diffusivities are kinematic (m²/s).  Conductivities are taken as
    ``kappa = n0 * chi`` and the dynamic viscosities as ``mu = rho0 * nu``.
    ``resistivity`` overrides the Spitzer model with a constant diffusivity.
    """

    mu_i: float = 4.0
    Z: float = 1.3
    gamma: float = 5.0 / 3.0
    zeta: Union[float, np.ndarray] = 50.0
    nu_num: float = 700.0
    nu_phys: float = 410.0
    n0: float = 9e20
    chi_par_e: float = 16000.0
    chi_par_i: float = 5000.0
    chi_perp_e: float = 240.0
    chi_perp_i: float = 120.0
    eta_max: float = 5000.0
    eta_min: float = 0.0
    Lambda: float = 10.0
    correction_model: Optional[int] = 2
    resistivity: Optional[float] = None
    heat_exchange: bool = True
    equal_viscosity: bool = False

    def __post_init__(self):
        if self.correction_model not in (None, 1, 2):
            raise ValueError(f"correction_model must be 1, 2 or None, not {self.correction_model!r}")
        if np.ndim(self.zeta) and self.correction_model is not None:
            raise ValueError("a spatially varying zeta is only allowed with corrections disabled")
        diff = [self.nu_num, self.nu_phys, self.chi_par_e, self.chi_par_i, self.chi_perp_e, self.chi_perp_i]
        if min(diff) < 0 or np.min(self.zeta) < 0:
            raise ValueError("diffusivities must be non-negative")
        if not 0 <= self.eta_min <= self.eta_max:
            raise ValueError("need 0 <= eta_min <= eta_max")

    @property
    def m_i(self) -> float:
        return self.mu_i * M_PROTON

    @property
    def rho0(self) -> float:
        return self.m_i * self.n0

    @property
    def mu_num(self) -> float:
        return self.rho0 * self.nu_num

    @property
    def mu_phys(self) -> float:
        return self.rho0 * (self.nu_num if self.equal_viscosity else self.nu_phys)

    def kappa(self, species: str) -> tuple[float, float]:
        """(kappa_parallel, kappa_perp) for species 'i' or 'e'."""
        if species == "i":
            return self.n0 * self.chi_par_i, self.n0 * self.chi_perp_i
        if species == "e":
            return self.n0 * self.chi_par_e, self.n0 * self.chi_perp_e
        raise ValueError(f"unknown species {species!r}")

    def with_(self, **changes) -> "PhysicsCoefficients":
        return dataclasses.replace(self, **changes)


PsiSource = Union[None, np.ndarray, Callable[[float], np.ndarray]]


@dataclass
class BoundaryConditions:
    """Explicit boundary conditions on the plasma mesh.

    Attributes:
        boundary_nodes: the mesh boundary loop.
        psi: ψ on ``boundary_nodes``; an array, a function of time, or None
            for no ψ condition.
        velocity_mode: 'all-zero', 'normal-zero' or 'none'.
        frame: boundary tangents, required for 'normal-zero'.
        T_wall_eV: wall temperature for the pressure condition, or None.
        f_nodes, f_values: nodes held at fixed f (insulator interface).
        angular_momentum_mode: ψ = 0 on the boundary and v_φ left free.
    """

    boundary_nodes: np.ndarray
    psi: PsiSource = None
    velocity_mode: str = "all-zero"
    frame: Optional[BoundaryFrame] = None
    T_wall_eV: Optional[float] = 0.02
    f_nodes: Optional[np.ndarray] = None
    f_values: Optional[np.ndarray] = None
    angular_momentum_mode: bool = False
    _tangent: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.boundary_nodes = np.asarray(self.boundary_nodes, dtype=np.int64)
        if self.velocity_mode not in ("all-zero", "normal-zero", "none"):
            raise ValueError(f"unknown velocity_mode {self.velocity_mode!r}")
        if self.angular_momentum_mode:
            if self.psi is None:
                self.psi = np.zeros(len(self.boundary_nodes))
            elif callable(self.psi) or np.any(self.psi):
                raise ValueError("angular_momentum_mode requires psi = 0 on the boundary")
        if self.velocity_mode == "normal-zero":
            if self.frame is None:
                raise ValueError("normal-zero velocity condition needs a BoundaryFrame")
            order = {int(k): i for i, k in enumerate(self.frame.nodes)}
            idx = np.array([order[int(k)] for k in self.boundary_nodes])
            t = self.frame.tangent[idx].copy()
            t[self.frame.corner[idx]] = 0.0
            self._tangent = t
        if (self.f_nodes is None) != (self.f_values is None):
            raise ValueError("f_nodes and f_values must be given together")

    @property
    def psi_dirichlet(self) -> bool:
        return self.psi is not None

    def psi_values(self, t: float) -> Optional[np.ndarray]:
        if self.psi is None:
            return None
        vals = self.psi(t) if callable(self.psi) else self.psi
        return np.asarray(vals, dtype=float)

    def constrain_velocity(self, vr: np.ndarray, vz: np.ndarray, vphi: Optional[np.ndarray] = None) -> None:
        """Impose the velocity condition in place (also used on time derivatives)."""
        k = self.boundary_nodes
        if self.velocity_mode == "all-zero":
            vr[k] = 0.0
            vz[k] = 0.0
            if vphi is not None and not self.angular_momentum_mode:
                vphi[k] = 0.0
        elif self.velocity_mode == "normal-zero":
            t = self._tangent
            proj = vr[k] * t[:, 0] + vz[k] * t[:, 1]
            vr[k] = proj * t[:, 0]
            vz[k] = proj * t[:, 1]


def conservation_bcs(mesh) -> BoundaryConditions:
    """BCs used by the conservation suites: v_r = v_z = 0 and ψ = 0 on the wall,
    v_φ, f, n and the pressures left to their natural conditions."""
    return BoundaryConditions(
        boundary_nodes=mesh.boundary_nodes,
        psi=np.zeros(len(mesh.boundary_nodes)),
        velocity_mode="all-zero",
        T_wall_eV=None,
        angular_momentum_mode=True,
    )
