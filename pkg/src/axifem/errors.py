"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class AxifemError(Exception):
    """Base class for every error raised by the package."""


# mesh
class MeshError(AxifemError):
    pass


class NonCCWElement(MeshError):
    def __init__(self, element: int, twice_area: float):
        self.element = element
        self.twice_area = twice_area
        super().__init__(f"element {element} is not counter-clockwise (2s = {twice_area:.3e})")


class DanglingNode(MeshError):
    def __init__(self, node: int):
        self.node = node
        super().__init__(f"node {node} belongs to no element")


class NonManifoldBoundary(MeshError):
    pass


class NonPositiveRadius(MeshError):
    def __init__(self, node: int, r: float):
        self.node = node
        self.r = r
        super().__init__(f"node {node} has r = {r!r}; radii must be >= 1e-6 m")


class DegenerateRange(MeshError):
    pass


class InterfaceNotFound(MeshError):
    pass


class UnpairedInterfaceNode(MeshError):
    pass


# ops
class SingularElement(AxifemError):
    def __init__(self, element: int, twice_area: float):
        self.element = element
        super().__init__(f"element {element} is degenerate (2s = {twice_area:.3e})")


class SolverDiverged(AxifemError):
    pass


# mhd
class NonPositiveTemperature(AxifemError):
    def __init__(self, node: int, value: float):
        self.node = node
        super().__init__(f"electron temperature {value!r} eV at node {node} is not positive")


class NonPositiveDensity(AxifemError):
    def __init__(self, node: int, value: float):
        self.node = node
        super().__init__(f"density {value!r} at node {node} is not positive; increase zeta")


class NegativePressure(AxifemError):
    def __init__(self, field: str, node: int, value: float):
        self.field = field
        self.node = node
        super().__init__(f"{field} = {value!r} at node {node} is negative")


# scenario
class MissingWaveformSample(AxifemError):
    def __init__(self, t: float, lo: float, hi: float, name: str = "waveform"):
        self.t = t
        super().__init__(f"{name} evaluated at t = {t!r} outside its support [{lo!r}, {hi!r}]")


class NonPositiveFloor(AxifemError):
    pass


# diagnostics
class ChordOutsideMesh(AxifemError):
    pass


class ConfigError(AxifemError):
    pass
