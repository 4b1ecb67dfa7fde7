import numpy as np
import pytest

from axifem.mesh import Mesh, compute_geometry, generate_rect_mesh, perturb_mesh
from axifem.ops import build_operators


def hand_mesh() -> Mesh:
    return Mesh.from_arrays([(1, 0), (2, 0), (2, 1), (1, 1)], [(0, 1, 2), (0, 2, 3)])


def single_triangle() -> Mesh:
    return Mesh.from_arrays([(1, 0), (2, 0), (1, 1)], [(0, 1, 2)])


def rect_mesh() -> Mesh:
    return generate_rect_mesh((0.2, 1.2), (0.0, 0.6), 0.05)


def perturbed_mesh(seed: int = 7) -> Mesh:
    return perturb_mesh(rect_mesh(), 0.25 * 0.05, np.random.default_rng(seed))


def mapped_mesh(h: float) -> Mesh:
    """Smoothly non-uniform mesh of [0.5, 1.5] x [0, 1]."""
    m = generate_rect_mesh((0.5, 1.5), (0.0, 1.0), h)
    x = m.nodes.copy()
    s, t = x[:, 0] - 0.5, x[:, 1]
    x[:, 0] = 0.5 + s + 0.15 * s * (1 - s) * np.sin(np.pi * t)
    x[:, 1] = t + 0.1 * t * (1 - t) * np.cos(np.pi * s)
    return Mesh.from_arrays(x, m.elements)


MESHES = {"hand": hand_mesh, "rect": rect_mesh, "perturbed": perturbed_mesh}


@pytest.fixture(params=list(MESHES))
def any_ops(request):
    m = MESHES[request.param]()
    return build_operators(m, compute_geometry(m))


@pytest.fixture(scope="session")
def rect_ops():
    m = rect_mesh()
    return build_operators(m, compute_geometry(m))


@pytest.fixture(scope="session")
def perturbed_ops():
    m = perturbed_mesh()
    return build_operators(m, compute_geometry(m))


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
