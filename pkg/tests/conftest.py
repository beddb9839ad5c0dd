import numpy as np
import pytest

from windspde.mesh import MeshSpec, build_mesh, triangulate

# criterion number -> (status, detail); filled by the acceptance tests
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(number, passed, detail=""):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        ACCEPTANCE[number] = (status, detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {status}  {detail}")


@pytest.fixture(scope="session")
def small_mesh():
    """Jittered grid of 49 points triangulated without refinement."""
    rng = np.random.default_rng(0)
    g = np.linspace(0.0, 1.0, 7)
    pts = np.array([(x, y) for y in g for x in g])
    pts[8:-8] += rng.uniform(-0.03, 0.03, size=(len(pts) - 16, 2))
    return triangulate(pts)


@pytest.fixture(scope="session")
def square_mesh():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    return build_mesh(pts, MeshSpec(0.3, 0.5, 0.1, 0.2, 0.01))
