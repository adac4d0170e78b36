import numpy as np
import pytest

from magflow.dynamics import TonelliSystem
from magflow.geometry import ModelSurface
from magflow.loopspace import DiscreteLoop


def make_system(kind, magnetic="zero", potential="zero", conformal="zero"):
    return TonelliSystem(ModelSurface(kind, magnetic, conformal), potential)


def circle_loop(N, radius, T, center=(0.5, 0.5), clockwise=True):
    t = 2 * np.pi * np.arange(N) / N
    s = -1.0 if clockwise else 1.0
    X = np.column_stack([center[0] + radius * np.cos(t), center[1] + s * radius * np.sin(t)])
    return DiscreteLoop(X, T)


def latitude_loop(N, rho, T, counterclockwise=True):
    """Circle of geodesic radius rho about the north pole."""
    t = 2 * np.pi * np.arange(N) / N
    s = 1.0 if counterclockwise else -1.0
    X = np.column_stack([np.sin(rho) * np.cos(t), s * np.sin(rho) * np.sin(t), np.full(N, np.cos(rho))])
    return DiscreteLoop(X, T)


def random_loop(sys, rng, N=64, size=0.3, noise=0.03, center=None):
    t = 2 * np.pi * np.arange(N) / N
    if sys.surface.is_sphere:
        c = rng.normal(size=3) if center is None else np.asarray(center, dtype=float)
        c /= np.linalg.norm(c)
        e1 = np.cross(c, rng.normal(size=3))
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(c, e1)
        X = (c + size * np.cos(t)[:, None] * e1 + 0.7 * size * np.sin(t + 0.3 * np.sin(2 * t))[:, None] * e2
             + noise * rng.normal(size=(N, 3)))
        return DiscreteLoop(X / np.linalg.norm(X, axis=1, keepdims=True), rng.uniform(0.5, 3.0))
    c = rng.uniform(0, 1, 2) if center is None else np.asarray(center, dtype=float)
    X = c + size * np.column_stack([np.cos(t), np.sin(t)]) + noise * rng.normal(size=(N, 2))
    return DiscreteLoop(X, rng.uniform(0.5, 3.0))


def random_tangent(sys, loop, rng):
    zeta = rng.normal(size=loop.samples.shape)
    if sys.surface.is_sphere:
        zeta -= np.sum(zeta * loop.samples, axis=1, keepdims=True) * loop.samples
    return zeta


@pytest.fixture
def flat_b1():
    return make_system("TorusFlat", "constant:1")


@pytest.fixture
def sphere_b2():
    return make_system("SphereRound", "constant:2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SYSTEM_ZOO = {
    "flat_b1": ("TorusFlat", "constant:1", "zero", "zero"),
    "conformal_mixed": ("TorusConformal", "coscos:0.7+constant:1", "sinsin:0.5", "coscos:0.2"),
    "sphere_b2": ("SphereRound", "constant:2", "zero", "zero"),
    "sphere_mixed": ("SphereRound", "constant:2+height:0.5", "tilted:1,0.2,0.3", "zero"),
}


@pytest.fixture(params=sorted(SYSTEM_ZOO))
def any_system(request):
    kind, b, V, lam = SYSTEM_ZOO[request.param]
    return make_system(kind, b, V, lam)


# --- acceptance report ---------------------------------------------------------------------------

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion and assert it."""

    def check(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
