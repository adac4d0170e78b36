import numpy as np
import pytest

from conftest import make_system
from magflow import displacement as dp
from magflow.errors import EmptyLevelError, NotDisplaceableError

TILTED = "tilted:1,0,0.1"


@pytest.fixture(scope="module")
def sphere_height():
    return make_system("SphereRound", "constant:1", "height:1")


def test_sample_projects_into_cap(sphere_height):
    s = dp.projected_sublevel_sample(sphere_height, -0.5, 2000)
    assert np.all(s.base[:, 2] <= -0.5)
    assert np.all(s.q[:, 2] <= -0.5)
    norms = np.linalg.norm(s.p, axis=1)
    assert np.max(norms) <= 1.0 + 1e-12
    assert np.max(norms) == pytest.approx(np.sqrt(2 * (-0.5 - np.min(s.q[:, 2]))), rel=1e-12)
    assert np.max(np.abs(np.sum(s.p * s.q, axis=1))) < 1e-14
    H = 0.5 * norms**2 + s.q[:, 2]
    assert np.all(H <= -0.5 + 1e-12)
    assert len(s) >= 2000


def test_sample_at_minimum(sphere_height):
    s = dp.projected_sublevel_sample(sphere_height, -1.0, 100)
    assert len(s) == 1
    assert np.allclose(s.q, [[0, 0, -1]], atol=1e-8) and np.all(s.p == 0)


def test_sample_below_minimum(sphere_height):
    with pytest.raises(EmptyLevelError):
        dp.projected_sublevel_sample(sphere_height, -1.5, 100)


def test_gradient_floor_tilted(sphere_height):
    eps = dp.gradient_floor(sphere_height, TILTED, -0.5)
    assert eps > 0
    # |d f| = sin of the angle to the axis a; its minimum on the cap z <= -1/2 sits on the boundary
    a = np.array([1, 0, 0.1]) / np.linalg.norm([1, 0, 0.1])
    theta = np.linspace(0, 2 * np.pi, 20001)
    ring = np.column_stack([np.sqrt(0.75) * np.cos(theta), np.sqrt(0.75) * np.sin(theta), -0.5 * np.ones_like(theta)])
    exact = np.min(np.sqrt(1 - (ring @ a) ** 2))
    assert eps == pytest.approx(exact, rel=1e-6)


@pytest.mark.parametrize("f", ["height:1", "constant:2"])
def test_gradient_floor_errors(sphere_height, f):
    with pytest.raises(NotDisplaceableError):
        dp.gradient_floor(sphere_height, f, -0.5)


def test_displacement_time_formula(sphere_height):
    assert sphere_height.H1 == 1.5
    T = dp.displacement_time(sphere_height, 0.3, 1.0, -0.5)
    assert T == pytest.approx(1.1 * 2.0 / 0.3, rel=1e-15)
    assert T == pytest.approx(7.333, abs=1e-3)
    assert dp.displacement_time(sphere_height, 0.6, 1.0, -0.5) == pytest.approx(T / 2, rel=1e-15)
    assert dp.displacement_time(sphere_height, 0.3, 1.0, 0.5) - T == pytest.approx(1.1 / 0.3, rel=1e-12)


def test_momentum_bound(sphere_height):
    assert dp.momentum_bound(sphere_height, -0.5) == pytest.approx(1.0)


def test_verify_displaced(sphere_height):
    rep = dp.verify_displacement(sphere_height, TILTED, -0.5)
    assert rep.status == dp.DISPLACED and rep.margin > 0
    assert rep.n_samples >= 10_000
    assert rep.translation_check <= 1e-9
    assert rep.monotone_margins == sorted(rep.monotone_margins)
    # the estimate guarantees H >= H0 eps T - H0 B - H1 = k + 0.1 (k + H1 + H0 B) on the sample
    assert rep.margin >= 0.1 * (rep.k + rep.H1 + rep.H0 * rep.B_p) - 1e-12
    d = rep.to_dict()
    assert set(d) >= {"k", "f", "eps_f", "B_p", "T_disp", "margin", "status"}


def test_report_independent_of_sigma():
    reps = [dp.verify_displacement(make_system("SphereRound", b, "height:1"), TILTED, -0.5, n=2000)
            for b in ("zero", "constant:1")]
    assert reps[0].to_dict() == reps[1].to_dict()


def test_zero_time_not_displaced(sphere_height):
    rep = dp.verify_displacement(sphere_height, TILTED, -0.5, T_disp=0.0, n=2000)
    assert rep.status == dp.NOT_DISPLACED and rep.margin <= 0


def test_above_e0_not_displaceable(sphere_height):
    with pytest.raises(NotDisplaceableError):
        dp.verify_displacement(sphere_height, TILTED, 1.0, n=500)


def test_torus_instance():
    # V = cos cos has min -1 at (0, 1/2); f = sin(2 pi x) + 0.5 sin(2 pi y) has no critical point there
    sys = make_system("TorusFlat", "constant:1", "coscos:1")
    rep = dp.verify_displacement(sys, "sinsin:0.5", -0.9, n=3000)
    assert rep.status == dp.DISPLACED and rep.translation_check <= 1e-9
