import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import latitude_loop, make_system
from magflow import loopspace as ls
from magflow import minimax as mm
from magflow.errors import ClassConstructionError
from magflow.loopspace import DiscreteLoop


@pytest.fixture(scope="module")
def torus():
    return make_system("TorusFlat", "constant:1")


@pytest.fixture(scope="module")
def sphere():
    return make_system("SphereRound", "constant:2")


def test_sweepout_shape(sphere):
    fam = mm.birkhoff_sweepout(sphere, 64, 256, 0.01)
    assert len(fam) == 65 and fam.tag == mm.SWEEPOUT
    assert np.allclose(fam.loops[0].samples, [0, 0, -1]) and fam.loops[0].T == 0.01
    assert np.allclose(fam.loops[-1].samples, [0, 0, 1])
    assert ls.length(sphere, fam.loops[32]) == pytest.approx(2 * np.pi, abs=1e-4)
    z = [lp.samples[0, 2] for lp in fam.loops]
    assert np.all(np.diff(z) > 0)
    lengths = [ls.length(sphere, lp) for lp in fam.loops]
    assert int(np.argmax(lengths)) == 32
    assert all(lp.T == 0.01 for lp in fam.loops)


def test_sweepout_requires_sphere(torus):
    with pytest.raises(ClassConstructionError):
        mm.birkhoff_sweepout(torus, 8, 32, 0.01)


def test_negative_path_radius_and_certificate(torus):
    fam = mm.negative_action_path(torus, (0.1, 1.0), 16, 128, 0.01)
    assert fam.radius == pytest.approx(2.2 * 2 * np.sqrt(2), rel=1e-12)
    assert fam.radius == pytest.approx(6.22, abs=0.01)
    for k in (0.1, 0.55, 1.0):
        assert ls.global_primitive(torus, fam.loops[-1], k) < 0
    assert mm.anchor_value(torus, fam, 0.5) == pytest.approx(0.01 * 0.5, abs=1e-15)
    assert mm.check_class(torus, fam, 0.5, 0.05) == []


def test_negative_path_requires_mean_field():
    with pytest.raises(ClassConstructionError):
        mm.negative_action_path(make_system("TorusFlat", "coscos:1"), (0.1, 1.0), 8, 64, 0.01)


def test_circle_endpoint_primitive(torus):
    # unit speed clockwise circle of radius 6: 12 pi - 36 pi
    t = 2 * np.pi * np.arange(512) / 512
    X = 0.5 + 6 * np.column_stack([np.cos(t), -np.sin(t)])
    val = ls.global_primitive(torus, DiscreteLoop(X, 12 * np.pi), 0.5)
    assert val == pytest.approx(-24 * np.pi, rel=5e-3)


def test_orientation_flip_changes_primitive_by_flux(torus):
    r = 0.7
    t = 2 * np.pi * np.arange(256) / 256
    ccw = DiscreteLoop(0.5 + r * np.column_stack([np.cos(t), np.sin(t)]), 3.0)
    cw = DiscreteLoop(0.5 + r * np.column_stack([np.cos(t), -np.sin(t)]), 3.0)
    diff = ls.global_primitive(torus, ccw, 0.4) - ls.global_primitive(torus, cw, 0.4)
    # the polygon encloses N/2 sin(2 pi/N) r^2 rather than pi r^2
    area = 0.5 * 256 * np.sin(2 * np.pi / 256) * r * r
    assert diff == pytest.approx(2 * area, abs=1e-12)
    assert diff == pytest.approx(2 * np.pi * r * r, rel=1e-3)


def test_family_primitive_matches_global(torus):
    fam = mm.negative_action_path(torus, (0.1, 1.0), 16, 128, 0.01)
    vals = mm.family_primitive(torus, fam, 0.5)
    direct = np.array([ls.global_primitive(torus, lp, 0.5) for lp in fam.loops])
    assert np.max(np.abs(vals - direct)) <= 1e-4
    assert vals[0] == pytest.approx(0.005, abs=1e-15)


def test_family_k_shift(torus, sphere):
    for sys, fam in ((torus, mm.negative_action_path(torus, (0.1, 1.0), 16, 64, 0.01)),
                     (sphere, mm.birkhoff_sweepout(sphere, 16, 64, 0.01))):
        a = mm.family_primitive(sys, fam, 0.3)
        b = mm.family_primitive(sys, fam, 0.9)
        assert np.allclose(b - a, 0.6 * fam.periods, atol=1e-10, rtol=0)


def test_sweepout_primitive_returns_to_pole_flux(sphere):
    # circles turning counterclockwise about +z bound caps of negative flux near the south
    # pole, so the sweep from pole to pole accumulates -4 pi b = -8 pi
    fam = mm.birkhoff_sweepout(sphere, 32, 128, 0.01)
    vals = mm.family_primitive(sphere, fam, 0.5)
    assert vals[0] == pytest.approx(0.005, abs=1e-15)
    assert vals[-1] - vals[0] == pytest.approx(-8 * np.pi, rel=1e-3)


def test_class_invariants_flagged(sphere):
    fam = mm.birkhoff_sweepout(sphere, 16, 64, 0.01)
    assert mm.check_class(sphere, fam, 0.5, 0.05) == []
    tiny = DiscreteLoop(latitude_loop(64, 0.01, 0.01).samples * [1, 1, -1], 0.01)
    short = mm.LoopFamily([fam.loops[0], tiny, fam.loops[0]], mm.SWEEPOUT)
    assert "no member reaches length delta" in mm.check_class(sphere, short, 0.5, 0.05)
    bad = mm.LoopFamily([fam.loops[0].with_period(5.0)] + fam.loops[1:], mm.SWEEPOUT)
    assert any("first endpoint" in f for f in mm.check_class(sphere, bad, 0.5, 0.05))


def test_reparametrize_keeps_endpoints(sphere):
    fam = mm.birkhoff_sweepout(sphere, 16, 64, 0.01)
    uneven = mm.LoopFamily(fam.loops[:4] + fam.loops[4::3] + [fam.loops[-1]], mm.SWEEPOUT, frozen=(0, 10))
    out = mm.reparametrize(sphere, uneven, m=16)
    assert len(out) == 17
    assert out.loops[0] is uneven.loops[0] and out.loops[-1] is uneven.loops[-1]
    gaps = [ls.max_sample_distance(sphere, a, b) + abs(a.T - b.T) for a, b in zip(out.loops[:-1], out.loops[1:])]
    assert max(gaps) - min(gaps) < 0.5 * max(gaps)


def test_lipschitz_selection_linear():
    ks = np.linspace(0.1, 1.0, 10)
    sel, q, cap = mm.lipschitz_selection(ks, 2 * np.pi * ks)
    assert np.all(sel) and cap == pytest.approx(20 * np.pi)
    cs = 2 * np.pi * ks
    cs[5:] += 100.0
    sel, q, cap = mm.lipschitz_selection(ks, cs, factor=2.0)
    assert not sel[4] and sel[0]


def test_energy_grid_inclusive():
    g = mm.energy_grid((0.2, 0.8), 7)
    assert g[0] == 0.2 and g[-1] == 0.8 and np.isclose(g[3], 0.5)


def test_endpoint_period_inside_w_prime(torus):
    eps = 0.05
    T = mm.endpoint_period(torus, (0.1, 1.0), eps)
    assert T * (1.0 - torus.min_V) == pytest.approx(eps / 8)


def test_minimax_quick_run(sphere):
    # a coarse run: upper bound above eps, class preserved, monotone in k
    eps = ls.calibrate_epsilon(sphere, 0.3, n_probe=50)
    T_bar = mm.endpoint_period(sphere, (0.3, 0.6), eps)
    fam = mm.birkhoff_sweepout(sphere, 16, 64, T_bar)
    st_ = mm.MinimaxSettings(sweeps=3)
    recs = [mm.minimax_value(sphere, fam, k, eps, st_) for k in (0.3, 0.6)]
    for rec in recs:
        assert rec.c >= eps
        assert not rec.flags
        assert rec.history[0]["max"] >= rec.c
        # endpoints were never moved
        assert rec.family.loops[0] is fam.loops[0] and rec.family.loops[-1] is fam.loops[-1]
        for tr in rec.traces:
            assert np.all(np.diff(tr.column("deltaS")) <= 1e-9)
    assert recs[0].c <= recs[1].c


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.05, 2.0))
def test_k_shift_pointwise_property(k1, k2):
    sys = make_system("SphereRound", "constant:2+height:0.5", "tilted:1,0.2,0.3")
    fam = mm.birkhoff_sweepout(sys, 8, 32, 0.02)
    for lp in fam.loops:
        d = ls.free_period_action(sys, lp, k2) - ls.free_period_action(sys, lp, k1)
        assert d == pytest.approx((k2 - k1) * lp.T, abs=1e-12)
