import numpy as np
import pytest

from magflow.errors import InvalidPointError, StepTooLargeError
from magflow.fields import ScalarField
from magflow.geometry import (
    ModelSurface, check_point, magnetic_pairing, metric_at, retract, riemannian_distance, tangent_frame,
)

E = np.e


def test_metric_flat_identity():
    assert np.array_equal(metric_at(ModelSurface("TorusFlat"), (0.3, 0.7)), np.eye(2))


def test_metric_conformal_constant():
    s = ModelSurface("TorusConformal", conformal="constant:0.5")
    assert np.allclose(metric_at(s, (0.1, 0.9)), E * np.eye(2), rtol=1e-14)


def test_metric_sphere_pole():
    assert np.array_equal(metric_at(ModelSurface("SphereRound"), (0, 0, 1)), np.eye(2))


def test_metric_rejects_nonfinite():
    with pytest.raises(InvalidPointError):
        metric_at(ModelSurface("TorusFlat"), (np.nan, 0.0))


def test_sphere_point_must_be_unit():
    with pytest.raises(InvalidPointError):
        check_point(ModelSurface("SphereRound"), (0, 0, 1.001))


def test_pairing_unit_frame():
    s = ModelSurface("TorusFlat", "constant:1")
    assert magnetic_pairing(s, (0.2, 0.2), (1, 0), (0, 1)) == 1.0


def test_pairing_conformal_area_form():
    s = ModelSurface("TorusConformal", "constant:1", "constant:0.5")
    assert magnetic_pairing(s, (0.2, 0.2), (1, 0), (0, 1)) == pytest.approx(E, rel=1e-14)


@pytest.mark.parametrize("kind,q,v", [
    ("TorusFlat", (0.1, 0.2), (0.3, -1.0)),
    ("SphereRound", (0.0, 0.6, 0.8), (1.0, 0.4, -0.3)),
])
def test_pairing_vanishes_on_diagonal(kind, q, v):
    s = ModelSurface(kind, "constant:3")
    assert magnetic_pairing(s, q, v, v) == 0.0


def test_pairing_sphere_orientation():
    # (e1, e2) is positively oriented: sigma(e1, e2) = b
    s = ModelSurface("SphereRound", "constant:2")
    q = np.array([0.0, 0.6, 0.8])
    e1, e2 = tangent_frame(q)
    assert np.allclose(np.cross(e1, e2), q)
    assert magnetic_pairing(s, q, e1, e2) == pytest.approx(2.0, rel=1e-14)


def test_retract_examples():
    assert np.allclose(retract(ModelSurface("TorusFlat"), (0, 0), (0.1, 0)), (0.1, 0))
    sph = ModelSurface("SphereRound")
    assert np.array_equal(retract(sph, (0, 0, 1), (0, 0, 0)), (0, 0, 1))
    assert np.allclose(retract(sph, (1, 0, 0), (0, 0.3, 0)), np.array([1, 0.3, 0]) / np.sqrt(1.09), atol=1e-15)
    assert np.allclose(retract(sph, (1, 0, 0), (0, 0.3, 0)), (0.9578, 0.2873, 0), atol=1e-4)


def test_retract_trust_radius():
    with pytest.raises(StepTooLargeError):
        retract(ModelSurface("TorusFlat"), (0, 0), (0.6, 0))


def test_distance_examples():
    assert riemannian_distance(ModelSurface("TorusFlat"), (0, 0), (0.3, 0.4)) == pytest.approx(0.5, abs=1e-15)
    sph = ModelSurface("SphereRound")
    assert riemannian_distance(sph, (0, 0, 1), (0, 0, -1)) == pytest.approx(np.pi, abs=1e-15)
    assert riemannian_distance(sph, (1, 0, 0), (0, 1, 0)) == pytest.approx(np.pi / 2, abs=1e-15)


def test_distance_conformal_constant_scales():
    s = ModelSurface("TorusConformal", conformal="constant:0.5")
    assert riemannian_distance(s, (0, 0), (0.3, 0.4)) == pytest.approx(0.5 * np.sqrt(E), rel=1e-13)


def test_distance_torus_uses_nearest_image():
    assert riemannian_distance(ModelSurface("TorusFlat"), (0.05, 0.0), (0.95, 0.0)) == pytest.approx(0.1)


def test_retraction_consistency_richardson():
    # distance(q, retract(q, t v)) / t = |v|_q + O(t), so one Richardson step gives O(t^2)
    for s, q, v in [
        (ModelSurface("SphereRound"), np.array([0.0, 0.6, 0.8]), np.array([0.3, 0.2, -0.15])),
        (ModelSurface("TorusConformal", conformal="coscos:0.3"), np.array([0.1, 0.3]), np.array([0.2, -0.1])),
    ]:
        def ratio(t):
            return riemannian_distance(s, q, retract(s, q, t * v)) / t
        t = 1e-3
        extrap = 2 * ratio(t / 2) - ratio(t)
        assert extrap == pytest.approx(float(s.norm(q, s.project(q, v))), rel=1e-6)


def test_surface_validation():
    with pytest.raises(ValueError):
        ModelSurface("Klein")
    with pytest.raises(ValueError):
        ModelSurface("TorusFlat", conformal="constant:1")
    with pytest.raises(ValueError):
        ModelSurface("SphereRound", "coscos:1")
    with pytest.raises(ValueError):
        ModelSurface("TorusFlat", "height:1")


def test_field_parse_and_gradient():
    f = ScalarField.parse("coscos:0.7+constant:1")
    q = np.array([0.13, 0.41])
    h = 1e-6
    fd = [(f.value(q + h * e) - f.value(q - h * e)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(f.grad(q), fd, atol=1e-8)
    val, grad = f.point(tuple(q))
    assert val == pytest.approx(float(f.value(q)), abs=1e-15)
    assert np.allclose(grad, f.grad(q), atol=1e-14)


def test_field_tilted_is_normalised():
    f = ScalarField.parse("tilted:1,0,0.1")
    a = np.array([1, 0, 0.1]) / np.linalg.norm([1, 0, 0.1])
    assert np.allclose(f.grad(np.array([0.0, 0.0, 1.0])), a)


@pytest.mark.parametrize("spec", ["", "bogus:1", "coscos", "constant:1,2", "tilted:0,0,0", "constant:nan"])
def test_field_parse_errors(spec):
    with pytest.raises(ValueError):
        ScalarField.parse(spec)
