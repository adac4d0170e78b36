"""Model surfaces: flat or conformally flat 2-torus and the round unit sphere.

Points on the torus are stored in lifted planar coordinates (a representative
in the universal cover), so a loop on the torus is contractible iff its lift
closes up. Points on the sphere are ambient unit 3-vectors and tangent
vectors are ambient vectors orthogonal to the base point. Neither model needs
coordinate charts.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPointError, StepTooLargeError
from .fields import ScalarField

TORUS_FLAT = "TorusFlat"
TORUS_CONFORMAL = "TorusConformal"
SPHERE = "SphereRound"
KINDS = (TORUS_FLAT, TORUS_CONFORMAL, SPHERE)

TRUST_RADIUS = 0.5

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class ModelSurface:
    """Immutable description of (M, g, sigma).

    ``conformal`` is the exponent lambda of the torus metric e^{2 lambda} I
    (ignored on the sphere and forced to zero for the flat torus) and
    ``magnetic`` the density b of sigma = b dA with respect to the Riemannian
    area form.
    """

    kind: str
    magnetic: ScalarField = field(default_factory=lambda: ScalarField.parse("zero"))
    conformal: ScalarField = field(default_factory=lambda: ScalarField.parse("zero"))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "magnetic", ScalarField.parse(self.magnetic))
        object.__setattr__(self, "conformal", ScalarField.parse(self.conformal))
        if self.kind == TORUS_FLAT and not (
            self.conformal.is_constant and self.conformal.constant_value == 0.0
        ):
            raise ValueError("TorusFlat takes no conformal exponent; use TorusConformal")
        if self.kind == SPHERE and not (
            self.conformal.is_constant and self.conformal.constant_value == 0.0
        ):
            raise ValueError("the round sphere has no conformal exponent")
        self.magnetic.check_surface(self.family)
        self.conformal.check_surface(self.family)

    @property
    def is_sphere(self):
        return self.kind == SPHERE

    @property
    def family(self):
        return "sphere" if self.is_sphere else "torus"

    @property
    def dim(self):
        """Number of working coordinates of a point."""
        return 3 if self.is_sphere else 2

    @property
    def tag(self):
        return self.kind

    # vectorised helpers, all accept arrays of shape (..., dim)

    def weight(self, q):
        """Conformal factor e^{2 lambda(q)} of the metric (1 on the sphere)."""
        q = np.asarray(q, dtype=float)
        if self.kind == TORUS_CONFORMAL:
            return np.exp(2.0 * self.conformal.value(q))
        return np.ones(q.shape[:-1])

    def weight_grad(self, q):
        q = np.asarray(q, dtype=float)
        if self.kind == TORUS_CONFORMAL:
            return 2.0 * self.weight(q)[..., None] * self.conformal.grad(q)
        return np.zeros_like(q)

    def magnetic_density(self, q):
        """Coefficient of sigma against dx^dy on the torus lift; b on the sphere."""
        return self.magnetic.value(q) * self.weight(q)

    def project(self, q, v):
        """Orthogonal projection of ambient vectors onto the tangent plane."""
        v = np.asarray(v, dtype=float)
        if not self.is_sphere:
            return v
        q = np.asarray(q, dtype=float)
        return v - np.sum(q * v, axis=-1, keepdims=True) * q

    def normalize(self, q):
        q = np.asarray(q, dtype=float)
        if not self.is_sphere:
            return q
        return q / np.linalg.norm(q, axis=-1, keepdims=True)

    def norm(self, q, v):
        """Riemannian norm |v|_q."""
        v = np.asarray(v, dtype=float)
        return np.sqrt(self.weight(q)) * np.linalg.norm(v, axis=-1)


def check_point(surface, q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (surface.dim,):
        raise InvalidPointError(f"{surface.kind} points have {surface.dim} coordinates, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise InvalidPointError("non-finite coordinates")
    if surface.is_sphere and np.any(np.abs(np.linalg.norm(q, axis=-1) - 1.0) > 1e-10):
        raise InvalidPointError("sphere points must have unit norm")
    return q


def tangent_frame(q):
    """Positively oriented orthonormal frame (e1, e2) of T_q S^2, e1 x e2 = q."""
    q = np.asarray(q, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(q[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - np.dot(helper, q) * q
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(q, e1)
    return e1, e2


def metric_at(surface, q):
    """Metric matrix in the working frame at q (orthonormal frame on the sphere)."""
    q = check_point(surface, q)
    return float(surface.weight(q)) * np.eye(2)


def magnetic_pairing(surface, q, v, w):
    """sigma_q(v, w) = b(q) dA_q(v, w)."""
    q = check_point(surface, q)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if surface.is_sphere:
        return float(surface.magnetic.value(q) * np.dot(q, np.cross(v, w)))
    return float(surface.magnetic_density(q) * (v[0] * w[1] - v[1] * w[0]))


def retract(surface, q, v, trust_radius=TRUST_RADIUS):
    """Move from q along the tangent step v and land back on the surface."""
    q = check_point(surface, q)
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidPointError("non-finite step")
    v = surface.project(q, v)
    if surface.norm(q, v) > trust_radius:
        raise StepTooLargeError(f"step {surface.norm(q, v):.3g} exceeds trust radius {trust_radius}")
    return surface.normalize(q + v)


def riemannian_distance(surface, q1, q2):
    """Great-circle arc on the sphere; on the torus the length of the straight
    segment to the nearest lift image, weighted by the conformal factor."""
    q1 = check_point(surface, q1)
    q2 = check_point(surface, q2)
    if surface.is_sphere:
        # atan2 form is accurate for both tiny and near-antipodal separations
        return float(np.arctan2(np.linalg.norm(np.cross(q1, q2)), np.dot(q1, q2)))
    d = q2 - q1
    d = d - np.round(d)
    length = float(np.linalg.norm(d))
    if surface.kind == TORUS_FLAT or length == 0.0:
        return length
    pts = q1 + _GL_NODES[:, None] * d
    return length * float(np.sum(_GL_WEIGHTS * np.sqrt(surface.weight(pts))))
