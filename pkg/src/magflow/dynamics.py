"""Mechanical Tonelli systems and the twisted Hamiltonian flow.

H(q, p) = 1/2 |p|_q^2 + V(q). Momenta are covectors written in the working
frame: lift coordinates on the torus, ambient vectors tangent to the sphere
(the round metric identifies them with tangent vectors).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DivergenceError, StiffnessError
from .fields import ScalarField
from .geometry import ModelSurface, check_point, tangent_frame


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def as_array(self):
        return np.concatenate([self.q, self.p])


@dataclass(frozen=True)
class TangentPoint:
    q: np.ndarray
    v: np.ndarray


def _phase(q, p):
    return PhasePoint(np.asarray(q, dtype=float), np.asarray(p, dtype=float))


# ---------------------------------------------------------------------------
# Hamiltonians understood by the integrator


class MechanicalHamiltonian:
    """1/2 |p|^2_q + V(q) for the system's metric and potential."""

    def __init__(self, system):
        self.surface = system.surface
        self.potential = system.potential

    def value(self, q, p):
        w = self.surface.weight(q)
        return 0.5 * np.sum(p * p, axis=-1) / w + self.potential.value(q)

    def dp(self, q, p):
        return p / self.surface.weight(q)[..., None]

    def dq(self, q, p):
        w = self.surface.weight(q)[..., None]
        p2 = np.sum(p * p, axis=-1, keepdims=True)
        return -0.5 * p2 * self.surface.weight_grad(q) / (w * w) + self.potential.grad(q)


class LiftedFunction:
    """K = scale * f(pi(q, p)); its flow translates the fibres by -scale*df."""

    def __init__(self, f, scale=1.0):
        self.f = ScalarField.parse(f)
        self.scale = float(scale)

    def value(self, q, p):
        return self.scale * self.f.value(q)

    def dp(self, q, p):
        return np.zeros_like(p)

    def dq(self, q, p):
        return self.scale * self.f.grad(q)


@dataclass(frozen=True)
class TonelliSystem:
    """Surface, potential, and the constants of the quadratic bounds.

    E(q,v) >= E0 |v|^2 - E1 and H(q,p) >= H0 |p| - H1 hold with the closed
    forms E0 = 1/2, E1 = -min V, H0 = 1, H1 = 1/2 - min V.
    """

    surface: ModelSurface
    potential: ScalarField = field(default_factory=lambda: ScalarField.parse("zero"))
    min_V: float = field(init=False)
    max_V: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "potential", ScalarField.parse(self.potential))
        self.potential.check_surface(self.surface.family)
        lo, _ = potential_extremum(self.surface, self.potential, "min")
        hi, _ = potential_extremum(self.surface, self.potential, "max")
        object.__setattr__(self, "min_V", lo)
        object.__setattr__(self, "max_V", hi)

    E0 = 0.5
    H0 = 1.0

    @property
    def E1(self):
        return -self.min_V

    @property
    def H1(self):
        return 0.5 - self.min_V

    @property
    def hamiltonian_obj(self):
        return MechanicalHamiltonian(self)


# ---------------------------------------------------------------------------
# pointwise functions


def hamiltonian(sys, z):
    q = check_point(sys.surface, z.q)
    return float(MechanicalHamiltonian(sys).value(q, np.asarray(z.p, dtype=float)))


def lagrangian(sys, w):
    q = check_point(sys.surface, w.q)
    v = np.asarray(w.v, dtype=float)
    return float(0.5 * sys.surface.weight(q) * np.dot(v, v) - sys.potential.value(q))


def energy_fn(sys, w):
    q = check_point(sys.surface, w.q)
    v = np.asarray(w.v, dtype=float)
    return float(0.5 * sys.surface.weight(q) * np.dot(v, v) + sys.potential.value(q))


def legendre(sys, z):
    """p -> v = g(q)^{-1} p."""
    q = check_point(sys.surface, z.q)
    p = sys.surface.project(q, z.p)
    return TangentPoint(q, p / sys.surface.weight(q))


def inverse_legendre(sys, w):
    """v -> p = g(q) v."""
    q = check_point(sys.surface, w.q)
    v = sys.surface.project(q, w.v)
    return PhasePoint(q, sys.surface.weight(q) * v)


def potential_extremum(surface, potential, mode="max", grid_density=32):
    """Global max or min of a potential: grid search then a local polish."""
    potential = ScalarField.parse(potential)
    if grid_density < 16:
        raise ValueError("grid_density must be at least 16")
    sign = -1.0 if mode == "max" else 1.0
    if potential.is_constant:
        value = potential.constant_value
        q = np.array([0.0, 0.0, 1.0]) if surface.is_sphere else np.zeros(2)
        return value, q
    n = int(grid_density)
    if surface.is_sphere:
        theta = np.linspace(0.0, np.pi, n + 1)
        phi = np.arange(2 * n) * (np.pi / n)
        th, ph = np.meshgrid(theta, phi, indexing="ij")
        pts = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1).reshape(-1, 3)
    else:
        g = np.arange(n) / n
        gx, gy = np.meshgrid(g, g, indexing="ij")
        pts = np.stack([gx, gy], axis=-1).reshape(-1, 2)
    vals = sign * potential.value(pts)
    best_val = float(np.min(vals))
    best_q = pts[int(np.argmin(vals))]
    for idx in np.argsort(vals)[:3]:
        q0 = pts[idx]
        if surface.is_sphere:
            e1, e2 = tangent_frame(q0)

            def chart(u, q0=q0, e1=e1, e2=e2):
                x = q0 + u[0] * e1 + u[1] * e2
                return x / np.linalg.norm(x)
        else:

            def chart(u, q0=q0):
                return q0 + u

        res = minimize(
            lambda u: sign * float(potential.value(chart(u))),
            np.zeros(2),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-15, "initial_simplex": np.array([[0, 0], [0.5 / n, 0], [0, 0.5 / n]])},
        )
        if res.fun < best_val:
            best_val = float(res.fun)
            best_q = chart(res.x)
    return sign * best_val, np.asarray(best_q)


def e0(sys, grid_density=32):
    """max_q min_p H(q, p); for mechanical systems the inner min sits at p = 0."""
    value, _ = potential_extremum(sys.surface, sys.potential, "max", grid_density)
    return value


def mane_critical_value(sys):
    """Tabulated c(H, sigma) for the shipped model spaces, or None if unknown.

    A torus with nonzero mean magnetic density has a non-exact sigma and an
    amenable fundamental group, so c = +inf. A torus without magnetic field
    has c = e0. Other cases are left unevaluated.
    """
    b = sys.surface.magnetic
    if sys.surface.is_sphere:
        return None
    if b.is_constant:
        if b.constant_value == 0.0:
            return e0(sys)
        return float("inf")
    mean = b.constant_value  # the oscillating built-ins have zero mean
    if sys.surface.kind == "TorusFlat" and mean != 0.0:
        return float("inf")
    return None


# ---------------------------------------------------------------------------
# the flow


def _cross(a, b):
    # np.cross carries heavy overhead for single 3-vectors
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def _vector_field_arrays(sys, q, p, ham):
    surface = sys.surface
    qdot = ham.dp(q, p)
    if surface.is_sphere:
        qdot = qdot - np.dot(q, qdot) * q
        b = surface.magnetic.value(q)
        kq = ham.dq(q, p)
        pdot = -(kq - np.dot(q, kq) * q) - np.dot(qdot, p) * q - b * _cross(q, qdot)
    else:
        beta = surface.magnetic_density(q)
        pdot = -ham.dq(q, p) - beta * np.array([-qdot[1], qdot[0]])
    return qdot, pdot


def _mechanical_rhs(sys):
    """Scalar-arithmetic right-hand side for the mechanical Hamiltonian.

    Same equations as _vector_field_arrays; small fixed-size numpy arrays
    spend most of their time in call overhead, so the hot loop uses floats.
    """
    surface = sys.surface
    V = sys.potential.point
    b = surface.magnetic.point
    if surface.is_sphere:
        def f(y):
            q0, q1, q2, p0, p1, p2 = y.tolist()
            qp = q0 * p0 + q1 * p1 + q2 * p2
            v0, v1, v2 = p0 - qp * q0, p1 - qp * q1, p2 - qp * q2
            _, g = V((q0, q1, q2))
            qg = q0 * g[0] + q1 * g[1] + q2 * g[2]
            vp = v0 * p0 + v1 * p1 + v2 * p2
            bq = b((q0, q1, q2))[0]
            c0, c1, c2 = q1 * v2 - q2 * v1, q2 * v0 - q0 * v2, q0 * v1 - q1 * v0
            return np.array([
                v0, v1, v2,
                -(g[0] - qg * q0) - vp * q0 - bq * c0,
                -(g[1] - qg * q1) - vp * q1 - bq * c1,
                -(g[2] - qg * q2) - vp * q2 - bq * c2,
            ])
        return f
    conformal = surface.kind == "TorusConformal"
    lam = surface.conformal.point

    def f(y):
        q0, q1, p0, p1 = y.tolist()
        q = (q0, q1)
        if conformal:
            l, gl = lam(q)
            w = math.exp(2.0 * l)
            kin = -(p0 * p0 + p1 * p1) / w
            gw0, gw1 = kin * gl[0], kin * gl[1]   # -1/2 |p|^2 grad(w) / w^2
        else:
            w = 1.0
            gw0 = gw1 = 0.0
        _, g = V(q)
        v0, v1 = p0 / w, p1 / w
        beta = b(q)[0] * w
        return np.array([v0, v1, -(gw0 + g[0]) + beta * v1, -(gw1 + g[1]) - beta * v0])
    return f


def twisted_vector_field(sys, z, hamiltonian_obj=None):
    """(qdot, pdot) of the flow of K with respect to dp^dq + pi^* sigma."""
    q = check_point(sys.surface, z.q)
    p = np.asarray(z.p, dtype=float)
    ham = hamiltonian_obj or MechanicalHamiltonian(sys)
    return _vector_field_arrays(sys, q, p, ham)


@dataclass
class Trajectory:
    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    steps: int = 0
    rejected: int = 0

    @property
    def max_energy_drift(self):
        return float(np.max(np.abs(self.energy - self.energy[0])))

    @property
    def final(self):
        return PhasePoint(self.q[-1].copy(), self.p[-1].copy())


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def integrate(sys, z0, t_end, tol=1e-10, hamiltonian_obj=None, max_steps=2_000_000):
    """Adaptive Dormand-Prince 5(4) integration of the twisted flow.

    The local error estimate is kept below min(1, 10 h) * tol * (1 + |y|)
    componentwise, with torus positions measured on the absolute scale tol.
    The factor 10 h bounds the accumulated error, hence the energy drift, by
    a multiple of tol * |t_end| instead of tol times the number of steps.
    On the sphere q is renormalised and p re-projected after every accepted
    step. Negative t_end integrates backwards.
    """
    if not (1e-13 <= tol <= 1e-3):
        raise ValueError("tol must lie in [1e-13, 1e-3]")
    surface = sys.surface
    ham = hamiltonian_obj or MechanicalHamiltonian(sys)
    q0 = check_point(surface, z0.q)
    p0 = surface.project(q0, np.asarray(z0.p, dtype=float))
    d = surface.dim
    y = np.concatenate([q0, p0])

    f = _mechanical_rhs(sys) if type(ham) is MechanicalHamiltonian else None
    if f is None:
        def f(y):
            qd, pd = _vector_field_arrays(sys, y[:d], y[d:], ham)
            return np.concatenate([qd, pd])

    times = [0.0]
    ys = [y.copy()]
    t_end = float(t_end)
    if t_end == 0.0:
        H = ham.value(y[:d], y[d:])
        return Trajectory(np.array(times), y[None, :d].copy(), y[None, d:].copy(), np.array([H]))
    direction = 1.0 if t_end > 0 else -1.0
    t = 0.0
    k1 = f(y)
    if not np.all(np.isfinite(k1)):
        raise DivergenceError("non-finite vector field at the initial state")
    # lift coordinates on the torus grow without bound, so positions get an
    # absolute scale; momenta (and sphere positions) a mixed one
    rel = np.ones_like(y)
    if not surface.is_sphere:
        rel[:d] = 0.0
    # starting step (Hairer, Norsett, Wanner II.4)
    sc = tol * (1.0 + rel * np.abs(y))
    d0 = np.sqrt(np.mean((y / sc) ** 2))
    d1 = np.sqrt(np.mean((k1 / sc) ** 2))
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h = min(h, abs(t_end))
    steps = rejected = 0
    k = np.empty((7, y.size))
    while direction * (t_end - t) > 0:
        if steps + rejected > max_steps:
            raise StiffnessError("maximum number of steps exceeded")
        h = min(h, direction * (t_end - t))
        if h < 1e-14 * max(1.0, abs(t)):
            raise StiffnessError(f"step size underflow at t={t:.6g}")
        hs = direction * h
        k[0] = k1
        for i in range(1, 7):
            k[i] = f(y + hs * np.dot(_A[i], k[:i]))
        y_new = y + hs * np.dot(_B5, k)
        err = hs * np.dot(_E, k)
        if not np.all(np.isfinite(y_new)):
            raise DivergenceError(f"non-finite state at t={t:.6g}")
        sc = min(10.0 * h, 1.0) * tol * (1.0 + rel * np.maximum(np.abs(y), np.abs(y_new)))
        err_norm = float(np.max(np.abs(err) / sc))
        if err_norm <= 1.0:
            t += hs
            if surface.is_sphere:
                qn = y_new[:d]
                if abs(np.linalg.norm(qn) - 1.0) > 1e-12:
                    qn = qn / np.linalg.norm(qn)
                pn = y_new[d:] - np.dot(qn, y_new[d:]) * qn
                y_new = np.concatenate([qn, pn])
                k1 = f(y_new)
            else:
                k1 = k[6]
            y = y_new
            steps += 1
            times.append(t)
            ys.append(y.copy())
            factor = 0.9 * err_norm ** (-0.2) if err_norm > 0 else 5.0
            h *= min(5.0, max(0.2, factor))
        else:
            rejected += 1
            h *= max(0.1, 0.9 * err_norm ** (-0.25))
    Y = np.array(ys)
    H = ham.value(Y[:, :d], Y[:, d:])
    return Trajectory(np.array(times), Y[:, :d], Y[:, d:], np.asarray(H), steps, rejected)


def fibrewise_translation(sys, f, t, z):
    """Time-t map of the flow of f o pi: (q, p) -> (q, p - t d_q f)."""
    f = ScalarField.parse(f)
    q = check_point(sys.surface, z.q)
    df = sys.surface.project(q, f.grad(q))
    return PhasePoint(q.copy(), np.asarray(z.p, dtype=float) - t * df)
