"""Displacing energy sublevels by fibrewise translation.

The flow of T f o pi maps (q, p) to (q, p - T d_q f) for every magnetic
form, since it never moves the base point. When |df| >= eps_f > 0 on the
projection of {H <= k}, the quadratic lower bound H >= H0 |p| - H1 shows
that a long enough translation pushes the whole sublevel above level k, so
the sublevel is displaced from itself.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from .dynamics import LiftedFunction, PhasePoint, fibrewise_translation, integrate, potential_extremum
from .errors import EmptyLevelError, NotDisplaceableError
from .fields import ScalarField
from .geometry import tangent_frame

DISPLACED = "displaced"
NOT_DISPLACED = "not_displaced"


@dataclass
class SublevelSample:
    q: np.ndarray        # (n, d) base points
    p: np.ndarray        # (n, d) momenta
    base: np.ndarray     # distinct base points used
    k: float

    def __len__(self):
        return self.q.shape[0]


@dataclass
class DisplacementReport:
    k: float
    f: str
    eps_f: float
    B_p: float
    T_disp: float
    H0: float
    H1: float
    margin: float
    status: str
    n_samples: int
    translation_check: float
    monotone_margins: list

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# base-point lattices


def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def torus_grid(n):
    m = max(2, int(np.ceil(np.sqrt(n))))
    g = (np.arange(m) + 0.5) / m
    return np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)


def sublevel_base(sys, k, n):
    """At least n lattice points of {V <= k}, refining the lattice as needed."""
    lattice = fibonacci_sphere if sys.surface.is_sphere else torus_grid
    total = max(n, 16)
    for _ in range(20):
        pts = lattice(total)
        inside = pts[sys.potential.value(pts) <= k]
        if len(inside) >= n:
            return inside
        frac = max(len(inside) / total, 1.0 / total)
        total = int(np.ceil(1.2 * n / frac))
    return inside


def projected_sublevel_sample(sys, k, n, radial=4, angular=8):
    """Quasi-uniform sample of {H <= k}: base lattice times polar momentum discs.

    Each base point carries the disc |p|_q <= sqrt(2 (k - V(q))), sampled at
    the centre and on ``radial`` circles (including the boundary) of
    ``angular`` points each.
    """
    k = float(k)
    minV, qmin = potential_extremum(sys.surface, sys.potential, "min")
    if k < minV - 1e-12:
        raise EmptyLevelError(f"k={k} is below min H = {minV:.6g}")
    if k <= minV + 1e-12:
        q = np.asarray(qmin, dtype=float)[None, :]
        return SublevelSample(q, np.zeros_like(q), q, k)
    per = 1 + radial * angular
    base = sublevel_base(sys, k, int(np.ceil(n / per)))
    w = sys.surface.weight(base)
    rad = np.sqrt(np.maximum(2.0 * w * (k - sys.potential.value(base)), 0.0))
    fr = np.sqrt(np.arange(1, radial + 1) / radial)
    th = 2 * np.pi * np.arange(angular) / angular
    unit = np.column_stack([np.cos(th), np.sin(th)])
    disc = np.concatenate([[[0.0, 0.0]], (fr[:, None, None] * unit[None]).reshape(-1, 2)])
    Q, P = [], []
    for q, R in zip(base, rad):
        if sys.surface.is_sphere:
            e1, e2 = tangent_frame(q)
            P.append(R * (disc[:, :1] * e1 + disc[:, 1:] * e2))
        else:
            P.append(R * disc)
        Q.append(np.tile(q, (len(disc), 1)))
    return SublevelSample(np.concatenate(Q), np.concatenate(P), base, k)


# ---------------------------------------------------------------------------
# constants


def covector_norm(sys, q, xi):
    """|xi|_q for covectors in the working frame (tangent-projected on the sphere)."""
    xi = sys.surface.project(q, xi)
    return np.linalg.norm(xi, axis=-1) / np.sqrt(sys.surface.weight(q))


def gradient_floor(sys, f, k, n=4000):
    """eps_f = min of |d_q f|_q over {V <= k}: lattice minimum, then local polish."""
    f = ScalarField.parse(f)
    f.check_surface(sys.surface.family)
    k = float(k)
    if k < sys.min_V - 1e-12:
        raise EmptyLevelError(f"k={k} is below min H = {sys.min_V:.6g}")
    base = sublevel_base(sys, k, n)
    if len(base) == 0:
        raise EmptyLevelError(f"no base point with V <= {k}")
    norms = covector_norm(sys, base, f.grad(base))
    best = float(np.min(norms))
    sphere = sys.surface.is_sphere

    def objective(x):
        q = x / np.linalg.norm(x) if sphere else x
        excess = max(0.0, float(sys.potential.value(q)) - k)
        return float(covector_norm(sys, q, f.grad(q))) + 1e3 * excess

    for i in np.argsort(norms)[:3]:
        res = minimize(objective, base[i], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        q = res.x / np.linalg.norm(res.x) if sphere else res.x
        if float(sys.potential.value(q)) <= k:
            best = min(best, float(covector_norm(sys, q, f.grad(q))))
    if best <= 1e-6:
        raise NotDisplaceableError(
            f"df nearly vanishes ({best:.3g}) on the projection of the sublevel: "
            "a critical point of f lies inside"
        )
    return best


def momentum_bound(sys, k):
    """B_p = sup |p|_q over {H <= k} = sqrt(2 (k - min V))."""
    return float(np.sqrt(max(0.0, 2.0 * (k - sys.min_V))))


def displacement_time(sys, eps_f, B_p, k, safety=1.1):
    """Safety factor times the T solving H0 eps_f T - H0 B_p - H1 = k."""
    return safety * (k + sys.H1 + sys.H0 * B_p) / (sys.H0 * eps_f)


# ---------------------------------------------------------------------------
# verification


def translated_energy(sys, f, T, sample):
    f = ScalarField.parse(f)
    dF = sys.surface.project(sample.q, f.grad(sample.q))
    p = sample.p - T * dF
    w = sys.surface.weight(sample.q)
    return 0.5 * np.sum(p * p, axis=1) / w + sys.potential.value(sample.q)


def translation_crosscheck(sys, f, T, sample, count=100, seed=0):
    """Max relative deviation between the closed-form translation and the integrator."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(sample), size=min(count, len(sample)), replace=False)
    ham = LiftedFunction(f, T)
    worst = 0.0
    for i in idx:
        z = PhasePoint(sample.q[i], sample.p[i])
        exact = fibrewise_translation(sys, f, T, z)
        num = integrate(sys, z, 1.0, tol=1e-12, hamiltonian_obj=ham).final
        a = np.concatenate([exact.q, exact.p])
        b = np.concatenate([num.q, num.p])
        worst = max(worst, float(np.linalg.norm(a - b) / max(np.linalg.norm(a), 1e-300)))
    return worst


def verify_displacement(sys, f, k, T_disp=None, n=10000, seed=0, eps_f=None):
    """Certify that the fibrewise translation moves {H <= k} off itself."""
    f = ScalarField.parse(f)
    k = float(k)
    sample = projected_sublevel_sample(sys, k, n)
    if eps_f is None:
        eps_f = gradient_floor(sys, f, k)
    B_p = momentum_bound(sys, k)
    if T_disp is None:
        T_disp = displacement_time(sys, eps_f, B_p, k)
    margin = float(np.min(translated_energy(sys, f, T_disp, sample)) - k)
    checks = [
        float(np.min(translated_energy(sys, f, s * T_disp, sample)) - k) for s in (1.0, 1.25, 1.5)
    ]
    cross = translation_crosscheck(sys, f, T_disp, sample, seed=seed) if T_disp > 0 else 0.0
    return DisplacementReport(
        k=k, f=f.spec, eps_f=float(eps_f), B_p=B_p, T_disp=float(T_disp), H0=sys.H0, H1=sys.H1,
        margin=margin, status=DISPLACED if margin > 0 else NOT_DISPLACED,
        n_samples=len(sample), translation_check=cross, monotone_margins=checks,
    )
