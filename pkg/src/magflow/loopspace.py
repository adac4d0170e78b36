"""Discrete free-period loop space.

A loop is N samples x[i] = x(i/N) together with a period T. Between samples
the loop is the straight segment in the torus lift, or the great-circle arc
on the sphere. Velocities live on the segments (a central difference about
the segment midpoint) and the action integrand is evaluated at segment
midpoints, so

    S^L_k(x, T) = sum_i [ N/(2T) |x[i+1]-x[i]|^2_g(m_i) + T/N (k - V(m_i)) ].

The loop part of the action form is reported as an L^2 density r[i] (a
covector per sample) such that (1/N) sum_i r[i].zeta[i] is the exact
directional derivative of the discrete functional plus the transgression of
sigma along the piecewise interpolated variation. Its period part is the
exact T-derivative k - mean(E).
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateCapError,
    InvalidPointError,
    NotContractibleError,
    OutsideNeighbourhoodError,
    RefinePathError,
)

DELTA = 0.25
PATH_STEP_BOUND = 0.2

_SEG_S, _SEG_W = np.polynomial.legendre.leggauss(4)
_SEG_S = 0.5 * (_SEG_S + 1.0)
_SEG_W = 0.5 * _SEG_W
_CONE_U, _CONE_UW = np.polynomial.legendre.leggauss(8)
_CONE_U = 0.5 * (_CONE_U + 1.0)
_CONE_UW = 0.5 * _CONE_UW
_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


@dataclass(frozen=True)
class DiscreteLoop:
    """N samples of a closed curve and its period.

    On the torus ``holonomy`` is the integer translation x[N] - x[0] of the
    lift; contractible loops have holonomy (0, 0).
    """

    samples: np.ndarray
    T: float
    holonomy: tuple = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "holonomy", tuple(int(h) for h in self.holonomy))

    @property
    def N(self):
        return self.samples.shape[0]

    def with_period(self, T):
        return DiscreteLoop(self.samples, T, self.holonomy)


@dataclass(frozen=True)
class LoopTangent:
    zeta: np.ndarray
    dT: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "zeta", np.asarray(self.zeta, dtype=float))
        object.__setattr__(self, "dT", float(self.dT))

    def scaled(self, c):
        return LoopTangent(c * self.zeta, c * self.dT)


@dataclass
class LoopPath:
    loops: list = field(default_factory=list)

    def __len__(self):
        return len(self.loops)


def check_loop(sys, loop):
    X = loop.samples
    N = X.shape[0]
    if X.ndim != 2 or X.shape[1] != sys.surface.dim:
        raise InvalidPointError(f"loop samples must have shape (N, {sys.surface.dim})")
    if N < 16 or N % 2:
        raise ValueError("loops need an even number N >= 16 of samples")
    if not (np.isfinite(loop.T) and loop.T > 0):
        raise ValueError("loop period must be positive and finite")
    if not np.all(np.isfinite(X)):
        raise InvalidPointError("non-finite loop samples")
    if sys.surface.is_sphere and np.max(np.abs(np.linalg.norm(X, axis=1) - 1.0)) > 1e-10:
        raise InvalidPointError("sphere loop samples must be unit vectors")
    return loop


def is_contractible(sys, loop):
    return sys.surface.is_sphere or all(h == 0 for h in loop.holonomy)


def _next(sys, loop):
    Xn = np.roll(loop.samples, -1, axis=0)
    if not sys.surface.is_sphere and any(loop.holonomy):
        Xn[-1] = Xn[-1] + np.asarray(loop.holonomy, dtype=float)
    return Xn


def _cross(a, b):
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def _rot(d):
    # (dx, dy) -> (dy, -dx): sigma(w, d) = beta * w . rot(d) on the plane
    return np.stack([d[..., 1], -d[..., 0]], axis=-1)


class LoopEval(NamedTuple):
    action: float       # S^L_k
    period_part: float  # k - mean E
    r: np.ndarray       # L^2 covector density of the loop part, None if not requested
    length: float
    l2_energy: float
    mean_energy: float


def evaluate(sys, loop, k, gradient=True):
    """All discrete loop functionals in one pass."""
    surface = sys.surface
    X = loop.samples
    N = X.shape[0]
    T = loop.T
    Xn = _next(sys, loop)
    D = Xn - X
    mbar = 0.5 * (X + Xn)
    if surface.is_sphere:
        mnorm = np.linalg.norm(mbar, axis=1)
        m = mbar / mnorm[:, None]
        w = np.ones(N)
    else:
        m = mbar
        w = surface.weight(m)
    d2 = np.sum(D * D, axis=1)
    V = sys.potential.value(m)
    kin = w * d2
    l2e = N * float(np.sum(kin))
    if surface.is_sphere:
        # great-circle arcs between samples, so latitude circles get their exact length
        length = float(np.sum(2.0 * np.arcsin(np.minimum(0.5 * np.sqrt(d2), 1.0))))
    else:
        length = float(np.sum(np.sqrt(kin)))
    action = 0.5 * l2e / T + T * (k - float(np.mean(V)))
    mean_E = 0.5 * l2e / (T * T) + float(np.mean(V))
    period_part = k - mean_E
    if not gradient:
        return LoopEval(action, period_part, None, length, l2e, mean_E)

    # derivative of segment i with respect to its start (a) and end (b)
    gV = sys.potential.grad(m)
    if surface.is_sphere:
        gV = (gV - np.sum(gV * m, axis=1, keepdims=True) * m) / mnorm[:, None]
        gw = np.zeros_like(D)
    else:
        gw = surface.weight_grad(m)
    common = (0.25 * N / T) * d2[:, None] * gw - (0.5 * T / N) * gV
    flux = (N / T) * w[:, None] * D
    da = common - flux
    db = common + flux
    grad = da + np.roll(db, 1, axis=0)
    grad = grad + transgression_density(sys, loop, X, D)
    r = N * grad
    if surface.is_sphere:
        r = r - np.sum(r * X, axis=1, keepdims=True) * X
    return LoopEval(action, period_part, r, length, l2e, mean_E)


def transgression_density(sys, loop, X=None, D=None):
    """Per-sample covectors G with tau(zeta) = sum_i G[i].zeta[i]."""
    surface = sys.surface
    if surface.magnetic.is_constant and surface.magnetic.constant_value == 0.0:
        return np.zeros_like(loop.samples)
    if X is None:
        X = loop.samples
        D = _next(sys, loop) - X
    s = _SEG_S[None, :, None]
    a = X[:, None, :] + s * D[:, None, :]          # (N, q, d)
    if surface.is_sphere:
        an = np.linalg.norm(a, axis=2)
        ah = a / an[..., None]
        coef = surface.magnetic.value(ah) / (an * an)    # (N, q)
        dirs = _cross(np.broadcast_to(D[:, None, :], a.shape), ah)
        start = np.einsum("q,nq,nqd->nd", _SEG_W * (1.0 - _SEG_S), coef, dirs)
        end = np.einsum("q,nq,nqd->nd", _SEG_W * _SEG_S, coef, dirs)
    else:
        beta = surface.magnetic_density(a)                # (N, q)
        rd = _rot(D)
        start = (beta @ (_SEG_W * (1.0 - _SEG_S)))[:, None] * rd
        end = (beta @ (_SEG_W * _SEG_S))[:, None] * rd
    return start + np.roll(end, 1, axis=0)


# ---------------------------------------------------------------------------
# public operations


def length(sys, loop):
    return evaluate(sys, check_loop(sys, loop), 0.0, gradient=False).length


def l2_energy(sys, loop):
    return evaluate(sys, check_loop(sys, loop), 0.0, gradient=False).l2_energy


def free_period_action(sys, loop, k):
    return evaluate(sys, check_loop(sys, loop), k, gradient=False).action


def action_one_form(sys, loop, k):
    """(r, period part) of eta_k at the loop."""
    ev = evaluate(sys, check_loop(sys, loop), k)
    return ev.r, ev.period_part


def pair(loop, r, period_part, tangent):
    """<eta, (zeta, dT)> for an action-form value (r, period_part)."""
    N = loop.N
    return float(np.sum(r * tangent.zeta)) / N + period_part * tangent.dT


def transgression_pairing(sys, loop, zeta):
    check_loop(sys, loop)
    zeta = zeta.zeta if isinstance(zeta, LoopTangent) else np.asarray(zeta, dtype=float)
    return float(np.sum(transgression_density(sys, loop) * zeta))


def barycenter(sys, loop):
    X = loop.samples
    c = np.mean(X, axis=0)
    if sys.surface.is_sphere:
        n = np.linalg.norm(c)
        if n < 1e-3:
            raise DegenerateCapError("Euclidean mean of the loop is too close to the origin")
        c = c / n
    elif any(loop.holonomy):
        c = c + 0.5 * np.asarray(loop.holonomy, dtype=float)
    return c


def cone_flux(sys, loop):
    """Integral of sigma over the geodesic cone from the barycenter.

    On the torus this is the planar cone over the closed lift; on the sphere
    the union of geodesic triangles (c, x[i], x[i+1]).
    """
    surface = sys.surface
    if not is_contractible(sys, loop):
        raise NotContractibleError(f"loop has holonomy {loop.holonomy}")
    b = surface.magnetic
    if b.is_constant and b.constant_value == 0.0:
        return 0.0
    X = loop.samples
    Xn = _next(sys, loop)
    c = barycenter(sys, loop)
    if surface.is_sphere:
        triple = np.einsum("d,nd->n", c, _cross(X, Xn))
        if b.is_constant:
            denom = 1.0 + X @ c + np.sum(X * Xn, axis=1) + Xn @ c
            return float(b.constant_value * np.sum(2.0 * np.arctan2(triple, denom)))
        D = Xn - X
        u = _CONE_U[None, :, None, None]
        s = _SEG_S[None, None, :, None]
        a = c + u * ((X - c)[:, None, None, :] + s * D[:, None, None, :])   # (N, u, s, 3)
        an = np.linalg.norm(a, axis=3)
        vals = b.value(a / an[..., None]) * _CONE_U[None, :, None] / an**3
        per = np.einsum("u,s,nus->n", _CONE_UW, _SEG_W, vals)
        return float(np.sum(per * triple))
    D = Xn - X
    cross = (X[:, 0] - c[0]) * D[:, 1] - (X[:, 1] - c[1]) * D[:, 0]
    if surface.kind == "TorusFlat" and b.is_constant:
        return float(0.5 * b.constant_value * np.sum(cross))
    u = _CONE_U[None, :, None, None]
    s = _SEG_S[None, None, :, None]
    a = c + u * ((X - c)[:, None, None, :] + s * D[:, None, None, :])
    vals = surface.magnetic_density(a) * _CONE_U[None, :, None]
    per = np.einsum("u,s,nus->n", _CONE_UW, _SEG_W, vals)
    return float(np.sum(per * cross))


def cap_integral(sys, loop, delta=DELTA):
    check_loop(sys, loop)
    ell = length(sys, loop)
    if ell >= delta:
        raise OutsideNeighbourhoodError(f"loop length {ell:.4g} is not below delta={delta}")
    return cone_flux(sys, loop)


def local_primitive(sys, loop, k, delta=DELTA):
    """S_k on short loops: action plus the flux through the capping cone."""
    return free_period_action(sys, loop, k) + cap_integral(sys, loop, delta)


def global_primitive(sys, loop, k):
    """S_k on contractible torus loops for weakly exact sigma (planar cap over the lift)."""
    if sys.surface.is_sphere:
        raise ValueError("global primitive is only available on the torus")
    check_loop(sys, loop)
    if not is_contractible(sys, loop):
        raise NotContractibleError(f"loop has holonomy {loop.holonomy}")
    return free_period_action(sys, loop, k) + cone_flux(sys, loop)


# ---------------------------------------------------------------------------
# constants of the short-loop estimates


def theta0(sys, margin=0.1, grid=64):
    """Constant with |cap flux| <= theta0 * l(x)^2 on short loops."""
    surface = sys.surface
    b = surface.magnetic
    if surface.is_sphere:
        if b.is_constant:
            bmax = abs(b.constant_value)
        else:
            th = np.linspace(0, np.pi, grid + 1)
            ph = np.linspace(0, 2 * np.pi, 2 * grid, endpoint=False)
            TH, PH = np.meshgrid(th, ph, indexing="ij")
            pts = np.stack([np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH), np.cos(TH)], -1)
            bmax = float(np.max(np.abs(b.value(pts))))
        return bmax / (4 * np.pi) * (1 + margin)
    g = np.arange(grid) / grid
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), -1)
    beta = float(np.max(np.abs(surface.magnetic_density(pts))))
    wmin = float(np.min(surface.weight(pts)))
    return beta / (4 * np.pi * wmin) * (1 + margin)


def upper_bound_constant(sys):
    """B0 with L(q, v) <= B0 (1 + |v|^2)."""
    return max(0.5, -sys.min_V)


def primitive_upper_bound(sys, loop, k):
    """B0 e/T + (B0 + k) T + theta0 l^2, an upper bound for S_k on short loops."""
    ev = evaluate(sys, loop, k, gradient=False)
    B0 = upper_bound_constant(sys)
    return B0 * ev.l2_energy / loop.T + (B0 + k) * loop.T + theta0(sys) * ev.length**2


def vanishing_bound(sys, loop, k, alpha):
    """Right-hand side T^2 (k + E1 + alpha) / E0 of the energy-period bound."""
    return loop.T**2 * (k + sys.E1 + alpha) / sys.E0


# ---------------------------------------------------------------------------
# paths of loops


def interpolate(sys, a, b, s):
    """Loop at parameter s on the straight segment from loop a to loop b."""
    X = (1.0 - s) * a.samples + s * b.samples
    if sys.surface.is_sphere:
        X = X / np.linalg.norm(X, axis=1, keepdims=True)
    return DiscreteLoop(X, (1.0 - s) * a.T + s * b.T, a.holonomy)


def _segment_tangent(sys, a, b, s):
    dX = b.samples - a.samples
    if sys.surface.is_sphere:
        Y = (1.0 - s) * a.samples + s * b.samples
        n = np.linalg.norm(Y, axis=1, keepdims=True)
        Yh = Y / n
        dX = (dX - np.sum(dX * Yh, axis=1, keepdims=True) * Yh) / n
    return LoopTangent(dX, b.T - a.T)


def max_sample_distance(sys, a, b):
    return float(np.max(np.linalg.norm(b.samples - a.samples, axis=1)))


def segment_variation(sys, a, b, k):
    """Integral of eta_k along the straight segment from a to b (2-point Gauss)."""
    if a.holonomy != b.holonomy:
        raise NotContractibleError("segment endpoints lie in different components")
    if np.array_equal(a.samples, b.samples) and a.T == b.T:
        return 0.0
    total = 0.0
    for s in _GAUSS2:
        loop = interpolate(sys, a, b, s)
        ev = evaluate(sys, loop, k)
        total += 0.5 * pair(loop, ev.r, ev.period_part, _segment_tangent(sys, a, b, s))
    return total


def adaptive_segment_variation(sys, a, b, k, tol=1e-9, depth=14, whole=None):
    """Segment integral with recursive bisection until halves agree to tol."""
    if whole is None:
        whole = segment_variation(sys, a, b, k)
    mid = interpolate(sys, a, b, 0.5)
    left = segment_variation(sys, a, mid, k)
    right = segment_variation(sys, mid, b, k)
    if depth <= 0 or abs(left + right - whole) <= tol:
        return left + right + (left + right - whole) / 15.0
    return (
        adaptive_segment_variation(sys, a, mid, k, 0.5 * tol, depth - 1, left)
        + adaptive_segment_variation(sys, mid, b, k, 0.5 * tol, depth - 1, right)
    )


def action_variation(sys, path, k, step_bound=PATH_STEP_BOUND, cumulative=False, tol=None):
    """Discrete integral of u^* eta_k along a path of loops.

    Each straight segment between consecutive loops is integrated with the
    two-point Gauss rule, or adaptively to absolute accuracy ``tol``.
    """
    loops = path.loops if isinstance(path, LoopPath) else list(path)
    for lp in loops:
        check_loop(sys, lp)
    values = [0.0]
    for a, b in zip(loops[:-1], loops[1:]):
        dist = max_sample_distance(sys, a, b)
        if dist > step_bound:
            raise RefinePathError(f"consecutive loops are {dist:.3g} apart (bound {step_bound})")
        if tol is None:
            values.append(values[-1] + segment_variation(sys, a, b, k))
        else:
            values.append(values[-1] + adaptive_segment_variation(sys, a, b, k, tol))
    return np.array(values) if cumulative else values[-1]


def refine_path(sys, loops, step_bound=PATH_STEP_BOUND):
    """Insert interpolated loops until consecutive loops satisfy the step bound.

    On the sphere the normalised chord moves unevenly when samples are far
    apart, so segments still above the bound are bisected further.
    """
    out = [loops[0]]
    for a, b in zip(loops[:-1], loops[1:]):
        n = int(np.ceil(max_sample_distance(sys, a, b) / (0.95 * step_bound)))
        stack = [(j / n, (j + 1) / n, 0) for j in reversed(range(n))]
        prev = a
        while stack:
            s0, s1, depth = stack.pop()
            nxt = b if s1 == 1.0 else interpolate(sys, a, b, s1)
            if max_sample_distance(sys, prev, nxt) > 0.95 * step_bound:
                if depth >= 40:
                    raise RefinePathError("segment cannot be refined: antipodal samples")
                mid = 0.5 * (s0 + s1)
                stack.extend([(mid, s1, depth + 1), (s0, mid, depth + 1)])
                continue
            out.append(nxt)
            prev = nxt
    return out


# ---------------------------------------------------------------------------
# calibration of the short-loop lower bound


def probe_loop(sys, length_target, rng, N=64):
    """Random short ellipse of prescribed length around a random centre."""
    t = 2 * np.pi * np.arange(N) / N
    aspect = rng.uniform(0.5, 1.0)
    phase = rng.uniform(0, 2 * np.pi)
    sign = rng.choice([-1.0, 1.0])
    u = np.cos(t + phase)
    v = sign * aspect * np.sin(t + phase)
    if sys.surface.is_sphere:
        c = rng.normal(size=3)
        c /= np.linalg.norm(c)
        e1 = np.cross(c, rng.normal(size=3))
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(c, e1)
        shape = u[:, None] * e1 + v[:, None] * e2

        def build(s):
            X = c + s * shape
            return X / np.linalg.norm(X, axis=1, keepdims=True)
    else:
        c = rng.uniform(0.0, 1.0, size=2)
        shape = np.stack([u, v], axis=1)

        def build(s):
            return c + s * shape

    s = length_target / (2 * np.pi)
    for _ in range(30):
        ell = evaluate(sys, DiscreteLoop(build(s), 1.0), 0.0, gradient=False).length
        if abs(ell - length_target) < 1e-12 * length_target:
            break
        s *= length_target / ell
    return DiscreteLoop(build(s), 1.0)


def calibrate_epsilon(sys, k, delta=DELTA, n_probe=200, seed=0, factor=0.5):
    """factor * min of the local primitive over probe loops of length ~delta.

    For each probe shape the period is chosen to minimise the primitive,
    T* = sqrt(e / (2 (k - mean V))), which is available in closed form.
    """
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(n_probe):
        loop = probe_loop(sys, 0.999 * delta, rng)
        ev = evaluate(sys, loop, k, gradient=False)
        slack = k - (ev.mean_energy - 0.5 * ev.l2_energy)  # k - mean V
        if slack <= 0:
            raise ValueError(f"k={k} does not exceed the potential along a probe loop")
        T = np.sqrt(ev.l2_energy / (2.0 * slack))
        best = min(best, local_primitive(sys, loop.with_period(T), k, delta))
    if not best > 0:
        raise ValueError(f"short-loop primitive is not positive at k={k}: min {best:.4g}")
    return factor * best
