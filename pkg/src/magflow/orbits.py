"""Refinement of flow candidates to periodic orbits and their verification.

A candidate loop is first driven to a zero of the discrete action form by a
damped Gauss-Newton iteration. The residual at sample i only involves the
samples i-1, i, i+1 and the period, so the Jacobian is banded: it is built
from a handful of coloured finite differences, and the row of the period
part is recovered from the T-column by symmetry of the second derivative.
The near-null directions (time shift of the parametrisation, and the
symmetries of the model) are handled by a small Levenberg regularisation.

The discrete zero approximates the orbit to second order in 1/N. The
initial state read off from it is then polished by a shooting Newton
iteration on the Hamiltonian flow, with the energy fixed to k, and both the
raw and the polished closing errors are reported.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import loopspace as ls
from .dynamics import PhasePoint, TangentPoint, hamiltonian, integrate, inverse_legendre
from .errors import DivergenceError, RefinementFailed, StiffnessError
from .geometry import tangent_frame

VERIFIED = "verified"
UNVERIFIED = "unverified"


@dataclass
class OrbitResult:
    loop: ls.DiscreteLoop
    k: float
    status: str
    residual: float
    period: float
    energy_error: float
    closing_error: float
    raw_energy_error: float
    raw_closing_error: float
    shooting_correction: float
    contractible: bool
    z0: PhasePoint = None
    newton_iterations: int = 0
    message: str = ""
    geometry: dict = field(default_factory=dict)

    @property
    def verified(self):
        return self.status == VERIFIED


# ---------------------------------------------------------------------------
# discrete Newton


def _frames(sys, X):
    if not sys.surface.is_sphere:
        return None
    E = np.empty((X.shape[0], 2, 3))
    for i, q in enumerate(X):
        E[i] = tangent_frame(q)
    return E


def _apply(sys, loop, frames, dx, dT):
    """Move the loop by per-sample coordinates dx (N, 2) and period dT."""
    if frames is None:
        X = loop.samples + dx
    else:
        X = loop.samples + np.einsum("nc,ncd->nd", dx, frames)
        X = X / np.linalg.norm(X, axis=1, keepdims=True)
    return ls.DiscreteLoop(X, loop.T + dT, loop.holonomy)


def _residual(sys, loop, k, frames):
    ev = ls.evaluate(sys, loop, k)
    r = ev.r if frames is None else np.einsum("nd,ncd->nc", ev.r, frames)
    N = loop.N
    return np.concatenate([r.ravel() / np.sqrt(N), [ev.period_part]])


def _colour_count(N):
    g = 3
    while N % g:
        g += 1
    return g


def discrete_jacobian(sys, loop, k, frames=None, h=1e-6):
    """Sparse Jacobian of the scaled residual in the local coordinates."""
    N = loop.N
    g = _colour_count(N)
    rows, cols, vals = [], [], []
    idx = np.arange(N)
    for colour in range(g):
        members = idx[idx % g == colour]
        for c in range(2):
            dx = np.zeros((N, 2))
            dx[members, c] = h
            Fp = _residual(sys, _apply(sys, loop, frames, dx, 0.0), k, frames)
            Fm = _residual(sys, _apply(sys, loop, frames, -dx, 0.0), k, frames)
            dF = (Fp - Fm)[:-1].reshape(N, 2) / (2 * h)
            for off in (-1, 0, 1):
                rows_i = (members + off) % N
                for c2 in range(2):
                    rows.append(2 * rows_i + c2)
                    cols.append(2 * members + c)
                    vals.append(dF[rows_i, c2])
    hT = h * max(1.0, loop.T)
    Fp = _residual(sys, _apply(sys, loop, frames, np.zeros((N, 2)), hT), k, frames)
    Fm = _residual(sys, _apply(sys, loop, frames, np.zeros((N, 2)), -hT), k, frames)
    colT = (Fp - Fm) / (2 * hT)
    n = 2 * N
    rows.append(np.arange(n + 1))
    cols.append(np.full(n + 1, n))
    vals.append(colT)
    # d(period part)/dx_i = (1/N) d r_i/dT, and the stored rows carry r/sqrt(N)
    rows.append(np.full(n, n))
    cols.append(np.arange(n))
    vals.append(colT[:-1] / np.sqrt(N))
    J = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n + 1, n + 1)
    )
    return J.tocsr()


def residual_norm(sys, loop, k):
    return float(np.linalg.norm(_residual(sys, loop, k, _frames(sys, loop.samples))))


def newton_refine(sys, loop, k, tol=1e-10, max_iter=40, mu=1e-10):
    """Damped Gauss-Newton on the discrete equation eta_k = 0."""
    frames = _frames(sys, loop.samples)
    F = _residual(sys, loop, k, frames)
    norm = float(np.linalg.norm(F))
    it = 0
    while norm > tol and it < max_iter:
        it += 1
        J = discrete_jacobian(sys, loop, k, frames)
        JT = J.T.tocsr()
        A = (JT @ J).tocsc()
        scale = max(float(A.diagonal().max()), 1.0)
        A = A + mu * scale * sp.identity(A.shape[0], format="csc")
        step = -spsolve(A, JT @ F)
        if not np.all(np.isfinite(step)):
            raise RefinementFailed("non-finite Newton step")
        N = loop.N
        dx = step[:-1].reshape(N, 2)
        dT = step[-1]
        lam = 1.0
        accepted = False
        while lam > 1e-4:
            trial = _apply(sys, loop, frames, lam * dx, lam * dT)
            if trial.T > 0:
                tf = _frames(sys, trial.samples)
                Ft = _residual(sys, trial, k, tf)
                nt = float(np.linalg.norm(Ft))
                if nt < norm:
                    loop, frames, F, norm = trial, tf, Ft, nt
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            break
    if not np.isfinite(norm):
        raise RefinementFailed("Newton iteration diverged")
    return loop, norm, it


# ---------------------------------------------------------------------------
# continuous orbit


def spectral_velocity(sys, loop):
    """dx/ds at every sample from the trigonometric interpolant (s in [0, 1))."""
    X = loop.samples
    N = X.shape[0]
    freq = np.fft.fftfreq(N, d=1.0 / N)
    if N % 2 == 0:
        freq[N // 2] = 0.0
    D = np.real(np.fft.ifft(2j * np.pi * freq[:, None] * np.fft.fft(X, axis=0), axis=0))
    if sys.surface.is_sphere:
        D = D - np.sum(D * X, axis=1, keepdims=True) * X
    return D


def initial_state(sys, loop):
    """Phase point at s=0: inverse Legendre of (x(0), x'(0)/T)."""
    v = spectral_velocity(sys, loop)[0] / loop.T
    return inverse_legendre(sys, TangentPoint(loop.samples[0], v))


def _flow(sys, z, T, tol):
    traj = integrate(sys, z, T, tol=tol)
    return traj


def closing_error(sys, z0, T, tol=1e-11):
    traj = _flow(sys, z0, T, tol)
    zf = traj.final
    return float(np.linalg.norm(np.concatenate([zf.q - z0.q, zf.p - z0.p])))


def _pack(sys, z, T):
    return np.concatenate([z.q, z.p, [T]])


def _unpack(sys, y):
    d = sys.surface.dim
    q = y[:d]
    p = y[d:2 * d]
    if sys.surface.is_sphere:
        q = q / np.linalg.norm(q)
        p = p - np.dot(p, q) * q
    return PhasePoint(q, p), float(y[-1])


def _shoot_residual(sys, y, k, tol):
    z, T = _unpack(sys, y)
    zf = _flow(sys, z, T, tol).final
    res = [zf.q - z.q, zf.p - z.p, [hamiltonian(sys, z) - k]]
    if sys.surface.is_sphere:
        d = sys.surface.dim
        res.append([np.linalg.norm(y[:d]) - 1.0, np.dot(y[:d], y[d:2 * d])])
    return np.concatenate(res)


def shooting_refine(sys, z0, T, k, tol=1e-10, max_iter=10, integ_tol=1e-12):
    """Gauss-Newton on (z0, T) for Phi_T(z0) = z0 and H(z0) = k."""
    y = _pack(sys, z0, T)
    F = _shoot_residual(sys, y, k, integ_tol)
    norm = float(np.linalg.norm(F))
    for _ in range(max_iter):
        if norm <= tol:
            break
        h = 1e-7
        J = np.empty((F.size, y.size))
        for j in range(y.size):
            e = np.zeros_like(y)
            e[j] = h
            J[:, j] = (_shoot_residual(sys, y + e, k, integ_tol) - F) / h
        step = np.linalg.lstsq(J, -F, rcond=1e-10)[0]
        lam = 1.0
        improved = False
        while lam > 1e-3:
            yt = y + lam * step
            try:
                Ft = _shoot_residual(sys, yt, k, integ_tol)
            except (StiffnessError, DivergenceError, ValueError):
                Ft = None
            if Ft is not None and np.linalg.norm(Ft) < norm:
                y, F, norm = yt, Ft, float(np.linalg.norm(Ft))
                improved = True
                break
            lam *= 0.5
        if not improved:
            break
    z, T = _unpack(sys, y)
    return z, T


def _distance(z1, T1, z2, T2):
    return float(np.linalg.norm(np.concatenate([z1.q - z2.q, z1.p - z2.p, [T1 - T2]])))


def circle_geometry(sys, z0, T, samples=400, tol=1e-11):
    """Geometric description of a sphere orbit from the integrated flow.

    Two independent routes: the geodesic radius from a plane fitted to the
    trajectory (cos rho is the plane's distance to the origin), and the
    geodesic curvature q.(qdot x qddot)/|qdot|^3 evaluated from the vector
    field along the trajectory.
    """
    from .dynamics import MechanicalHamiltonian, _vector_field_arrays

    traj = integrate(sys, z0, T, tol=tol)
    Q = traj.q
    ham = MechanicalHamiltonian(sys)
    kappa = []
    for q, p in zip(traj.q, traj.p):
        qdot, pdot = _vector_field_arrays(sys, q, p, ham)
        # qdot = p on the round sphere, so qddot = pdot
        sp_ = np.linalg.norm(qdot)
        kappa.append(np.dot(q, np.cross(qdot, pdot)) / sp_**3)
    kappa = np.array(kappa)
    A = np.column_stack([Q, np.ones(len(Q))])
    _, _, Vt = np.linalg.svd(A)
    n = Vt[-1, :3]
    d = -Vt[-1, 3]
    scale = np.linalg.norm(n)
    n, d = n / scale, d / scale
    if d < 0:
        n, d = -n, -d
    return {
        "center": n.tolist(),
        "cos_rho": float(d),
        "sin_rho": float(np.sqrt(max(0.0, 1 - d * d))),
        "geodesic_curvature": float(np.mean(np.abs(kappa))),
        "curvature_spread": float(np.max(np.abs(kappa)) - np.min(np.abs(kappa))),
        "cot_rho": float(d / np.sqrt(max(1e-300, 1 - d * d))),
        "plane_residual": float(np.max(np.abs(Q @ n - d))),
    }


def planar_geometry(sys, z0, T, tol=1e-11):
    """Centre and radius of a torus orbit in the lift (least-squares circle)."""
    traj = integrate(sys, z0, T, tol=tol)
    Q = traj.q
    A = np.column_stack([2 * Q, np.ones(len(Q))])
    sol = np.linalg.lstsq(A, np.sum(Q * Q, axis=1), rcond=None)[0]
    c = sol[:2]
    rad = float(np.sqrt(sol[2] + c @ c))
    signed = np.sum(Q[:-1, 0] * Q[1:, 1] - Q[1:, 0] * Q[:-1, 1]) / 2
    return {
        "center": c.tolist(),
        "radius": rad,
        "radius_spread": float(np.ptp(np.linalg.norm(Q - c, axis=1))),
        "orientation": "counterclockwise" if signed > 0 else "clockwise",
        "holonomy": [float(x) for x in np.round(Q[-1] - Q[0])],
    }


def extract_and_verify(
    sys, candidate, k, tol=1e-9, closing_tol=1e-4, energy_tol=1e-4,
    max_correction=1e-2, refine=True,
):
    """Refine a candidate loop to an energy-k periodic orbit and verify it."""
    ls.check_loop(sys, candidate)
    contractible = ls.is_contractible(sys, candidate)
    loop, resid, its = newton_refine(sys, candidate, k, tol=tol)
    z_raw = initial_state(sys, loop)
    T_raw = loop.T
    raw_energy = abs(hamiltonian(sys, z_raw) - k)
    try:
        raw_close = closing_error(sys, z_raw, T_raw)
    except (StiffnessError, DivergenceError) as exc:
        raise RefinementFailed(f"integration of the raw orbit failed: {exc}") from exc
    z, T = z_raw, T_raw
    if refine:
        z, T = shooting_refine(sys, z_raw, T_raw, k)
    correction = _distance(z, T, z_raw, T_raw)
    close = closing_error(sys, z, T)
    energy = abs(hamiltonian(sys, z) - k)
    traj_lift = integrate(sys, z, T, tol=1e-11)
    if not sys.surface.is_sphere:
        contractible = contractible and bool(np.all(np.abs(traj_lift.q[-1] - traj_lift.q[0]) < 0.5))
    ok = (
        resid <= max(tol, 1e-6)
        and close <= closing_tol
        and energy <= energy_tol
        and correction <= max_correction
        and contractible
    )
    msgs = []
    if resid > max(tol, 1e-6):
        msgs.append(f"discrete residual {resid:.3g}")
    if correction > max_correction:
        msgs.append(f"shooting correction {correction:.3g} exceeds {max_correction}")
    if close > closing_tol:
        msgs.append(f"closing error {close:.3g}")
    if energy > energy_tol:
        msgs.append(f"energy error {energy:.3g}")
    if not contractible:
        msgs.append("orbit is not contractible")
    geom = circle_geometry(sys, z, T) if sys.surface.is_sphere else planar_geometry(sys, z, T)
    return OrbitResult(
        loop=loop, k=k, status=VERIFIED if ok else UNVERIFIED, residual=resid, period=T,
        energy_error=energy, closing_error=close, raw_energy_error=raw_energy,
        raw_closing_error=raw_close, shooting_correction=correction,
        contractible=contractible, z0=z, newton_iterations=its,
        message="; ".join(msgs), geometry=geom,
    )


def reverify(sys, z0, T, k):
    """Recompute closing and energy errors of a stored orbit."""
    return closing_error(sys, z0, T), abs(hamiltonian(sys, z0) - k)
