"""Negative gradient flow of the action form on loop space.

The loop part of eta_k is dualised with a discrete H^1 product: w solves the
periodic problem w - w'' = r with a fourth-order compact stencil, so the
discrete product g(w, zeta) = (1/N) zeta . (I - A^{-1} B) w is symmetric and
g(w, zeta) = <r, zeta>_{L^2} holds exactly for every discrete zeta. On the
sphere the product is the ambient one restricted to tangent fields and the
dual is solved within them. The period direction carries the plain dT^2
metric.

The normalised field X_k = -grad / sqrt(1 + |eta|^2) is multiplied by a
cutoff which vanishes on the set W'_k of short loops with small primitive,
and the resulting bounded field is integrated with adaptive Heun steps
followed by a retraction onto the loop space.
"""

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg.lapack import dgbsv

from . import loopspace as ls
from .errors import DegenerateCapError, RefinePathError
from .tridiag import cyclic_apply, cyclic_tridiagonal_solve

VANISHED = "vanished"
BUDGET = "budget"
ENTERED_W = "entered_W'"
PERIOD_FLOOR = "period_floor"
STIFF = "stiff"


def _h1_bands(N):
    c = 1.2 * N * N
    # A = tridiag(1/10, 1, 1/10), B = c tridiag(1, -2, 1); operator A - B
    return (0.1 - c, 1.0 + 2.0 * c, 0.1 - c), (0.1, 1.0, 0.1)


def _apply_K(r):
    # K = (A - B)^{-1} A, applied per coordinate
    op, a = _h1_bands(r.shape[0])
    return cyclic_tridiagonal_solve(*op, cyclic_apply(*a, r))


def _tangent_frames(X):
    a = np.zeros_like(X)
    use_x = np.abs(X[:, 2]) > 0.9
    a[use_x, 0] = 1.0
    a[~use_x, 2] = 1.0
    e1 = a - np.sum(a * X, axis=1, keepdims=True) * X
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    return e1, ls._cross(X, e1)


@lru_cache(maxsize=8)
def _band_scatter(N):
    """Positions in LAPACK band storage (5 extra rows for pivoting fill-in)
    of the block entries, and where each value sits in [P * s0, P * s1]."""
    n = 3 * N
    j, a, b = np.meshgrid(np.arange(N), np.arange(3), np.arange(3), indexing="ij")
    flat = (j * 9 + a * 3 + b).reshape(-1)
    col = (3 * j + b).reshape(-1)
    a, b, j = a.reshape(-1), b.reshape(-1), j.reshape(-1)
    dest, src = [], []
    # diagonal blocks, then the blocks of rows j - 1 and j + 1 in column block j
    for shift, offset, keep in ((0, 0, j >= 0), (-3, 9 * N, j >= 1), (3, 9 * N, j <= N - 2)):
        row = 10 + shift + a - b
        dest.append(row[keep] * n + col[keep])
        src.append(flat[keep] + offset)
    return np.concatenate(dest), np.concatenate(src)


def _sphere_dual(X, r):
    """Solve (A - B) w = A (r + mu X) for tangent w = F c and multipliers mu.

    Unknowns are interleaved per sample as (c1, c2, mu), which makes the
    system block tridiagonal with 3x3 blocks: a (5, 5)-banded solve plus a
    rank-6 Woodbury correction for the two periodic corner blocks.
    """
    N = X.shape[0]
    c = 1.2 * N * N
    e1, e2 = _tangent_frames(X)
    P = np.stack([e1, e2, X], axis=2)                     # P[j] = [F_j | X_j]
    s0 = np.array([1.0 + 2.0 * c, 1.0 + 2.0 * c, -1.0])
    s1 = np.array([0.1 - c, 0.1 - c, -0.1])
    n = 3 * N
    ab = np.zeros((16, n))
    dest, src = _band_scatter(N)
    vals = np.concatenate([(P * s0).reshape(-1), (P * s1).reshape(-1)])
    ab.reshape(-1)[dest] = vals[src]
    U = np.zeros((n, 6))
    U[0:3, 0:3] = P[-1] * s1          # block (0, N-1)
    U[n - 3:, 3:6] = P[0] * s1        # block (N-1, 0)
    rhs = (0.1 * np.roll(r, 1, axis=0) + r + 0.1 * np.roll(r, -1, axis=0)).reshape(-1)
    _, _, sol, info = dgbsv(5, 5, ab, np.column_stack([rhs, U]), overwrite_ab=1, overwrite_b=1)
    if info != 0:
        raise np.linalg.LinAlgError(f"banded H^1 solve failed (info={info})")
    y, Z = sol[:, 0], sol[:, 1:]
    # V^T picks the unknowns of block N-1 (for the first corner) and block 0
    VtY = np.concatenate([y[n - 3:], y[:3]])
    VtZ = np.vstack([Z[n - 3:], Z[:3]])
    u = y - Z @ np.linalg.solve(np.eye(6) + VtZ, VtY)
    cc = u.reshape(N, 3)
    return cc[:, :1] * e1 + cc[:, 1:2] * e2


def h1_dual_loop(loop, r):
    """Riesz representative w of the L^2 density r for the discrete H^1 product.

    On the torus w = K r with K = (A - B)^{-1} A. On the sphere w is sought
    among tangent fields: w = K (r + mu X) with one normal multiplier mu_i
    per sample, fixed by X_i . w_i = 0.
    """
    X = loop.samples
    if X.shape[1] == 3:
        return _sphere_dual(X, np.asarray(r, dtype=float))
    return _apply_K(r)


def h1_inner(loop, w, zeta):
    """Discrete H^1 product (1/N) zeta . A^{-1} (A - B) w."""
    N = w.shape[0]
    op, a = _h1_bands(N)
    v = cyclic_tridiagonal_solve(*a, cyclic_apply(*op, w))
    return float(np.sum(v * zeta)) / N


def h1_dual(sys, loop, eta):
    """Metric dual (w, dT) of an action-form value eta = (r, period part)."""
    r, a = eta
    return ls.LoopTangent(h1_dual_loop(loop, np.asarray(r, dtype=float)), a)


def dual_norm(loop, eta, grad=None):
    r, a = eta
    if grad is None:
        grad = h1_dual_loop(loop, r)
    return float(np.sqrt(max(float(np.sum(r * grad)) / loop.N, 0.0) + a * a))


def normalized_field(sys, loop, k):
    r, a = ls.action_one_form(sys, loop, k)
    w = h1_dual_loop(loop, r)
    n = dual_norm(loop, (r, a), w)
    s = 1.0 / np.sqrt(1.0 + n * n)
    return ls.LoopTangent(-s * w, -s * a)


def field_norm(loop, tangent):
    """g_Lambda norm of a loop tangent."""
    return float(np.sqrt(max(h1_inner(loop, tangent.zeta, tangent.zeta), 0.0) + tangent.dT**2))


def smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def kappa(value, eps):
    """0 below eps/4, 1 above eps/2, cubic smoothstep between."""
    return float(smoothstep((value - 0.25 * eps) / (0.25 * eps)))


def cutoff_factor(sys, loop, k, eps, delta=ls.DELTA):
    ev = ls.evaluate(sys, loop, k, gradient=False)
    if ev.length >= delta:
        return 1.0
    return kappa(ev.action + ls.cone_flux(sys, loop), eps)


@dataclass
class FlowParams:
    k: float
    eps: float
    delta: float = ls.DELTA
    h0: float = 0.05
    h_max: float = 0.25
    step_tol: float = 1e-3
    tol_vanish: float = 1e-6
    r_max: float = 10.0
    T_min: float = 1e-3
    max_steps: int = 100000
    truncated: bool = True
    monotone_tol: float = 1e-9

    def __post_init__(self):
        if not self.tol_vanish > 0:
            raise ValueError("tol_vanish must be positive")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        if not self.T_min > 0:
            raise ValueError("T_min must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


@dataclass
class FlowRecord:
    r: float
    loop: ls.DiscreteLoop
    eta_norm: float
    period_part: float
    deltaS: float
    cutoff: float
    length: float
    l2_energy: float

    @property
    def T(self):
        return self.loop.T


@dataclass
class FlowTrace:
    records: list = field(default_factory=list)
    reason: str = ""
    truncated: bool = True
    rejected: int = 0
    holder_violations: int = 0
    monotone_violations: int = 0

    @property
    def final(self):
        return self.records[-1]

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(rec, name) for rec in self.records])


class _State:
    """Loop with its field, cached so every accepted step costs two evaluations."""

    def __init__(self, sys, loop, params):
        self.loop = loop
        ev = ls.evaluate(sys, loop, params.k)
        self.ev = ev
        w = h1_dual_loop(loop, ev.r)
        self.eta_norm = dual_norm(loop, (ev.r, ev.period_part), w)
        if not params.truncated or ev.length >= params.delta:
            self.cutoff = 1.0
        else:
            self.cutoff = kappa(ev.action + ls.cone_flux(sys, loop), params.eps)
        s = self.cutoff / np.sqrt(1.0 + self.eta_norm**2)
        self.field = ls.LoopTangent(-s * w, -s * ev.period_part)


def _advance(sys, loop, tangent, h):
    X = loop.samples + h * tangent.zeta
    if sys.surface.is_sphere:
        X = X / np.linalg.norm(X, axis=1, keepdims=True)
    return ls.DiscreteLoop(X, loop.T + h * tangent.dT, loop.holonomy)


def _record(r, state, deltaS):
    return FlowRecord(
        r, state.loop, state.eta_norm, state.ev.period_part, deltaS,
        state.cutoff, state.ev.length, state.ev.l2_energy,
    )


def evolve(sys, loop0, params, r_budget=None):
    """Flow loop0 along the (truncated) normalised negative gradient."""
    ls.check_loop(sys, loop0)
    r_end = params.r_max if r_budget is None else min(r_budget, params.r_max)
    state = _State(sys, loop0, params)
    trace = FlowTrace(truncated=params.truncated)
    trace.records.append(_record(0.0, state, 0.0))
    T0 = loop0.T
    r = 0.0
    dS = 0.0
    h = params.h0
    steps = 0
    while True:
        if state.cutoff == 0.0:
            trace.reason = ENTERED_W
            break
        if state.eta_norm <= params.tol_vanish:
            trace.reason = VANISHED
            break
        if state.loop.T < params.T_min:
            trace.reason = PERIOD_FLOOR
            break
        if r >= r_end * (1 - 1e-12) or steps >= params.max_steps:
            trace.reason = BUDGET
            break
        if h < 1e-12:
            trace.reason = STIFF
            break
        h = min(h, params.h_max, r_end - r)
        steps += 1
        F0 = state.field
        try:
            trial = _advance(sys, state.loop, F0, h)
            if trial.T <= 0:
                raise ValueError
            s1 = _State(sys, trial, params)
            F1 = s1.field
            new_loop = _advance(
                sys, state.loop,
                ls.LoopTangent(0.5 * (F0.zeta + F1.zeta), 0.5 * (F0.dT + F1.dT)), h,
            )
            if new_loop.T <= 0:
                raise ValueError
            diff = ls.LoopTangent(F1.zeta - F0.zeta, F1.dT - F0.dT)
            err = 0.5 * h * field_norm(state.loop, diff)
            if ls.max_sample_distance(sys, state.loop, new_loop) > ls.PATH_STEP_BOUND:
                raise RefinePathError("step too long")
            step_dS = ls.segment_variation(sys, state.loop, new_loop, params.k)
        except (ValueError, RefinePathError, DegenerateCapError, FloatingPointError):
            trace.rejected += 1
            h *= 0.25
            continue
        if err > params.step_tol or step_dS > params.monotone_tol:
            trace.rejected += 1
            if step_dS > params.monotone_tol:
                h *= 0.5
            else:
                h *= max(0.2, 0.9 * np.sqrt(params.step_tol / err))
            continue
        new_state = _State(sys, new_loop, params)
        r += h
        dS += step_dS
        if step_dS > 0:
            trace.monotone_violations += 1
        if (new_loop.T - T0) ** 2 > 1.05 * r * max(-dS, 0.0) + 1e-12:
            trace.holder_violations += 1
        state = new_state
        trace.records.append(_record(r, state, dS))
        h = min(params.h_max, h * min(4.0, 0.9 * np.sqrt(params.step_tol / max(err, 1e-300))))
    return trace


def holder_check(trace, slack=0.05):
    """Largest ratio |T(r) - T(0)|^2 / (r * -deltaS(r)) along the trace, and pass flag."""
    T = trace.column("T")
    r = trace.column("r")
    dS = trace.column("deltaS")
    worst = 0.0
    ok = True
    for Ti, ri, si in zip(T[1:], r[1:], dS[1:]):
        lhs = (Ti - T[0]) ** 2
        rhs = ri * max(-si, 0.0)
        if lhs > (1 + slack) * rhs + 1e-12:
            ok = False
        if rhs > 0:
            worst = max(worst, lhs / rhs)
    return worst, ok


def completeness_diagnostic(trace, C_bound=None):
    """Energy-period compliance of a flow trace.

    For traces of the untruncated field whose period reaches the floor the
    tail must satisfy e(x) <= C T^2; the constant is fitted from the tail
    and compared with ``C_bound`` when given. Truncated traces must never
    stop at the period floor.
    """
    T = trace.column("T")
    e = trace.column("l2_energy")
    tail = slice(len(T) // 2, None)
    ratios = e[tail] / T[tail] ** 2
    fitted = float(np.max(ratios)) if ratios.size else 0.0
    report = {
        "truncated": trace.truncated,
        "reason": trace.reason,
        "fitted_C": fitted,
        "compliant": True,
        "violation": "",
    }
    if trace.truncated and trace.reason == PERIOD_FLOOR:
        report["compliant"] = False
        report["violation"] = "truncated flow reached the period floor"
    elif C_bound is not None and fitted > C_bound:
        report["compliant"] = False
        report["violation"] = f"e/T^2 reaches {fitted:.4g} > {C_bound:.4g}"
    return report


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["r", "T", "length", "l2_energy", "eta_norm", "deltaS", "cutoff"])
        for rec in trace.records:
            out.writerow([
                f"{v:.17g}" for v in
                (rec.r, rec.T, rec.length, rec.l2_energy, rec.eta_norm, rec.deltaS, rec.cutoff)
            ])
