"""Minimax classes of loops, the minimax function c(k) and the energy scan.

Two classes are shipped:

* ``SphereSweepout``: latitude circles from the south to the north pole,
  every member with the same small period. Both endpoints are constant
  loops in W'_k.
* ``NegativeActionPath``: on the torus, straight-line interpolation in the
  lift from a constant loop to a large circle with negative action for the
  whole scanned interval.

Along a family the primitive is anchored at the first member, where it is
known in closed form, and continued by integrating the action form.
"""

from dataclasses import dataclass, field

import numpy as np

from . import gradientflow as gf
from . import loopspace as ls
from .errors import ClassConstructionError, MagflowError, RefinementFailed
from .orbits import extract_and_verify

SWEEPOUT = "SphereSweepout"
NEGATIVE_PATH = "NegativeActionPath"


@dataclass
class LoopFamily:
    loops: list
    tag: str
    params: np.ndarray = None
    anchor: int = 0
    frozen: tuple = ()

    def __post_init__(self):
        if self.params is None:
            self.params = np.linspace(0.0, 1.0, len(self.loops))

    def __len__(self):
        return len(self.loops)

    @property
    def periods(self):
        return np.array([lp.T for lp in self.loops])


@dataclass
class MinimaxRecord:
    k: float
    c: float
    argmax: int
    sweeps: int
    flow_time: float
    residual: float
    period: float
    converged: bool
    candidate: ls.DiscreteLoop = None
    history: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    family: LoopFamily = None


def endpoint_period(sys, k_range, eps):
    """Period of the constant endpoints: deep inside W'_k for every k in the range."""
    sup_k = float(k_range[1])
    return 0.5 * (0.25 * eps) / (sup_k - sys.min_V)


# ---------------------------------------------------------------------------
# families


def _circle(N, sign=1.0):
    t = 2 * np.pi * np.arange(N) / N
    return np.cos(t), sign * np.sin(t)


def birkhoff_sweepout(sys, m, N, T_bar):
    """Latitude circles z_j = -cos(pi j / m), counterclockwise about +z, period T_bar."""
    if not sys.surface.is_sphere:
        raise ClassConstructionError("the Birkhoff sweepout lives on the sphere")
    if m < 2:
        raise ValueError("sweepout needs m >= 2")
    cx, cy = _circle(N)
    loops = []
    for j in range(m + 1):
        z = -np.cos(np.pi * j / m)
        if j in (0, m):
            X = np.tile([0.0, 0.0, z], (N, 1))
        else:
            rho = np.sqrt(max(0.0, 1 - z * z))
            X = np.column_stack([rho * cx, rho * cy, np.full(N, z)])
            X /= np.linalg.norm(X, axis=1, keepdims=True)
        loops.append(ls.DiscreteLoop(X, T_bar))
    return LoopFamily(loops, SWEEPOUT, np.arange(m + 1) / m, 0, (0, m))


def mean_magnetic(sys, grid=64):
    g = (np.arange(grid) + 0.5) / grid
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), -1)
    return float(np.mean(sys.surface.magnetic_density(pts)))


def negative_action_path(sys, k_range, m, N, T_bar, center=(0.5, 0.5), max_doublings=4):
    """Constant loop to a large circle with negative action, interpolated in the lift.

    The circle is traversed clockwise when the mean of sigma is positive.
    Its radius starts at 2.2 times the root of 2 pi r sqrt(2 sup I) = |b| pi r^2
    and is doubled until the global primitive is negative at both ends of I
    (it is affine in k, so this certifies the whole interval).
    """
    if sys.surface.is_sphere:
        raise ClassConstructionError("negative-action paths are built on the torus")
    bbar = mean_magnetic(sys)
    if abs(bbar) < 1e-12:
        raise ClassConstructionError("sigma has zero mean: no circle has negative action")
    kinf, ksup = float(k_range[0]), float(k_range[1])
    speed = np.sqrt(2 * (ksup - sys.min_V))
    sign = -1.0 if bbar > 0 else 1.0
    radius = 2.2 * 2 * speed / abs(bbar)
    cx, cy = _circle(N, sign)
    c = np.asarray(center, dtype=float)
    for _ in range(max_doublings + 1):
        end = c + radius * np.column_stack([cx, cy])
        ell = ls.length(sys, ls.DiscreteLoop(end, 1.0))
        T_end = max(T_bar, ell / speed)
        end_loop = ls.DiscreteLoop(end, T_end)
        vals = [ls.global_primitive(sys, end_loop, kk) for kk in (kinf, ksup)]
        if max(vals) < 0:
            break
        radius *= 2
    else:
        raise ClassConstructionError(f"no circle up to radius {radius / 2:.3g} has negative action")
    loops = []
    for j in range(m + 1):
        s = j / m
        X = c + s * (end - c)
        if j == 0:
            lp = ls.DiscreteLoop(np.tile(c, (N, 1)), T_bar)
        else:
            ell = ls.length(sys, ls.DiscreteLoop(X, 1.0))
            lp = ls.DiscreteLoop(X, max(T_bar, ell / speed))
        loops.append(lp)
    fam = LoopFamily(loops, NEGATIVE_PATH, np.arange(m + 1) / m, 0, (0, m))
    fam.radius = radius
    return fam


def build_family(sys, tag, k_range, m, N, T_bar):
    if tag == SWEEPOUT:
        return birkhoff_sweepout(sys, m, N, T_bar)
    if tag == NEGATIVE_PATH:
        return negative_action_path(sys, k_range, m, N, T_bar)
    raise ValueError(f"unknown class {tag!r}")


# ---------------------------------------------------------------------------
# primitives along families


def anchor_value(sys, family, k):
    lp = family.loops[family.anchor]
    ev = ls.evaluate(sys, lp, k, gradient=False)
    if ev.length == 0.0:
        return ev.action
    if family.tag == NEGATIVE_PATH:
        return ls.global_primitive(sys, lp, k)
    return ls.local_primitive(sys, lp, k)


def family_primitive(sys, family, k):
    """Values of S_k along the family, anchored at the anchor member."""
    loops = family.loops
    a = family.anchor
    vals = np.empty(len(loops))
    vals[a] = anchor_value(sys, family, k)
    for j in range(a + 1, len(loops)):
        vals[j] = vals[j - 1] + _path_increment(sys, loops[j - 1], loops[j], k)
    for j in range(a - 1, -1, -1):
        vals[j] = vals[j + 1] - _path_increment(sys, loops[j], loops[j + 1], k)
    return vals


def _path_increment(sys, a, b, k, tol=1e-8):
    pieces = ls.refine_path(sys, [a, b])
    return float(ls.action_variation(sys, pieces, k, tol=tol))


def check_class(sys, family, k, eps, delta=ls.DELTA):
    """Flags for violated class invariants (empty when all hold)."""
    flags = []
    first, last = family.loops[0], family.loops[-1]
    if family.tag == SWEEPOUT:
        for name, lp in (("first", first), ("last", last)):
            if gf.cutoff_factor(sys, lp, k, eps, delta) != 0.0:
                flags.append(f"{name} endpoint left W'_k")
    else:
        if gf.cutoff_factor(sys, first, k, eps, delta) != 0.0:
            flags.append("first endpoint left W'_k")
        if ls.global_primitive(sys, last, k) >= 0:
            flags.append("end loop has nonnegative action")
    lengths = [ls.length(sys, lp) for lp in family.loops]
    if max(lengths) < delta:
        flags.append("no member reaches length delta")
    return flags


def reparametrize(sys, family, m=None):
    """Redistribute members at equal max-sample spacing along the polygonal path."""
    loops = family.loops
    m = len(loops) - 1 if m is None else m
    d = np.array([ls.max_sample_distance(sys, a, b) + abs(b.T - a.T) for a, b in zip(loops[:-1], loops[1:])])
    s = np.concatenate([[0.0], np.cumsum(d)])
    if s[-1] == 0:
        return family
    targets = np.linspace(0.0, s[-1], m + 1)
    out = []
    for j, tgt in enumerate(targets):
        if j == 0:
            out.append(loops[0])
            continue
        if j == m:
            out.append(loops[-1])
            continue
        i = min(int(np.searchsorted(s, tgt, side="right")) - 1, len(loops) - 2)
        w = 0.0 if d[i] == 0 else (tgt - s[i]) / d[i]
        out.append(ls.interpolate(sys, loops[i], loops[i + 1], float(np.clip(w, 0.0, 1.0))))
    return LoopFamily(out, family.tag, np.linspace(0, 1, m + 1), family.anchor, (0, m))


# ---------------------------------------------------------------------------
# minimax


@dataclass
class MinimaxSettings:
    sweeps: int = 40
    sweep_time: float = 0.5
    candidate_tol: float = 5e-2
    stall_sweeps: int = 6
    near_max_fraction: float = 0.25
    h_max: float = 0.25
    step_tol: float = 1e-3


def _flow_params(k, eps, settings, delta):
    return gf.FlowParams(
        k=k, eps=eps, delta=delta, h0=0.05, h_max=settings.h_max, step_tol=settings.step_tol,
        tol_vanish=1e-9, r_max=settings.sweep_time,
    )


def _member_residual(sys, loop, k):
    ev = ls.evaluate(sys, loop, k)
    return gf.dual_norm(loop, (ev.r, ev.period_part))


def minimax_value(sys, family, k, eps, settings=None, delta=ls.DELTA):
    """Estimate c(k) by alternating flow sweeps and primitive evaluation.

    Returns the smallest observed maximum (an upper-bound estimate), the
    maximising loop and diagnostics. Near-maximisers must lie outside W_k;
    violations and class-invariant failures are recorded in ``flags``.
    """
    settings = settings or MinimaxSettings()
    params = _flow_params(k, eps, settings, delta)
    best = None
    history = []
    flags = []
    traces = []
    stall = 0
    best_res = None
    flow_time = 0.0
    for sweep in range(settings.sweeps + 1):
        vals = family_primitive(sys, family, k)
        j = int(np.argmax(vals))
        cmax = float(vals[j])
        res = _member_residual(sys, family.loops[j], k)
        history.append({"sweep": sweep, "max": cmax, "argmax": j, "residual": res})
        for msg in check_class(sys, family, k, eps, delta):
            flags.append(f"sweep {sweep}: {msg}")
        near = np.nonzero(vals >= cmax - settings.near_max_fraction * eps)[0]
        for i in near:
            lp = family.loops[i]
            ev = ls.evaluate(sys, lp, k, gradient=False)
            if ev.length < delta and ev.action + ls.cone_flux(sys, lp) < 0.5 * eps:
                flags.append(f"sweep {sweep}: near-maximiser {i} lies in W_k")
        improved = best_res is None or res < 0.99 * best_res
        best_res = res if best_res is None else min(best_res, res)
        if best is None or cmax < best[0] - 1e-12:
            best = (cmax, j, res, family.loops[j], sweep)
            improved = True
        stall = 0 if improved else stall + 1
        if res <= settings.candidate_tol or stall >= settings.stall_sweeps or sweep == settings.sweeps:
            break
        new = list(family.loops)
        for i in range(len(new)):
            if i in family.frozen:
                continue
            tr = gf.evolve(sys, new[i], params)
            traces.append(tr)
            new[i] = tr.final.loop
        flow_time += settings.sweep_time
        family = reparametrize(sys, LoopFamily(new, family.tag, family.params, family.anchor, family.frozen))
    # candidate: the current argmax, which is the best approximation of the saddle
    cand = family.loops[j]
    return MinimaxRecord(
        k=k, c=best[0], argmax=j, sweeps=sweep, flow_time=flow_time, residual=res,
        period=cand.T, converged=res <= settings.candidate_tol, candidate=cand,
        history=history, flags=flags, traces=traces, family=family,
    )


# ---------------------------------------------------------------------------
# scan


@dataclass
class ScanPoint:
    k: float
    record: MinimaxRecord
    selected: bool = False
    slope: float = float("nan")
    orbit: object = None
    bound_ok: bool = True
    error: str = ""


@dataclass
class ScanResult:
    points: list
    eps: float
    T_bar: float
    slope_cap: float
    period_window: tuple
    tag: str

    @property
    def selected(self):
        return [pt for pt in self.points if pt.selected]

    @property
    def c_values(self):
        return np.array([pt.record.c for pt in self.points])

    @property
    def energies(self):
        return np.array([pt.k for pt in self.points])


def energy_grid(k_range, n):
    return np.linspace(float(k_range[0]), float(k_range[1]), n)


def lipschitz_selection(ks, cs, slope_cap=None, factor=10.0):
    """Forward difference quotients (backward at the last point) below the cap."""
    ks = np.asarray(ks, dtype=float)
    cs = np.asarray(cs, dtype=float)
    if slope_cap is None:
        slope_cap = factor * (cs[-1] - cs[0]) / (ks[-1] - ks[0])
    q = np.empty_like(cs)
    q[:-1] = np.diff(cs) / np.diff(ks)
    q[-1] = q[-2] if len(q) > 1 else 0.0
    return q <= slope_cap, q, float(slope_cap)


def vanishing_bound_holds(sys, loop, k):
    ev = ls.evaluate(sys, loop, k, gradient=False)
    alpha = abs(ev.period_part)
    return ev.l2_energy <= ls.vanishing_bound(sys, loop, k, alpha) * (1 + 1e-12), alpha


def _minimax_job(args):
    return minimax_value(*args)


def struwe_scan(
    sys, tag, k_range, n_grid, m=64, N=256, settings=None, eps=None, T_min_scan=1e-2,
    slope_factor=10.0, verify=True, delta=ls.DELTA, seed=0, log=None, workers=1,
):
    """c(k) on a grid, Lipschitz-type selection, candidates and verification."""
    settings = settings or MinimaxSettings()
    kinf, ksup = float(k_range[0]), float(k_range[1])
    if not kinf < ksup:
        raise ValueError("energy interval must be nonempty")
    if eps is None:
        eps = ls.calibrate_epsilon(sys, kinf, delta=delta, seed=seed)
    T_bar = endpoint_period(sys, k_range, eps)
    fam0 = build_family(sys, tag, k_range, m, N, T_bar)
    grid = [float(k) for k in energy_grid(k_range, n_grid)]
    jobs = [(sys, fam0, k, eps, settings, delta) for k in grid]
    if workers > 1:
        # energies are independent; results come back in grid order
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_minimax_job, jobs))
    else:
        records = map(_minimax_job, jobs)
    points = []
    for k, rec in zip(grid, records):
        if log:
            log(f"k={k:.6g} c={rec.c:.6g} residual={rec.residual:.3g} sweeps={rec.sweeps}")
        points.append(ScanPoint(k, rec))
    ks = np.array([pt.k for pt in points])
    cs = np.array([pt.record.c for pt in points])
    sel, quot, cap = lipschitz_selection(ks, cs, factor=slope_factor)
    window = (T_min_scan, cap + 3.0)
    for pt, s, qv in zip(points, sel, quot):
        pt.slope = float(qv)
        rec = pt.record
        ok, _ = vanishing_bound_holds(sys, rec.candidate, pt.k)
        pt.bound_ok = bool(ok)
        in_window = window[0] <= rec.candidate.T <= window[1]
        pt.selected = bool(s and in_window and rec.converged)
        if not pt.selected:
            continue
        if verify:
            try:
                pt.orbit = extract_and_verify(sys, rec.candidate, pt.k)
            except (RefinementFailed, MagflowError) as exc:
                pt.error = str(exc)
            if log and pt.orbit is not None:
                o = pt.orbit
                log(f"k={pt.k:.6g} orbit {o.status} T={o.period:.8g} closing={o.closing_error:.3g}")
    return ScanResult(points, eps, T_bar, cap, window, tag)
