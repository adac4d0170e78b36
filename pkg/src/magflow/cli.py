"""Command line entry point: ``magflow <pipeline> --config <path> [--out DIR] [--seed N]``.

Exit status: 0 success, 1 configuration error, 2 numerical failure,
3 verification failure (unverified orbit, nothing verified in a scan, or a
sublevel that is not displaced).
"""

import argparse
import logging
import os
import sys as _sys
from pathlib import Path

import numpy as np

from . import __version__
from . import gradientflow as gf
from . import io
from . import loopspace as ls
from . import minimax as mm
from . import plotting
from .config import PIPELINES, load_config
from .displacement import DISPLACED, verify_displacement
from .dynamics import PhasePoint, TonelliSystem, integrate
from .errors import ConfigError, InvalidPointError, MagflowError
from .geometry import ModelSurface
from .orbits import extract_and_verify, reverify

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("magflow")


def worker_count():
    raw = os.environ.get("MAGFLOW_THREADS", "")
    try:
        n = int(raw) if raw else 1
    except ValueError:
        raise ConfigError(f"MAGFLOW_THREADS must be an integer, got {raw!r}", field="MAGFLOW_THREADS")
    return max(1, min(n, os.cpu_count() or 1))


def build_system(cfg):
    s = cfg.section("system")
    try:
        surface = ModelSurface(s["surface"], s["magnetic"], s["conformal"])
        return TonelliSystem(surface, s["potential"])
    except ValueError as exc:
        raise ConfigError(str(exc), line=cfg.line("system", None), field="system") from exc


def system_dict(sys):
    s = sys.surface
    return {
        "surface": s.tag,
        "magnetic": s.magnetic.spec,
        "conformal": s.conformal.spec,
        "potential": sys.potential.spec,
    }


def system_from_dict(d):
    return TonelliSystem(ModelSurface(d["surface"], d["magnetic"], d["conformal"]), d["potential"])


class Writer:
    """Single point through which every artifact and summary line is written."""

    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.lines = []

    def path(self, name):
        return self.out / name

    def json(self, name, obj):
        io.write_json(self.path(name), obj)

    def say(self, text):
        self.lines.append(text)
        print(text)

    def close(self):
        with open(self.path("summary.txt"), "w") as fh:
            fh.write("\n".join(self.lines) + "\n")


# ---------------------------------------------------------------------------
# pipelines


def run_integrate(cfg, sys, w, seed):
    c = cfg.section("integrate")
    q = np.asarray(c["q"], dtype=float)
    p = np.asarray(c["p"], dtype=float)
    try:
        z0 = PhasePoint(q, p)
        traj = integrate(sys, z0, c["t_end"], tol=c["tol"])
    except InvalidPointError as exc:
        raise ConfigError(str(exc), line=cfg.line("integrate", "q"), field="integrate.q") from exc
    io.write_trajectory_csv(w.path("trajectory.csv"), traj)
    plotting.plot_trajectory(sys.surface, traj, f"{sys.surface.tag}: t in [0, {c['t_end']:g}]", w.path("trajectory.svg"))
    plotting.plot_energy(traj, w.path("energy.svg"))
    w.json("integrate.json", {
        "system": system_dict(sys), "t_end": c["t_end"], "tol": c["tol"], "steps": traj.steps,
        "rejected": traj.rejected, "max_energy_drift": traj.max_energy_drift,
        "initial": io.phase_to_dict(z0), "final": io.phase_to_dict(traj.final),
    })
    w.say(f"integrate: {traj.steps} steps ({traj.rejected} rejected), max |H drift| = {traj.max_energy_drift:.3e}")
    return EXIT_OK


def orbit_dict(orbit, loop_file):
    return {
        "status": orbit.status,
        "k": orbit.k,
        "period": orbit.period,
        "energy_error": orbit.energy_error,
        "closing_error": orbit.closing_error,
        "raw_energy_error": orbit.raw_energy_error,
        "raw_closing_error": orbit.raw_closing_error,
        "shooting_correction": orbit.shooting_correction,
        "residual": orbit.residual,
        "contractible": orbit.contractible,
        "newton_iterations": orbit.newton_iterations,
        "z0": io.phase_to_dict(orbit.z0),
        "geometry": orbit.geometry,
        "message": orbit.message,
        "samples_ref": loop_file,
    }


def _write_orbit(w, sys, orbit, stem):
    loop_file = f"{stem}.loop.json"
    io.write_loop(w.path(loop_file), sys.surface.tag, orbit.loop)
    data = orbit_dict(orbit, loop_file)
    w.json(f"{stem}.json", {"system": system_dict(sys), "orbit": data})
    plotting.plot_loop(sys.surface, orbit.loop, f"k = {orbit.k:g}, T = {orbit.period:.6g} ({orbit.status})", w.path(f"{stem}.svg"))
    return data


def _class_for(sys):
    return mm.SWEEPOUT if sys.surface.is_sphere else mm.NEGATIVE_PATH


def _settings(c):
    return mm.MinimaxSettings(sweeps=c["sweeps"], sweep_time=c["sweep_time"], candidate_tol=c["candidate_tol"])


def _candidate_trace(sys, rec, eps, sweep_time):
    params = gf.FlowParams(k=rec.k, eps=eps, r_max=sweep_time, tol_vanish=1e-9)
    return gf.evolve(sys, rec.candidate, params)


def run_find_orbit(cfg, sys, w, seed):
    c = cfg.section("orbit")
    k = c["k"]
    if c["seed_loop"]:
        tag, loop = io.read_loop(c["seed_loop"])
        if tag != sys.surface.tag:
            raise ConfigError(f"seed loop is on {tag}, system is {sys.surface.tag}", field="orbit.seed_loop",
                              line=cfg.line("orbit", "seed_loop"))
        candidate = loop
        w.say(f"find-orbit: refining seed loop {c['seed_loop']}")
    else:
        k_range = (k, c["k_max"] if c["k_max"] is not None else k)
        eps = ls.calibrate_epsilon(sys, k_range[0], seed=seed)
        T_bar = mm.endpoint_period(sys, k_range, eps)
        fam = mm.build_family(sys, _class_for(sys), k_range, c["m"], c["N"], T_bar)
        rec = mm.minimax_value(sys, fam, k, eps, _settings(c))
        w.json("minimax.json", {"k": k, "eps": eps, "T_bar": T_bar, "c": rec.c, "converged": rec.converged,
                                "history": rec.history, "flags": rec.flags})
        gf.write_trace_csv(_candidate_trace(sys, rec, eps, c["sweep_time"]), w.path("trace.csv"))
        w.say(f"find-orbit: c({k:g}) <= {rec.c:.8g} after {rec.sweeps} sweeps, candidate residual {rec.residual:.3g}")
        candidate = rec.candidate
    orbit = extract_and_verify(sys, candidate, k)
    _write_orbit(w, sys, orbit, "orbit")
    w.say(f"orbit {orbit.status}: T = {orbit.period:.10g}, closing error {orbit.closing_error:.3e} "
          f"(raw {orbit.raw_closing_error:.3e}), energy error {orbit.energy_error:.3e}")
    if orbit.message:
        w.say(f"  {orbit.message}")
    return EXIT_OK if orbit.verified else EXIT_VERIFY


def run_scan(cfg, sys, w, seed):
    c = cfg.section("scan")
    tag = _class_for(sys)
    res = mm.struwe_scan(
        sys, tag, (c["k_min"], c["k_max"]), c["n_grid"], m=c["m"], N=c["N"], settings=_settings(c),
        slope_factor=c["slope_factor"], verify=c["verify"], seed=seed, workers=worker_count(), log=w.say,
    )
    records = []
    n_verified = 0
    for i, pt in enumerate(res.points):
        rec = pt.record
        entry = {
            "k": pt.k, "c": rec.c, "converged": rec.converged, "selected": pt.selected, "slope": pt.slope,
            "residual": rec.residual, "period": rec.period, "sweeps": rec.sweeps,
            "vanishing_bound_ok": pt.bound_ok, "flags": rec.flags, "orbit": None,
        }
        if pt.orbit is not None:
            entry["orbit"] = _write_orbit(w, sys, pt.orbit, f"orbit_{i:02d}")
            n_verified += pt.orbit.verified
        elif pt.error:
            entry["error"] = pt.error
        gf.write_trace_csv(_candidate_trace(sys, rec, res.eps, c["sweep_time"]), w.path(f"trace_{i:02d}.csv"))
        records.append(entry)
    w.json("scan.json", {
        "system": system_dict(sys), "class": tag, "interval": [c["k_min"], c["k_max"]], "eps": res.eps,
        "T_bar": res.T_bar, "slope_cap": res.slope_cap, "period_window": list(res.period_window),
        "records": records,
    })
    plotting.plot_minimax(res.energies, res.c_values, [pt.selected for pt in res.points], w.path("c_of_k.svg"))
    w.say(f"scan: {len(res.selected)} of {len(res.points)} energies selected, {n_verified} verified orbits")
    return EXIT_OK if n_verified > 0 else EXIT_VERIFY


def run_displace(cfg, sys, w, seed):
    c = cfg.section("displace")
    rep = verify_displacement(sys, c["f"], c["k"], T_disp=c["T_disp"], n=c["n_samples"], seed=seed)
    w.json("displacement.json", rep.to_dict())
    w.say(f"displace-check: {rep.status}, margin {rep.margin:.6g} over {rep.n_samples} samples, "
          f"eps_f = {rep.eps_f:.6g}, T = {rep.T_disp:.6g}")
    return EXIT_OK if rep.status == DISPLACED else EXIT_VERIFY


RUNNERS = {
    "integrate": run_integrate,
    "find-orbit": run_find_orbit,
    "scan": run_scan,
    "displace-check": run_displace,
}


def reverify_orbit_file(path):
    """Reload an orbit JSON and recompute its closing and energy errors."""
    data = io.read_json(path)
    sys = system_from_dict(data["system"])
    orb = data["orbit"]
    return reverify(sys, io.phase_from_dict(orb["z0"]), orb["period"], orb["k"])


def build_parser():
    ap = argparse.ArgumentParser(prog="magflow", description="Periodic magnetic geodesics by minimax on loop space.")
    ap.add_argument("pipeline", choices=PIPELINES)
    ap.add_argument("--config", required=True, help="run configuration file")
    ap.add_argument("--out", help="output directory (overrides [output] dir)")
    ap.add_argument("--seed", type=int, help="RNG seed (overrides [output] seed)")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        cfg = load_config(args.config, args.pipeline)
        seed = args.seed if args.seed is not None else cfg.get("output", "seed")
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", field="--seed")
        sys = build_system(cfg)
        w = Writer(args.out or cfg.get("output", "dir"))
        try:
            status = RUNNERS[args.pipeline](cfg, sys, w, seed)
        finally:
            w.close()
        return status
    except ConfigError as exc:
        print(f"magflow: configuration error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except (MagflowError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"magflow: numerical failure: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    _sys.exit(main())
