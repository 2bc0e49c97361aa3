"""Command line front end.

Subcommands: generate reference trajectories, fit a spectral lifter, roll a
lifter forward in time, diagnose stored archives, and run a small end-to-end
experiment.  Reports are written as delimited text with figures rendered
alongside.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, plots, store
from .diffeo import MapChain
from .grid import Grid, PeriodicField, energy_spectrum
from .lifting import build_dataset, fit_spectral_lifter
from .rollout import RolloutConfig, rollout
from .solvers import Trajectory, euler_cmm, random_vorticity

DEFAULTS = {
    "grid.n": 128,
    "time.dt": 0.001,
    "time.T": 0.05,
    "solver.remap_every": 10,
    "ic.kind": "random",
    "ic.K": 4,
    "ic.seed": 0,
    "lifter.kind": "spectral",
    "lifter.window": 5,
    "lifter.k_feat": 32,
    "lifter.ridge": 1e-6,
    "reg.lambda": 1e-3,
    "reg.max_iters": 200,
    "rollout.scheme": "compose",
    "rollout.remap_every": 10,
    "diag.quad_n": 256,
    "diag.eps": 1e-6,
    "out.dir": "out",
}

_INT_KEYS = {
    "grid.n",
    "solver.remap_every",
    "ic.K",
    "ic.seed",
    "lifter.window",
    "lifter.k_feat",
    "reg.max_iters",
    "rollout.remap_every",
    "diag.quad_n",
}
_FLOAT_KEYS = {"time.dt", "time.T", "lifter.ridge", "reg.lambda", "diag.eps"}


class ConfigError(ValueError):
    pass


def parse_config(path) -> dict:
    """Plain ``key = value`` file; unknown keys are rejected."""
    cfg = dict(DEFAULTS)
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                cfg[key] = int(value)
            elif key in _FLOAT_KEYS:
                cfg[key] = float(value)
            else:
                cfg[key] = value
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return cfg


def _load_config(args) -> dict:
    cfg = parse_config(args.config) if args.config else dict(DEFAULTS)
    if args.out is not None:
        cfg["out.dir"] = args.out
    if args.seed is not None:
        cfg["ic.seed"] = args.seed
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg["out.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _initial_vorticity(cfg) -> PeriodicField:
    grid = Grid(cfg["grid.n"], cfg["grid.n"])
    kind = cfg["ic.kind"]
    if kind == "random":
        return random_vorticity(grid, cfg["ic.K"], cfg["ic.seed"])
    if kind == "steady":
        return PeriodicField.from_function(grid, lambda x, y: np.cos(y))
    raise ConfigError(f"unknown ic.kind {kind!r}")


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    omega0 = _initial_vorticity(cfg)
    traj = euler_cmm(
        omega0,
        cfg["time.T"],
        cfg["time.dt"],
        cfg["solver.remap_every"],
        metadata={"ic": cfg["ic.kind"], "seed": cfg["ic.seed"]},
    )
    store.save_trajectory(traj, out / "reference.dflo")
    report = diagnostics.DiagnosticsReport()
    for k, f in enumerate(traj.frames):
        t = k * traj.dt_save
        report.add("max_abs_vorticity", t, float(np.max(np.abs(f.data))))
    report.to_csv(out / "generate.csv")
    plots.save_series_figure(report.series, out / "generate.png")
    plots.save_field_figure(traj.frames[-1], out / "final_vorticity.png")
    print(f"wrote {out / 'reference.dflo'} ({traj.n_frames} frames)")
    return 0


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    trajectories = [store.load_trajectory(p) for p in args.archives]
    train, test = build_dataset(
        trajectories, cfg["lifter.window"], seed=cfg["ic.seed"]
    )
    if len(test) == 0:
        test = train
    lifter = fit_spectral_lifter(
        train, cfg["lifter.k_feat"], cfg["lifter.ridge"]
    )
    errs = []
    for inputs, _, submap in test.samples:
        if submap is None:
            continue
        pred = lifter.lift(inputs)
        errs.append(float(np.max(np.abs(pred.planes - submap.planes))))
    store.save_lifter(lifter, out / "lifter.dflo")
    report = diagnostics.DiagnosticsReport()
    for i, e in enumerate(errs):
        report.add("held_out_map_error", i, e)
    report.to_csv(out / "fit.csv")
    plots.save_series_figure(report.series, out / "fit.png", logy=bool(errs))
    print(f"wrote {out / 'lifter.dflo'} (window={lifter.window}, k_feat={lifter.k_feat})")
    if errs:
        print(f"held-out map error: max {max(errs):.3e}")
    return 0


def cmd_rollout(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    lifter = store.load_lifter(args.lifter)
    u0 = store.load_field(args.initial)
    n_steps = max(1, int(round(cfg["time.T"] / cfg["time.dt"])))
    traj, chain = rollout(
        u0,
        lifter,
        n_steps,
        RolloutConfig(
            dt=cfg["time.dt"],
            remap_every=cfg["rollout.remap_every"],
            scheme=cfg["rollout.scheme"],
        ),
    )
    store.save_trajectory(traj, out / "rollout.dflo")
    store.save_chain(chain, out / "rollout_chain.dflo")
    report = diagnostics.DiagnosticsReport()
    for k, f in enumerate(traj.frames):
        report.add("mse_vs_initial", k * traj.dt_save, diagnostics.mse(f, u0))
    report.to_csv(out / "rollout.csv")
    plots.save_series_figure(report.series, out / "rollout.png")
    plots.save_field_figure(traj.frames[-1], out / "rollout_final.png")
    print(f"wrote {out / 'rollout.dflo'} ({traj.n_frames} frames)")
    return 0


def cmd_diagnose(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    report = diagnostics.DiagnosticsReport()
    quad = Grid(cfg["diag.quad_n"], cfg["diag.quad_n"])
    wrote_any = False
    for path in args.archives:
        obj = store.load(path)
        stem = Path(path).stem
        if isinstance(obj, Trajectory):
            for k, f in enumerate(obj.frames):
                t = k * obj.dt_save
                report.add(f"{stem}.max_abs", t, float(np.max(np.abs(f.data))))
                report.add(
                    f"{stem}.mse_vs_initial", t, diagnostics.mse(f, obj.frames[0])
                )
            if obj.frames[-1].channels == 1:
                spectrum = energy_spectrum(obj.frames[-1])
                with open(out / f"{stem}_spectrum.csv", "w") as fh:
                    fh.write("k,E\n")
                    for k, e in spectrum:
                        fh.write(f"{k},{e:.17g}\n")
                plots.save_spectrum_figure(spectrum, out / f"{stem}_spectrum.png")
            if obj.submaps:
                chain = obj.chain()
                err = diagnostics.conservation_error(
                    chain, obj.frames[0], quad
                )
                report.add(f"{stem}.conservation_error", 0.0, err)
            wrote_any = True
        elif isinstance(obj, MapChain):
            for k, measured, bound in diagnostics.bandwidth_study(
                obj, cfg["diag.eps"], 8, sample_n=min(cfg["diag.quad_n"], 512)
            ):
                report.add(f"{stem}.bandwidth", k, measured)
                report.add(f"{stem}.bandwidth_bound", k, bound)
            wrote_any = True
        else:
            print(f"skipping {path}: no diagnostics for this kind", file=sys.stderr)
    if not wrote_any:
        print("no diagnosable archives given", file=sys.stderr)
        return 2
    report.to_csv(out / "diagnostics.csv")
    plots.save_series_figure(report.series, out / "diagnostics.png", logy=False)
    print(f"wrote {out / 'diagnostics.csv'}")
    return 0


def cmd_experiment(args) -> int:
    """Desk-scale end-to-end run: generate, fit, roll out, diagnose."""
    cfg = _load_config(args)
    # desk-scale overrides so the full pipeline finishes quickly
    if args.config is None:
        cfg["grid.n"] = 64
        cfg["time.T"] = 0.02
        cfg["lifter.k_feat"] = 4
        cfg["lifter.window"] = 2
    out = _out_dir(cfg)
    omega0 = _initial_vorticity(cfg)
    traj = euler_cmm(
        omega0, cfg["time.T"], cfg["time.dt"], cfg["solver.remap_every"]
    )
    store.save_trajectory(traj, out / "reference.dflo")
    train, _ = build_dataset([traj], cfg["lifter.window"], train_frac=1.0)
    lifter = fit_spectral_lifter(train, cfg["lifter.k_feat"], cfg["lifter.ridge"])
    store.save_lifter(lifter, out / "lifter.dflo")
    n_steps = traj.n_frames - 1
    rtraj, chain = rollout(
        omega0,
        lifter,
        max(1, n_steps),
        RolloutConfig(dt=traj.dt_save, remap_every=cfg["rollout.remap_every"]),
    )
    store.save_trajectory(rtraj, out / "rollout.dflo")
    store.save_chain(chain, out / "rollout_chain.dflo")
    report = diagnostics.DiagnosticsReport()
    for k in range(min(traj.n_frames, rtraj.n_frames)):
        report.add(
            "rollout_vs_reference_mse",
            k * traj.dt_save,
            diagnostics.mse(rtraj.frames[k], traj.frames[k]),
        )
    report.to_csv(out / "experiment.csv")
    plots.save_series_figure(report.series, out / "experiment.png", logy=True)
    plots.save_field_figure(traj.frames[-1], out / "reference_final.png")
    plots.save_field_figure(rtraj.frames[-1], out / "rollout_final.png")
    print(f"experiment artifacts in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="difflow",
        description="Diffeomorphism-based evolution operators on the 2-torus.",
    )
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--threads", type=int, metavar="N", help="numba thread count")
    p.add_argument("--seed", type=int, metavar="S", help="override ic.seed")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", help="run the reference solver and store a trajectory")
    fit = sub.add_parser("fit", help="fit a spectral lifter on stored trajectories")
    fit.add_argument("archives", nargs="+", metavar="TRAJECTORY")
    ro = sub.add_parser("rollout", help="roll a fitted lifter forward in time")
    ro.add_argument("lifter", metavar="LIFTER")
    ro.add_argument("initial", metavar="FIELD")
    diag = sub.add_parser("diagnose", help="compute diagnostics for stored archives")
    diag.add_argument("archives", nargs="+", metavar="ARCHIVE")
    sub.add_parser("experiment", help="small end-to-end pipeline run")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        import numba

        numba.set_num_threads(args.threads)
    commands = {
        "generate": cmd_generate,
        "fit": cmd_fit,
        "rollout": cmd_rollout,
        "diagnose": cmd_diagnose,
        "experiment": cmd_experiment,
    }
    try:
        return commands[args.command](args)
    except (ConfigError, store.StoreFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
