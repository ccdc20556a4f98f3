"""Command-line entry point: ``irs-sensing {solve, sweep, pattern, simulate, suite}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from .bench import (SCHEMES, ExperimentConfig, beam_pattern_grid, certify, run_scheme,
                    run_suite, write_csv, write_json)
from .echo import make_codebook, matched_filter, monte_carlo_detection, scheme_sinr, threshold_for_pfa
from .hybrid import COMPLEXITY_WARN, tradeoff_curve


def _add_scene_args(p):
    p.add_argument("--config", help="JSON file with ExperimentConfig keys (flags override it)")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("-K", type=int, help="number of targets")
    p.add_argument("-L", type=int, help="number of groups (time slots)")
    p.add_argument("-M", type=int, help="BS antennas")
    p.add_argument("--nx", type=int, help="IRS elements along x")
    p.add_argument("--ny", type=int, help="IRS elements along y")
    p.add_argument("--eps", type=float, help="leakage cap in watts (inf drops it)")
    p.add_argument("--pmax", type=float, help="transmit power budget in watts")
    p.add_argument("--seed", type=int, help="scene and solver seed")
    p.add_argument("--beta", type=float, help="override the reflection-coefficient magnitude")
    p.add_argument("--out", default="results", help="output directory")


def _config(args) -> ExperimentConfig:
    d = {}
    if args.config:
        with open(args.config) as fh:
            d.update(json.load(fh))
    flags = {"scheme": args.scheme, "K": args.K, "L": args.L, "M": args.M, "Nx": args.nx,
             "Ny": args.ny, "eps": args.eps, "P_max": args.pmax, "beta_magnitude": args.beta}
    d.update({k: v for k, v in flags.items() if v is not None})
    if args.seed is not None:
        d["seeds"] = [args.seed]
    cfg = ExperimentConfig.from_dict(d)
    if cfg.K * cfg.L * cfg.M ** 2 > COMPLEXITY_WARN and cfg.scheme in ("hybrid", "irsb", "nic"):
        warnings.warn(f"K*L*M^2 = {cfg.K * cfg.L * cfg.M ** 2} exceeds {COMPLEXITY_WARN}; "
                      "the grouping subproblem may be slow", stacklevel=2)
    return cfg


def _solve(cfg):
    seed = cfg.seeds[0]
    scene = cfg.scene(seed)
    design = run_scheme(cfg, seed, scene)
    return scene, design, seed


def cmd_solve(args):
    cfg = _config(args)
    scene, design, seed = _solve(cfg)
    Qs = scene.Qs
    cert = certify(design, Qs)
    out = design.to_dict(Qs)
    out["certification"] = vars(cert)
    out["config"] = cfg.to_dict()
    path = os.path.join(args.out, f"{cfg.scheme}_K{cfg.K}_L{cfg.L}_seed{seed}.json")
    write_json(path, out)
    print(f"{cfg.scheme}: min gain {design.min_gain(Qs):.6e} W, "
          f"F_s {design.frequency:.4g} Hz, certified {cert.ok()} -> {path}")
    return 0 if cert.ok() else 1


def cmd_sweep(args):
    cfg = _config(args)
    seed = cfg.seeds[0]
    scene = cfg.scene(seed)
    groups = args.groups or cfg.groups or [1]
    eps = np.inf if cfg.scheme == "nic" else cfg.eps
    pts = tradeoff_curve(scene.Qs, cfg.P_max, eps, cfg.timing, groups, cfg.hybrid_config(seed))
    path = os.path.join(args.out, f"tradeoff_K{cfg.K}_seed{seed}.csv")
    write_csv(path, ("frequency_hz", "min_gain", "L"), [(p.frequency, p.min_gain, p.L) for p in pts])
    for p in pts:
        print(f"L={p.L:2d}  F_s={p.frequency:8.3f} Hz  min gain={p.min_gain:.6e} W")
    print(f"-> {path}")
    return 0


def cmd_pattern(args):
    cfg = _config(args)
    scene, design, seed = _solve(cfg)
    az = np.arange(args.az[0], args.az[1] + 1e-9, args.az[2])
    el = np.arange(args.el[0], args.el[1] + 1e-9, args.el[2])
    rows = beam_pattern_grid(scene, design, az, el)
    path = os.path.join(args.out, f"pattern_{cfg.scheme}_K{cfg.K}_seed{seed}.csv")
    write_csv(path, ("az_deg", "el_deg", "beam_index", "gain"), rows)
    print(f"{len(rows)} rows -> {path}")
    return 0


def cmd_simulate(args):
    cfg = _config(args)
    scene, design, seed = _solve(cfg)
    if design.L != 1:
        raise SystemExit("simulate expects a single-slot design (ss, two-target, nic with L=1)")
    v = design.vs[0]
    beams = design.beams
    N_p = cfg.n_pulses
    codebook = make_codebook(scene.K, N_p, args.codes)
    delays = [0] * scene.K
    mu = threshold_for_pfa(args.pfa, scene.noise_power, N_p)
    sinrs = scheme_sinr(scene, v, beams)
    rows = []
    for k in range(scene.K):
        f = matched_filter(scene, v, beams[k], k)
        alpha = abs(np.vdot(f, scene.Qs[k].conj().T @ v) * scene.betas[k]
                    * np.vdot(scene.Qs[k].conj().T @ v, beams[k]))
        snr = 10 * np.log10(alpha ** 2 * N_p / scene.noise_power)
        pfa = monte_carlo_detection(scene, v, beams, codebook, delays, k, mu, args.trials,
                                    seed=seed, present=False).rate
        pd = monte_carlo_detection(scene, v, beams, codebook, delays, k, mu, args.trials,
                                   seed=seed + 1, present=True, full_model=args.full).rate
        rows.append((scene.K, cfg.scheme, k, snr, pfa, pd, sinrs[k]))
    path = os.path.join(args.out, f"detection_{cfg.scheme}_K{cfg.K}_seed{seed}.csv")
    write_csv(path, ("K", "scheme", "target", "snr_db", "p_fa", "p_d", "sinr_db"), rows)
    for r in rows:
        print(f"target {r[2]}: SNR {r[3]:6.2f} dB  P_fa {r[4]:.4f}  P_d {r[5]:.4f}  "
              f"SINR {r[6]:6.2f} dB")
    print(f"-> {path}")
    return 0


def cmd_suite(args):
    manifest = run_suite(args.suite, args.out, jobs=args.jobs)
    print(f"{len(manifest['jobs'])} jobs, {len(manifest['failures'])} failed -> {args.out}")
    return 1 if manifest["failures"] else 0


def build_parser():
    ap = argparse.ArgumentParser(prog="irs-sensing", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="solve one scheme and write the certified design")
    _add_scene_args(p)
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("sweep", help="minimum gain against sensing frequency")
    _add_scene_args(p)
    p.add_argument("--groups", type=int, nargs="+", help="group counts to solve")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("pattern", help="beam-pattern gains over a direction grid")
    _add_scene_args(p)
    p.add_argument("--az", type=float, nargs=3, default=(0.0, 90.0, 1.0),
                   metavar=("START", "STOP", "STEP"), help="azimuth grid in degrees")
    p.add_argument("--el", type=float, nargs=3, default=(0.0, 360.0, 10.0),
                   metavar=("START", "STOP", "STEP"), help="elevation grid in degrees")
    p.set_defaults(func=cmd_pattern)
    p = sub.add_parser("simulate", help="Monte-Carlo detection and SINR of a design")
    _add_scene_args(p)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--pfa", type=float, default=0.01)
    p.add_argument("--codes", choices=("dft", "walsh"), default="dft")
    p.add_argument("--full", action="store_true", help="include leakage echoes")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("suite", help="run a JSON suite file")
    p.add_argument("suite", help="JSON file with a 'runs' list")
    p.add_argument("--out", default="results")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_suite)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
