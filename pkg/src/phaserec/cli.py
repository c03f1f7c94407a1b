"""Command-line interface.

Subcommands:

  ground-truth   reference fine-mesh run; writes phi0_ref, phi_meas
                 (clean/noisy) and trajectory snapshots
  forward        plain forward solve on the working mesh
  reconstruct    run the configured identification scheme
  metrics        compare two field files
  noise          apply the measurement noise model to a field file

Exit codes: 0 success, 2 configuration/data error, 3 solver failure,
4 reconstruction hit the iteration cap without converging (outputs are
still written).
"""

import argparse
import math
import sys
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import fieldio
from .config import load_config
from .errors import ConfigError, SolverError
from .integrator import solve
from .metrics import metrics
from .model import initial_laws
from .reconstruction import (ADAPTIVE_GD, LANDWEBER_FIXED, ReferenceFields,
                             adaptive_gd, initial_guess, landweber_fixed,
                             landweber_sd)
from .splines import Field, SplineSpace
from .synthetic import add_noise, make_ground_truth, tanh_ellipse, transfer
from .systems import Assembler, StateTriple, SystemKind

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_NOT_CONVERGED = 4


def _out_dir(cfg, override):
    out = Path(override or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _hash(cfg, seed):
    return fieldio.config_hash(cfg.raw_text + f"\nseed={seed}")


def _write_field(path, field, tag):
    fieldio.write_field(str(path) + ".pffield", field, config_hash=tag)
    fieldio.write_vtk(str(path) + ".vtk", field, name=path.name, config_hash=tag)


def _snapshot_times(tcfg, stride):
    if stride <= 0:
        return [0.0, tcfg.t_end]
    times = list(np.arange(0.0, tcfg.t_end + 1e-9, stride))
    if not math.isclose(times[-1], tcfg.t_end, abs_tol=1e-9):
        times.append(tcfg.t_end)
    return times


def cmd_ground_truth(cfg, out, seed):
    tag = _hash(cfg, seed)
    phi0_ref, traj, phi_meas = make_ground_truth(
        cfg.truth, cfg.params, cfg.tcfg, cfg.ncfg, cfg.gcfg,
        domain_side=cfg.domain_side)
    _write_field(out / "phi0_ref", phi0_ref, tag)
    _write_field(out / "phi_meas", phi_meas, tag)
    if cfg.noise_level > 0:
        noisy = add_noise(phi_meas, cfg.noise_level, seed, mode=cfg.noise_mode)
        _write_field(out / "phi_meas_noisy", noisy, tag)
    space = phi0_ref.space
    for t in _snapshot_times(cfg.tcfg, cfg.snapshot_stride):
        idx = int(round(t / abs(cfg.tcfg.dt)))
        snap = Field(space, np.asarray(traj.states[idx][0]).copy())
        _write_field(out / f"snapshot_t{t:g}", snap, tag)
    return EXIT_OK


def cmd_forward(cfg, out, seed):
    tag = _hash(cfg, seed)
    space = SplineSpace(cfg.elements, cfg.domain_side)
    centre = (cfg.domain_side / 2.0, cfg.domain_side / 2.0)
    phi0 = tanh_ellipse(space, centre, cfg.truth.a, cfg.truth.b,
                        cfg.truth.steepness)
    sigma0, p0 = initial_laws(cfg.params, phi0)
    assembler = Assembler(space, cfg.params)
    traj = solve(assembler, SystemKind.forward(),
                 StateTriple(phi0, sigma0, p0), cfg.tcfg, cfg.ncfg, cfg.gcfg)
    _write_field(out / "phi0", phi0, tag)
    for t in _snapshot_times(cfg.tcfg, cfg.snapshot_stride):
        idx = int(round(t / abs(cfg.tcfg.dt)))
        snap = Field(space, np.asarray(traj.states[idx][0]).copy())
        _write_field(out / f"snapshot_t{t:g}", snap, tag)
    _write_field(out / "phi_T", Field(space, np.asarray(traj.states[-1][0]).copy()), tag)
    return EXIT_OK


def cmd_reconstruct(cfg, out, seed):
    tag = _hash(cfg, seed)
    work = SplineSpace(cfg.elements, cfg.domain_side)
    if cfg.measurement is None:
        raise ConfigError("reconstruct needs [recon] measurement = <field file>",
                          key="recon.measurement")
    meas_raw = fieldio.read_field(cfg.measurement)
    phi_meas = transfer(meas_raw, work)

    reference = None
    if cfg.ref_phi0 and cfg.ref_phiT:
        reference = ReferenceFields(phi0=fieldio.read_field(cfg.ref_phi0),
                                    phiT=fieldio.read_field(cfg.ref_phiT))

    guess = initial_guess(phi_meas, a=cfg.guess_a, b=cfg.guess_b)
    dump_fn = None
    if cfg.dump_stride > 0:
        stride = cfg.dump_stride

        def dump_fn(j, fields):
            if j % stride == 0:
                for name, fld in fields.items():
                    _write_field(out / f"iter{j:04d}_{name}", fld, tag)

    runner = {ADAPTIVE_GD: adaptive_gd,
              LANDWEBER_FIXED: landweber_fixed}.get(cfg.rcfg.method,
                                                    landweber_sd)
    result = runner(phi_meas, guess, cfg.params, cfg.rcfg, cfg.tcfg, cfg.ncfg,
                    cfg.gcfg, reference=reference,
                    history_path=out / "history.csv", config_hash=tag,
                    dump_fn=dump_fn)
    _write_field(out / "phi0_rec", result.phi0, tag)
    _write_field(out / "phiT_rec", result.phiT, tag)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_metrics(args):
    try:
        ref = fieldio.read_field(args.ref)
        rec = fieldio.read_field(args.rec)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rep = metrics(ref, rec)
    print(f"e_V   {rep.e_V:+.6f}")
    print(f"DSC   {rep.dsc:.6f}")
    print(f"e_L2  {rep.e_L2:.6f}")
    print(f"CCC   {rep.ccc:.6f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.csv", "w") as fh:
            fh.write("eV,dsc,eL2,ccc\n")
            fh.write(f"{rep.e_V!r},{rep.dsc!r},{rep.e_L2!r},{rep.ccc!r}\n")
    return EXIT_OK


def cmd_noise(args):
    try:
        field = fieldio.read_field(args.field)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    noisy = add_noise(field, args.level, args.seed, mode=args.mode)
    fieldio.write_field(args.output, noisy,
                        config_hash=fieldio.config_hash(
                            f"{args.field};{args.level};{args.seed};{args.mode}"))
    return EXIT_OK


def _run_config(task):
    name, config_path, out_override, seed_override, dump_override = task
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error ({config_path}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if dump_override is not None:
        cfg.dump_stride = dump_override
    seed = seed_override if seed_override is not None else cfg.seed
    out = _out_dir(cfg, out_override)
    handler = {"ground-truth": cmd_ground_truth,
               "forward": cmd_forward,
               "reconstruct": cmd_reconstruct}[name]
    try:
        return handler(cfg, out, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="phaserec",
        description="Phase-field tumour model: forward runs and initial-state "
                    "reconstruction from a terminal measurement.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", nargs="+", required=True,
                       help="one or more INI config files")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None,
                       help="output directory (per config when several)")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel processes across configs")
        p.add_argument("--dump-stride", type=int, default=None,
                       help="override [output] dump_stride")
        return p

    add_config_cmd("ground-truth", "generate the fine-mesh reference run")
    add_config_cmd("forward", "plain forward solve on the working mesh")
    add_config_cmd("reconstruct", "run the configured reconstruction scheme")

    pm = sub.add_parser("metrics", help="compare two field files")
    pm.add_argument("ref")
    pm.add_argument("rec")
    pm.add_argument("--out", default=None)

    pn = sub.add_parser("noise", help="noise a field file")
    pn.add_argument("field")
    pn.add_argument("output")
    pn.add_argument("--level", type=float, default=0.10)
    pn.add_argument("--seed", type=int, default=0)
    pn.add_argument("--mode", default="multiplicative",
                    choices=["multiplicative", "additive"])

    args = parser.parse_args(argv)

    if args.command == "metrics":
        return cmd_metrics(args)
    if args.command == "noise":
        return cmd_noise(args)

    configs = args.config
    tasks = []
    for i, cpath in enumerate(configs):
        out = args.out
        if out is not None and len(configs) > 1:
            out = str(Path(out) / Path(cpath).stem)
        tasks.append((args.command, cpath, out, args.seed, args.dump_stride))

    if args.jobs > 1 and len(tasks) > 1:
        with get_context("spawn").Pool(args.jobs) as pool:
            codes = pool.map(_run_config, tasks)
    else:
        codes = [_run_config(t) for t in tasks]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
