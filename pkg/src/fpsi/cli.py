"""Command line entry point: ``fpsi {fpsi,toy,study,check}``.

Exit codes: 0 success, 1 failed invariant check, 2 collision halt,
3 solver failure, 4 configuration error, 5 output I/O error.
"""
import argparse
import csv
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .config import RunConfig, load_config
from .errors import CollisionDetected, ConfigError, FPSIError
from .grids import write_snapshot

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_COLLISION = 2
EXIT_SOLVER = 3
EXIT_CONFIG = 4
EXIT_IO = 5

log = logging.getLogger("fpsi")


def git_blob_hash(data: bytes) -> str:
    """Hash of ``data`` as git stores a blob (sha1 over ``blob <len>\\0`` + data)."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _file_hash(path):
    with open(path, "rb") as fh:
        return git_blob_hash(fh.read())


def _input_hashes(cfg: RunConfig, echo: str):
    files = {"config": git_blob_hash(echo.encode())}
    for key in ("eta0_file", "b_file", "v0_file"):
        path = getattr(cfg, key)
        if path and getattr(cfg, key.replace("_file", "")) == "from-file":
            files[key] = _file_hash(path)
    combined = git_blob_hash("\n".join(f"{k} {v}" for k, v in sorted(files.items())).encode())
    return files, combined


def write_manifest(out, cfg, command, status, extra=None):
    echo = cfg.echo()
    files, combined = _input_hashes(cfg, echo)
    man = dict(
        command=command, version=__version__, backend=BACKEND, numpy=np.__version__,
        inputs=files, input_hash=combined, exit_status=status, config=echo,
    )
    if extra:
        man.update(extra)
    with open(os.path.join(out, "config.ini"), "w") as fh:
        fh.write(echo)
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return man


def _write_rows(path, columns, rows):
    from .scheme import _fmt
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r.get(c, "")) for c in columns])


# ------------------------------------------------------------------ commands

def cmd_fpsi(cfg: RunConfig):
    from .errors import InfiniteEnergy, InversionFailure, OutOfDomain
    from .runner import build_problem
    from .scheme import COLLIDED, LEDGER_COLUMNS, WINDOW_COLUMNS, ledger_rows_to_csv, solve_horizon

    out = cfg.out
    os.makedirs(out, exist_ok=True)
    prob = build_problem(cfg)
    try:
        tr = solve_horizon(prob.model, prob.eta0, prob.b, prob.v0, prob.forcing, cfg.T, prob.guard, prob.opts,
                           keep_maps=cfg.snapshot_every > 0)
    except CollisionDetected as exc:
        print(f"collision at T* = {exc.time!r}")
        write_manifest(out, cfg, "fpsi", EXIT_COLLISION, dict(halt_reason=COLLIDED, t_star=exc.time))
        return EXIT_COLLISION
    except (InfiniteEnergy, OutOfDomain, InversionFailure) as exc:
        print(f"solver failure: {exc}")
        write_manifest(out, cfg, "fpsi", EXIT_SOLVER, dict(error=str(exc)))
        return EXIT_SOLVER
    ledger_rows_to_csv(tr.ledger, os.path.join(out, "ledger.csv"), LEDGER_COLUMNS)
    _write_rows(os.path.join(out, "windows.csv"), WINDOW_COLUMNS, tr.windows)
    if cfg.snapshot_every > 0:
        snap = os.path.join(out, "snapshots")
        os.makedirs(snap, exist_ok=True)
        fluid = prob.fluid
        for k, eta in enumerate(tr.etas):
            if k % cfg.snapshot_every == 0:
                write_snapshot(os.path.join(snap, f"eta_{k:06d}.txt"), prob.solid, eta)
                if k > 0:
                    write_snapshot(os.path.join(snap, f"v_{k:06d}.txt"), fluid, fluid.velocity(tr.psis[k - 1]))
        for l, maps in enumerate(tr.maps):
            write_snapshot(os.path.join(snap, f"phi_window_{l:04d}.txt"), fluid, maps[-1].values)
    failed = [r["step"] for r in tr.ledger if r["certificate_gap"] > 1e-10 * (1 + abs(r["value_at_rest"]))]
    bad_windows = [w["window"] for w in tr.windows if not w["holds"]]
    status = EXIT_OK
    if tr.halt_reason == COLLIDED:
        status = EXIT_COLLISION
        print(f"collision at T* = {tr.t_star!r}")
    elif failed:
        status = EXIT_SOLVER
        print(f"certificate violated at steps {failed[:10]}")
    report = dict(halt_reason=tr.halt_reason, t_star=tr.t_star, steps=len(tr.ledger),
                  min_det_floor=tr.min_det_floor, certificate_failures=len(failed),
                  window_inequality_failures=bad_windows)
    write_manifest(out, cfg, "fpsi", status, report)
    print(f"{tr.halt_reason}: {len(tr.ledger)} steps, min det {tr.min_det_floor:.6g}, "
          f"windows failing the inequality: {len(bad_windows)}")
    return status


def cmd_toy(cfg: RunConfig, scheme="two-scale"):
    from . import toy

    os.makedirs(cfg.out, exist_ok=True)
    E = toy.energy_by_name(cfg.toy_energy)
    if scheme == "naive":
        tr = toy.naive_scheme(E, cfg.toy_x0, cfg.toy_xstar, cfg.toy_tau, cfg.toy_T)
    else:
        tr = toy.two_scale_scheme(E, cfg.toy_x0, cfg.toy_xstar, cfg.toy_tau, cfg.toy_h, cfg.toy_T)
    d = tr.positions.shape[1]
    cols = ["t"] + [f"x{i}" for i in range(d)] + [f"rate{i}" for i in range(d)] + ["potential", "energy"]
    with open(os.path.join(cfg.out, "toy.csv"), "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for k in range(len(tr.times)):
            wr.writerow([repr(float(x)) for x in
                         [tr.times[k], *tr.positions[k], *tr.velocities[k], tr.potential[k], tr.energy[k]]])
    extra = dict(scheme=scheme, increases=int(toy.energy_increases(tr).size))
    if scheme != "naive":
        rep = toy.hyperbolic_estimate_check(tr)
        extra.update(pairs=rep.pairs, violations=rep.violations, worst=rep.worst)
        print(f"window-pair estimate: {rep.pairs - rep.violations}/{rep.pairs} pairs hold (worst {rep.worst:.3e})")
    print(f"{E.name} {scheme}: {len(tr.times) - 1} steps, energy increases at {extra['increases']} steps")
    write_manifest(cfg.out, cfg, "toy", EXIT_OK, extra)
    return EXIT_OK


def cmd_study(cfg: RunConfig):
    from .study import convergence_study, write_study_csv

    os.makedirs(cfg.out, exist_ok=True)
    rows = convergence_study(cfg)
    write_study_csv(rows, os.path.join(cfg.out, "study.csv"))
    for r in rows:
        print(f"{r.part:5s} {r.energy:12s} {r.sweep:4s} h={r.h:<8g} tau={r.tau:<10g} "
              f"cauchy={r.cauchy_distance:.3e} oracle={r.oracle_distance:.3e} order={r.order:.2f}")
    write_manifest(cfg.out, cfg, "study", EXIT_OK)
    return EXIT_OK


def cmd_check(cfg: RunConfig):
    from .checks import run_checks

    res = run_checks(seed=cfg.seed)
    for r in res:
        print(r.line())
    return EXIT_OK if all(r.passed for r in res) else EXIT_CHECK


# ----------------------------------------------------------------- parsing

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--snapshot-every", type=int, metavar="N", help="field snapshot cadence in steps")
    common.add_argument("--tau", type=float, help="inner step")
    common.add_argument("--h", type=float, help="window length")
    common.add_argument("--horizon", type=float, help="final time T")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fpsi", description="Two-scale fluid / porous-solid interaction runs.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("fpsi", parents=[common], help="coupled run over [0, T]")
    t = sub.add_parser("toy", parents=[common], help="single-particle laboratory")
    t.add_argument("--energy", choices=("quadratic", "double-well", "zero"))
    t.add_argument("--scheme", choices=("two-scale", "naive"), default="two-scale")
    t.add_argument("--x0", type=float, nargs="+")
    t.add_argument("--xstar", type=float, nargs="+")
    sub.add_parser("study", parents=[common], help="refinement study (toy and small coupled run)")
    c = sub.add_parser("check", parents=[common], help="gradient, adjoint and identity suites")
    c.add_argument("--seed", type=int)
    return p


def _config_from_args(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    over = dict(out=args.out, snapshot_every=args.snapshot_every)
    if args.command == "toy":
        over.update(toy_tau=args.tau, toy_h=args.h, toy_T=args.horizon, toy_energy=args.energy,
                    toy_x0=tuple(args.x0) if args.x0 else None, toy_xstar=tuple(args.xstar) if args.xstar else None)
    else:
        over.update(tau=args.tau, h=args.h, T=args.horizon)
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    cfg = cfg.with_overrides(**over)
    # overrides go through the same validation as file values
    from .config import parse_config
    return parse_config(cfg.echo())


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config_from_args(args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "fpsi":
            return cmd_fpsi(cfg)
        if args.command == "toy":
            return cmd_toy(cfg, args.scheme)
        if args.command == "study":
            return cmd_study(cfg)
        return cmd_check(cfg)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"configuration error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except FPSIError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
