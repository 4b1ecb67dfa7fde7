"""Command-line entry point.

    axifem run <config>
    axifem verify-operators <mesh>
    axifem verify-conservation <config>
    axifem mesh-rect <r0> <r1> <z0> <z1> <h> [-o FILE]

Exit status is 0 when the run completes or every check passes, 1 when a check
fails or a run aborts, and 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from .driver import RunAborted, RunConfig, Simulation
from .errors import AxifemError, ConfigError
from .mesh import generate_rect_mesh, load_mesh, perturb_mesh, save_mesh
from .ops import operators_for
from .verification import all_passed, conservation_checks, operator_checks, summarize


def _verify_operators(mesh_path: str, n_fields: int) -> int:
    ops = operators_for(load_mesh(mesh_path))
    checks = operator_checks(ops, n_fields=n_fields, label=str(mesh_path))
    print(summarize(checks, f"operator identities on {mesh_path} ({ops.mesh.n_elements} elements)"))
    return 0 if all_passed(checks) else 1


def _verify_conservation(config: RunConfig) -> int:
    sim = Simulation(config)
    checks = conservation_checks(sim.ops, sim.coeffs)
    print(summarize(checks, f"semi-discrete conservation on {sim.mesh.n_nodes} plasma nodes"))
    return 0 if all_passed(checks) else 1


def _simulate(config: RunConfig) -> int:
    sim = Simulation(config)
    try:
        res = sim.run()
    except RunAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = config.path("output_dir")
    print(f"completed {res.steps} steps to t = {res.state.t:.6e} s; output in {out}")
    if sim.wall_flux is not None:
        print(f"max |Phi_tot - Phi_form| / max |Phi_form| = {res.flux_error():.3e}")
    return 0


def _run(config_path: str) -> int:
    config = RunConfig.from_file(config_path)
    mode = config["mode"]
    if mode == "verify-conservation":
        return _verify_conservation(config)
    if mode == "verify-operators":
        return _verify_operators(str(config.path("mesh")), 100)
    return _simulate(config)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="axifem", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the configuration (simulate or one of the verify modes)")
    r.add_argument("config")

    vo = sub.add_parser("verify-operators", help="operator identity suite on a mesh file")
    vo.add_argument("mesh")
    vo.add_argument("--fields", type=int, default=100, help="random fields per identity (default 100)")
    vo.add_argument("--perturbed", type=float, default=0.0, metavar="AMP",
                    help="also check a copy with interior nodes jittered by AMP metres")

    vc = sub.add_parser("verify-conservation", help="semi-discrete balance suite for a configuration")
    vc.add_argument("config")

    mr = sub.add_parser("mesh-rect", help="write a structured rectangle mesh")
    for name in ("r0", "r1", "z0", "z1", "h"):
        mr.add_argument(name, type=float)
    mr.add_argument("-o", "--output", help="output file (default stdout)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return _run(args.config)
        if args.command == "verify-operators":
            status = _verify_operators(args.mesh, args.fields)
            if args.perturbed > 0:
                mesh = perturb_mesh(load_mesh(args.mesh), args.perturbed, np.random.default_rng(0))
                checks = operator_checks(operators_for(mesh), n_fields=args.fields, label="perturbed")
                print(summarize(checks, "operator identities on the perturbed copy"))
                status = max(status, 0 if all_passed(checks) else 1)
            return status
        if args.command == "verify-conservation":
            return _verify_conservation(RunConfig.from_file(args.config))
        if args.command == "mesh-rect":
            mesh = generate_rect_mesh((args.r0, args.r1), (args.z0, args.z1), args.h)
            save_mesh(mesh, args.output if args.output else sys.stdout)
            return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (AxifemError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
