"""Batch command line interface.

Subcommands: generate, validate, ot, foliate, spectrum, gap, heat, audit,
experiment.  Exit codes separate outcomes so automation can assert the
mathematics directly: 0 success, 2 a validation/certification/audit failed
(reports are still written), 1 structural or I/O errors, 64 usage errors.
Identical config and seed produce byte-identical CSV output; wall-clock
information goes only to a sidecar log.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import FolioError
from .flows import ede_audit, heat_flow, k_convexity_audit
from .foliation import (
    build_quotient,
    check_mm_foliation,
    load_partition,
    pair_defects_to_csv,
)
from .generators import gaussian_line, generate_from_config, interval_quotient
from .spaces import dump_space, load_space, validate_space
from .spectral import (
    build_kernel_graph,
    chain_graph,
    containment_check,
    cycle_graph,
    laplacian_spectrum,
    product_graph,
    quotient_graph,
    spectral_gap_q,
)
from .transport import sinkhorn, solve_ot

USAGE_EXIT = 64
MATH_EXIT = 2
ERROR_EXIT = 1


def _atomic_write(path, text):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path, payload):
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _manifest(outdir, name, config):
    blob = json.dumps(config, sort_keys=True).encode()
    manifest = {
        "tool": "folio",
        "version": __version__,
        "experiment": name,
        "config": config,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
    }
    _write_json(os.path.join(outdir, "manifest.json"), manifest)
    with open(os.path.join(outdir, "run.log"), "a") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {name}\n")


def _outdir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _graph_for(space, args):
    choice = getattr(args, "graph", None) or "auto"
    if choice == "auto":
        kind = space.coords.get("kind") if space.coords else None
        if kind == "interval":
            choice = "chain"
        elif kind == "sphere" and np.asarray(space.coords["data"]).shape[1] == 2:
            choice = "cycle"
        else:
            choice = "kernel"
    if choice == "chain":
        return chain_graph(space)
    if choice == "cycle":
        return cycle_graph(space)
    if choice == "kernel":
        bw = getattr(args, "bandwidth", None)
        if bw is None:
            raise FolioError("kernel graph needs --bandwidth")
        return build_kernel_graph(space, bw)
    raise FolioError(f"unknown graph type {choice!r}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_generate(args):
    with open(args.config) as fh:
        cfg = json.load(fh)
    out = _outdir(args)
    space, partition = generate_from_config(cfg)
    dump_space(space, os.path.join(out, "space.json"))
    if partition is not None:
        from .foliation import dump_partition

        dump_partition(partition, os.path.join(out, "partition.json"))
    _manifest(out, "generate", cfg)
    return 0


def _cmd_validate(args):
    space = load_space(args.space)
    report = validate_space(space, lenient=args.lenient)
    payload = report.to_json()
    if args.out:
        out = _outdir(args)
        _write_json(os.path.join(out, "validation.json"), payload)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0 if report.ok else MATH_EXIT


def _cmd_ot(args):
    space = load_space(args.space)
    with open(args.config) as fh:
        cfg = json.load(fh)
    mu = _resolve_measure(cfg["mu"], space, cfg.get("seed", 0))
    nu = _resolve_measure(cfg["nu"], space, cfg.get("seed", 0) + 1)
    p = float(cfg.get("p", args.q if args.q is not None else 2.0))
    if cfg.get("method", "exact") == "sinkhorn":
        plan = sinkhorn(space, mu, nu, p, epsilon=float(cfg.get("epsilon", 1e-2)))
    else:
        plan = solve_ot(space, mu, nu, p)
    out = _outdir(args)
    rows = ["i,j,mass,dist"]
    ii, jj = np.nonzero(plan.pi)
    for i, j in zip(ii, jj):
        rows.append(f"{i},{j},{plan.pi[i, j]:.17g},{space.dist[i, j]:.17g}")
    _atomic_write(os.path.join(out, "plan.csv"), "\n".join(rows) + "\n")
    _write_json(os.path.join(out, "marginals.json"), {
        "cost": plan.cost,
        "distance": plan.distance,
        "exponent": plan.exponent,
        "kind": plan.kind,
        "marginal_residual": plan.marginal_residual,
        "row_sums": plan.pi.sum(axis=1).tolist(),
        "col_sums": plan.pi.sum(axis=0).tolist(),
    })
    _manifest(out, "ot", cfg)
    return 0


def _resolve_measure(spec, space, seed):
    n = space.n_points
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    if spec == "uniform":
        return np.full(n, 1.0 / n)
    if spec == "weight":
        return space.weight.copy()
    if isinstance(spec, str) and spec.startswith("dirac:"):
        out = np.zeros(n)
        out[int(spec.split(":", 1)[1])] = 1.0
        return out
    if spec == "random":
        rng = np.random.default_rng(seed)
        out = rng.random(n)
        return out / out.sum()
    raise FolioError(f"unknown measure spec {spec!r}")


def _cmd_foliate(args):
    space = load_space(args.space)
    partition = load_partition(args.partition, space.n_points)
    bundle = build_quotient(space, partition)
    report = check_mm_foliation(bundle, args.tol)
    out = _outdir(args)
    _write_json(os.path.join(out, "certification.json"), report.to_json())
    _atomic_write(os.path.join(out, "pairs.csv"), pair_defects_to_csv(report))
    _manifest(out, "foliate", {"space": args.space, "partition": args.partition,
                               "tol": args.tol})
    return 0 if report.passed else MATH_EXIT


def _cmd_spectrum(args):
    space = load_space(args.space)
    g = _graph_for(space, args)
    spec = laplacian_spectrum(g, k=args.k)
    out = _outdir(args)
    _atomic_write(os.path.join(out, "spectrum.csv"), spec.to_csv())
    _manifest(out, "spectrum", {"space": args.space, "k": args.k,
                                "graph": args.graph, "bandwidth": args.bandwidth})
    return 0


def _cmd_gap(args):
    space = load_space(args.space)
    g = _graph_for(space, args)
    res = spectral_gap_q(g, args.q if args.q is not None else 2.0,
                         seed=args.seed, restarts=args.restarts)
    out = _outdir(args)
    _write_json(os.path.join(out, "gap.json"), {
        "q": args.q if args.q is not None else 2.0,
        "value": res.value,
        "method": res.method,
        "restart_values": list(res.restart_values),
        "spread": res.spread,
    })
    _manifest(out, "gap", {"space": args.space, "q": args.q, "seed": args.seed})
    return 0


def _cmd_heat(args):
    space = load_space(args.space)
    with open(args.config) as fh:
        cfg = json.load(fh)
    g = _graph_for(space, args)
    rho0 = np.asarray(cfg.get("rho0", np.ones(space.n_points)), dtype=float)
    rho0 = rho0 / float(rho0 @ space.weight)
    times = np.asarray(cfg["times"], dtype=float)
    traj = heat_flow(g, rho0, times)
    out = _outdir(args)
    _atomic_write(os.path.join(out, "trajectory.csv"), traj.to_csv())
    _manifest(out, "heat", cfg)
    return 0


def _cmd_audit(args):
    space = load_space(args.space)
    with open(args.config) as fh:
        cfg = json.load(fh)
    out = _outdir(args)
    kind = cfg.get("kind", "convexity")
    if kind == "convexity":
        report = k_convexity_audit(
            space, float(cfg.get("K", 0.0)), trials=int(cfg.get("trials", 50)),
            seed=int(cfg.get("seed", args.seed)),
            slack_factor=float(cfg.get("slack_factor", 5.0)),
        )
        _write_json(os.path.join(out, "convexity.json"), report.to_json())
        _manifest(out, "audit-convexity", cfg)
        return 0 if report.passed else MATH_EXIT
    if kind == "ede":
        g = _graph_for(space, args)
        rho0 = np.asarray(cfg["rho0"], dtype=float)
        rho0 = rho0 / float(rho0 @ space.weight)
        times = np.asarray(cfg["times"], dtype=float)
        traj = heat_flow(g, rho0, times)
        report = ede_audit(g, traj)
        _write_json(os.path.join(out, "ede.json"), report.to_json())
        _manifest(out, "audit-ede", cfg)
        limit = float(cfg.get("mismatch_limit", 0.05))
        return 0 if report.max_mismatch <= limit and report.monotone else MATH_EXIT
    raise FolioError(f"unknown audit kind {kind!r}")


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _exp_sphere_collapse(args):
    ns = [int(v) for v in args.n.split(",")]
    B = args.B
    out = _outdir(args)
    rows = ["n,k,eigenvalue,target,rel_error"]
    for n in ns:
        space = interval_quotient(n, np.sqrt(n - 1.0), B)
        spec = laplacian_spectrum(chain_graph(space), k=4)
        for k in (1, 2, 3):
            lam = float(spec.eigenvalues[k])
            target = k * (1.0 + k / (n - 1.0))
            rows.append(f"{n},{k},{lam:.17g},{target:.17g},{abs(lam - target) / target:.17g}")
    _atomic_write(os.path.join(out, "sphere_collapse.csv"), "\n".join(rows) + "\n")
    _manifest(out, "sphere-collapse", {"n": ns, "B": B})
    return 0


def _exp_spectral_containment(args):
    from .generators import cycle_space, lq_product

    out = _outdir(args)
    Y = cycle_space(args.ny or 40)
    Z = cycle_space(args.nz or 25)
    gy, gz = cycle_graph(Y), cycle_graph(Z)
    g = product_graph(gy, gz)
    part = np.repeat(np.arange(Y.n_points), Z.n_points)
    gq = quotient_graph(g, part)
    k = min(args.k or 20, Y.n_points)
    spec_t = laplacian_spectrum(g, k=g.n_vertices)
    spec_q = laplacian_spectrum(gq, k=k)
    report = containment_check(spec_t, spec_q, args.tol)
    _write_json(os.path.join(out, "containment.json"), report.to_json())
    _atomic_write(os.path.join(out, "quotient_spectrum.csv"), spec_q.to_csv())
    _manifest(out, "spectral-containment",
              {"ny": Y.n_points, "nz": Z.n_points, "tol": args.tol})
    return 0 if report.passed else MATH_EXIT


def _exp_foliation_certify(args):
    return _cmd_foliate(args)


def _exp_convexity_audit(args):
    out = _outdir(args)
    space = interval_quotient(9, np.sqrt(8.0), args.B or 800)
    report = k_convexity_audit(space, args.K, trials=50, seed=args.seed)
    _write_json(os.path.join(out, "convexity.json"), report.to_json())
    _manifest(out, "convexity-audit", {"K": args.K, "B": args.B, "seed": args.seed})
    return 0 if report.passed else MATH_EXIT


def _exp_ede_audit(args):
    from .generators import cycle_space

    out = _outdir(args)
    space = cycle_space(args.N or 512)
    g = cycle_graph(space)
    pts = np.asarray(space.coords["data"], dtype=float)
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    rho0 = 1.0 + 0.5 * np.cos(theta) + 0.3 * np.sin(2 * theta)
    rho0 = rho0 / float(rho0 @ space.weight)
    times = np.linspace(0.01, 0.1, 19)
    traj = heat_flow(g, rho0, times)
    report = ede_audit(g, traj)
    _atomic_write(os.path.join(out, "trajectory.csv"), traj.to_csv())
    _write_json(os.path.join(out, "ede.json"), report.to_json())
    _manifest(out, "ede-audit", {"N": space.n_points})
    return 0 if report.max_mismatch <= 0.05 and report.monotone else MATH_EXIT


EXPERIMENTS = {
    "sphere-collapse": _exp_sphere_collapse,
    "spectral-containment": _exp_spectral_containment,
    "foliation-certify": _exp_foliation_certify,
    "convexity-audit": _exp_convexity_audit,
    "ede-audit": _exp_ede_audit,
}


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _build_parser():
    p = _Parser(prog="folio", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, space=True):
        if space:
            sp.add_argument("--space", required=True)
        sp.add_argument("--out", default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=1e-9)
        sp.add_argument("--q", type=float, default=None)
        sp.add_argument("--bandwidth", type=float, default=None)
        sp.add_argument("--graph", choices=["auto", "chain", "cycle", "kernel"],
                        default="auto")

    sp = sub.add_parser("generate", help="build a space from a generator config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=_cmd_generate)

    sp = sub.add_parser("validate", help="check the metric measure axioms")
    sp.add_argument("--space", required=True)
    sp.add_argument("--lenient", action="store_true")
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=_cmd_validate)

    sp = sub.add_parser("ot", help="solve a transport problem")
    common(sp)
    sp.add_argument("--config", required=True)
    sp.set_defaults(fn=_cmd_ot)

    sp = sub.add_parser("foliate", help="certify a partition as a foliation")
    common(sp)
    sp.add_argument("--partition", required=True)
    sp.set_defaults(fn=_cmd_foliate)

    sp = sub.add_parser("spectrum", help="Laplacian eigenvalues of a space graph")
    common(sp)
    sp.add_argument("--k", type=int, default=None)
    sp.set_defaults(fn=_cmd_spectrum)

    sp = sub.add_parser("gap", help="q-spectral gap")
    common(sp)
    sp.add_argument("--restarts", type=int, default=16)
    sp.set_defaults(fn=_cmd_gap)

    sp = sub.add_parser("heat", help="heat flow trajectory")
    common(sp)
    sp.add_argument("--config", required=True)
    sp.set_defaults(fn=_cmd_heat)

    sp = sub.add_parser("audit", help="convexity or energy-dissipation audit")
    common(sp)
    sp.add_argument("--config", required=True)
    sp.set_defaults(fn=_cmd_audit)

    sp = sub.add_parser("experiment", help="run a canned experiment")
    sp.add_argument("name", choices=sorted(EXPERIMENTS))
    sp.add_argument("--n", default="4,16,64")
    sp.add_argument("--B", type=int, default=500)
    sp.add_argument("--N", type=int, default=None)
    sp.add_argument("--ny", type=int, default=None)
    sp.add_argument("--nz", type=int, default=None)
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--K", type=float, default=1.0)
    sp.add_argument("--space", default=None)
    sp.add_argument("--partition", default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.set_defaults(fn=lambda a: EXPERIMENTS[a.name](a))

    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_EXIT
    try:
        return args.fn(args)
    except FolioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR_EXIT
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR_EXIT


def console_main():
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
