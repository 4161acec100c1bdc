"""Command-line harness: ``cascade-bandits {generate|hard|run|verify|sweep}``.

Exit codes: 0 success, 1 suite failure, 2 usage or precondition error,
3 numerical abort.  All outputs are deterministic for fixed arguments;
per-step wall-clock times are written as 0 unless ``--timing`` is given.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .kernels import KernelSpec
from .networks import (
    STRUCTURES,
    build_hard_instance,
    dumps_instance,
    hard_family,
    load_instance,
    normalize_structure,
    synthesize_network,
)
from .optimizers import ALGORITHMS, RunConfig, run
from .suites import PROPERTIES, SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
SCHEMA_VERSION = 1
THREADS_ENV = "CASCADE_BANDITS_THREADS"


class UsageError(ValueError):
    pass


def _num(v) -> str:
    """Shortest round-trip text for a float ('' for missing values)."""
    if v is None:
        return ""
    return repr(float(v))


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=1, allow_nan=False) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def file_hash(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def network_dims(structure: str, m: int, d: int, inner_dim: int) -> tuple:
    """Layer dimensions (d_1, ..., d_{m+1}) for a generated network."""
    if m < 1 or d < 1 or inner_dim < 1:
        raise UsageError("m, d and inner-dim must be at least 1")
    if structure == "chain":
        return (d,) + (1,) * m
    return (d,) + (inner_dim,) * (m - 1) + (1,)


def _generate(args, seed: int, m: int, nu: float, B: float):
    structure = normalize_structure(args.structure)
    spec = KernelSpec(nu, args.lengthscale)
    dims = network_dims(structure, m, args.d, args.inner_dim)
    return synthesize_network(seed, structure, dims, spec, B, args.n_centers)


# generate ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    net = _generate(args, args.seed, args.m, args.nu, args.B)
    _write(Path(args.out), dumps_instance(net))
    print(f"structure={net.structure} dims={list(net.dims)} B={net.B!r} L={net.L!r}")
    for i, (lo, hi) in enumerate(net.layer_domains):
        print(f"  layer {i + 1} input box lo={np.asarray(lo).tolist()} hi={np.asarray(hi).tolist()}")
    print(f"wrote {args.out}")
    return EXIT_OK


# hard -------------------------------------------------------------------------------


def _hard_line(inst, M: int) -> str:
    return (f"eps={inst.eps!r} eps1={inst.eps1!r} w={inst.w!r} u={inst.u!r} "
            f"u_tilde={inst.u_tilde!r} alpha={inst.alpha!r} M={M}")


def cmd_hard(args) -> int:
    spec = KernelSpec(args.nu, args.lengthscale)
    structure = normalize_structure(args.structure)
    out = Path(args.out)
    if not args.family:
        inst = build_hard_instance(spec, args.B, args.m, args.d, args.epsilon, structure,
                                   inner_dim=args.inner_dim)
        M = int(math.floor(1.0 / (2.0 * inst.w) + 1e-12)) ** args.d
        _write(out, dumps_instance(inst.network))
        print(_hard_line(inst, M))
        print(f"wrote {out}")
        return EXIT_OK
    fam = hard_family(spec, args.B, args.m, args.d, args.epsilon, structure, inner_dim=args.inner_dim)
    width = len(str(fam.M - 1))
    files = []
    for k, inst in enumerate(fam.instances):
        name = f"hard_{k:0{width}d}.json"
        _write(out / name, dumps_instance(inst.network))
        files.append({"file": name, "center": inst.center.tolist(), "hash": file_hash(out / name)})
    first = fam.instances[0]
    manifest = {
        "schema_version": SCHEMA_VERSION, "structure": structure, "m": args.m, "d": args.d,
        "eps": first.eps, "eps1": first.eps1, "w": fam.w, "u": first.u, "u_tilde": first.u_tilde,
        "alpha": first.alpha, "M": fam.M, "kernel": spec.to_dict(), "B": args.B, "instances": files,
    }
    _write(out / "manifest.json", _dump_json(manifest))
    print(_hard_line(first, fam.M))
    print(f"wrote {fam.M} instances and manifest.json to {out}")
    return EXIT_OK


# run --------------------------------------------------------------------------------


def _algo(name: str) -> str:
    key = name.replace("-", "_")
    if key not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {name!r}")
    return key


def _config(args, T: int, seed: int) -> RunConfig:
    return RunConfig(T=T, candidate_grid=args.candidate_grid, region_grid=args.region_grid,
                     envelope=args.envelope, jitter=args.jitter, seed=seed, algo=_algo(args.algo),
                     inflate_B=args.inflate_B)


def trace_header(m: int) -> list:
    return (["t", "x", "y", "r_t", "R_t", "ucb"] + [f"sigma_{i + 1}" for i in range(m)]
            + ["wall_ms", "jitter_max", "min_eig", "validity_gap"])


def trace_rows(trace, net, timing: bool) -> list:
    """CSV rows for every step plus an ``x_star`` row when a point is returned."""
    rows = []
    for t in range(len(trace)):
        rows.append([str(t + 1), ";".join(_num(v) for v in trace.x[t]), _num(trace.y[t]),
                     _num(trace.r[t]), _num(trace.R[t]), _num(trace.ucb[t])]
                    + [_num(s) for s in trace.sigma[t]]
                    + [_num(trace.wall_ms[t] if timing else 0.0), _num(trace.jitter_max[t]),
                       _num(trace.min_eig[t]), _num(trace.validity_gap[t])])
    if trace.x_star is not None:
        xs = np.asarray(trace.x_star, dtype=float)
        rows.append(["x_star", ";".join(_num(v) for v in xs), _num(net(xs[None])[0]),
                     _num(trace.simple_regret)] + [""] * (len(trace_header(trace.m)) - 4))
    return rows


def run_summary(trace, net, cfg: RunConfig, timing: bool) -> dict:
    S = trace.sigma_array
    sums = np.nansum(S, axis=0).tolist() if S.size and not np.all(np.isnan(S)) else None
    return {
        "schema_version": SCHEMA_VERSION,
        "algo": trace.algo,
        "config": cfg.to_dict(),
        "structure": net.structure,
        "dims": list(net.dims),
        "T_completed": len(trace),
        "R_T": trace.R_T,
        "simple_regret": trace.simple_regret,
        "x_star": None if trace.x_star is None else np.asarray(trace.x_star).tolist(),
        "sigma_sums": sums,
        "Sigma_hat": None if sums is None else max(sums),
        "grid_optimum": trace.grid_optimum,
        "wall_ms": float(np.sum(trace.wall_ms)) if timing else 0.0,
        "incomplete": trace.incomplete,
        "error": trace.error,
        "caveats": list(trace.caveats),
    }


def write_trace_csv(path: Path, trace, net, timing: bool):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(net.m))
        w.writerows(trace_rows(trace, net, timing))


def cmd_run(args) -> int:
    net = load_instance(args.instance)
    cfg = _config(args, args.T, args.seed)
    trace = run(net, cfg)
    out = Path(args.out_dir)
    write_trace_csv(out / "trace.csv", trace, net, args.timing)
    summary = run_summary(trace, net, cfg, args.timing)
    summary["instance"] = {"path": str(args.instance), "hash": file_hash(args.instance)}
    _write(out / "summary.json", _dump_json(summary))
    print(f"{trace.algo}: T={len(trace)} R_T={trace.R_T!r} simple_regret={trace.simple_regret!r}")
    if trace.incomplete:
        print(f"numerical abort: {trace.error}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# verify -----------------------------------------------------------------------------


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = []
    for name in names:
        res = run_suite(name, seed=args.seed)
        entry = dict(res.summary(), property=PROPERTIES[name])
        if args.details:
            entry["details"] = res.details
        results.append(entry)
    text = _dump_json(results[0] if len(results) == 1 else results)
    sys.stdout.write(text)
    if args.out:
        _write(Path(args.out), text)
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_FAIL


# sweep ------------------------------------------------------------------------------

SWEEP_HEADER = ["structure", "m", "d", "nu", "B", "T", "algo", "replication", "seed", "status",
                "R_T", "simple_regret", "Sigma_hat", "error"]
MEDIAN_HEADER = ["structure", "m", "d", "nu", "B", "T", "algo", "runs", "ok",
                 "median_simple_regret", "median_R_T"]


def worker_count(n_jobs: int) -> int:
    env = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return max(1, min(cap, n_jobs))


def _sweep_job(args, m, nu, B, T, rep):
    seed = args.seed_base + rep
    row = {"structure": normalize_structure(args.structure), "m": m, "d": args.d, "nu": nu, "B": B,
           "T": T, "algo": _algo(args.algo), "replication": rep, "seed": seed}
    try:
        net = _generate(args, seed, m, nu, B)
        trace = run(net, _config(args, T, seed))
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return dict(row, status="error", R_T=None, simple_regret=None, Sigma_hat=None,
                    error=f"{type(exc).__name__}: {exc}")
    S = trace.sigma_array
    sig = None if not S.size or np.all(np.isnan(S)) else float(np.nansum(S, axis=0).max())
    return dict(row, status="incomplete" if trace.incomplete else "ok", R_T=trace.R_T,
                simple_regret=trace.simple_regret, Sigma_hat=sig, error=trace.error)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return _num(v)
    return str(v)


def cmd_sweep(args) -> int:
    cells = [(m, nu, B, T) for m in args.m for nu in args.nu for B in args.B for T in args.T]
    jobs = [(c, rep) for c in cells for rep in range(args.replications)]
    with ThreadPoolExecutor(max_workers=worker_count(len(jobs))) as pool:
        rows = list(pool.map(lambda job: _sweep_job(args, *job[0], job[1]), jobs))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        w.writerows([[_cell(r[k]) for k in SWEEP_HEADER] for r in rows])
    medians = []
    for k, (m, nu, B, T) in enumerate(cells):
        group = rows[k * args.replications:(k + 1) * args.replications]
        ok = [r for r in group if r["status"] == "ok" and r["simple_regret"] is not None]
        med_r = float(np.median([r["simple_regret"] for r in ok])) if ok else None
        med_R = float(np.median([r["R_T"] for r in ok])) if ok else None
        medians.append([group[0]["structure"], m, args.d, nu, B, T, group[0]["algo"], len(group), len(ok),
                        med_r, med_R])
    med_path = out.with_name(out.stem + ".medians.csv")
    with open(med_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEDIAN_HEADER)
        w.writerows([[_cell(v) for v in r] for r in medians])
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} runs ({failed} not ok) written to {out} and {med_path}")
    return EXIT_OK


# parser -----------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_network_args(p):
    p.add_argument("--structure", choices=sorted(set(STRUCTURES)), default="chain")
    p.add_argument("--d", type=_positive_int, default=1, help="input dimension")
    p.add_argument("--inner-dim", type=_positive_int, default=2,
                   help="width of intermediate layers (multi and ffn)")
    p.add_argument("--lengthscale", type=float, default=0.2)


def _add_run_args(p):
    p.add_argument("--algo", default="gpn-ucb",
                   choices=[a.replace("_", "-") for a in ALGORITHMS] + [a for a in ALGORITHMS if "_" in a])
    p.add_argument("--candidate-grid", type=_positive_int, default=None)
    p.add_argument("--region-grid", type=_positive_int, default=64)
    p.add_argument("--envelope", choices=["anchored", "plain"], default="anchored")
    p.add_argument("--jitter", type=float, default=1e-10)
    p.add_argument("--inflate-B", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascade-bandits", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a random network instance")
    _add_network_args(g)
    g.add_argument("--m", type=_positive_int, default=2, help="number of layers")
    g.add_argument("--nu", type=float, default=1.5)
    g.add_argument("--B", type=float, default=3.0)
    g.add_argument("--n-centers", type=_positive_int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    h = sub.add_parser("hard", help="build a bump-and-needle hard instance or family")
    _add_network_args(h)
    h.add_argument("--m", type=_positive_int, default=2)
    h.add_argument("--epsilon", type=float, required=True)
    h.add_argument("--nu", type=float, default=1.5)
    h.add_argument("--B", type=float, default=5.0)
    h.add_argument("--family", action="store_true", help="write all shifted copies plus a manifest")
    h.add_argument("--out", required=True, help="instance file, or directory with --family")
    h.set_defaults(func=cmd_hard)

    r = sub.add_parser("run", help="run an algorithm on an instance file")
    r.add_argument("--instance", required=True)
    _add_run_args(r)
    r.add_argument("--T", type=_positive_int, default=100)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out-dir", required=True)
    r.add_argument("--timing", action="store_true", help="record wall-clock times (not reproducible)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("--suite", choices=sorted(SUITES) + ["all"], required=True)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--details", action="store_true", help="include per-suite diagnostics")
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="grid of generated instances x replications")
    _add_network_args(s)
    _add_run_args(s)
    s.add_argument("--m", type=_positive_int, nargs="+", default=[2])
    s.add_argument("--nu", type=float, nargs="+", default=[1.5])
    s.add_argument("--B", type=float, nargs="+", default=[3.0])
    s.add_argument("--T", type=_positive_int, nargs="+", required=True)
    s.add_argument("--n-centers", type=_positive_int, default=8)
    s.add_argument("--replications", type=_positive_int, default=1)
    s.add_argument("--seed-base", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        # checked first: LinAlgError is also a ValueError
        print(f"cascade-bandits {args.command}: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError) as exc:
        print(f"cascade-bandits {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
