"""Command-line interface.

Subcommands: ``run`` (one config, all replications), ``sweep`` (figure
reproduction from a JSON spec), ``oracle`` (first-passage moment
tables), ``calibrate-sat`` (age-threshold pilot sweep) and ``bench``
(jit vs numpy kernel timing).  Exit codes: 0 success, 1 configuration
error, 2 acceptance-guard failure (e.g. capped oracle paths), 3 I/O
error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .harness import (CSV_COLUMNS, REFERENCE_COLUMNS, ORACLE_COLUMNS,
                      ConfigError, SimConfig, SweepSpec, aggregate_rows,
                      calibrate_sat, default_outdir, oracle_rows,
                      run_replications, run_sweep, write_metadata)
from .oracle import (CAPPED_FRACTION_LIMIT, brownian_hitting_moments,
                     random_walk_hitting_moments)
from .policies import PolicyConfig, PolicyKind

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_GUARD = 2
EXIT_IO = 3


def _policy_from_args(args, base: PolicyConfig | None) -> PolicyConfig:
    kind = PolicyKind(args.policy) if args.policy else (base.kind if base else PolicyKind.EBT)
    beta = args.beta if args.beta is not None else (base.beta if base and base.kind == kind else None)
    gamma = args.gamma if args.gamma is not None else (base.gamma if base and base.kind == kind else None)
    p = args.p if args.p is not None else (base.p if base and base.kind == kind else None)
    return PolicyConfig(kind=kind, beta=beta, gamma=gamma, p=p)


def _config_from_args(args) -> SimConfig:
    if args.config:
        cfg = SimConfig.from_json(Path(args.config).read_text())
    else:
        cfg = SimConfig()
    overrides = {}
    for name in ("m", "slots", "sigma2", "epsilon", "seed", "replications",
                 "burn_in", "output"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    policy = _policy_from_args(args, cfg.policy)
    d = cfg.to_dict()
    d.update(overrides)
    d["policy"] = {"kind": policy.kind.value, "beta": policy.beta,
                   "gamma": policy.gamma, "p": policy.p}
    return SimConfig.from_dict(d)


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    started = time.time()
    outs = run_replications(cfg, threads=args.threads)
    lines = [",".join(CSV_COLUMNS + REFERENCE_COLUMNS)]
    from .harness import row_cells
    for out in outs:
        lines.append(",".join(row_cells(out)))
    for row in aggregate_rows(outs):
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if cfg.output:
        path = default_outdir() / cfg.output
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
            write_metadata(path.with_suffix(path.suffix + ".meta.json"),
                           {"config": cfg.to_dict(),
                            "wall_time_s": time.time() - started})
        except OSError as exc:
            print(f"error: cannot write {path}: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"wrote {path}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    try:
        spec = SweepSpec.from_dict(json.loads(Path(args.spec).read_text()))
    except OSError as exc:
        print(f"error: cannot read spec: {exc}", file=sys.stderr)
        return EXIT_IO
    out = Path(args.output) if args.output else default_outdir() / "sweep.csv"
    progress = None
    if args.verbose:
        def progress(done, total):
            print(f"\r{done}/{total} replications", end="", file=sys.stderr)
    try:
        path = run_sweep(spec, out, threads=args.threads, progress=progress)
    except IOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.verbose:
        print("", file=sys.stderr)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    try:
        if args.kind == "brownian":
            mom = brownian_hitting_moments(args.a, args.dt, args.paths,
                                           seed=args.seed, max_steps=args.max_steps,
                                           check_cap=False)
            row = oracle_rows("brownian", mom, args.a, 1.0, args.dt)
        else:
            mom = random_walk_hitting_moments(args.beta, args.sigma, args.paths,
                                              seed=args.seed, max_steps=args.max_steps,
                                              check_cap=False)
            row = oracle_rows("walk", mom, args.beta, args.sigma, 1.0)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(",".join(ORACLE_COLUMNS))
    print(",".join(row))
    if mom.capped_fraction > CAPPED_FRACTION_LIMIT:
        print(f"error: capped path fraction {mom.capped_fraction:.3g} exceeds "
              f"{CAPPED_FRACTION_LIMIT:g}", file=sys.stderr)
        return EXIT_GUARD
    return EXIT_OK


def _cmd_calibrate_sat(args) -> int:
    gamma = calibrate_sat(args.m, args.epsilon, args.seed,
                          pilot_slots=args.pilot_slots)
    print(gamma)
    return EXIT_OK


def _cmd_bench(args) -> int:
    import numpy as np
    from .harness import _run_kernel
    from . import _kernels as K

    if not K.HAVE_NUMBA:
        print("numba unavailable or disabled; timing numpy fallback only")
    else:
        # warm the jit cache before timing
        _run_kernel(PolicyConfig(PolicyKind.EBT, beta=float(np.sqrt(np.e * 16))),
                    16, 64, 1.0, 0.0, 1)
    results = {}
    for label, flag in (("jit", True), ("numpy", False)):
        if flag and not K.HAVE_NUMBA:
            continue
        orig_numba = K.HAVE_NUMBA
        K.HAVE_NUMBA = flag and orig_numba
        t0 = time.perf_counter()
        report, _ = _run_kernel(PolicyConfig(PolicyKind.EBT,
                                             beta=float(np.sqrt(np.e * args.m))),
                                args.m, args.slots, 1.0, 0.0, 12345)
        dt = time.perf_counter() - t0
        K.HAVE_NUMBA = orig_numba
        results[label] = (dt, report.naee)
        rate = args.m * args.slots / dt / 1e6
        print(f"{label:>6}: {dt:8.3f} s  ({rate:7.1f} M node-slots/s)  naee={report.naee:.6f}")
    if len(results) == 2:
        print(f"speedup: {results['numpy'][0] / results['jit'][0]:.1f}x")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="racsim",
                                 description="random-access sampling and remote "
                                             "estimation simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configuration")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--m", type=int)
    run.add_argument("--slots", type=int, help="horizon in slots")
    run.add_argument("--sigma2", type=float)
    run.add_argument("--epsilon", type=float)
    run.add_argument("--policy", choices=[k.value for k in PolicyKind])
    run.add_argument("--beta", type=float)
    run.add_argument("--gamma", type=int)
    run.add_argument("--p", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--replications", type=int)
    run.add_argument("--burn-in", dest="burn_in", type=int)
    run.add_argument("--output", help="CSV path (default: stdout)")
    run.add_argument("--threads", type=int, default=1)
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="run a sweep spec")
    sweep.add_argument("--spec", required=True, help="JSON sweep spec")
    sweep.add_argument("--output")
    sweep.add_argument("--threads", type=int, default=1)
    sweep.add_argument("--verbose", action="store_true")
    sweep.set_defaults(func=_cmd_sweep)

    oracle = sub.add_parser("oracle", help="first-passage moment tables")
    okind = oracle.add_subparsers(dest="kind", required=True)
    ob = okind.add_parser("brownian")
    ob.add_argument("--a", type=float, required=True)
    ob.add_argument("--dt", type=float, required=True)
    ob.add_argument("--paths", type=int, required=True)
    ob.add_argument("--seed", type=int, default=1)
    ob.add_argument("--max-steps", dest="max_steps", type=int)
    ob.set_defaults(func=_cmd_oracle)
    ow = okind.add_parser("walk")
    ow.add_argument("--beta", type=float, required=True)
    ow.add_argument("--sigma", type=float, default=1.0)
    ow.add_argument("--paths", type=int, required=True)
    ow.add_argument("--seed", type=int, default=1)
    ow.add_argument("--max-steps", dest="max_steps", type=int)
    ow.set_defaults(func=_cmd_oracle)

    cal = sub.add_parser("calibrate-sat", help="pilot-calibrate the age threshold")
    cal.add_argument("--m", type=int, required=True)
    cal.add_argument("--epsilon", type=float, default=0.0)
    cal.add_argument("--seed", type=int, default=20240811)
    cal.add_argument("--pilot-slots", dest="pilot_slots", type=int, default=150_000)
    cal.set_defaults(func=_cmd_calibrate_sat)

    bench = sub.add_parser("bench", help="compare jit and numpy kernels")
    bench.add_argument("--m", type=int, default=200)
    bench.add_argument("--slots", type=int, default=100_000)
    bench.set_defaults(func=_cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
