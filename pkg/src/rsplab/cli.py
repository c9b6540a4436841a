"""Command-line experiment runner.

Results go to ``--out`` (or stdout) in the requested format; a sidecar
``<out>.meta.json`` records the configuration, wall time and library
version so that the result file itself is byte-identical across runs with
the same configuration and seed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, protocols, randomize, tradeoff, typicality
from .sampling import haar_state, make_rng

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _fmt(x):
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(round(x, 12))
    return x


def _emit(rows, fmt: str, fh, fields=None):
    if fmt == "json":
        fh.write(json.dumps(rows, sort_keys=True, indent=2, default=_json_default) + "\n")
    elif fmt == "jsonl":
        for r in rows if isinstance(rows, list) else [rows]:
            fh.write(json.dumps(r, sort_keys=True, default=_json_default) + "\n")
    else:
        rows = rows if isinstance(rows, list) else [rows]
        fields = fields or list(rows[0].keys())
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in fields})


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _sanitize(obj):
    """Replace infinities so that the JSON output stays standard."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_sanitize(v) for v in obj]
    return obj


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read {path}: {e}") from None


def _load_ensemble(path):
    try:
        return tradeoff.ensemble_from_json(_load_json(path))
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"malformed ensemble file {path}: {e}") from None


# --------------------------------------------------------------------------
# subcommands


def cmd_randomize(args):
    rng = make_rng(args.seed, 1)
    if args.mode == "weyl":
        uset = randomize.weyl_set(args.D)
        rep = randomize.verify_randomizing(uset, probes=args.probes, restarts=args.restarts, rng=rng,
                                           eps=args.eps)
        exact = float(np.max(np.abs(uset.twirl(np.diag([1.0] + [0.0] * (args.D - 1))) - np.eye(args.D) / args.D)))
        out = {"mode": "weyl", "D": args.D, "K": uset.K, "dev_max": rep.dev_max, "threshold": rep.threshold,
               "pass": bool(rep.dev_max <= 1e-10), "twirl_error": exact}
    else:
        if args.eps is None:
            raise UsageError("--eps is required for haar mode")
        try:
            uset, rep = randomize.build_randomizing_set(args.D, args.eps, args.seed, max_retries=args.retries,
                                                        probes=args.probes, restarts=args.restarts, K=args.K)
            out = {"mode": "haar", "D": args.D, "epsilon": args.eps, "K": uset.K, "dev_max": rep.dev_max,
                   "threshold": rep.threshold, "pass": bool(rep.passed), "heuristic": True,
                   "attempt": uset.provenance.get("stream", 0)}
        except randomize.RandomizerError as e:
            out = {"mode": "haar", "D": args.D, "epsilon": args.eps,
                   "K": args.K or randomize.randomizing_set_size(args.D, args.eps), "pass": False, "error": str(e)}
    return out, (EXIT_OK if out["pass"] else EXIT_VERIFY)


def _target_state(args, rng):
    if args.state == "random":
        return haar_state(args.D, rng)
    if args.state == "zero":
        return np.eye(args.D)[0]
    if args.state == "plus":
        return np.ones(args.D) / math.sqrt(args.D)
    raise UsageError(f"unknown state {args.state!r}")


def cmd_rsp(args):
    rng = make_rng(args.seed, 2)
    psi = _target_state(args, rng)
    if args.protocol in ("pi", "pi-teleport"):
        if args.set == "weyl":
            uset = randomize.weyl_set(args.D)
        else:
            if args.eps is None:
                raise UsageError("--eps is required with --set haar")
            K = args.K or randomize.randomizing_set_size(args.D, args.eps)
            uset = randomize.haar_set(args.D, K, args.eps, args.seed, stream=0)
        if args.protocol == "pi":
            res = protocols.run_protocol_pi_batch(psi, uset, args.trials, rng)
            transcripts = res.transcripts
        else:
            ts = [protocols.run_pi_deterministic(psi, uset, r) for r in rng.spawn(args.trials)]
            return _rsp_from_transcripts("pi+teleport", args, ts, uset)
    elif args.protocol == "column":
        K = args.K or 3
        res = protocols.column_method_batch(psi, args.D, K, args.trials, rng)
        transcripts = lambda: protocols._column_transcripts(res)  # noqa: E731
    elif args.protocol == "net":
        eps_p = args.eps_prime
        net = protocols.net_for_fidelity(args.D, eps_p, make_rng(args.seed, 3))
        states = haar_state(args.D, rng, size=args.trials) if args.state == "random" else \
            np.repeat(psi[None], args.trials, axis=0)
        res = protocols.net_only_batch(states, net, eps_p)
        transcripts = res.transcripts
    else:
        raise UsageError(f"unknown protocol {args.protocol!r}")
    if args.format == "jsonl":
        return [t.to_json() for t in transcripts()], EXIT_OK
    return res.summary_row(), EXIT_OK


def _rsp_from_transcripts(name, args, ts, uset):
    if args.format == "jsonl":
        return [t.to_json() for t in ts], EXIT_OK
    fid = float(np.mean([t.fidelity_to_target for t in ts]))
    rate = float(np.mean([t.success for t in ts]))
    row = {"protocol": name, "D": args.D, "params": json.dumps({"K": uset.K, "epsilon": uset.epsilon}),
           "success_rate": rate, "sigma": math.sqrt(rate * (1 - rate) / len(ts)), "mean_fidelity": fid,
           "cbits": ts[0].cbits_sent, "ebits": ts[0].ebits_consumed,
           "expected_cbits": ts[0].extra["expected_cbits"]}
    return row, EXIT_OK


def cmd_tradeoff(args):
    ens = _load_ensemble(args.ensemble)
    kind = tradeoff.canonical_kind(args.kind)
    params = tradeoff.SolverParams(starts=args.starts, seed=args.seed)
    rs = np.linspace(args.r_min, args.r_max, args.steps)
    pts = tradeoff.curve_sweep(ens, kind, rs, params, threads=args.threads)
    rows, chans = [], []
    for p in pts:
        row = {"R": float(p.R), "value": float(p.value), "channel_hash": p.channel.digest() if p.channel else ""}
        if args.oracle:
            row["oracle"] = tradeoff.brute_force_oracle(ens, float(p.R), kind, args.grid_step)
        if args.qct_to_rsp:
            if kind != "Q_star":
                raise UsageError("--qct-to-rsp needs --kind qct")
            r2, q2 = tradeoff.qct_to_rsp((p.R, p.value))
            row["R_rsp"], row["E_rsp"] = r2, q2
        rows.append(row)
        chans.append({"R": float(p.R), "hash": row["channel_hash"],
                      "matrix": p.channel.matrix.tolist() if p.channel else None})
    if args.out:
        Path(str(args.out) + ".channels.json").write_text(json.dumps(_sanitize(chans), sort_keys=True, indent=1) + "\n")
    return rows, EXIT_OK


def cmd_entangled(args):
    ens = _load_ensemble(args.ensemble)
    if isinstance(ens, tradeoff.Ensemble):
        ens = tradeoff.as_bipartite(ens)
    ends = tradeoff.entangled_endpoints(ens)
    rng = make_rng(args.seed, 4)
    letters_all = rng.choice(ens.m, size=(args.trials, args.n), p=ens.probs)
    succ, fids, aborts = 0, [], 0
    cb = eb = 0.0
    for letters in letters_all:
        t = protocols.entangled_rsp_round(letters, ens, args.delta, args.eps, rng, K=args.K)
        cb, eb = max(cb, t.cbits_sent), max(eb, t.ebits_consumed)
        if t.message == protocols.ABORT:
            aborts += 1
        elif t.success:
            succ += 1
            fids.append(t.fidelity_to_target)
    out = {**ends, "n": args.n, "delta": args.delta, "epsilon": args.eps, "trials": args.trials,
           "success_rate": succ / args.trials, "abort_rate": aborts / args.trials,
           "mean_fidelity_success": float(np.mean(fids)) if fids else math.nan,
           "cbits_per_letter": cb / args.n, "ebits_per_letter": eb / args.n}
    return out, EXIT_OK


def cmd_typicality(args):
    try:
        vals = [float(x) for x in args.rho.split(",")]
    except ValueError:
        raise UsageError("--rho takes comma-separated eigenvalues") from None
    rho = np.diag(vals)
    rows = []
    for n in range(1, args.n_max + 1):
        b = typicality.typical_bounds(rho, n, args.delta, args.eps)
        rows.append({"n": n, "rank": b.rank, "probability": b.probability, "upper": b.upper, "lower": b.lower,
                     "prob_ok": b.prob_ok, "upper_ok": b.upper_ok, "lower_ok": b.lower_ok})
    thr = typicality.typicality_threshold(rho, args.delta, args.eps, args.n_max)
    for r in rows:
        r["threshold"] = -1 if thr is None else thr
    return rows, EXIT_OK


def cmd_verify_all(args):
    """Fast smoke run of the main checks; exit 2 if any fails."""
    rng = make_rng(args.seed, 5)
    checks = {}
    for D in (2, 4):
        res = protocols.run_protocol_pi_batch(haar_state(D, rng), randomize.weyl_set(D), 500, rng)
        checks[f"pi_weyl_D{D}"] = bool(res.success.all() and res.trace_distances.max() <= 1e-9)
    res = protocols.column_method_batch(haar_state(2, rng), 2, 3, 4000, rng)
    exp = 1 - 0.125
    checks["column_D2_K3"] = abs(res.success_rate - exp) <= 4 * math.sqrt(exp * (1 - exp) / 4000)
    ens = tradeoff.Ensemble([0.5, 0.5], [[1, 0], [1 / math.sqrt(2), 1 / math.sqrt(2)]])
    sp = tradeoff.SolverParams(starts=8, seed=args.seed)
    for r in (0.7, 0.9):
        s = tradeoff.solve_curve(ens, r, "E_star", sp).value
        o = tradeoff.brute_force_oracle(ens, r, "E_star", 0.05)
        checks[f"tradeoff_R{r}"] = s <= o + 1e-9 and o - s <= 0.3
    for n in range(1, 9):
        for t in typicality.all_types(3, n):
            if not all(typicality.type_class_sandwich(t)):
                checks["type_sandwich"] = False
    checks.setdefault("type_sandwich", True)
    checks["causality"] = math.isclose(tradeoff.causality_bound(4, 0.9), 2 + math.log2(0.9), abs_tol=1e-12)
    out = [{"check": k, "pass": bool(v)} for k, v in checks.items()]
    return out, (EXIT_OK if all(checks.values()) else EXIT_VERIFY)


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, required=True, help="master seed (required)")
    common.add_argument("--out", type=Path, default=None, help="output file (default stdout)")
    common.add_argument("--format", choices=("json", "csv", "jsonl"), default=None)
    common.add_argument("--threads", type=int, default=1)

    p = _Parser(prog="rsplab", description="Remote state preparation experiments.")
    p.add_argument("--version", action="version", version=f"rsplab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("randomize", parents=[common], help="build and verify a randomizing unitary set")
    r.add_argument("--D", type=int, required=True)
    r.add_argument("--eps", type=float, default=None)
    r.add_argument("--mode", choices=("haar", "weyl"), default="haar")
    r.add_argument("--K", type=int, default=None, help="override the set size")
    r.add_argument("--probes", type=int, default=2000)
    r.add_argument("--restarts", type=int, default=16)
    r.add_argument("--retries", type=int, default=3)
    r.set_defaults(func=cmd_randomize, default_format="json")

    s = sub.add_parser("rsp", parents=[common], help="run a batch of protocol transcripts")
    s.add_argument("--protocol", choices=("pi", "pi-teleport", "column", "net"), required=True)
    s.add_argument("--D", type=int, required=True)
    s.add_argument("--set", choices=("weyl", "haar"), default="weyl")
    s.add_argument("--eps", type=float, default=None)
    s.add_argument("--K", type=int, default=None)
    s.add_argument("--eps-prime", type=float, default=0.06)
    s.add_argument("--state", choices=("random", "zero", "plus"), default="random")
    s.add_argument("--trials", type=int, default=1000)
    s.set_defaults(func=cmd_rsp, default_format="csv")

    t = sub.add_parser("tradeoff", parents=[common], help="sweep a trade-off curve")
    t.add_argument("--ensemble", required=True)
    t.add_argument("--kind", choices=("qct", "rsp", "entangled"), required=True)
    t.add_argument("--r-min", type=float, default=0.0)
    t.add_argument("--r-max", type=float, default=1.0)
    t.add_argument("--steps", type=int, default=20)
    t.add_argument("--grid-step", type=float, default=0.05)
    t.add_argument("--starts", type=int, default=32)
    t.add_argument("--oracle", action="store_true")
    t.add_argument("--qct-to-rsp", action="store_true")
    t.set_defaults(func=cmd_tradeoff, default_format="csv")

    e = sub.add_parser("entangled", parents=[common], help="entangled-ensemble rounds and curve endpoints")
    e.add_argument("--ensemble", required=True)
    e.add_argument("--n", type=int, default=2)
    e.add_argument("--delta", type=float, default=0.5)
    e.add_argument("--eps", type=float, default=0.2)
    e.add_argument("--K", type=int, default=None)
    e.add_argument("--trials", type=int, default=20)
    e.set_defaults(func=cmd_entangled, default_format="json")

    y = sub.add_parser("typicality", parents=[common], help="typical-projector bounds and thresholds")
    y.add_argument("--rho", default="0.75,0.25")
    y.add_argument("--n-max", type=int, default=10)
    y.add_argument("--delta", type=float, default=0.2)
    y.add_argument("--eps", type=float, default=0.2)
    y.set_defaults(func=cmd_typicality, default_format="csv")

    v = sub.add_parser("verify-all", parents=[common], help="quick end-to-end self-check")
    v.set_defaults(func=cmd_verify_all, default_format="json")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    args.format = args.format or args.default_format
    if args.threads < 1:
        sys.stderr.write("rsplab: error: --threads must be >= 1\n")
        return EXIT_USAGE
    t0 = time.perf_counter()
    try:
        result, code = args.func(args)
    except UsageError as e:
        sys.stderr.write(f"rsplab: error: {e}\n")
        return EXIT_USAGE
    except (typicality.BudgetExceeded, tradeoff.OracleBudgetExceeded) as e:
        sys.stderr.write(f"rsplab: budget exceeded: {e}\n")
        return EXIT_BUDGET
    except ValueError as e:
        sys.stderr.write(f"rsplab: error: {e}\n")
        return EXIT_USAGE
    buf = io.StringIO()
    _emit(_sanitize(result), args.format, buf)
    if args.out is None:
        sys.stdout.write(buf.getvalue())
    else:
        args.out.write_text(buf.getvalue())
        config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
                  if k not in ("func", "default_format")}
        meta = {"config": config, "wall_time_s": time.perf_counter() - t0, "version": __version__,
                "exit_code": code}
        Path(str(args.out) + ".meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
