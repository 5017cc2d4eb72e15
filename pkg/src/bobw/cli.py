"""Command-line client for the experiment harness.

Subcommands: ``run`` (one experiment), ``sweep`` (grid over gap /
corruption budget / horizon), ``check`` (invariant audits), ``fit``
(slope fits + verdict for an existing results CSV), and ``serve``
(start the HTTP service).  Configs are JSON documents mirroring
``ExperimentConfig``, given either as a path or inline JSON.

Everything runs in-process by default; pass ``--server URL`` to send
the request to a running service instead (the CSV still lands on the
client side when ``--output`` is given).
"""

from __future__ import annotations

import argparse
import json
import sys

from .checks import check_invariants
from .harness import (
    ExperimentConfig,
    config_from_json,
    csv_text,
    fit_csv,
    run_experiment,
    run_sweep,
    stochastic_verdict,
)

__all__ = ["main"]


def _config_dict(arg: str) -> dict:
    text = arg
    if not arg.lstrip().startswith("{"):
        with open(arg, "r", encoding="utf-8") as fh:
            text = fh.read()
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("config JSON must be an object")
    return data


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _print_summary(ts, mean_regret, final_candidates=None, verdict=None):
    print(f"{'t':>8}  {'mean pseudo-regret':>20}")
    for t, r in zip(ts, mean_regret):
        print(f"{int(t):>8}  {float(r):>20.4f}")
    if final_candidates is not None:
        print(f"final candidates: {[int(c) for c in final_candidates]}")
    if verdict is not None:
        print(f"stochastic verdict: {'pass' if verdict else 'fail'}")


def _post(server, path, payload):
    import httpx

    resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=None)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise RuntimeError(f"server error {resp.status_code}: {detail}")
    return resp.json()


def _local_verdict(result):
    try:
        return stochastic_verdict(result.ts, result.mean_curve()).passed
    except ValueError:
        return None


def cmd_run(args):
    data = _config_dict(args.config)
    if args.output:
        data["output"] = args.output
    if args.server:
        output = data.pop("output", None)
        body = {"config": data, "include_csv": output is not None}
        reply = _post(args.server, "/run", body)
        summary = reply["summary"]
        if output:
            with open(output, "w", newline="") as fh:
                fh.write(reply["csv"])
            print(f"wrote {output}")
        _print_summary(summary["ts"], summary["mean_regret"],
                       summary["final_candidates"],
                       summary["stochastic_verdict"])
        return 0
    config = ExperimentConfig(**data)
    result = run_experiment(config)
    if config.output:
        print(f"wrote {config.output}")
    _print_summary(result.ts, result.mean_curve(), result.final_candidates,
                   _local_verdict(result))
    return 0


def cmd_sweep(args):
    data = _config_dict(args.config)
    if args.server:
        data.pop("output", None)
        body = {"config": data, "deltas": args.deltas,
                "budgets": args.budgets, "horizons": args.horizons}
        reply = _post(args.server, "/sweep", body)
        for entry in reply["runs"]:
            s = entry["summary"]
            print(f"{entry['label']}: final mean regret "
                  f"{s['mean_regret'][-1]:.4f}")
        return 0
    config = ExperimentConfig(**data)
    for label, result in run_sweep(config, deltas=args.deltas,
                                   budgets=args.budgets,
                                   horizons=args.horizons):
        print(f"{label}: final mean regret {result.mean_curve()[-1]:.4f}")
    return 0


def cmd_check(args):
    options = json.loads(args.options) if args.options else {}
    if args.server:
        reply = _post(args.server, "/check",
                      {"scope": args.scope, "options": options})
        ok = reply["passed"]
        for r in reply["results"]:
            status = "PASS" if r["passed"] else "FAIL"
            print(f"[{status}] {r['name']}: {r['detail']}")
            if r.get("counterexample"):
                print(f"       counterexample: {r['counterexample']}")
        return 0 if ok else 2
    results = check_invariants(scope=args.scope, **options)
    for r in results:
        print(r)
    return 0 if all(r.passed for r in results) else 2


def cmd_fit(args):
    if args.server:
        with open(args.csv, "r", newline="") as fh:
            reply = _post(args.server, "/fit", {"csv": fh.read()})
        print(json.dumps(reply, indent=2))
        return 0
    print(json.dumps(fit_csv(args.csv), indent=2))
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bobw", description="best-of-both-worlds bandit simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config", help="path to a JSON config, or inline JSON")
    p.add_argument("--output", help="write the results CSV here")
    p.add_argument("--server", help="send to a running service instead")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="grid sweep over gap/corruption/horizon")
    p.add_argument("config", help="base JSON config (path or inline)")
    p.add_argument("--deltas", type=_float_list, default=None)
    p.add_argument("--budgets", type=_float_list, default=None)
    p.add_argument("--horizons", type=_int_list, default=None)
    p.add_argument("--server", help="send to a running service instead")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("check", help="run invariant audits")
    p.add_argument("scope", nargs="?", default=None,
                   help="unbiasedness | stability | feasibility | graphs")
    p.add_argument("--options", help="JSON dict of audit options")
    p.add_argument("--server", help="send to a running service instead")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("fit", help="fit curves in an existing results CSV")
    p.add_argument("csv", help="results CSV produced by run")
    p.add_argument("--server", help="send to a running service instead")
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
