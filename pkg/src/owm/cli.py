"""Command-line front door.

A thin client over the HTTP service: every subcommand builds one request,
sends it to the FastAPI app (in-process by default, or a remote ``--server``
URL), and formats the response.  Exit codes: 0 success, 1 failed verify
verdicts, 2 input errors.  The default seed comes from the OWM_SEED
environment variable when ``--seed`` is not given.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import List, Optional

import httpx


class InProcessTransport(httpx.BaseTransport):
    """Synchronous bridge to the ASGI app for the default in-process client."""

    def __init__(self, app):
        self._app = app

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        import asyncio

        async def call():
            transport = httpx.ASGITransport(app=self._app)
            try:
                response = await transport.handle_async_request(request)
                await response.aread()
                return response
            finally:
                await transport.aclose()

        response = asyncio.run(call())
        return httpx.Response(status_code=response.status_code,
                              headers=response.headers,
                              content=response.content)


def make_client(server: Optional[str] = None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from .service import create_app

    return httpx.Client(transport=InProcessTransport(create_app()),
                        base_url="http://owm.internal", timeout=None)


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise CliError(f"{path}: {detail}")
    return resp.json()


class CliError(Exception):
    pass


def _emit(text: str, output: Optional[str]):
    if output:
        with open(output, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _default_seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    return int(os.environ.get("OWM_SEED", "0"))


FAMILY_NAMES = ("staged", "iid", "budget-block", "budget-staged", "budget-iid")


def _family_payload(args, seed: int) -> dict:
    return {"family": args.target, "k": args.k, "n": args.n, "s": args.s,
            "t": args.t, "draws": args.draws, "seed": seed}


def cmd_gen(client: httpx.Client, args) -> int:
    seed = _default_seed(args.seed)
    payload = {"family": args.family, "k": args.k, "n": args.n, "s": args.s,
               "t": args.t, "draws": args.draws, "seed": seed}
    data = _post(client, "/instances/generate", payload)
    _emit(json.dumps(data, indent=2, sort_keys=True), args.output)
    return 0


def cmd_run(client: httpx.Client, args) -> int:
    seed = _default_seed(args.seed)
    payload = {"policy": args.policy, "seed": seed,
               "include_steps": args.steps or args.format == "csv"}
    if args.target in FAMILY_NAMES:
        payload.update({"family": args.target, "k": args.k, "n": args.n,
                        "s": args.s, "t": args.t, "draws": args.draws})
    else:
        if not os.path.exists(args.target):
            raise CliError(f"no such instance file: {args.target}")
        with open(args.target) as fh:
            payload["instance"] = json.load(fh)
    data = _post(client, "/runs/execute", payload)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["step", "item", "agent", "gain", "welfare"])
        for s in data.get("steps") or []:
            writer.writerow([s["step"], s["item"],
                             "" if s["agent"] is None else s["agent"],
                             s["gain"], s["welfare"]])
        _emit(buf.getvalue().rstrip("\n"), args.output)
    else:
        _emit(json.dumps(data, indent=2, sort_keys=True), args.output)
    return 0


def cmd_lp(client: httpx.Client, args) -> int:
    seed = _default_seed(args.seed)
    payload = {"target": args.target, "t": args.t, "seed": seed,
               "export": bool(args.export)}
    if args.target == "instance":
        if not args.instance or not os.path.exists(args.instance):
            raise CliError("lp instance needs an existing instance file")
        with open(args.instance) as fh:
            payload["instance"] = json.load(fh)
    data = _post(client, "/lp/solve", payload)
    if args.export:
        with open(args.export, "w") as fh:
            fh.write(data["export_text"])
    if args.format == "json":
        data.pop("export_text", None)
        _emit(json.dumps(data, indent=2, sort_keys=True), args.output)
    else:
        _emit(f"{data['value']:.9g}", args.output)
    return 0


def cmd_bounds(client: httpx.Client, args) -> int:
    if args.bound == "staged-integral":
        data = _post(client, "/bounds/staged-integral", {"t": args.t})
        if args.format == "json":
            _emit(json.dumps(data, indent=2, sort_keys=True), args.output)
        else:
            _emit(f"per-stage integral: {data['integral_value']:.9f}\n"
                  f"quadrature:         {data['integral_quadrature']:.9f}\n"
                  f"ratio:              {data['ratio']:.6f}\n"
                  f"< 0.612: {'true' if data['below_0612'] else 'false'}\n"
                  f"discrete sum at t={data['t']}: {data['discrete_sum']:.4f} "
                  f"(per pair {data['pair_discrete_sum']:.4f})", args.output)
        return 0

    if args.bound == "harmonic":
        if args.all_stages:
            rows = [["j", "bound", "exact_sum"]]
            for j in range(0, args.t):
                d = _post(client, "/bounds/harmonic",
                          {"m": args.m, "t": args.t, "j": j})
                rows.append([j, d["bound"], d["exact_sum"]])
            buf = io.StringIO()
            csv.writer(buf).writerows(rows)
            _emit(buf.getvalue().rstrip("\n"), args.output)
            return 0
        data = _post(client, "/bounds/harmonic",
                     {"m": args.m, "t": args.t, "j": args.j})
        _emit(json.dumps(data, indent=2, sort_keys=True), args.output)
        return 0

    if args.bound == "envelope":
        if args.curve:
            lo, hi, step = (float(x) for x in args.curve.split(":"))
            rows = [["x", "value"]]
            x = lo
            while x <= hi + 1e-12:
                d = _post(client, "/bounds/envelope", {"x": round(x, 12)})
                rows.append([round(x, 12), d["value"]])
                x += step
            buf = io.StringIO()
            csv.writer(buf).writerows(rows)
            _emit(buf.getvalue().rstrip("\n"), args.output)
            return 0
        data = _post(client, "/bounds/envelope", {"x": args.x})
        _emit(f"{data['value']:.9g}", args.output)
        return 0

    # cover
    payload = {"k": args.k, "epsilon": args.epsilon, "c0": args.c0,
               "universe_size": args.universe_size, "ell": args.ell}
    if args.mu is not None:
        payload["mu"] = args.mu
    if args.curve:
        lo, hi, step = (float(x) for x in args.curve.split(":"))
        rows = [["ell", "raw", "smooth", "tangent"]]
        ell = lo
        while ell <= hi + 1e-12:
            payload["ell"] = round(ell, 12)
            d = _post(client, "/bounds/cover", payload)
            rows.append([round(ell, 12), d["raw"], d["smooth"], d["tangent"]])
            ell += step
        buf = io.StringIO()
        csv.writer(buf).writerows(rows)
        _emit(buf.getvalue().rstrip("\n"), args.output)
        return 0
    data = _post(client, "/bounds/cover", payload)
    _emit(json.dumps(data, indent=2, sort_keys=True), args.output)
    return 0


EXPERIMENT_PRESETS = {
    "block": {"family": "budget_block", "policy": "greedy", "trials": 1,
              "baseline": "budget_lp"},
    "budget-staged": {"family": "budget_staged", "policy": "greedy",
                      "trials": 10_000, "t": 100, "baseline": "budget_lp",
                      "claim_checks": ["harmonic", "ceiling"]},
    "harmonic": {"family": "coverage_staged", "policy": "greedy",
                 "trials": 10_000, "k": 3, "n": 3, "s": 2, "t": 10,
                 "baseline": "none", "claim_checks": ["harmonic"]},
    "iid-greedy": {"family": "budget_iid", "policy": "greedy",
                   "trials": 20_000, "draws": 3, "baseline": "stochastic_lp"},
}


def cmd_experiment(client: httpx.Client, args) -> int:
    payload = dict(EXPERIMENT_PRESETS[args.preset])
    seed = _default_seed(args.seed)
    payload["seed"] = seed
    payload["threads"] = args.threads
    for key in ("policy", "trials", "t", "k", "n", "s", "draws", "baseline"):
        val = getattr(args, key, None)
        if val is not None:
            payload[key] = val
    data = _post(client, "/experiments/run", payload)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["trial", "welfare"])
        for i, w in enumerate(data["welfare"]["per_trial"]):
            writer.writerow([i, w])
        _emit(buf.getvalue().rstrip("\n"), args.output)
    elif args.format == "csv-stages":
        if not data.get("per_stage"):
            raise CliError("experiment has no per-stage table")
        ps = data["per_stage"]
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["stage", "items_to_deactivated_mean",
                         "items_to_deactivated_se", "value_of_deactivated_mean"])
        for i in range(len(ps["stage"])):
            writer.writerow([ps["stage"][i], ps["items_to_deactivated_mean"][i],
                             ps["items_to_deactivated_se"][i],
                             ps["value_of_deactivated_mean"][i]])
        _emit(buf.getvalue().rstrip("\n"), args.output)
    else:
        _emit(json.dumps(data, indent=2, sort_keys=True), args.output)
    return 0 if data["all_passed"] else 1


def cmd_verify(client: httpx.Client, args) -> int:
    checks = None if (not args.checks or args.checks == ["all"]) else args.checks
    payload = {"checks": checks, "scale": args.scale,
               "seed": _default_seed(args.seed), "threads": args.threads}
    data = _post(client, "/verify/run", payload)
    if args.format == "json":
        _emit(json.dumps(data, indent=2, sort_keys=True), args.output)
    else:
        lines = []
        for r in data["results"]:
            mark = "PASS" if r["passed"] else "FAIL"
            lines.append(f"[{mark}] {r['name']} ({r['runtime_s']:.2f}s)")
            for v in r["verdicts"]:
                if not v["passed"]:
                    lines.append(f"    failed: {v['name']}: {v['lhs']:.6g} "
                                 f"{v['relation']} {v['rhs']:.6g} "
                                 f"(tolerance {v['tolerance']:.3g})")
            for note in r["notes"]:
                lines.append(f"    note: {note}")
        lines.append("all passed" if data["all_passed"] else "some checks failed")
        _emit("\n".join(lines), args.output)
    return 0 if data["all_passed"] else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="owm",
        description="Online welfare maximization: generate instances, run "
                    "policies, solve LPs, evaluate bounds, verify claims.")
    parser.add_argument("--server", default=None,
                        help="remote service URL (default: in-process app)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("-o", "--output", default=None, help="write output to a file")
        p.add_argument("--seed", type=int, default=None,
                       help="seed (default: OWM_SEED env var or 0)")

    p = sub.add_parser("gen", help="generate an instance as JSON")
    p.add_argument("family", choices=FAMILY_NAMES)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--t", type=int, default=1)
    p.add_argument("--draws", type=int, default=3)
    add_common(p)

    p = sub.add_parser("run", help="run a policy on an instance file or family")
    p.add_argument("target", help="instance JSON path or one of "
                                  f"{', '.join(FAMILY_NAMES)}")
    p.add_argument("--policy", default="greedy",
                   help="greedy | greedy_random_ties | random | bruteforce")
    p.add_argument("--steps", action="store_true", help="include per-step records")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--t", type=int, default=1)
    p.add_argument("--draws", type=int, default=3)
    add_common(p)

    p = sub.add_parser("lp", help="build and solve the budgeted-allocation LP")
    p.add_argument("target", choices=("budget-block", "budget-staged", "instance"))
    p.add_argument("instance", nargs="?", default=None,
                   help="instance JSON path (for target 'instance')")
    p.add_argument("--t", type=int, default=1)
    p.add_argument("--format", choices=("plain", "json"), default="plain")
    p.add_argument("--export", default=None, help="write the LP in plain text")
    add_common(p)

    p = sub.add_parser("bounds", help="evaluate analytic bound curves")
    bsub = p.add_subparsers(dest="bound", required=True)

    b = bsub.add_parser("staged-integral", help="staged ceiling constant")
    b.add_argument("--t", type=int, default=10_000)
    b.add_argument("--format", choices=("text", "json"), default="text")
    add_common(b)

    b = bsub.add_parser("harmonic", help="deactivated-group item bound")
    b.add_argument("--m", type=int, required=True)
    b.add_argument("--t", type=int, required=True)
    b.add_argument("--j", type=int, default=0)
    b.add_argument("--all-stages", action="store_true",
                   help="CSV table over every stage j < t")
    add_common(b)

    b = bsub.add_parser("envelope", help="expected-value envelope")
    b.add_argument("--x", type=float, default=0.0)
    b.add_argument("--curve", default=None, metavar="LO:HI:STEP",
                   help="emit a CSV curve instead of one value")
    add_common(b)

    b = bsub.add_parser("cover", help="few-sets coverage value ceilings")
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--epsilon", type=float, required=True)
    b.add_argument("--c0", type=float, default=2.0)
    b.add_argument("--universe-size", type=int, required=True)
    b.add_argument("--ell", type=float, default=0.0)
    b.add_argument("--mu", type=float, default=None)
    b.add_argument("--curve", default=None, metavar="LO:HI:STEP")
    add_common(b)

    p = sub.add_parser("experiment", help="run a named experiment preset")
    p.add_argument("preset", choices=tuple(EXPERIMENT_PRESETS))
    p.add_argument("--policy", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--t", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--s", type=int, default=None)
    p.add_argument("--draws", type=int, default=None)
    p.add_argument("--baseline", default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=("json", "csv", "csv-stages"), default="json")
    add_common(p)

    p = sub.add_parser("verify", help="run verification checks")
    p.add_argument("checks", nargs="*", default=["all"],
                   help="check names, or 'all'")
    p.add_argument("--scale", choices=("desk", "quick"), default="desk")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=("text", "json"), default="text")
    add_common(p)

    p = sub.add_parser("serve", help="serve the HTTP API with uvicorn")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    try:
        with make_client(args.server) as client:
            if args.command == "gen":
                return cmd_gen(client, args)
            if args.command == "run":
                return cmd_run(client, args)
            if args.command == "lp":
                return cmd_lp(client, args)
            if args.command == "bounds":
                return cmd_bounds(client, args)
            if args.command == "experiment":
                return cmd_experiment(client, args)
            if args.command == "verify":
                return cmd_verify(client, args)
            parser.error(f"unknown command {args.command!r}")
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
