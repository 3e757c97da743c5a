"""Command line client for the dictionary service.

Every subcommand posts to the corresponding /experiments endpoint and
prints the outcome as line-delimited JSON records on stdout.  By default
the service runs in-process; pass --server to target a running instance.
Exit status is 1 when a run finishes but fails its own acceptance check,
2 when the request itself is rejected or the server is unreachable.
"""

from __future__ import annotations

import sys
from contextlib import contextmanager
from fractions import Fraction

import click
import httpx

from .oracle_harness import write_record


def parse_amount(text: str):
    """Accept plain numbers plus 2^10, 2**10, and a/b forms."""
    s = text.strip().replace("**", "^")
    if "/" in s:
        num, _, den = s.partition("/")
        return Fraction(parse_amount(num)) / Fraction(parse_amount(den))
    if "^" in s:
        base, _, exp = s.partition("^")
        b, e = int(base), int(exp)
        return Fraction(1, b ** -e) if e < 0 else b ** e
    try:
        return int(s)
    except ValueError:
        return float(s)


def _plain(value):
    # JSON has no Fraction; integers stay exact, the rest degrades to float
    if isinstance(value, Fraction):
        return value.numerator if value.denominator == 1 else float(value)
    return value


def _int_expr(ctx, param, value):
    if value is None:
        return None
    try:
        amount = _plain(parse_amount(value))
    except (ValueError, ZeroDivisionError):
        raise click.BadParameter(f"cannot parse number {value!r}")
    if not isinstance(amount, int):
        raise click.BadParameter(f"{param.name} must be an integer, got {value!r}")
    return amount


def _num_expr(ctx, param, value):
    if value is None:
        return None
    try:
        return _plain(parse_amount(value))
    except (ValueError, ZeroDivisionError):
        raise click.BadParameter(f"cannot parse number {value!r}")


@contextmanager
def _client(server: str | None):
    if server:
        with httpx.Client(base_url=server, timeout=None) as c:
            yield c
    else:
        from fastapi.testclient import TestClient

        from .service import create_app

        with TestClient(create_app()) as c:
            yield c


def _call(server: str | None, path: str, body: dict) -> dict:
    try:
        with _client(server) as client:
            resp = client.post(path, json=body)
    except httpx.HTTPError as exc:
        write_record({"record": "error", "detail": str(exc)}, sys.stderr)
        raise SystemExit(2)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail")
        except ValueError:
            detail = resp.text
        write_record({"record": "error", "status": resp.status_code,
                      "detail": detail}, sys.stderr)
        raise SystemExit(2)
    return resp.json()


def _finish(ok: bool) -> None:
    if not ok:
        raise SystemExit(1)


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service; in-process by default.")
@click.pass_context
def main(ctx, server):
    """Dictionary, filter, and retrieval experiments over HTTP."""
    ctx.obj = server


@main.command("diff-test")
@click.option("--ops", default="100000", callback=_int_expr, help="Operation count.")
@click.option("--seed", default="0", callback=_int_expr, help="Workload seed.")
@click.option("--mode", type=click.Choice(["set", "multiset"]), default="multiset",
              help="Element multiplicity discipline.")
@click.option("--dense/--sparse", "dense", default=True,
              help="Which reference geometry to exercise.")
@click.option("--param", "params", multiple=True, metavar="K=V",
              help="Geometry override, repeatable (n, rho, w_eff, or a "
                   "derived field such as m or sid_buckets).")
@click.option("--invariants-every", default=None, callback=_int_expr,
              help="Walk every structural invariant each N ops.")
@click.option("--minimality-every", default=None, callback=_int_expr,
              help="Audit fragment minimality each N ops (sparse only).")
@click.pass_obj
def diff_test(server, ops, seed, mode, dense, params, invariants_every,
              minimality_every):
    """Replay one random workload against the oracle and diff every answer."""
    body = {"layout": "dense" if dense else "sparse", "ops": ops, "seed": seed,
            "mode": mode, "invariants_every": invariants_every,
            "minimality_every": minimality_every}
    overrides = {}
    for pair in params:
        key, sep, value = pair.partition("=")
        if not sep:
            raise click.BadParameter(f"expected K=V, got {pair!r}", param_hint="--param")
        key = key.strip().replace("-", "_")
        amount = _plain(parse_amount(value))
        if key in ("n", "rho", "universe", "w_eff"):
            body[key] = amount
        else:
            overrides[key] = int(amount)
    if overrides:
        body["overrides"] = overrides
    report = _call(server, "/experiments/diff-test", body)
    write_record({"record": "config", "command": "diff-test",
                  "layout": report["layout"], "mode": report["mode"],
                  **(report["config"] or {}),
                  "workload": report["workload"]})
    write_record({"record": "access", "per_kind": report["access"],
                  "per_op_max": report["per_op_max"]})
    write_record({"record": "result", **{
        k: report[k] for k in ("ops", "mismatches", "false_negatives",
                               "overflows", "first_divergence", "stopped_early",
                               "invariant_checks", "final_live", "elapsed_s",
                               "ok")}})
    _finish(report["ok"])


@main.command("fp-rate")
@click.option("--n", default="2^14", callback=_int_expr, help="Keys per filter.")
@click.option("--epsilon", default="2^-6", callback=_num_expr,
              help="Target false positive rate.")
@click.option("--queries", default="100000", callback=_int_expr,
              help="Absent-key probes per seed.")
@click.option("--seeds", default="10", callback=_int_expr,
              help="Independent filter builds.")
@click.option("--w-eff", default="64", callback=_int_expr, help="Word size in bits.")
@click.pass_obj
def fp_rate(server, n, epsilon, queries, seeds, w_eff):
    """Measure the empirical false positive rate of the filter."""
    report = _call(server, "/experiments/fp-rate",
                   {"n": n, "epsilon": epsilon, "queries": queries,
                    "seeds": seeds, "w_eff": w_eff})
    for i, rate in enumerate(report["rates"]):
        write_record({"record": "trial", "seed": i, "rate": rate})
    write_record({"record": "summary", **{
        k: v for k, v in report.items() if k != "rates"}})
    _finish(report["ok"])


@main.command("space-audit")
@click.option("--n", required=True, callback=_int_expr, help="Capacity.")
@click.option("--rho", default=None, callback=_int_expr,
              help="Universe per slot; universe = n * rho.")
@click.option("--w-eff", default="64", callback=_int_expr, help="Word size in bits.")
@click.option("--fill", default=None, callback=_int_expr,
              help="Elements to insert while watching for reallocation.")
@click.pass_obj
def space_audit(server, n, rho, w_eff, fill):
    """Check allocated bits component by component against closed forms."""
    report = _call(server, "/experiments/space-audit",
                   {"n": n, "rho": rho, "w_eff": w_eff, "fill": fill})
    for name, row in report["components"].items():
        write_record({"record": "component", "name": name, **row})
    write_record({"record": "summary", **{
        k: v for k, v in report.items() if k != "components"}})
    _finish(report["ok"])


@main.command("access-trace")
@click.option("--n", required=True, callback=_int_expr, help="Capacity.")
@click.option("--rho", default=None, callback=_int_expr,
              help="Universe per slot; universe = n * rho.")
@click.option("--ops", default="100000", callback=_int_expr, help="Operation count.")
@click.option("--w-eff", default="64", callback=_int_expr, help="Word size in bits.")
@click.option("--seed", default="0", callback=_int_expr, help="Workload seed.")
@click.option("--prologue/--no-prologue", default=True,
              help="Drive the adversarial warm-up before the random phase.")
@click.pass_obj
def access_trace(server, n, rho, ops, w_eff, seed, prologue):
    """Meter word reads and writes per operation kind."""
    report = _call(server, "/experiments/access-trace",
                   {"n": n, "rho": rho, "ops": ops, "w_eff": w_eff,
                    "seed": seed, "prologue": prologue})
    for kind, row in report["per_kind"].items():
        write_record({"record": "kind", "op": kind, **row})
    write_record({"record": "summary", **{
        k: v for k, v in report.items() if k != "per_kind"}})


@main.command("retrieval")
@click.option("--n", required=True, callback=_int_expr, help="Key count.")
@click.option("--k", required=True, callback=_int_expr, help="Label width in bits.")
@click.option("--seed", default="0", callback=_int_expr, help="Key/label seed.")
@click.option("--w-eff", default="64", callback=_int_expr, help="Word size in bits.")
@click.option("--retries", default="16", callback=_int_expr,
              help="Hash seeds to try before giving up.")
@click.pass_obj
def retrieval(server, n, k, seed, w_eff, retries):
    """Build a static retrieval table and verify every stored label."""
    report = _call(server, "/experiments/retrieval",
                   {"n": n, "k": k, "seed": seed, "w_eff": w_eff,
                    "retries": retries})
    write_record({"record": "result", **report})
    _finish(report["ok"])


@main.command("serve")
@click.option("--host", default="127.0.0.1", help="Bind address.")
@click.option("--port", default=8000, type=int, help="Bind port.")
def serve(host, port):
    """Run the HTTP service under uvicorn."""
    import uvicorn

    uvicorn.run("cratedict.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
