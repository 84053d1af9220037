"""Command-line front end.

Exit codes: 0 when every invariant holds, 2 on an invariant violation and 1 on
usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

from .crypto import G
from .crypto.group import GroupError, Point, mul
from .crypto.nizk import NizkError, nizk_prove, nizk_verify
from .sim import (
    Scenario, ScenarioInvalid, UnmappableStrategy, check_invariants, compare_with_oracle, dumps,
    run_scenario, strategy_grid,
)

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2
OUTPUT_KEYS = {"format", "out"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- scenario files ------------------------------------------------------------

def bundled_scenarios() -> list[str]:
    folder = resources.files("statechan") / "scenarios"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def _read_scenario_text(ref: str) -> str:
    path = Path(ref)
    if path.exists():
        return path.read_text()
    name = ref[:-5] if ref.endswith(".json") else ref
    candidate = resources.files("statechan") / "scenarios" / f"{name}.json"
    if candidate.is_file():
        return candidate.read_text()
    raise UsageError(f"no scenario file or bundled scenario named {ref!r}")


def load_scenario_file(ref: str) -> tuple[Scenario, dict]:
    """Parse a scenario document; returns the scenario and its output options."""
    try:
        doc = json.loads(_read_scenario_text(ref))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{ref}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{ref}: a scenario file holds a JSON object")
    output = doc.pop("output", {}) or {}
    if not isinstance(output, dict) or set(output) - OUTPUT_KEYS:
        raise UsageError(f"{ref}: output options may only set {sorted(OUTPUT_KEYS)}")
    try:
        return Scenario.from_dict(doc), output
    except ScenarioInvalid as exc:
        raise UsageError(f"{ref}: {exc}") from None


def resolve_seed(flag: Optional[int]) -> Optional[int]:
    if flag is not None:
        return flag
    env = os.environ.get("STATECHAN_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env, 0)
    except ValueError:
        raise UsageError(f"STATECHAN_SEED={env!r} is not an integer") from None


# -- run -------------------------------------------------------------------------

def settlement_rows(trace: dict) -> list[dict]:
    paid = {j: 0 for j in trace["initial_wallets"]}
    for r in trace["records"]:
        if r["kind"] == "refund":
            paid[str(r["party"])] += r["amount"]
        elif r["kind"] == "trigger" and r.get("accepted"):
            paid[str(r["party"])] += r.get("payout", 0)
            for payee, amount in r.get("side_payments", []):
                paid[str(payee)] += amount
    put_in = {j: 0 for j in trace["initial_wallets"]}
    for r in trace["records"]:
        if r["kind"] == "deposit" or (r["kind"] == "update" and r.get("accepted")):
            put_in[str(r["party"])] += r["amount"]
        elif r["kind"] == "trigger" and r.get("accepted"):
            put_in[str(r["party"])] += r.get("absorbed", 0)
    q, proto = trace["scenario"]["q"], trace["scenario"]["protocol"]
    rows = []
    for j in sorted(trace["initial_wallets"], key=int):
        delta = trace["final_wallets"][j] - trace["initial_wallets"][j]
        honest = int(j) in trace["honest"]
        # the baseline is what the party would hold had the protocol settled normally
        baseline = None
        if proto == "msfe":
            baseline = 0
        elif proto == "mscd":
            view = trace["views"][j]
            baseline = view["entitled"] - view["topped_up"]
        flag = ""
        if baseline is not None and delta < baseline:
            flag = "penalised"
        elif baseline is not None and delta == baseline + q:
            flag = "compensated"
        rows.append({"party": int(j), "role": "honest" if honest else "corrupt",
                     "initial": trace["initial_wallets"][j], "deposited": put_in[j], "paid": paid[j],
                     "final": trace["final_wallets"][j], "delta": delta, "flag": flag})
    return rows


def format_summary(trace: dict, report) -> str:
    s = trace["scenario"]
    head = (f"scenario {s['name'] or '(unnamed)'}: {s['protocol']} n={s['n']} q={s['q']} seed={s['seed']}\n"
            f"outcome {trace['outcome']} at tick {trace['final_tick']}; "
            f"{trace['stats']['accepted_triggers']} accepted triggers, "
            f"{trace['stats']['dispute_triggers']} dispute, {trace['stats']['rejected_triggers']} rejected")
    lines = [head, f"{'party':>5} {'role':<8} {'initial':>10} {'in':>9} {'out':>9} {'final':>10} {'delta':>8}  flag"]
    total_in = total_out = 0
    for row in settlement_rows(trace):
        total_in += row["deposited"]
        total_out += row["paid"]
        lines.append(f"{row['party']:>5} {row['role']:<8} {row['initial']:>10} {row['deposited']:>9} "
                     f"{row['paid']:>9} {row['final']:>10} {row['delta']:>+8}  {row['flag']}")
    lines.append(f"conservation: paid in {total_in}, paid out {total_out}, escrow left {trace['escrow']}")
    lines.append("checks:")
    lines.append(report.summary())
    return "\n".join(lines)


def cmd_run(args) -> int:
    scenario, output = load_scenario_file(args.scenario)
    scenario = scenario.with_seed(resolve_seed(args.seed))
    fmt = args.format or output.get("format", "summary")
    if fmt not in ("json", "summary"):
        raise UsageError(f"unknown format {fmt!r}")
    out = args.out or output.get("out")
    trace = run_scenario(scenario)
    report = check_invariants(trace)
    text = dumps(trace) + "\n"
    if out:
        Path(out).write_text(text)
    if fmt == "json" and not out:
        sys.stdout.write(text)
    else:
        print(format_summary(trace, report))
    return EXIT_OK if report.ok else EXIT_VIOLATION


# -- sweep -----------------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers like 2,3,4, got {text!r}") from None


def sweep(protocols, ns, max_abort_points=None, seed=0, executions=2, equivalence_max_n=3):
    """Run the grid; returns (scenario count, list of (name, problem))."""
    failures, count = [], 0
    for proto in protocols:
        for n in ([2] if proto == "duplex" else ns):
            for s in strategy_grid(proto, n, executions=executions, max_abort_points=max_abort_points, seed=seed):
                count += 1
                try:
                    trace = run_scenario(s)
                except AssertionError as exc:
                    failures.append((s.name, f"assertion failed: {exc}"))
                    continue
                for c in check_invariants(trace).violations:
                    failures.append((s.name, f"{c.name} at tick {c.tick}: {c.detail}"))
                if proto != "duplex" and n <= equivalence_max_n:
                    try:
                        for diff in compare_with_oracle(s, trace):
                            failures.append((s.name, f"ideal mismatch: {diff}"))
                    except UnmappableStrategy:
                        pass
    return count, failures


def cmd_sweep(args) -> int:
    protocols = ["msfe", "mscd", "duplex"] if args.protocol == "all" else [args.protocol]
    seed = resolve_seed(args.seed) or 0
    count, failures = sweep(protocols, args.n, args.max_abort_points, seed, args.executions)
    if failures:
        name, problem = failures[0]
        print(f"FAIL: first failing scenario {name}: {problem}")
        for name, problem in failures[1:]:
            print(f"      {name}: {problem}")
        print(f"{count} scenarios, {len({f[0] for f in failures})} failing")
        return EXIT_VIOLATION
    print(f"all pass: {count} scenarios ({', '.join(protocols)}; n in {args.n})")
    return EXIT_OK


# -- nizk ------------------------------------------------------------------------

def _point(text: str) -> Point:
    try:
        return Point.from_bytes(bytes.fromhex(text))
    except (ValueError, GroupError) as exc:
        raise UsageError(f"not a compressed curve point: {text!r} ({exc})") from None


def _scalar(text: str) -> int:
    try:
        return int(text, 16)
    except ValueError:
        raise UsageError(f"not a hex scalar: {text!r}") from None


def cmd_nizk(args) -> int:
    H = _point(args.base_h)
    if args.action == "prove":
        x = _scalar(args.x)
        k = _scalar(args.k) if args.k else None
        try:
            proof = nizk_prove(x, G, H, k=k)
        except NizkError as exc:
            raise UsageError(str(exc)) from None
        values = list(proof.to_hex())
        if args.with_public:
            values = [mul(x, G).to_bytes().hex(), mul(x, H).to_bytes().hex()] + values
        print(" ".join(values))
        return EXIT_OK
    values = list(args.values) or sys.stdin.read().split()
    if args.pub_x and args.pub_y:
        values = [args.pub_x, args.pub_y] + values
    if len(values) != 5:
        raise UsageError("verify needs X, Y, KX, KY and s")
    X, Y, KX, KY = (_point(v) for v in values[:4])
    s = _scalar(values[4])
    print(1 if nizk_verify(G, H, X, Y, KX, KY, s) else 0)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="statechan", description="Simulate penalty protocols and payment channels.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one scenario and check its invariants")
    run.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    run.add_argument("--seed", type=int, help="override the scenario seed (fallback: STATECHAN_SEED)")
    run.add_argument("--out", help="write the JSON trace here")
    run.add_argument("--format", choices=["json", "summary"])
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run the adversary grid")
    sw.add_argument("--protocol", choices=["msfe", "mscd", "duplex", "all"], default="all")
    sw.add_argument("--n", type=_int_list, default=[2, 3, 4], help="party counts, e.g. 2,3,4")
    sw.add_argument("--max-abort-points", type=int, default=None)
    sw.add_argument("--executions", type=int, default=2)
    sw.add_argument("--seed", type=int)
    sw.set_defaults(func=cmd_sweep)

    nz = sub.add_parser("nizk", help="discrete-log equality proofs over secp256k1 (hex I/O)")
    nz_sub = nz.add_subparsers(dest="action", required=True, parser_class=_Parser)
    prove = nz_sub.add_parser("prove", help="print KX KY s for X = xG, Y = xH")
    prove.add_argument("--base-h", required=True, help="second base H as a compressed point")
    prove.add_argument("--x", required=True, help="secret scalar")
    prove.add_argument("--k", help="fixed commitment scalar")
    prove.add_argument("--with-public", action="store_true", help="also print X and Y first")
    verify = nz_sub.add_parser("verify", help="print 1 if the proof checks, else 0")
    verify.add_argument("--base-h", required=True, help="second base H as a compressed point")
    verify.add_argument("--pub-x", help="X = xG")
    verify.add_argument("--pub-y", help="Y = xH")
    verify.add_argument("values", nargs="*", help="KX KY s (or X Y KX KY s); read from stdin if absent")
    nz.set_defaults(func=cmd_nizk)

    sub.add_parser("list", help="list bundled scenarios").set_defaults(func=cmd_list)
    return parser


def cmd_list(args) -> int:
    for name in bundled_scenarios():
        print(name)
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"statechan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
