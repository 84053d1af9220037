"""Invariant checks over a finished trace (a parsed JSON document)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional


@dataclass
class Check:
    name: str
    ok: bool = True
    tick: Optional[int] = None
    detail: str = ""

    def fail(self, detail: str, tick: Optional[int] = None):
        if self.ok:  # keep the first divergence
            self.ok, self.detail, self.tick = False, detail, tick


@dataclass
class Report:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def violations(self) -> list:
        return [c for c in self.checks if not c.ok]

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [
            {"name": c.name, "ok": c.ok, "tick": c.tick, "detail": c.detail} for c in self.checks]}

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "ok" if c.ok else f"VIOLATION at tick {c.tick}: {c.detail}"
            lines.append(f"  {c.name:<14} {status}")
        return "\n".join(lines)


def _delta(trace: dict, j) -> int:
    j = str(j)
    return trace["final_wallets"][j] - trace["initial_wallets"][j]


def _conservation(trace: dict) -> tuple[Check, dict]:
    """Replay every coin movement; returns the check and per-instance totals."""
    check = Check("conservation")
    wallets = {j: v for j, v in trace["initial_wallets"].items()}
    escrow: dict = {}
    totals = {"in": 0, "out": 0}
    for rec in trace["records"]:
        kind, tick = rec["kind"], rec["tick"]
        cid = str(rec.get("instance"))
        moved = False
        if kind == "deposit":
            wallets[str(rec["party"])] -= rec["amount"]
            escrow[cid] = escrow.get(cid, 0) + rec["amount"]
            totals["in"] += rec["amount"]
            moved = True
        elif kind == "refund":
            wallets[str(rec["party"])] += rec["amount"]
            escrow[cid] = escrow.get(cid, 0) - rec["amount"]
            totals["out"] += rec["amount"]
            moved = True
        elif kind == "trigger" and rec.get("accepted"):
            p = str(rec["party"])
            absorbed = rec.get("absorbed", 0)
            out = rec.get("payout", 0) + sum(a for _, a in rec.get("side_payments", []))
            wallets[p] = wallets[p] - absorbed + rec.get("payout", 0)
            for payee, a in rec.get("side_payments", []):
                wallets[str(payee)] += a
            escrow[cid] = escrow.get(cid, 0) + absorbed - out
            totals["in"] += absorbed
            totals["out"] += out
            moved = True
        elif kind == "update" and rec.get("accepted"):
            wallets[str(rec["party"])] -= rec["amount"]
            escrow[cid] = escrow.get(cid, 0) + rec["amount"]
            totals["in"] += rec["amount"]
            moved = True
        if moved:
            if "escrow" in rec and rec["escrow"] != escrow[cid]:
                check.fail(f"recorded escrow {rec['escrow']} but coins moved add up to {escrow[cid]}", tick)
            if escrow[cid] < 0 or min(wallets.values()) < 0:
                check.fail("negative balance", tick)
    if wallets != trace["final_wallets"]:
        check.fail(f"replayed wallets {wallets} differ from final wallets {trace['final_wallets']}",
                   trace["final_tick"])
    if sum(trace["initial_wallets"].values()) != sum(trace["final_wallets"].values()) + sum(escrow.values()):
        check.fail("coins were created or destroyed", trace["final_tick"])
    totals["escrow"] = sum(escrow.values())
    return check, totals


def _drain(trace: dict, totals: dict) -> Check:
    check = Check("drain")
    outcome = trace["outcome"]
    if outcome == "budget":
        check.fail("tick budget exhausted before the instance settled", trace["final_tick"])
        return check
    if totals["escrow"] != 0 or totals["in"] != totals["out"]:
        check.fail(f"paid out {totals['out']} of {totals['in']}", trace["final_tick"])
    if outcome == "terminated" and trace["scenario"]["protocol"] != "duplex":
        states = [r for r in trace["records"] if r["kind"] == "trigger" and r.get("accepted")]
        if not states or states[-1]["state"]["mode"] != "inactive":
            check.fail("instance terminated without reaching the inactive mode", trace["final_tick"])
    return check


def _last_abort(trace: dict) -> Optional[dict]:
    ex = trace["executions"]
    if ex and ex[-1]["outcome"] == "aborted":
        return ex[-1]
    return None


def _no_loss(trace: dict) -> Check:
    check = Check("no_loss")
    proto = trace["scenario"]["protocol"]
    for j in trace["honest"]:
        d = _delta(trace, j)
        view = trace["views"][str(j)]
        if proto == "mscd":
            floor = view["entitled"] - view["topped_up"]
        elif proto == "duplex":
            floor = view["expected_delta"]
        else:
            floor = 0
        if d < floor:
            check.fail(f"honest party {j} ended at {d:+d}, entitled to at least {floor:+d}", trace["final_tick"])
    return check


def _compensation(trace: dict) -> Check:
    check = Check("compensation")
    proto = trace["scenario"]["protocol"]
    q = trace["scenario"]["q"]
    last = _last_abort(trace)
    if proto == "duplex" or last is None:
        return check
    if proto == "msfe" and last["step"] == "3":
        for j in trace["honest"]:
            if _delta(trace, j) != q:
                check.fail(f"honest party {j} got {_delta(trace, j):+d} after a post-share abort, expected +{q}",
                           trace["final_tick"])
    if proto == "mscd" and last["step"].startswith("round:") and _abort_claims(trace)[0] is not None:
        for j in trace["honest"]:
            view = trace["views"][str(j)]
            want = q + view["entitled"] - view["topped_up"]
            if _delta(trace, j) != want:
                check.fail(f"honest party {j} got {_delta(trace, j):+d} after a mid-stage abort, expected {want:+d}",
                           trace["final_tick"])
    return check


def _abort_claims(trace: dict):
    """(aborter, parties paid by abort claims, tick of the first claim) for mscd traces."""
    n = trace["scenario"]["n"]
    before, aborter, claimers, first_tick = None, None, set(), None
    for r in trace["records"]:
        if r["kind"] not in ("trigger", "update") or not r.get("accepted"):
            continue
        st = r["state"]
        if r.get("witness", {}).get("kind") == "exit" and before is not None and st["mode"] in ("abort", "inactive"):
            if before["mode"] == "exec":
                aborter = 1 + before["tt_len"] % n
                first_tick = r["tick"]
                claimers.add(r["party"])
            elif before["mode"] == "abort":
                claimers.add(r["party"])
        before = st
    return aborter, claimers, first_tick


def _aborter_rules(trace: dict) -> tuple[Check, Check]:
    single = Check("single_aborter")
    turn = Check("turn_soundness")
    if trace["scenario"]["protocol"] != "mscd":
        return single, turn
    aborter, claimers, penalised_tick = _abort_claims(trace)
    if aborter is None:
        return single, turn
    if aborter in claimers:
        single.fail(f"aborter {aborter} was paid an abort claim", penalised_tick)
    others = set(range(1, trace["scenario"]["n"] + 1)) - {aborter}
    if trace["outcome"] == "terminated" and claimers != others:
        single.fail(f"abort claims by {sorted(claimers)}, expected every party but {aborter}", penalised_tick)
    if aborter in trace["honest"]:
        turn.fail(f"honest party {aborter} was blamed for the abort", penalised_tick)
    return single, turn


def _duplex_split(trace: dict) -> Check:
    check = Check("duplex_split")
    if trace["scenario"]["protocol"] != "duplex" or trace["outcome"] != "terminated":
        return check
    for j in ("1", "2"):
        want = trace["views"][j]["expected_delta"]
        if _delta(trace, j) != want:
            check.fail(f"party {j} ended at {_delta(trace, j):+d}, last co-signed state gives {want:+d}",
                       trace["final_tick"])
    return check


def check_invariants(trace: dict) -> Report:
    conservation, totals = _conservation(trace)
    single, turn = _aborter_rules(trace)
    return Report([
        _no_loss(trace),
        _compensation(trace),
        conservation,
        _drain(trace, totals),
        single,
        turn,
        _duplex_split(trace),
    ])
