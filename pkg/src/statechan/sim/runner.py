"""Tick-by-tick scenario runner producing a JSON-ready trace.

Within one tick the order is fixed: scheduled adversary triggers, on-chain
reactions of every party (ascending id), the off-chain execution, and finally
the ledger advances the clock, which applies everything queued this tick.
"""

from __future__ import annotations

import json
import random
from dataclasses import replace
from typing import Optional

from .. import duplex as dx
from .. import mscd, msfe
from ..crypto import multi_keygen, party_keys
from ..games import STAGE_FUNCTIONS
from ..ledger import Ledger
from .scenario import Scenario, derive_input
from .strategies import PartyBehaviour

TRACE_FORMAT = 1
FUNDING_DEADLINE = 2
DISPUTE_KINDS = ("transcript", "message", "update")


def dumps(trace: dict) -> str:
    return json.dumps(trace, sort_keys=True, separators=(",", ":"))


class _Base:
    def __init__(self, s: Scenario):
        self.s = s
        self.rng = random.Random(s.seed)
        self.records: list = []
        self.initial = {j: s.wallet for j in range(1, s.n + 1)}
        self.ledger = Ledger(dict(self.initial), recorder=self._on_ledger)
        self.keys = party_keys(s.n, label=f"statechan/sim/{s.seed}".encode())
        self.version = 0
        self.executions: list = []
        self.cid: Optional[int] = None

    def _on_ledger(self, kind, tick, **fields):
        if fields.get("accepted") and fields.get("instance") == self.cid:
            self.version += 1
        self.records.append({"tick": tick, "kind": kind, **fields})

    def note(self, kind: str, **fields):
        self.records.append({"tick": self.ledger.now, "kind": kind, **fields})

    def queue(self, j: int, w):
        self.ledger.queue_trigger(self.cid, j, w)

    def loop(self):
        inst = self.ledger.instance(self.cid)
        while True:
            if inst.status in ("terminated", "refunded"):
                return inst.status
            if self.ledger.now >= self.s.max_ticks:
                return "budget"
            if inst.live:
                self.step(self.ledger.now, self.ledger.state(self.cid))
            self.ledger.advance_tick()
            for j in range(1, self.s.n + 1):
                self.ledger.drain(j)

    def step(self, now, st):
        raise NotImplementedError

    def views(self) -> dict:
        raise NotImplementedError

    def finish(self, outcome: str) -> dict:
        s = self.s
        inst = self.ledger.instance(self.cid)
        accepted = [r for r in self.records if r["kind"] == "trigger" and r.get("accepted")]
        trace = {
            "format_version": TRACE_FORMAT,
            "scenario": s.to_dict(),
            "outcome": outcome,
            "final_tick": self.ledger.now,
            "honest": list(s.honest),
            "corrupt": list(s.corrupt),
            "initial_wallets": self.initial,
            "final_wallets": dict(self.ledger.wallets),
            "deposits": dict(inst.required),
            "escrow": inst.escrow,
            "executions": self.executions,
            "views": self.views(),
            "stats": {
                "accepted_triggers": len(accepted),
                "dispute_triggers": sum(r["witness"].get("kind") in DISPUTE_KINDS for r in accepted),
                "rejected_triggers": sum(1 for r in self.records if r["kind"] == "trigger" and not r.get("accepted")),
            },
            "records": self.records,
        }
        # normalise keys and tuples so the returned dict equals the parsed file
        return json.loads(dumps(trace))


# -- msfe and mscd ---------------------------------------------------------------

class _ExecRun(_Base):
    """Shared driver for the two penalty protocols."""

    def __init__(self, s: Scenario):
        super().__init__(s)
        self.behaviours = {j: PartyBehaviour(s.strategy(j), s.n) for j in range(1, s.n + 1)}
        self.exec_id = 0
        self.gen = None
        self.wake = 0
        self.next_start = FUNDING_DEADLINE
        self.closed = False
        self.seen = {j: -1 for j in range(1, s.n + 1)}
        self.responded = {j: False for j in range(1, s.n + 1)}
        self.pending: dict = {}  # tick -> [(party, witness)]
        self.fired: set = set()
        self.history: dict = {}  # exec id -> corrupt parties' copy of the finished execution

    def setup(self, contract, parties: dict):
        self.contract, self.parties = contract, parties
        deposits = {j: d for j, d in contract.deposits().items() if self.s.strategy(j).deposits}
        self.cid = self.ledger.create_contract(contract, contract.initial_state(), deposits,
                                               deadline=FUNDING_DEADLINE)

    @property
    def closer(self) -> int:
        return self.s.honest[0]

    def run(self) -> dict:
        return self.finish(self.loop())

    # on-chain reactions ---------------------------------------------------

    def react(self, j: int, st, now: int) -> list:
        p = self.parties[j]
        if self.version != self.seen[j]:
            self.seen[j] = self.version
            self.responded[j] = False
        if self.responded[j]:
            return []
        out = p.handle_ledger_event(st, now)
        self.responded[j] = bool(out)
        return out

    def greedy(self, j: int, st, now: int):
        """Corrupt parties claim whatever the contract would pay them right now."""
        key = ("greedy", j, self.version)
        if key in self.fired:
            return
        res = self.contract.prog(j, self.exit_witness, now, st)
        if res is not None and (res.payout > 0 or any(p == j for p, _ in res.side_payments)):
            self.fired.add(key)
            self.queue(j, self.exit_witness)

    def step(self, now, st):
        s = self.s
        for j, w in self.pending.pop(now, []):
            self.queue(j, w)
        self.adversary(now, st)
        for j in range(1, s.n + 1):
            strat = s.strategy(j)
            if strat.honest or strat.follows_chain_protocol:
                for w in self.react(j, st, now):
                    self.queue(j, w)
            else:
                self.greedy(j, st, now)
        self.offchain(now, st)

    def idle_slot(self, now: int) -> Optional[int]:
        """Id of the execution (or close, executions + 1) that would start next tick."""
        if self.gen is None and not self.closed and now == self.next_start - 1:
            return self.exec_id + 1
        return None

    def adversary(self, now, st):
        slot = self.idle_slot(now)
        for k in self.s.corrupt:
            strat = self.s.strategy(k)
            if slot is None or ("slot", k) in self.fired:
                continue
            if strat.kind == "premature_exit" and slot == min(strat.exec, self.s.executions + 1):
                self.fired.add(("slot", k))
                self.queue(k, self.exit_witness)
            elif strat.kind == "replay_stale":
                after = self.s.executions if strat.exec is None else strat.exec
                if slot == after + 1 and strat.old in self.history:
                    self.fired.add(("slot", k))
                    self.queue(k, self.stale_witness(k, strat.old))

    # off-chain ------------------------------------------------------------

    def honest_active(self, st) -> bool:
        return st.mode == self.INIT and not any(self.parties[j].stopped for j in self.s.honest)

    def offchain(self, now, st):
        if self.gen is not None:
            if now < self.wake:
                return
            self.resume(now, st)
            return
        if self.closed or now < self.next_start:
            return
        if not self.honest_active(st):
            self.closed = True
            return
        if self.exec_id >= self.s.executions or not self.can_start():
            self.closed = True
            self.note("close", party=self.closer)
            for w in self.close_witnesses():
                self.queue(self.closer, w)
            return
        self.exec_id += 1
        self.note("offchain", exec=self.exec_id, event="start")
        self.gen = self.start_execution(self.exec_id)
        self.resume(now, st, first=True)

    def resume(self, now, st, first=False):
        try:
            wait = next(self.gen)
        except StopIteration as stop:
            self.gen = None
            self.finished(stop.value, now, st)
            return
        self.wake = now + wait

    def finished(self, outcome, now, st):
        if isinstance(outcome, self.Completed):
            self.executions.append({"id": self.exec_id, "outcome": "completed"})
            self.note("offchain", exec=self.exec_id, event="completed")
            for k in self.s.corrupt:
                self.history.setdefault(self.exec_id, {})[k] = self.snapshot(k)
            self.next_start = now + 2
            return
        step = str(outcome.step)
        self.executions.append({"id": self.exec_id, "outcome": "aborted", "step": step})
        self.note("offchain", exec=self.exec_id, event="aborted", step=step)
        self.closed = True
        for j in self.s.honest:
            for w in self.parties[j].on_abort(st):
                self.queue(j, w)
        for k in self.s.corrupt:
            strat = self.s.strategy(k)
            if strat.kind == "corner_case" and strat.exec == self.exec_id:
                w = self.corner_witness(k)
                if w is not None:
                    self.pending.setdefault(now + 1, []).append((k, w))


class _MsfeRun(_ExecRun):
    INIT = msfe.INIT
    Completed = msfe.Completed
    exit_witness = msfe.EXIT_WITNESS

    def __init__(self, s: Scenario):
        super().__init__(s)
        n = s.n
        shares = [None] * n
        pk_master = None
        if s.aggregate:
            shares, pk_master = multi_keygen(n, self.rng)
        pks = () if s.aggregate else tuple(k.pk for k in self.keys)
        self.cfg = msfe.MsfeConfig(n, s.q, s.window, s.net_delay, pks, pk_master)
        parties = {j: msfe.MsfeParty(j, self.cfg, self.keys[j - 1], shares[j - 1], self.behaviours[j])
                   for j in range(1, n + 1)}
        self.g = msfe.SFE_FUNCTIONS[s.function]
        self.setup(msfe.MsfeContract(self.cfg), parties)

    def can_start(self) -> bool:
        return True

    def start_execution(self, exec_id):
        inputs = [derive_input(self.s, exec_id, j) for j in range(1, self.s.n + 1)]
        ordered = [self.parties[j] for j in range(1, self.s.n + 1)]
        return msfe.local_execution(exec_id, self.g, inputs, ordered, self.rng)

    def close_witnesses(self):
        return [msfe.EXIT_WITNESS]

    def snapshot(self, k):
        p = self.parties[k]
        return p.known.get(self.exec_id)

    def stale_witness(self, k, old):
        h, sigma = self.history[old][k]
        return msfe.TranscriptWitness(old, self.parties[k].own_only(old, h, sigma))

    def corner_witness(self, k):
        p = self.parties[k]
        if self.exec_id not in p.known:
            return None
        h, sigma = p.known[self.exec_id]
        return msfe.TranscriptWitness(self.exec_id, p.own_only(self.exec_id, h, sigma))

    def views(self) -> dict:
        return {str(j): {"honest": j in self.s.honest,
                         "outputs": {str(i): z.hex() for i, z in sorted(p.outputs.items())}}
                for j, p in self.parties.items()}


class _Chain:
    def __init__(self, run: "_MscdRun"):
        self.run = run

    def state(self):
        return self.run.ledger.state(self.run.cid)

    def queue_update(self, j, u, amount):
        self.run.ledger.queue_update(self.run.cid, j, u, amount)


class _MscdRun(_ExecRun):
    INIT = mscd.INIT
    Completed = mscd.Completed
    exit_witness = mscd.EXIT_WITNESS

    def __init__(self, s: Scenario):
        super().__init__(s)
        n = s.n
        self.cfg = mscd.MscdConfig(n, s.q, s.window, s.net_delay, tuple(k.pk for k in self.keys))
        parties = {}
        for j in range(1, n + 1):
            parties[j] = mscd.MscdParty(j, self.cfg, self.keys[j - 1], random.Random(f"{s.seed}/{j}"),
                                        self.behaviours[j], input_source=self._source(j))
        self.stage = STAGE_FUNCTIONS[s.function]
        self.setup(mscd.MscdContract(self.cfg), parties)

    def _source(self, j):
        def source(exec_id, stage, fresh):
            return derive_input(self.s, exec_id, j, f"stage{stage}" + ("/fresh" if fresh else ""))
        return source

    def can_start(self) -> bool:
        if self.exec_id == 0:
            return self.stage.ready_for(self.s.balances, self.s.stages)
        return self.stage.ready_for(self.parties[self.closer].b, self.s.stages)

    def start_execution(self, exec_id):
        topups = None
        if exec_id == 1:
            topups = {j: x for j, x in enumerate(self.s.balances, start=1) if x}
        ordered = [self.parties[j] for j in range(1, self.s.n + 1)]
        return mscd.local_execution(exec_id, self.s.function, self.s.stages, ordered, _Chain(self), topups)

    def close_witnesses(self):
        best = self.parties[self.closer].best
        return [best.witness()] if best is not None else [mscd.EXIT_WITNESS]

    def snapshot(self, k):
        best = self.parties[k].best
        return None if best is None else replace(best)

    def stale_witness(self, k, old):
        return self.history[old][k].witness()

    def corner_witness(self, k):
        best = self.parties[k].best
        if best is None or best.id != self.exec_id:
            return None
        return best.witness()

    def views(self) -> dict:
        last = self.executions[-1] if self.executions else None
        mid_stage = last is not None and last["outcome"] == "aborted" and last["step"].startswith("round:")
        out = {}
        for j, p in self.parties.items():
            entitled = p.b[j - 1]
            if mid_stage and p.best is not None and p.best.id == last["id"]:
                # an unfinished execution is settled at its agreed balances
                entitled = p.best.b[j - 1]
            out[str(j)] = {
                "honest": j in self.s.honest,
                "outputs": {str(i): [z.hex() for z in zs] for i, zs in sorted(p.outputs.items())},
                "b": list(p.b),
                "entitled": entitled,
                "topped_up": p.topped_up,
            }
        return out


# -- duplex ----------------------------------------------------------------------

class _DuplexRun(_Base):
    def __init__(self, s: Scenario):
        super().__init__(s)
        deposits = tuple(s.deposits)
        self.cfg = dx.DuplexConfig(tuple(k.pk for k in self.keys), s.dx_window, deposits)
        self.contract = dx.DuplexContract(self.cfg)
        self.parties = {j: dx.ChannelParty(j, self.keys[j - 1], deposits) for j in (dx.ALICE, dx.BOB)}
        funded = {j: d for j, d in self.contract.deposits().items() if s.strategy(j).deposits}
        self.cid = self.ledger.create_contract(self.contract, self.contract.initial_state(), funded,
                                               deadline=FUNDING_DEADLINE)
        self.plan = self._plan()
        self.closing = False
        self.pending_withdraw: Optional[int] = None
        self.fired: set = set()

    def _plan(self) -> list:
        return ([("pay", j, a) for j, a in self.s.payments]
                + [("random", 0, 0)] * self.s.random_payments
                + [("withdraw", j, a) for j, a in self.s.withdrawals])

    def run(self) -> dict:
        return self.finish(self.loop())

    def pay(self, payer: int, amount: int):
        a, b = self.parties[payer], self.parties[3 - payer]
        msg = dx.channel_pay(a, b, amount)
        self.note("offchain", event="payment", payer=payer, amount=amount, r=msg.r, net=msg.net)

    def random_payment(self):
        payer = self.rng.choice((dx.ALICE, dx.BOB))
        p = self.parties[payer]
        if p.entitlement(p.latest) < 1:
            payer, p = 3 - payer, self.parties[3 - payer]
        room = p.entitlement(p.latest)
        if room < 1:
            return
        self.pay(payer, self.rng.randint(1, max(1, room // 3)))

    def step(self, now, st):
        s = self.s
        if now < FUNDING_DEADLINE:
            return
        if self.plan:
            kind, j, amount = self.plan.pop(0)
            if kind == "pay":
                self.pay(j, amount)
            elif kind == "random":
                self.random_payment()
            else:
                msg = dx.approve_withdrawal(self.parties[1], self.parties[2], j, amount)
                self.note("offchain", event="withdrawal", party=j, amount=amount, r=msg.r)
                self.queue(j, dx.Update(msg, self.parties[j].sigs))
                self.pending_withdraw = j
            return
        if self.pending_withdraw is not None:
            self.queue(self.pending_withdraw, dx.Withdraw())
            self.pending_withdraw = None
            return
        if not self.closing:
            self.closing = True
            attackers = [k for k in s.corrupt if s.strategy(k).kind == "stale_duplex_submit"]
            if attackers:
                k = attackers[0]
                self.queue(k, dx.Trigger())
                stale = self.stale_state(k, s.strategy(k).round)
                if stale is not None:
                    self.note("offchain", event="stale_submit", party=k, r=stale.msg.r)
                    self.queue(k, stale)
            else:
                j = s.honest[0]
                self.queue(j, dx.Trigger())
                best = self.parties[j].best_update()
                if best is not None:
                    self.queue(j, best)
            return
        for j in (dx.ALICE, dx.BOB):
            self.react(j, st, now)

    def stale_state(self, k: int, r: int):
        for msg, sigs in self.parties[k].history:
            if msg.r == r:
                return dx.Update(msg, sigs)
        return None

    def react(self, j, st, now):
        p = self.parties[j]
        if st.T1 is None:
            return
        honest = j in self.s.honest
        if honest and now < st.T2 and p.sigs and st.best_round < p.latest.r:
            key = ("update", j, self.version)
            if key not in self.fired:
                self.fired.add(key)
                self.queue(j, p.best_update())
            return
        if now >= st.T2:
            res = self.contract.prog(j, dx.Withdraw(), now, st)
            key = ("withdraw", j, self.version)
            if res is not None and key not in self.fired:
                self.fired.add(key)
                self.queue(j, dx.Withdraw())

    def views(self) -> dict:
        ref = self.parties[self.s.honest[0]].latest
        return {str(j): {"honest": j in self.s.honest, "round": ref.r, "net": ref.net,
                         "expected_delta": dx.net_for(j - 1, ref.net)}
                for j in (dx.ALICE, dx.BOB)}


def run_scenario(s: Scenario) -> dict:
    """Run ``s`` to completion or budget exhaustion and return its trace."""
    runner = {"msfe": _MsfeRun, "mscd": _MscdRun, "duplex": _DuplexRun}[s.protocol]
    return runner(s).run()
