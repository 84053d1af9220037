"""Deterministic simulated ledger hosting stateful contract instances.

Time is an integer tick. Triggers queued during tick ``t`` are applied when
the clock advances past ``t``, in round-robin order over the submitting
parties (FIFO within a party), starting from the party whose index is
congruent to ``t`` modulo the number of parties. Events produced by a batch are
delivered to subscriber inboxes once the clock has moved on.

Programs are plain objects exposing::

    n: int
    deposits() -> dict[party, amount]
    prog(j, w, t, state) -> Transition | None
    supports_update: bool
    update(j, u, b, t, state) -> new_state | None        # only if supported
    describe_state(state) -> dict                        # for traces
    describe_witness(w) -> dict
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

MAX_AMOUNT = 2**256 - 1


class LedgerError(Exception):
    pass


class WrongDepositAmount(LedgerError):
    pass


class DuplicateDeposit(LedgerError):
    pass


class InstanceTerminated(LedgerError):
    pass


class UpdatesNotSupported(LedgerError):
    pass


class InsufficientFunds(LedgerError):
    pass


class UnknownInstance(LedgerError):
    pass


class PayoutExceedsEscrow(AssertionError):
    """A program tried to pay out more than the instance holds."""


class CoinOverflow(AssertionError):
    pass


def _checked(amount: int) -> int:
    if not isinstance(amount, int) or isinstance(amount, bool):
        raise TypeError("coin amounts are integers")
    if amount < 0:
        raise CoinOverflow(f"negative coin amount {amount}")
    if amount > MAX_AMOUNT:
        raise CoinOverflow(f"coin amount {amount} exceeds {MAX_AMOUNT}")
    return amount


@dataclass(frozen=True)
class Transition:
    state: Any
    payout: int = 0
    # extra transfers out of escrow to parties other than the trigger origin
    side_payments: tuple = ()
    # coins moved from the origin's wallet into escrow along with the witness
    absorbed: int = 0


@dataclass(frozen=True)
class LedgerEvent:
    seq: int
    instance: int
    kind: str
    origin: int
    witness: Any
    time: int
    new_state: Any
    payout: int
    payee: int
    side_payments: tuple = ()


@dataclass
class ContractInstance:
    cid: int
    program: Any
    state: Any
    created_at: int
    deadline: int
    required: dict
    funded: dict = field(default_factory=dict)
    escrow: int = 0
    status: str = "funding"  # funding | live | terminated | refunded
    subscribers: set = field(default_factory=set)
    total_in: int = 0
    total_out: int = 0

    @property
    def live(self) -> bool:
        return self.status == "live"


@dataclass
class _Queued:
    kind: str
    cid: int
    party: int
    payload: tuple
    t: int


class Ledger:
    def __init__(self, wallets: dict[int, int], start_tick: int = 0, recorder: Optional[Callable] = None):
        self.wallets = {j: _checked(v) for j, v in sorted(wallets.items())}
        self.parties = sorted(self.wallets)
        if len(self.parties) < 2:
            raise LedgerError("a ledger needs at least two parties")
        self.now = start_tick
        self.instances: dict[int, ContractInstance] = {}
        self._ids = itertools.count(1)
        self._seq = itertools.count(1)
        self._queue: list[_Queued] = []
        self._undelivered: list[LedgerEvent] = []
        self.inbox: dict[int, list[LedgerEvent]] = defaultdict(list)
        self.recorder = recorder
        self.accepted_triggers = 0

    # -- bookkeeping -------------------------------------------------------

    def _record(self, kind: str, **fields):
        if self.recorder is not None:
            self.recorder(kind, tick=self.now, **fields)

    def total_coins(self) -> int:
        return sum(self.wallets.values()) + sum(i.escrow for i in self.instances.values())

    def instance(self, cid: int) -> ContractInstance:
        try:
            return self.instances[cid]
        except KeyError:
            raise UnknownInstance(cid) from None

    def state(self, cid: int):
        return self.instance(cid).state

    def _debit(self, j: int, amount: int):
        if self.wallets.get(j, 0) < amount:
            raise InsufficientFunds(f"party {j} holds {self.wallets.get(j, 0)}, needs {amount}")
        self.wallets[j] -= amount

    def _credit(self, j: int, amount: int):
        self.wallets[j] = _checked(self.wallets.get(j, 0) + amount)

    # -- contract creation -------------------------------------------------

    def create_contract(self, program, initial_state, deposits: dict[int, int], deadline: int,
                        subscribers=None) -> int:
        """Open an instance and take the supplied deposits into escrow.

        The instance goes live as soon as every required deposit is present.
        Missing deposits may be added with :meth:`fund` up to ``deadline``;
        past it, everything received is refunded and the instance never runs.
        """
        required = {j: _checked(v) for j, v in program.deposits().items()}
        inst = ContractInstance(
            cid=next(self._ids), program=program, state=initial_state,
            created_at=self.now, deadline=deadline, required=required,
            subscribers=set(subscribers if subscribers is not None else required),
        )
        for j in deposits:
            self._check_deposit(inst, j, deposits[j])
        self.instances[inst.cid] = inst
        self._record("create", instance=inst.cid, required=dict(required), deadline=deadline)
        for j, amount in sorted(deposits.items()):
            self._take_deposit(inst, j, amount)
        self._maybe_activate(inst)
        return inst.cid

    def _check_deposit(self, inst: ContractInstance, j: int, amount: int):
        if j not in inst.required:
            raise WrongDepositAmount(f"party {j} is not a participant")
        if j in inst.funded:
            raise DuplicateDeposit(f"party {j} already deposited")
        if amount != inst.required[j]:
            raise WrongDepositAmount(f"party {j} deposited {amount}, contract requires {inst.required[j]}")

    def _take_deposit(self, inst: ContractInstance, j: int, amount: int):
        self._debit(j, amount)
        inst.funded[j] = amount
        inst.escrow = _checked(inst.escrow + amount)
        inst.total_in += amount
        self._record("deposit", instance=inst.cid, party=j, amount=amount, escrow=inst.escrow)

    def fund(self, cid: int, j: int, amount: int):
        inst = self.instance(cid)
        if inst.status != "funding":
            raise InstanceTerminated(f"instance {cid} is {inst.status}")
        self._check_deposit(inst, j, amount)
        self._take_deposit(inst, j, amount)
        self._maybe_activate(inst)

    def _maybe_activate(self, inst: ContractInstance):
        if inst.status == "funding" and set(inst.funded) == set(inst.required):
            inst.status = "live"
            self._record("live", instance=inst.cid, escrow=inst.escrow)

    def _expire_funding(self):
        for inst in self.instances.values():
            if inst.status == "funding" and self.now >= inst.deadline:
                for j, amount in sorted(inst.funded.items()):
                    inst.escrow -= amount
                    inst.total_out += amount
                    self._credit(j, amount)
                    self._record("refund", instance=inst.cid, party=j, amount=amount, escrow=inst.escrow)
                inst.status = "refunded"

    # -- triggers ----------------------------------------------------------

    def submit_trigger(self, cid: int, j: int, w, t: Optional[int] = None) -> bool:
        """Apply a trigger immediately at the current tick."""
        if t is not None and t != self.now:
            raise LedgerError(f"trigger time {t} is not the current tick {self.now}")
        return self._apply_trigger(cid, j, w, self.now)

    def queue_trigger(self, cid: int, j: int, w):
        self.instance(cid)
        self._queue.append(_Queued("trigger", cid, j, (w,), self.now))

    def submit_update(self, cid: int, j: int, u, b: int, t: Optional[int] = None) -> bool:
        if t is not None and t != self.now:
            raise LedgerError(f"update time {t} is not the current tick {self.now}")
        return self._apply_update(cid, j, u, b, self.now)

    def queue_update(self, cid: int, j: int, u, b: int):
        inst = self.instance(cid)
        if not getattr(inst.program, "supports_update", False):
            raise UpdatesNotSupported(type(inst.program).__name__)
        self._queue.append(_Queued("update", cid, j, (u, b), self.now))

    def _apply_trigger(self, cid: int, j: int, w, t: int) -> bool:
        inst = self.instance(cid)
        if not inst.live:
            raise InstanceTerminated(f"instance {cid} is {inst.status}")
        program = inst.program
        result = program.prog(j, w, t, inst.state)
        witness_info = program.describe_witness(w)
        if result is None:
            self._record("trigger", instance=cid, party=j, t=t, accepted=False, witness=witness_info)
            return False
        if result.absorbed:
            if self.wallets.get(j, 0) < result.absorbed:
                self._record("trigger", instance=cid, party=j, t=t, accepted=False, witness=witness_info,
                             reason="insufficient funds")
                return False
            self._debit(j, result.absorbed)
            inst.escrow = _checked(inst.escrow + result.absorbed)
            inst.total_in += result.absorbed
        outgoing = _checked(result.payout) + sum(_checked(a) for _, a in result.side_payments)
        if outgoing > inst.escrow:
            raise PayoutExceedsEscrow(f"instance {cid}: payout {outgoing} exceeds escrow {inst.escrow}")
        inst.state = result.state
        inst.escrow -= outgoing
        inst.total_out += outgoing
        if result.payout:
            self._credit(j, result.payout)
        for payee, amount in result.side_payments:
            self._credit(payee, amount)
        self.accepted_triggers += 1
        event = LedgerEvent(next(self._seq), cid, "trigger", j, w, t, inst.state, result.payout, j,
                            tuple(result.side_payments))
        self._record("trigger", instance=cid, party=j, t=t, accepted=True, witness=witness_info,
                     payout=result.payout, side_payments=[list(p) for p in result.side_payments],
                     absorbed=result.absorbed, escrow=inst.escrow,
                     state=program.describe_state(inst.state))
        self._emit(inst, event)
        if inst.escrow == 0 and inst.total_in > 0:
            inst.status = "terminated"
            self._record("terminated", instance=cid)
        return True

    def _apply_update(self, cid: int, j: int, u, b: int, t: int) -> bool:
        inst = self.instance(cid)
        program = inst.program
        if not getattr(program, "supports_update", False):
            raise UpdatesNotSupported(type(program).__name__)
        if not inst.live:
            raise InstanceTerminated(f"instance {cid} is {inst.status}")
        _checked(b)
        new_state = program.update(j, u, b, t, inst.state)
        if new_state is None or self.wallets.get(j, 0) < b:
            self._record("update", instance=cid, party=j, t=t, accepted=False, amount=b)
            return False
        self._debit(j, b)
        inst.escrow = _checked(inst.escrow + b)
        inst.total_in += b
        inst.state = new_state
        event = LedgerEvent(next(self._seq), cid, "update", j, u, t, new_state, 0, j)
        self._record("update", instance=cid, party=j, t=t, accepted=True, amount=b, escrow=inst.escrow,
                     state=program.describe_state(new_state))
        self._emit(inst, event)
        return True

    def _emit(self, inst: ContractInstance, event: LedgerEvent):
        self._undelivered.append(event)

    def subscribe(self, cid: int, party: int):
        self.instance(cid).subscribers.add(party)

    def drain(self, party: int) -> list[LedgerEvent]:
        events = self.inbox.pop(party, [])
        return events

    # -- clock -------------------------------------------------------------

    def schedule(self, batch: list[_Queued], tick: int) -> list[_Queued]:
        by_party: dict[int, list[_Queued]] = defaultdict(list)
        for item in batch:
            by_party[item.party].append(item)
        n = len(self.parties)
        start = (tick - 1) % n
        order = self.parties[start:] + self.parties[:start]
        extra = sorted(p for p in by_party if p not in self.parties)
        order += extra
        ordered = []
        while any(by_party.values()):
            for p in order:
                if by_party.get(p):
                    ordered.append(by_party[p].pop(0))
        return ordered

    def advance_tick(self) -> int:
        batch, self._queue = self._queue, []
        for item in self.schedule(batch, self.now):
            inst = self.instances.get(item.cid)
            if inst is None or not inst.live:
                self._record(item.kind, instance=item.cid, party=item.party, t=item.t, accepted=False,
                             reason="instance not live")
                continue
            if item.kind == "trigger":
                self._apply_trigger(item.cid, item.party, item.payload[0], item.t)
            else:
                self._apply_update(item.cid, item.party, item.payload[0], item.payload[1], item.t)
        self._expire_funding()
        self.now += 1
        events, self._undelivered = self._undelivered, []
        for event in events:
            for party in sorted(self.instances[event.instance].subscribers):
                self.inbox[party].append(event)
        return self.now

    def deliver_now(self):
        """Flush events from immediate submissions to subscriber inboxes."""
        events, self._undelivered = self._undelivered, []
        for event in events:
            for party in sorted(self.instances[event.instance].subscribers):
                self.inbox[party].append(event)
