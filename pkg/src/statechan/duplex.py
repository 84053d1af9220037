"""Two-party duplex payment channel.

Parties are ledger ids 1 (Alice) and 2 (Bob); the contract indexes them 0 and 1.
A positive ``net`` moves coins from Bob to Alice. States are co-signed
``(r, net, withdrawals)`` tuples; the contract keeps the highest round it has
seen. After a trigger opens the dispute window, anyone may post a newer state
until ``T2``; afterwards each side withdraws its deposit plus or minus ``net``,
minus whatever it already withdrew incrementally.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .crypto import encode, sign, verify
from .crypto.signatures import SigKeyPair
from .ledger import Transition


class DuplexError(ValueError):
    pass


class AfterTrigger(DuplexError):
    pass


class AlreadyTriggered(DuplexError):
    pass


class Insolvent(DuplexError):
    pass


class NegativeEntitlement(AssertionError):
    """Both parties signed a state that pays one of them less than it already took."""


ALICE, BOB = 1, 2


@dataclass(frozen=True)
class DuplexConfig:
    pks: tuple  # (Alice, Bob)
    window: int = 10
    deposits: tuple = (0, 0)

    def __post_init__(self):
        if len(self.pks) != 2:
            raise DuplexError("a duplex channel has exactly two parties")
        if self.window < 1:
            raise DuplexError("dispute window must be at least one tick")


@dataclass(frozen=True)
class ChannelStateMsg:
    r: int
    net: int
    withdrawals: tuple = (0, 0)

    def canonical_fields(self):
        return (self.r, self.net, tuple(self.withdrawals))


def state_payload(msg: ChannelStateMsg) -> bytes:
    return encode("duplex/state", msg)


@dataclass(frozen=True)
class DuplexState:
    deposits: tuple = (0, 0)
    net: int = 0
    best_round: int = -1
    withdrawals: tuple = (0, 0)
    withdrawn: tuple = (0, 0)
    T1: Optional[int] = None
    T2: Optional[int] = None


# -- witnesses ----------------------------------------------------------------

@dataclass(frozen=True)
class Deposit:
    amount: int


@dataclass(frozen=True)
class Update:
    msg: ChannelStateMsg
    sigs: tuple


@dataclass(frozen=True)
class Trigger:
    pass


@dataclass(frozen=True)
class Withdraw:
    pass


def _idx(j: int) -> int:
    return j - 1


def net_for(i: int, net: int) -> int:
    return net if i == 0 else -net


class DuplexContract:
    supports_update = False
    n = 2

    def __init__(self, cfg: DuplexConfig):
        self.cfg = cfg

    def initial_state(self) -> DuplexState:
        return DuplexState(deposits=tuple(self.cfg.deposits))

    def deposits(self) -> dict[int, int]:
        return {ALICE: self.cfg.deposits[0], BOB: self.cfg.deposits[1]}

    # Operations raise on caller errors; prog() turns them into rejections.

    def deposit(self, i: int, amount: int, t: int, st: DuplexState) -> DuplexState:
        if st.T1 is not None:
            raise AfterTrigger("deposits close once the channel is triggered")
        if amount < 0:
            raise DuplexError("negative deposit")
        d = list(st.deposits)
        d[i] += amount
        return replace(st, deposits=tuple(d))

    def update(self, sigs, msg: ChannelStateMsg, t: int, st: DuplexState) -> Optional[DuplexState]:
        if st.T2 is not None and t >= st.T2:
            return None
        if not isinstance(msg, ChannelStateMsg) or msg.r <= st.best_round:
            return None
        if not isinstance(sigs, tuple) or len(sigs) != 2:
            return None
        if len(msg.withdrawals) != 2 or min(msg.withdrawals) < 0:
            return None
        payload = state_payload(msg)
        if not all(verify(pk, payload, s) for pk, s in zip(self.cfg.pks, sigs)):
            return None
        return replace(st, best_round=msg.r, net=msg.net, withdrawals=tuple(msg.withdrawals))

    def trigger(self, i: int, t: int, st: DuplexState) -> DuplexState:
        if st.T1 is not None:
            raise AlreadyTriggered(f"channel was triggered at {st.T1}")
        return replace(st, T1=t, T2=t + self.cfg.window)

    def withdraw(self, i: int, t: int, st: DuplexState) -> tuple[DuplexState, int]:
        if st.T2 is None or t < st.T2:
            amount = st.withdrawals[i] - st.withdrawn[i]
        else:
            owed = st.deposits[i] + net_for(i, st.net)
            if owed < st.withdrawn[i]:
                raise NegativeEntitlement(f"party {i} owed {owed} but already withdrew {st.withdrawn[i]}")
            amount = owed - st.withdrawn[i]
        if amount <= 0:
            return st, 0
        taken = list(st.withdrawn)
        taken[i] += amount
        return replace(st, withdrawn=tuple(taken)), amount

    def prog(self, j: int, w, t: int, st: DuplexState) -> Optional[Transition]:
        if j not in (ALICE, BOB):
            return None
        i = _idx(j)
        try:
            if isinstance(w, Deposit):
                return Transition(self.deposit(i, w.amount, t, st), absorbed=w.amount)
            if isinstance(w, Update):
                new = self.update(w.sigs, w.msg, t, st)
                return None if new is None else Transition(new)
            if isinstance(w, Trigger):
                return Transition(self.trigger(i, t, st))
            if isinstance(w, Withdraw):
                new, amount = self.withdraw(i, t, st)
                return None if amount == 0 else Transition(new, payout=amount)
        except (AfterTrigger, AlreadyTriggered, DuplexError):
            return None
        return None

    def describe_state(self, st: DuplexState) -> dict:
        return {"deposits": list(st.deposits), "net": st.net, "best_round": st.best_round,
                "withdrawals": list(st.withdrawals), "withdrawn": list(st.withdrawn),
                "T1": st.T1, "T2": st.T2}

    def describe_witness(self, w) -> dict:
        if isinstance(w, Deposit):
            return {"kind": "deposit", "amount": w.amount}
        if isinstance(w, Update):
            return {"kind": "update", "r": w.msg.r, "net": w.msg.net,
                    "withdrawals": list(w.msg.withdrawals)}
        if isinstance(w, Trigger):
            return {"kind": "trigger"}
        if isinstance(w, Withdraw):
            return {"kind": "withdraw"}
        return {"kind": "malformed"}


# -- off-chain party logic ----------------------------------------------------

@dataclass
class ChannelParty:
    """One side of the channel with the honest signing policy built in."""

    j: int
    key: SigKeyPair
    deposits: tuple
    latest: ChannelStateMsg = field(default_factory=lambda: ChannelStateMsg(0, 0))
    sigs: tuple = ()
    history: list = field(default_factory=list)  # every fully signed state, oldest first
    last_signed_round: int = 0

    @property
    def i(self) -> int:
        return _idx(self.j)

    def entitlement(self, msg: ChannelStateMsg, i: Optional[int] = None) -> int:
        i = self.i if i is None else i
        return self.deposits[i] + net_for(i, msg.net) - msg.withdrawals[i]

    def propose_payment(self, amount: int, r: Optional[int] = None) -> ChannelStateMsg:
        if amount <= 0:
            raise DuplexError("payments are positive")
        sign_dir = -1 if self.i == 0 else 1
        msg = ChannelStateMsg(self.latest.r + 1 if r is None else r,
                              self.latest.net + sign_dir * amount, self.latest.withdrawals)
        if self.entitlement(msg) < 0:
            raise Insolvent(f"party {self.j} cannot pay {amount}")
        return msg

    def sign_state(self, msg: ChannelStateMsg, gains: int = 0) -> bytes:
        """Counter-sign ``msg`` if it does not cost us more than ``gains`` in goods."""
        if msg.r <= self.last_signed_round:
            raise DuplexError(f"round {msg.r} is not newer than {self.last_signed_round}")
        if self.entitlement(msg, 0) < 0 or self.entitlement(msg, 1) < 0:
            raise Insolvent("state leaves a party with a negative balance")
        mine_before = self.entitlement(self.latest)
        if self.entitlement(msg) < mine_before - gains:
            raise DuplexError("state takes coins without matching goods")
        self.last_signed_round = msg.r
        return sign(self.key, state_payload(msg))

    def install(self, msg: ChannelStateMsg, sigs: tuple):
        self.latest, self.sigs = msg, sigs
        self.history.append((msg, sigs))

    def best_update(self) -> Optional[Update]:
        return Update(self.latest, self.sigs) if self.sigs else None


def order_sigs(j: int, own: bytes, other: bytes) -> tuple:
    return (own, other) if j == ALICE else (other, own)


def channel_pay(payer: ChannelParty, payee: ChannelParty, amount: int) -> ChannelStateMsg:
    """Payer signs a new state moving ``amount`` to the payee; payee counter-signs."""
    msg = payer.propose_payment(amount)
    s_payer = payer.sign_state(msg, gains=amount)
    s_payee = payee.sign_state(msg)
    sigs = order_sigs(payer.j, s_payer, s_payee)
    payer.install(msg, sigs)
    payee.install(msg, sigs)
    return msg


def approve_withdrawal(a: ChannelParty, b: ChannelParty, j: int, amount: int) -> ChannelStateMsg:
    """Co-sign a state that lets party ``j`` take ``amount`` out before the channel closes."""
    w = list(a.latest.withdrawals)
    w[_idx(j)] += amount
    msg = ChannelStateMsg(a.latest.r + 1, a.latest.net, tuple(w))
    who, other = (a, b) if a.j == j else (b, a)
    if who.entitlement(msg) < 0:
        raise Insolvent(f"party {j} cannot withdraw {amount}")
    s_who = who.sign_state(msg, gains=amount)
    s_other = other.sign_state(msg)
    sigs = order_sigs(who.j, s_who, s_other)
    a.install(msg, sigs)
    b.install(msg, sigs)
    return msg


def resolve_concurrent(resolver: ChannelParty, peer: ChannelParty,
                       intended: ChannelStateMsg, gains: int = 0) -> ChannelStateMsg:
    """Both sides proposed different states at r+1; the resolver re-issues at r+2.

    By convention the lower party id resolves. The peer counter-signs before any
    goods change hands.
    """
    if resolver.j > peer.j:
        raise DuplexError("the lower party id resolves conflicts")
    base = resolver.latest.r
    msg = replace(intended, r=base + 2)
    s_res = resolver.sign_state(msg, gains=gains)
    s_peer = peer.sign_state(msg)
    sigs = order_sigs(resolver.j, s_res, s_peer)
    resolver.install(msg, sigs)
    peer.install(msg, sigs)
    return msg
