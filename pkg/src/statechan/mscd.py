"""Repeated reactive computation with coin balances (secure cash distribution).

Each execution agrees on a transcript validator (the stage function, the number
of stages, the balance vector and a snapshot of deposits), then runs every
stage as an n-commit / n-reveal round-robin. Message ``r`` (1-based) is always
signed by party ``1 + (r - 1) % n``. The contract can replay any prefix of a
transcript, so it can take over a stalled execution message by message and
compute everybody's cash once it completes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Optional, Protocol, Sequence

from .crypto import commit, encode, sign, verify, verify_open
from .crypto.commitment import Commitment, Opening
from .crypto.signatures import SigKeyPair
from .games import STAGE_FUNCTIONS
from .ledger import Transition

INIT, EXEC, EXIT, PAYOUT, ABORT, INACTIVE = "init", "exec", "exit", "payout", "abort", "inactive"


class MscdConfigError(ValueError):
    pass


class NotYourTurn(ValueError):
    pass


class InvalidContinuation(AssertionError):
    """An honest party was asked to extend a transcript that does not validate."""


@dataclass(frozen=True)
class MscdConfig:
    n: int
    q: int
    window: int
    net_delay: int
    pks: tuple

    def __post_init__(self):
        if self.n < 2 or self.q <= 0:
            raise MscdConfigError("need n >= 2 and q > 0")
        if self.window < 2 or self.net_delay < 1:
            raise MscdConfigError("on-chain window must be >= 2 ticks and network delay >= 1")
        if len(self.pks) != self.n:
            raise MscdConfigError("one public key per party is required")

    @property
    def deposit(self) -> int:
        return (self.n - 1) * self.q


# -- messages and the validator ------------------------------------------------

@dataclass(frozen=True)
class RoundMessage:
    id: int
    r: int
    payload: object  # Commitment in commit rounds, Opening in reveal rounds

    def canonical_fields(self):
        return (self.id, self.r, self.payload)


def message_payload(m: RoundMessage) -> bytes:
    return encode("mscd/message", m)


def turn_of(r: int, n: int) -> int:
    return 1 + (r - 1) % n


@dataclass(frozen=True)
class TranscriptValidator:
    id: int
    n: int
    stage: str
    stages: int
    deposits: tuple  # deposit vector B at the time of agreement
    b: tuple  # balance vector at the time of agreement

    def __post_init__(self):
        if self.stage not in STAGE_FUNCTIONS:
            raise MscdConfigError(f"unknown stage function {self.stage!r}")
        if self.stages < 1 or len(self.b) != self.n or len(self.deposits) != self.n:
            raise MscdConfigError("malformed validator")
        if sum(self.b) != sum(self.deposits) or min(self.b) < 0:
            raise MscdConfigError("agreed balances must redistribute exactly the deposits")

    def canonical_fields(self):
        return (self.id, self.n, self.stage, self.stages, self.deposits, self.b)

    def __len__(self) -> int:
        return 2 * self.n * self.stages

    def check(self, tt: Sequence, pks: Sequence[bytes]) -> bool:
        """True iff ``tt`` is a valid (possibly partial) transcript."""
        try:
            self.replay(tt, pks)
        except (ValueError, TypeError, AttributeError):
            return False
        return True

    def replay(self, tt: Sequence, pks: Sequence[bytes]):
        """Validate ``tt`` and return (balances after completed stages, stage outputs)."""
        n = self.n
        if len(tt) > len(self):
            raise ValueError("transcript longer than the protocol")
        g = STAGE_FUNCTIONS[self.stage]
        b, state, outputs = tuple(self.b), None, []
        commits: list = []
        for r, entry in enumerate(tt, start=1):
            m, sig = entry
            if not isinstance(m, RoundMessage) or m.id != self.id or m.r != r:
                raise ValueError(f"message {r} is out of place")
            signer = turn_of(r, n)
            if not verify(pks[signer - 1], message_payload(m), sig):
                raise ValueError(f"message {r} is not signed by party {signer}")
            pos = (r - 1) % (2 * n)
            if pos < n:
                if not isinstance(m.payload, Commitment):
                    raise ValueError(f"message {r} should be a commitment")
                commits.append(m.payload)
            else:
                if not isinstance(m.payload, Opening) or not verify_open(m.payload, commits[pos - n]):
                    raise ValueError(f"message {r} does not open its commitment")
            if pos == 2 * n - 1:
                inputs = [m2.payload.message for m2, _ in tt[r - n:r]]
                if not g.ready(b):
                    raise ValueError("stage precondition fails")
                z, b, state = g(inputs, state, b)
                outputs.append(z)
                commits = []
        return b, outputs

    def cash(self, j: int, tt: Sequence, pks: Sequence[bytes], B: Sequence[int]) -> int:
        final_b, _ = self.replay(tt, pks)
        return final_b[j - 1] + B[j - 1] - self.deposits[j - 1]


def agreement_payload(exec_id: int, tv: TranscriptValidator, b: Sequence[int]) -> bytes:
    return encode("mscd/agree", exec_id, tv, tuple(b))


def update_payload(j: int, b_prime: Sequence[int]) -> bytes:
    return encode("mscd/update", j, tuple(b_prime))


# -- witnesses and state -------------------------------------------------------

@dataclass(frozen=True)
class MessageWitness:
    id: int
    m: RoundMessage
    sig: bytes


@dataclass(frozen=True)
class TranscriptWitness:
    id: int
    tt: tuple
    tv: TranscriptValidator
    b: tuple
    sigma: tuple


@dataclass(frozen=True)
class ExitWitness:
    pass


EXIT_WITNESS = ExitWitness()


@dataclass(frozen=True)
class BalanceUpdatePacket:
    b_prime: tuple
    psi: tuple


@dataclass(frozen=True)
class MscdState:
    mode: str = INIT
    id: int = -1
    tt: tuple = ()
    t: int = -1
    L: tuple = ()
    tv: Optional[TranscriptValidator] = None
    b: tuple = ()
    B: tuple = ()
    # agreement signatures of the installed execution, kept so that a party can
    # adopt an execution that was opened on-chain without it
    sigma: tuple = ()

    def aborter(self) -> int:
        return 1 + len(self.tt) % len(self.L)


# -- contract program ----------------------------------------------------------

class MscdContract:
    supports_update = True

    def __init__(self, cfg: MscdConfig):
        self.cfg = cfg

    @property
    def n(self) -> int:
        return self.cfg.n

    def initial_state(self) -> MscdState:
        n = self.cfg.n
        return MscdState(L=(True,) * n, b=(0,) * n, B=(0,) * n)

    def deposits(self) -> dict[int, int]:
        return {j: self.cfg.deposit for j in range(1, self.cfg.n + 1)}

    def pred(self, j: int, w, t: int, st: MscdState) -> bool:
        cfg = self.cfg
        if isinstance(w, MessageWitness):
            # only a live execution can be extended; once the contract pays out
            # the transcript (and with it the aborter index) is frozen
            if st.mode != EXEC or w.id != st.id or st.tv is None:
                return False
            return st.tv.check(st.tt + ((w.m, w.sig),), cfg.pks)
        if not isinstance(w, TranscriptWitness) or not isinstance(w.tv, TranscriptValidator):
            return False
        tv = w.tv
        if tv.id != w.id or tv.n != cfg.n or tuple(w.b) != tv.b:
            return False
        if any(d > B for d, B in zip(tv.deposits, st.B)):
            return False
        if not isinstance(w.tt, tuple) or not tv.check(w.tt, cfg.pks):
            return False
        if not isinstance(w.sigma, tuple) or len(w.sigma) != cfg.n:
            return False
        payload = agreement_payload(w.id, tv, w.b)
        if not all(verify(pk, payload, s) for pk, s in zip(cfg.pks, w.sigma)):
            return False
        if st.mode == INIT:
            return True
        if st.mode in (EXEC, EXIT) and t < st.t + cfg.window:
            return w.id > st.id or (w.id == st.id and len(w.tt) > len(st.tt))
        return False

    def cash(self, j: int, st: MscdState) -> int:
        if st.tv is None:
            return st.B[j - 1]
        return st.tv.cash(j, st.tt, self.cfg.pks, st.B)

    def _extra(self, k: int, st: MscdState) -> int:
        """Coins added after the installed execution's agreement."""
        if st.tv is None:
            return st.B[k - 1]
        return st.B[k - 1] - st.tv.deposits[k - 1]

    def prog(self, j: int, w, t: int, st: MscdState) -> Optional[Transition]:
        cfg, n = self.cfg, self.cfg.n
        if not 1 <= j <= n or st.mode == INACTIVE:
            return None
        if isinstance(w, TranscriptWitness):
            if not self.pred(j, w, t, st):
                return None
            return Transition(replace(st, mode=EXEC, id=w.id, tt=tuple(w.tt), t=t, tv=w.tv,
                                      b=tuple(w.b), sigma=tuple(w.sigma)))
        if isinstance(w, MessageWitness):
            if not self.pred(j, w, t, st):
                return None
            return Transition(replace(st, tt=st.tt + ((w.m, w.sig),), t=t))
        if not isinstance(w, ExitWitness):
            return None
        complete = st.tv is not None and len(st.tt) == len(st.tv)
        if st.mode == INIT or (st.mode == EXEC and complete):
            return Transition(replace(st, mode=EXIT, t=t))
        if st.mode in (EXEC, ABORT) and t > st.t + cfg.window and st.L[j - 1] and not complete:
            ja = st.aborter()
            if j == ja:
                return None
            L = list(st.L)
            L[j - 1] = False
            side = ()
            if L[ja - 1]:
                L[ja - 1] = False
                # the aborter forfeits its deposit but keeps its agreed balance
                keep = st.b[ja - 1] + self._extra(ja, st)
                side = ((ja, keep),) if keep else ()
            payout = n * cfg.q + st.b[j - 1] + self._extra(j, st)
            return Transition(self._settle(replace(st, mode=ABORT, L=tuple(L))), payout=payout,
                              side_payments=side)
        if st.mode in (EXIT, PAYOUT) and t > st.t + cfg.window and st.L[j - 1]:
            L = list(st.L)
            L[j - 1] = False
            payout = cfg.deposit + self.cash(j, st)
            return Transition(self._settle(replace(st, mode=PAYOUT, L=tuple(L))), payout=payout)
        return None

    def update(self, j: int, u, b_j: int, t: int, st: MscdState) -> Optional[MscdState]:
        cfg = self.cfg
        if not isinstance(u, BalanceUpdatePacket) or not 1 <= j <= cfg.n:
            return None
        if b_j == 0 or st.mode in (EXIT, ABORT, PAYOUT, INACTIVE):
            return None
        if len(u.b_prime) != cfg.n or len(u.psi) != cfg.n or min(u.b_prime) < 0:
            return None
        payload = update_payload(j, u.b_prime)
        if not all(verify(pk, payload, s) for pk, s in zip(cfg.pks, u.psi)):
            return None
        if sum(u.b_prime) != b_j + sum(st.B):
            return None
        B = list(st.B)
        B[j - 1] += b_j
        return replace(st, B=tuple(B))

    @staticmethod
    def _settle(st: MscdState) -> MscdState:
        return replace(st, mode=INACTIVE) if not any(st.L) else st

    def describe_state(self, st: MscdState) -> dict:
        return {
            "mode": st.mode, "id": st.id, "t": st.t, "L": [int(x) for x in st.L],
            "tt_len": len(st.tt), "tv_len": None if st.tv is None else len(st.tv),
            "b": list(st.b), "B": list(st.B),
        }

    def describe_witness(self, w) -> dict:
        if isinstance(w, ExitWitness):
            return {"kind": "exit"}
        if isinstance(w, MessageWitness):
            return {"kind": "message", "id": w.id, "r": getattr(w.m, "r", None)}
        if isinstance(w, TranscriptWitness):
            return {"kind": "transcript", "id": w.id, "tt_len": len(w.tt) if isinstance(w.tt, tuple) else None}
        if isinstance(w, BalanceUpdatePacket):
            return {"kind": "update", "b_prime": list(w.b_prime)}
        return {"kind": "malformed"}


# -- next-message function -----------------------------------------------------

def nmf(tt: Sequence, tv: TranscriptValidator, j: int, y: Opening, key: SigKeyPair):
    """Party j's next message: a commitment to ``y`` in commit rounds, ``y`` itself when revealing."""
    r = len(tt) + 1
    if r > len(tv):
        raise NotYourTurn("the execution is already complete")
    if turn_of(r, tv.n) != j:
        raise NotYourTurn(f"round {r} belongs to party {turn_of(r, tv.n)}")
    pos = (r - 1) % (2 * tv.n)
    payload = commit(y) if pos < tv.n else y
    m = RoundMessage(tv.id, r, payload)
    return m, sign(key, message_payload(m))


def stage_of(r: int, n: int) -> int:
    """0-based stage index of round r."""
    return (r - 1) // (2 * n)


# -- parties -------------------------------------------------------------------

@dataclass
class CdBest:
    id: int
    tt: tuple
    tv: TranscriptValidator
    b: tuple
    sigma: tuple

    def witness(self) -> TranscriptWitness:
        return TranscriptWitness(self.id, self.tt, self.tv, self.b, self.sigma)


class Behaviour:
    honest = True

    def sends(self, exec_id: int, step) -> bool:
        return True


@dataclass
class MscdParty:
    j: int
    cfg: MscdConfig
    key: SigKeyPair
    rng: random.Random
    behaviour: Behaviour = field(default_factory=Behaviour)
    best: Optional[CdBest] = None
    b: tuple = ()  # latest agreed balances
    inputs: dict = field(default_factory=dict)  # (exec id, stage) -> Opening
    outputs: dict = field(default_factory=dict)  # exec id -> list of stage outputs
    stopped: bool = False
    topped_up: int = 0
    # (exec id, stage, fresh) -> input bytes; random when unset
    input_source: Optional[Callable] = None

    def __post_init__(self):
        if not self.b:
            self.b = (0,) * self.cfg.n

    @property
    def best_id(self) -> int:
        return self.best.id if self.best is not None else 0

    def input_for(self, exec_id: int, stage: int, fresh: bool = False) -> Opening:
        key = (exec_id, stage)
        if fresh or key not in self.inputs:
            y = self.input_source(exec_id, stage, fresh) if self.input_source else self.rng.randbytes(8)
            self.inputs[key] = Opening.fresh(y, self.rng)
        return self.inputs[key]

    def next_message(self, exec_id: int, tt: tuple, tv: TranscriptValidator, fresh: bool = False):
        r = len(tt) + 1
        y = self.input_for(exec_id, stage_of(r, self.cfg.n), fresh=fresh and (r - 1) % (2 * self.cfg.n) < self.cfg.n)
        m, sig = nmf(tt, tv, self.j, y, self.key)
        if not tv.check(tt + ((m, sig),), self.cfg.pks):
            raise InvalidContinuation(f"party {self.j} cannot extend execution {exec_id}")
        return m, sig

    def on_abort(self, st: MscdState) -> list:
        self.stopped = True
        if self.best is not None:
            return [self.best.witness()]
        if st.mode == INIT:
            return [EXIT_WITNESS]
        return []

    def handle_ledger_event(self, st: MscdState, now: int) -> list:
        cfg, j = self.cfg, self.j
        if st.mode == INACTIVE:
            return []
        if st.mode != INIT:
            self.stopped = True
        if st.tv is not None and len(st.tt) == len(st.tv) and st.id >= self.best_id and st.id not in self.outputs:
            final_b, outs = st.tv.replay(st.tt, cfg.pks)
            self.outputs[st.id] = list(outs)
            self.b = tuple(final_b)
        if st.mode in (PAYOUT, ABORT):
            return [EXIT_WITNESS] if st.L[j - 1] else []
        if st.mode == INIT:
            return []
        best = self.best
        if best is not None and (st.id < best.id or (st.id == best.id and len(best.tt) > len(st.tt))):
            return [best.witness()]
        my_turn = st.tv is not None and turn_of(len(st.tt) + 1, cfg.n) == j and len(st.tt) != len(st.tv)
        if st.mode == EXEC and my_turn and st.id == self.best_id + 1:
            m, sig = self.next_message(st.id, st.tt, st.tv, fresh=True)
            self.best = CdBest(st.id, st.tt + ((m, sig),), st.tv, st.b, st.sigma)
            return [MessageWitness(st.id, m, sig)]
        if st.mode == EXEC and my_turn and st.id == self.best_id:
            m, sig = self.next_message(st.id, st.tt, st.tv)
            self.best = CdBest(st.id, st.tt + ((m, sig),), st.tv, st.b, st.sigma)
            return [MessageWitness(st.id, m, sig)]
        if st.mode == EXEC and st.tv is not None and len(st.tt) == len(st.tv):
            return [EXIT_WITNESS]
        if now > st.t + cfg.window:
            return [EXIT_WITNESS]
        return []


# -- local execution -----------------------------------------------------------

@dataclass(frozen=True)
class Completed:
    b: tuple
    outputs: tuple


@dataclass(frozen=True)
class AbortedAt:
    step: str  # "topup", "agree" or "round:<r>"


class ChainAccess(Protocol):
    def state(self) -> MscdState: ...

    def queue_update(self, j: int, u: BalanceUpdatePacket, amount: int) -> None: ...


def local_execution(exec_id: int, stage: str, stages: int, parties: Sequence[MscdParty],
                    chain: ChainAccess, topups: Optional[dict] = None) -> Iterator[int]:
    """Advance one execution; yields ticks to wait and returns Completed or AbortedAt."""
    n = len(parties)
    cfg = parties[0].cfg
    delay = cfg.net_delay

    # step 1: coin additions, one proposal at a time
    for j, amount in sorted((topups or {}).items()):
        if amount <= 0:
            continue
        proposer = parties[j - 1]
        before = chain.state().B
        b_prime = tuple(x + (amount if k == j - 1 else 0) for k, x in enumerate(before))
        payload = update_payload(j, b_prime)
        signers = [p.behaviour.sends(exec_id, ("topup", j)) for p in parties]
        if not all(signers):
            yield delay
            return AbortedAt("topup")
        psi = tuple(sign(p.key, payload) for p in parties)
        chain.queue_update(j, BalanceUpdatePacket(b_prime, psi), amount)
        yield 1
        if chain.state().B != b_prime:
            if delay > 1:
                yield delay - 1
            return AbortedAt("topup")
        proposer.topped_up += amount
        for p in parties:
            p.b = tuple(x + (amount if k == j - 1 else 0) for k, x in enumerate(p.b))

    # step 2: parameter agreement
    st = chain.state()
    b = parties[0].b
    tv = TranscriptValidator(exec_id, n, stage, stages, tuple(st.B), tuple(b))
    payload = agreement_payload(exec_id, tv, b)
    sigma = tuple(sign(p.key, payload) for p in parties)
    agreed = [p.behaviour.sends(exec_id, "agree") for p in parties]
    for p in parties:
        if not p.behaviour.honest:
            p.best = CdBest(exec_id, (), tv, tuple(b), sigma)
    if not all(agreed):
        yield delay
        return AbortedAt("agree")
    yield 1
    for p in parties:
        p.best = CdBest(exec_id, (), tv, tuple(b), sigma)

    # step 3: stages, message by message
    tt: tuple = ()
    outputs = []
    for r in range(1, len(tv) + 1):
        speaker = parties[turn_of(r, n) - 1]
        if not speaker.behaviour.sends(exec_id, ("round", r)):
            yield delay
            return AbortedAt(f"round:{r}")
        m, sig = speaker.next_message(exec_id, tt, tv)
        tt = tt + ((m, sig),)
        yield 1
        for p in parties:
            p.best = CdBest(exec_id, tt, tv, tuple(b), sigma)
        if (r % (2 * n)) == 0:
            new_b, outs = tv.replay(tt, cfg.pks)
            outputs.append(outs[-1])
            for p in parties:
                p.b = tuple(new_b)
                p.outputs.setdefault(exec_id, []).append(outs[-1])
    return Completed(tuple(parties[0].b), tuple(outputs))
