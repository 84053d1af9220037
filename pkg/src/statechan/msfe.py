"""Repeated secure function evaluation with penalties.

The on-chain half is :class:`MsfeContract`, a program for :mod:`statechan.ledger`.
The off-chain half is a per-execution generator (:func:`local_execution`) that
the simulator advances tick by tick, plus :class:`MsfeParty`, which holds each
party's best transcript and decides which triggers to send when the contract
state changes.

The secure computation itself is replaced by a trusted dealer that computes
``z = g(y_1..y_n)``, XOR-shares it and commits to every share.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Callable, Iterator, Optional, Sequence, Union

from .crypto import commit, encode, multi_verify, sign, verify, verify_open
from .crypto.commitment import Commitment, Opening
from .crypto.multisig import AggregateSignature, SigningShare, multi_sign
from .crypto.signatures import SigKeyPair
from .ledger import Transition

INIT, EXEC, EXIT, PAYOUT, ABORT, INACTIVE = "init", "exec", "exit", "payout", "abort", "inactive"


class MsfeConfigError(ValueError):
    pass


class MissingOpening(AssertionError):
    """An honest party was asked to continue an execution it never started."""


def lcm_upto(n: int) -> int:
    return reduce(math.lcm, range(1, n + 1), 1)


@dataclass(frozen=True)
class MsfeConfig:
    n: int
    q: int
    window: int  # on-chain response window
    net_delay: int  # off-chain response window
    pks: tuple = ()
    pk_master: object = None  # set to use a single aggregate signature per transcript

    def __post_init__(self):
        if self.n < 2:
            raise MsfeConfigError("need at least two parties")
        if self.q <= 0 or self.q % lcm_upto(self.n):
            raise MsfeConfigError(f"q={self.q} must be a positive multiple of {lcm_upto(self.n)}")
        if self.window < 2 or self.net_delay < 1:
            raise MsfeConfigError("on-chain window must be >= 2 ticks and network delay >= 1")
        if self.pk_master is None and len(self.pks) != self.n:
            raise MsfeConfigError("one public key per party is required")

    @property
    def deposit(self) -> int:
        return (self.n - 1) * self.q


# -- transcripts and witnesses ------------------------------------------------

@dataclass(frozen=True)
class MsfeTranscript:
    X: tuple  # Optional[Opening] per party
    h: tuple  # Commitment per party
    sigma: Union[tuple, AggregateSignature]

    @property
    def opened(self) -> int:
        return sum(x is not None for x in self.X)

    def merge(self, other: "MsfeTranscript") -> "MsfeTranscript":
        X = tuple(a if a is not None else b for a, b in zip(self.X, other.X))
        return replace(self, X=X)

    def output(self) -> Optional[bytes]:
        if self.opened != len(self.X):
            return None
        return xor_bytes([x.message for x in self.X])


@dataclass(frozen=True)
class TranscriptWitness:
    id: int
    tt: MsfeTranscript


@dataclass(frozen=True)
class ExitWitness:
    pass


EXIT_WITNESS = ExitWitness()


@dataclass(frozen=True)
class MsfeState:
    mode: str = INIT
    id: int = -1
    tt: Optional[MsfeTranscript] = None
    t: int = -1
    L: tuple = ()


def signing_payload(exec_id: int, h: Sequence[Commitment]) -> bytes:
    return encode("msfe/id-h", exec_id, tuple(h))


def xor_bytes(chunks: Sequence[bytes]) -> bytes:
    width = max((len(c) for c in chunks), default=0)
    out = bytearray(width)
    for c in chunks:
        for i, byte in enumerate(c.rjust(width, b"\x00")):
            out[i] ^= byte
    return bytes(out)


# -- contract program ---------------------------------------------------------

class MsfeContract:
    supports_update = False

    def __init__(self, cfg: MsfeConfig):
        self.cfg = cfg

    @property
    def n(self) -> int:
        return self.cfg.n

    def initial_state(self) -> MsfeState:
        return MsfeState(L=(True,) * self.cfg.n)

    def deposits(self) -> dict[int, int]:
        return {j: self.cfg.deposit for j in range(1, self.cfg.n + 1)}

    def _signatures_ok(self, exec_id: int, tt: MsfeTranscript) -> bool:
        payload = signing_payload(exec_id, tt.h)
        if self.cfg.pk_master is not None:
            return multi_verify(self.cfg.pk_master, payload, tt.sigma)
        if not isinstance(tt.sigma, tuple) or len(tt.sigma) != self.cfg.n:
            return False
        return all(verify(pk, payload, s) for pk, s in zip(self.cfg.pks, tt.sigma))

    def _well_formed(self, w) -> bool:
        if not isinstance(w, TranscriptWitness) or not isinstance(w.tt, MsfeTranscript):
            return False
        tt = w.tt
        if len(tt.X) != self.cfg.n or len(tt.h) != self.cfg.n:
            return False
        if not all(isinstance(c, Commitment) for c in tt.h):
            return False
        return isinstance(w.id, int) and not isinstance(w.id, bool)

    def pred(self, j: int, w, t: int, st: MsfeState) -> bool:
        if not self._well_formed(w):
            return False
        tt = w.tt
        if not self._signatures_ok(w.id, tt):
            return False
        for x, h in zip(tt.X, tt.h):
            if x is not None and not verify_open(x, h):
                return False
        if st.mode == INIT:
            return True
        if st.mode in (EXEC, EXIT) and t <= st.t + self.cfg.window:
            if w.id > st.id:
                return True
            if w.id == st.id and st.tt is not None:
                return any(x is not None and old is None for x, old in zip(tt.X, st.tt.X))
        return False

    def prog(self, j: int, w, t: int, st: MsfeState) -> Optional[Transition]:
        cfg = self.cfg
        if not 1 <= j <= cfg.n or st.mode == INACTIVE:
            return None
        if isinstance(w, TranscriptWitness):
            if not self.pred(j, w, t, st):
                return None
            tt = st.tt.merge(w.tt) if (st.tt is not None and st.id == w.id) else w.tt
            return Transition(MsfeState(EXEC, w.id, tt, t, st.L))
        if not isinstance(w, ExitWitness):
            return None
        complete = st.tt is not None and st.tt.opened == cfg.n
        if st.mode == INIT or (st.mode == EXEC and complete):
            return Transition(replace(st, mode=EXIT, t=t))
        if st.mode in (EXEC, ABORT) and t > st.t + cfg.window and st.L[j - 1] and not complete:
            L = list(st.L)
            L[j - 1] = False
            for k, x in enumerate(st.tt.X):
                if x is None:
                    L[k] = False
            payout = 0
            if st.tt.X[j - 1] is not None:
                payout = cfg.n * (cfg.n - 1) * cfg.q // st.tt.opened
            return Transition(self._settle(replace(st, mode=ABORT, L=tuple(L))), payout=payout)
        if st.mode in (EXIT, PAYOUT) and t > st.t + cfg.window and st.L[j - 1]:
            L = list(st.L)
            L[j - 1] = False
            return Transition(self._settle(replace(st, mode=PAYOUT, L=tuple(L))), payout=cfg.deposit)
        return None

    @staticmethod
    def _settle(st: MsfeState) -> MsfeState:
        return replace(st, mode=INACTIVE) if not any(st.L) else st

    def describe_state(self, st: MsfeState) -> dict:
        return {
            "mode": st.mode, "id": st.id, "t": st.t, "L": [int(x) for x in st.L],
            "opened": None if st.tt is None else [int(x is not None) for x in st.tt.X],
        }

    def describe_witness(self, w) -> dict:
        if isinstance(w, ExitWitness):
            return {"kind": "exit"}
        if isinstance(w, TranscriptWitness) and isinstance(w.tt, MsfeTranscript):
            return {"kind": "transcript", "id": w.id,
                    "opened": [int(x is not None) for x in w.tt.X],
                    "h": [c.hex() for c in w.tt.h]}
        return {"kind": "malformed"}


# -- dealer -------------------------------------------------------------------

@dataclass(frozen=True)
class SfeFunction:
    name: str
    out_len: int
    fn: Callable[[Sequence[bytes]], bytes]

    def __call__(self, inputs: Sequence[bytes]) -> bytes:
        z = self.fn(inputs)
        if len(z) > self.out_len:
            raise ValueError(f"{self.name} produced {len(z)} bytes, declared {self.out_len}")
        return z.rjust(self.out_len, b"\x00")


SFE_FUNCTIONS = {
    "xor": SfeFunction("xor", 8, lambda ys: xor_bytes([y[-8:] for y in ys])),
    "sha256": SfeFunction("sha256", 32, lambda ys: hashlib.sha256(b"".join(
        len(y).to_bytes(4, "big") + y for y in ys)).digest()),
    "max": SfeFunction("max", 8, lambda ys: max(y[-8:].rjust(8, b"\x00") for y in ys)),
}


@dataclass(frozen=True)
class DealerOutput:
    z: bytes
    openings: tuple  # Opening per party, index 0 is party 1
    h: tuple


def dealer_execute(g: SfeFunction, inputs: Sequence[bytes], exec_id: int,
                   rng: Optional[random.Random] = None) -> DealerOutput:
    """Compute g, XOR-share the output and commit to every share."""
    rng = rng or random.Random()
    z = g(inputs)
    n = len(inputs)
    shares = [rng.randbytes(len(z)) for _ in range(n - 1)]
    shares.append(xor_bytes([z] + shares))
    openings = tuple(Opening.fresh(s, rng) for s in shares)
    return DealerOutput(z, openings, tuple(commit(o) for o in openings))


# -- local execution ----------------------------------------------------------

@dataclass(frozen=True)
class Completed:
    z: bytes


@dataclass(frozen=True)
class AbortedAtStep:
    step: int


@dataclass
class Best:
    id: int
    tt: MsfeTranscript

    def complete(self) -> bool:
        return self.tt.opened == len(self.tt.X)


class Behaviour:
    """Which protocol messages a party emits. Honest parties send everything."""

    honest = True

    def sends(self, exec_id: int, step: int) -> bool:
        return True


@dataclass
class MsfeParty:
    j: int
    cfg: MsfeConfig
    key: Optional[SigKeyPair] = None
    share: Optional[SigningShare] = None
    behaviour: Behaviour = field(default_factory=Behaviour)
    best: Optional[Best] = None
    openings: dict = field(default_factory=dict)  # exec id -> own Opening
    known: dict = field(default_factory=dict)  # exec id -> (h, sigma) once all signatures were seen
    outputs: dict = field(default_factory=dict)
    stopped: bool = False
    acted: set = field(default_factory=set)

    @property
    def best_id(self) -> int:
        return self.best.id if self.best is not None else 0

    def update_best(self, exec_id: int, tt: MsfeTranscript):
        # never go back to an older execution
        if self.best is not None and exec_id < self.best.id:
            return
        if self.best is not None and exec_id == self.best.id:
            tt = self.best.tt.merge(tt)
        self.best = Best(exec_id, tt)

    def own_only(self, exec_id: int, h, sigma) -> MsfeTranscript:
        if exec_id not in self.openings:
            raise MissingOpening(f"party {self.j} holds no opening for execution {exec_id}")
        X = [None] * self.cfg.n
        X[self.j - 1] = self.openings[exec_id]
        return MsfeTranscript(tuple(X), tuple(h), sigma)

    def on_abort(self, st: MsfeState) -> list:
        """Go on-chain after an off-chain abort."""
        self.stopped = True
        if self.best is not None and not self.best.complete():
            return [TranscriptWitness(self.best.id, self.best.tt)]
        if st.mode == INIT:
            return [EXIT_WITNESS]
        return []

    def handle_ledger_event(self, st: MsfeState, now: int) -> list:
        """Triggers an honest party sends in reaction to the current contract state."""
        cfg = self.cfg
        if st.mode == INACTIVE:
            return []
        if st.mode != INIT:
            self.stopped = True
        if st.tt is not None and st.tt.opened == cfg.n:
            self.outputs.setdefault(st.id, st.tt.output())
        if st.mode in (PAYOUT, ABORT):
            return [EXIT_WITNESS] if st.L[self.j - 1] else []
        if st.mode == INIT:
            return []
        best = self.best
        if best is not None:
            if st.id < best.id:
                # a finished execution needs no on-chain replay when the contract is
                # already winding down; everyone holds its output
                if not (st.mode == EXIT and best.complete()):
                    return [TranscriptWitness(best.id, best.tt)]
            elif st.id == best.id and st.tt.X[self.j - 1] is None:
                return [TranscriptWitness(best.id, best.tt)]
        if st.id > self.best_id and st.tt is not None and st.tt.X[self.j - 1] is None:
            tt = self.own_only(st.id, st.tt.h, st.tt.sigma)
            self.update_best(st.id, st.tt.merge(tt))
            return [TranscriptWitness(st.id, tt)]
        if st.mode == EXEC and st.tt.opened == cfg.n:
            return [EXIT_WITNESS]
        if now > st.t + cfg.window:
            return [EXIT_WITNESS]
        return []


def _sign_all(parties: Sequence[MsfeParty], exec_id: int, h) -> tuple:
    payload = signing_payload(exec_id, h)
    if parties[0].cfg.pk_master is not None:
        return multi_sign(payload, [p.share for p in parties])
    return tuple(sign(p.key, payload) for p in parties)


def local_execution(exec_id: int, g: SfeFunction, inputs: Sequence[bytes],
                    parties: Sequence[MsfeParty], rng: random.Random) -> Iterator[int]:
    """Advance one off-chain execution; yields the number of ticks to wait.

    The generator's return value is :class:`Completed` or :class:`AbortedAtStep`.
    Every party's ``best``, ``openings`` and ``known`` are updated at the tick
    the corresponding messages arrive.
    """
    delay = parties[0].cfg.net_delay
    n = len(parties)

    # step 1: dealer
    if not all(p.behaviour.sends(exec_id, 1) for p in parties):
        yield delay
        return AbortedAtStep(1)
    out = dealer_execute(g, inputs, exec_id, rng)
    for p, x in zip(parties, out.openings):
        p.openings[exec_id] = x

    # step 2: signatures on (id, h)
    sigma = _sign_all(parties, exec_id, out.h)
    signed = [p.behaviour.sends(exec_id, 2) for p in parties]
    for p in parties:
        # rushing: corrupt parties always end up holding everyone else's signature
        if all(signed) or not p.behaviour.honest:
            p.known[exec_id] = (out.h, sigma)
    if not all(signed):
        yield delay
        return AbortedAtStep(2)
    yield 1
    for p in parties:
        p.update_best(exec_id, p.own_only(exec_id, out.h, sigma))

    # step 3: share broadcast
    shared = [p.behaviour.sends(exec_id, 3) for p in parties]
    X = tuple(x if ok else None for x, ok in zip(out.openings, shared))
    yield 1
    for p in parties:
        received = X if p.behaviour.honest else out.openings
        p.update_best(exec_id, MsfeTranscript(tuple(received), out.h, sigma))
    if all(shared):
        for p in parties:
            p.outputs[exec_id] = out.z
        return Completed(out.z)
    for p in parties:
        if not p.behaviour.honest:
            p.outputs[exec_id] = out.z
    if delay > 1:
        yield delay - 1
    return AbortedAtStep(3)


def run_local_execution(exec_id: int, g: SfeFunction, inputs: Sequence[bytes],
                        parties: Sequence[MsfeParty], rng: Optional[random.Random] = None):
    """Run an execution to its end without a clock; returns its outcome."""
    gen = local_execution(exec_id, g, inputs, parties, rng or random.Random())
    try:
        while True:
            next(gen)
    except StopIteration as stop:
        return stop.value
