"""Scenario documents: what to run, who is corrupt and how they misbehave."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from ..msfe import SFE_FUNCTIONS, lcm_upto
from ..games import STAGE_FUNCTIONS
from .strategies import Strategy, StrategyError

FORMAT_VERSION = 1
DEFAULT_BALANCE = 3
PROTOCOLS = ("msfe", "mscd", "duplex")


class ScenarioInvalid(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    protocol: str
    n: int
    q: int = 0  # 0 picks the smallest valid value for the protocol
    window: int = 4  # on-chain response window
    net_delay: int = 1  # off-chain response window
    dx_window: int = 10  # duplex dispute window
    strategies: dict = field(default_factory=dict)  # party -> Strategy; missing parties are honest
    executions: int = 2
    function: str = ""  # SFE function (msfe) or stage function (mscd)
    stages: int = 1
    balances: tuple = ()  # mscd: coins each party adds in the first execution
    deposits: tuple = (10**6, 10**6)  # duplex
    payments: tuple = ()  # duplex: explicit (payer, amount) pairs
    random_payments: int = 0  # duplex: extra random solvent payments
    withdrawals: tuple = ()  # duplex: incremental (party, amount) withdrawals before closing
    aggregate: bool = False  # msfe: one aggregate signature instead of n
    wallet: int = 10**7
    seed: int = 0
    max_ticks: int = 400
    name: str = ""
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        strategies = {}
        for k, v in dict(self.strategies).items():
            try:
                strategies[int(k)] = v if isinstance(v, Strategy) else Strategy.from_dict(v)
            except (StrategyError, TypeError, ValueError) as exc:
                raise ScenarioInvalid(f"party {k}: {exc}") from None
        object.__setattr__(self, "strategies", strategies)
        for name in ("balances", "deposits", "payments", "withdrawals"):
            value = getattr(self, name)
            object.__setattr__(self, name, tuple(tuple(x) if isinstance(x, list) else x for x in value))
        if not self.q:
            object.__setattr__(self, "q", default_q(self.protocol, self.n))
        if self.protocol == "mscd" and not self.balances:
            object.__setattr__(self, "balances", (DEFAULT_BALANCE,) * self.n)
        if not self.function:
            object.__setattr__(self, "function", "xor" if self.protocol == "msfe" else "lottery")
        self.validate()

    @property
    def corrupt(self) -> tuple:
        return tuple(sorted(j for j, s in self.strategies.items() if not s.honest))

    @property
    def honest(self) -> tuple:
        return tuple(j for j in range(1, self.n + 1) if j not in self.corrupt)

    def strategy(self, j: int) -> Strategy:
        return self.strategies.get(j, Strategy.honest_default())

    def validate(self):
        if self.format_version != FORMAT_VERSION:
            raise ScenarioInvalid(f"unsupported format_version {self.format_version}")
        if self.protocol not in PROTOCOLS:
            raise ScenarioInvalid(f"protocol must be one of {PROTOCOLS}")
        if self.n < 2 or (self.protocol == "duplex" and self.n != 2):
            raise ScenarioInvalid("need n >= 2 (exactly 2 for duplex)")
        if len(self.corrupt) > self.n - 1:
            raise ScenarioInvalid("at least one party must be honest")
        if any(not 1 <= j <= self.n for j in self.strategies):
            raise ScenarioInvalid("strategy assigned to an unknown party")
        for j, s in self.strategies.items():
            if s.protocols and self.protocol not in s.protocols:
                raise ScenarioInvalid(f"strategy {s.kind} does not apply to {self.protocol}")
        if self.max_ticks <= 0 or self.window < 2 or self.net_delay < 1 or self.dx_window < 2:
            raise ScenarioInvalid("max_ticks and delays must be positive, windows at least 2 ticks")
        if self.executions < 0 or self.stages < 1 or self.wallet < 0:
            raise ScenarioInvalid("negative execution plan")
        if self.protocol == "msfe":
            if self.function not in SFE_FUNCTIONS:
                raise ScenarioInvalid(f"unknown function {self.function!r}")
            if self.q <= 0 or self.q % lcm_upto(self.n):
                raise ScenarioInvalid(f"q must be a positive multiple of {lcm_upto(self.n)}")
        if self.protocol == "mscd":
            if self.function not in STAGE_FUNCTIONS:
                raise ScenarioInvalid(f"unknown stage function {self.function!r}")
            if self.balances and (len(self.balances) != self.n or min(self.balances) < 0):
                raise ScenarioInvalid("one non-negative balance per party")
            if self.aggregate:
                raise ScenarioInvalid("aggregate signatures are only used by msfe")
        if self.protocol == "duplex":
            if len(self.deposits) != 2 or min(self.deposits) < 0:
                raise ScenarioInvalid("duplex needs two non-negative deposits")
            for pair in self.payments + self.withdrawals:
                if len(pair) != 2 or pair[0] not in (1, 2) or pair[1] <= 0:
                    raise ScenarioInvalid(f"bad (party, amount) pair {pair!r}")
            if self.random_payments < 0:
                raise ScenarioInvalid("random_payments must be >= 0")

    # -- serialization -------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if not isinstance(doc, dict):
            raise ScenarioInvalid("a scenario is a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ScenarioInvalid(f"unknown fields: {', '.join(unknown)}")
        for required in ("protocol", "n"):
            if required not in doc:
                raise ScenarioInvalid(f"missing field {required!r}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ScenarioInvalid(str(exc)) from None

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["strategies"] = {str(j): s.to_dict() for j, s in sorted(self.strategies.items())}
        for name in ("balances", "deposits", "payments", "withdrawals"):
            doc[name] = [list(x) if isinstance(x, tuple) else x for x in getattr(self, name)]
        return doc

    def with_seed(self, seed: Optional[int]) -> "Scenario":
        if seed is None:
            return self
        doc = self.to_dict()
        doc["seed"] = seed
        return Scenario.from_dict(doc)


def default_q(protocol: str, n: int) -> int:
    if protocol == "msfe":
        return lcm_upto(n)
    if protocol == "mscd":
        return n - 1
    return 1


def derive_input(s: Scenario, exec_id: int, j: int, tag: str = "") -> bytes:
    """Deterministic 8-byte input of party j, shared by the runner and the ideal oracle."""
    h = hashlib.sha256(f"statechan/input/{s.seed}/{s.protocol}/{exec_id}/{j}/{tag}".encode())
    return h.digest()[:8]
