"""Adversary strategies for corrupt parties.

A strategy only decides which of its own messages a corrupt party emits and
when it sends extra triggers. Off-chain steps are addressed as follows:

* msfe: step 1 (dealer), 2 (signatures), 3 (share broadcast)
* mscd: ``("topup", j)``, ``"agree"`` and ``("round", r)`` with r 1-based
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

KINDS = (
    "honest", "abort_at_step", "withhold_share", "withhold_signature", "replay_stale",
    "premature_exit", "stale_duplex_submit", "silent_forever", "corner_case",
)

_PROTOCOLS = {
    "honest": (),
    "abort_at_step": ("msfe", "mscd"),
    "withhold_share": ("msfe", "mscd"),
    "withhold_signature": ("msfe", "mscd"),
    "replay_stale": ("msfe", "mscd"),
    "premature_exit": ("msfe", "mscd"),
    "stale_duplex_submit": ("duplex",),
    "silent_forever": (),
    "corner_case": ("msfe", "mscd"),
}


class StrategyError(ValueError):
    pass


def _step_matches(wanted, step) -> bool:
    """Compare a stored step ("topup", "agree", "round:3", 1..3) with a protocol step."""
    if isinstance(wanted, int):
        return step == wanted
    if wanted == "topup":
        return isinstance(step, tuple) and step[0] == "topup"
    if wanted == "agree":
        return step == "agree"
    if isinstance(wanted, str) and wanted.startswith("round:"):
        return isinstance(step, tuple) and step == ("round", int(wanted[6:]))
    return False


@dataclass(frozen=True)
class Strategy:
    kind: str = "honest"
    exec: Optional[int] = None
    step: object = None
    old: Optional[int] = None
    round: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise StrategyError(f"unknown strategy {self.kind!r}")
        needs_exec = self.kind in ("abort_at_step", "withhold_share", "withhold_signature",
                                   "premature_exit", "corner_case")
        if needs_exec and (not isinstance(self.exec, int) or self.exec < 1):
            raise StrategyError(f"{self.kind} needs a positive exec id")
        if self.kind == "abort_at_step":
            ok = self.step in (1, 2, 3, "topup", "agree") or (
                isinstance(self.step, str) and self.step.startswith("round:") and self.step[6:].isdigit())
            if not ok:
                raise StrategyError(f"bad abort step {self.step!r}")
        if self.kind == "replay_stale" and (not isinstance(self.old, int) or self.old < 1):
            raise StrategyError("replay_stale needs the old exec id")
        if self.kind == "stale_duplex_submit" and (not isinstance(self.round, int) or self.round < 0):
            raise StrategyError("stale_duplex_submit needs a round")

    @classmethod
    def honest_default(cls) -> "Strategy":
        return cls()

    @classmethod
    def from_dict(cls, doc) -> "Strategy":
        if isinstance(doc, str):
            doc = {"kind": doc}
        if not isinstance(doc, dict):
            raise StrategyError("a strategy is an object with a 'kind'")
        extra = set(doc) - {"kind", "exec", "step", "old", "round"}
        if extra:
            raise StrategyError(f"unknown strategy fields: {', '.join(sorted(extra))}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {k: v for k, v in (("kind", self.kind), ("exec", self.exec), ("step", self.step),
                                  ("old", self.old), ("round", self.round)) if v is not None}

    def label(self) -> str:
        args = [f"{k}={v}" for k, v in self.to_dict().items() if k != "kind"]
        return f"{self.kind}({', '.join(args)})"

    @property
    def protocols(self) -> tuple:
        return _PROTOCOLS[self.kind]

    @property
    def honest(self) -> bool:
        return self.kind == "honest"

    @property
    def deposits(self) -> bool:
        return self.kind != "silent_forever"

    @property
    def follows_chain_protocol(self) -> bool:
        """Whether the party runs the honest on-chain reactions after its deviation."""
        return self.kind == "corner_case"

    def sends(self, exec_id: int, step, n: int = 0) -> bool:
        k = self.kind
        if k == "silent_forever":
            return False
        if k in ("honest", "replay_stale", "premature_exit", "stale_duplex_submit"):
            return True
        if exec_id != self.exec:
            return True
        if k == "abort_at_step":
            return not _step_matches(self.step, step)
        if k in ("withhold_signature", "corner_case"):
            return step not in (2, "agree")
        if k == "withhold_share":
            if step == 3:
                return False
            # mscd: every reveal round of the execution
            return not (isinstance(step, tuple) and step[0] == "round" and n and (step[1] - 1) % (2 * n) >= n)
        return True


class PartyBehaviour:
    """Adapter giving protocol parties the ``honest``/``sends`` interface."""

    def __init__(self, strategy: Strategy, n: int):
        self.strategy, self.n = strategy, n
        self.honest = strategy.honest

    def sends(self, exec_id: int, step) -> bool:
        return self.strategy.sends(exec_id, step, self.n)
