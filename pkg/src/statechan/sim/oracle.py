"""Ideal-world outcomes computed directly from the functionality rules.

No protocol machinery is used: the oracle evaluates the functions on the
scenario's inputs and applies the ideal payout rules. Every honest party ends
with its deposit back (plus compensation ``q`` if the adversary aborted after
seeing an output) and, for cash distribution, its balance in the computation.
"""

from __future__ import annotations

from typing import Optional

from ..games import STAGE_FUNCTIONS
from ..mscd import turn_of
from ..msfe import SFE_FUNCTIONS
from .scenario import Scenario, derive_input


class UnmappableStrategy(ValueError):
    """The strategy has no clean ideal-world counterpart."""


UNMAPPABLE = ("replay_stale", "corner_case", "stale_duplex_submit")


def _msfe_event(s: Scenario, k: int) -> Optional[tuple]:
    """(exec id, action) the corrupt party k causes; action is "abort", "penalty" or "exit"."""
    st = s.strategy(k)
    kind, e = st.kind, st.exec
    if kind in ("abort_at_step",):
        return (e, "penalty" if st.step == 3 else "abort") if st.step in (1, 2, 3) else None
    if kind == "withhold_signature":
        return e, "abort"
    if kind == "withhold_share":
        return e, "penalty"
    if kind == "premature_exit":
        return e, "exit"
    return None


def _mscd_event(s: Scenario, k: int) -> Optional[tuple]:
    st = s.strategy(k)
    kind, e, n = st.kind, st.exec, s.n
    length = 2 * n * s.stages
    if kind == "abort_at_step":
        if st.step == "topup":
            return (e, "no_topup") if e == 1 and any(s.balances) else None
        if st.step == "agree":
            return e, "exit"
        if isinstance(st.step, str) and st.step.startswith("round:"):
            r = int(st.step[6:])
            return (e, "penalty") if r <= length and turn_of(r, n) == k else None
        return None
    if kind == "withhold_signature":
        return e, "exit"
    if kind == "withhold_share":
        return e, "penalty"
    if kind == "premature_exit":
        return e, "exit"
    return None


def _first_event(s: Scenario, pick) -> Optional[tuple]:
    events = []
    for k in s.corrupt:
        kind = s.strategy(k).kind
        if kind in UNMAPPABLE:
            raise UnmappableStrategy(f"{kind} has no ideal-world counterpart")
        ev = pick(s, k)
        if ev is not None and ev[0] <= s.executions:
            events.append(ev)
    return min(events) if events else None


def _silent(s: Scenario) -> bool:
    return any(s.strategy(k).kind == "silent_forever" for k in s.corrupt)


def msfe_ideal(s: Scenario) -> dict:
    g = SFE_FUNCTIONS[s.function]
    event = None if _silent(s) else _first_event(s, _msfe_event)
    outputs, delta = {}, 0
    if not _silent(s):
        last = s.executions if event is None else event[0] - 1
        for i in range(1, last + 1):
            outputs[str(i)] = g([derive_input(s, i, j) for j in range(1, s.n + 1)]).hex()
        if event is not None and event[1] == "penalty":
            delta = s.q  # flg = 1: deposit plus compensation
    return {str(j): {"delta": delta, "outputs": dict(outputs)} for j in s.honest}


def mscd_ideal(s: Scenario) -> dict:
    g = STAGE_FUNCTIONS[s.function]
    n = s.n
    if _silent(s):
        return {str(j): {"delta": 0, "outputs": {}} for j in s.honest}
    event = _first_event(s, _mscd_event)
    topups = list(s.balances)
    b = tuple(topups)
    outputs: dict = {}
    penalty = False
    if event is not None and event[1] == "no_topup":
        topups, b = [0] * n, (0,) * n  # the first coin addition already failed
    for i in range(1, s.executions + 1):
        if not g.ready_for(b, s.stages):
            break
        if event is not None and event[0] == i:
            penalty = event[1] == "penalty"
            break
        state, zs = None, []
        for stage in range(s.stages):
            inputs = [derive_input(s, i, j, f"stage{stage}") for j in range(1, n + 1)]
            z, b, state = g(inputs, state, b)
            zs.append(z.hex())
        outputs[str(i)] = zs
    result = {}
    for j in s.honest:
        delta = b[j - 1] - topups[j - 1] + (s.q if penalty else 0)
        result[str(j)] = {"delta": delta, "outputs": dict(outputs)}
    return result


def ideal_oracle(s: Scenario) -> dict:
    """Honest parties' ideal (wallet change, outputs), keyed by party id string."""
    if s.protocol == "msfe":
        return msfe_ideal(s)
    if s.protocol == "mscd":
        return mscd_ideal(s)
    raise UnmappableStrategy("the ideal functionalities cover msfe and mscd only")


def real_outcomes(trace: dict) -> dict:
    out = {}
    for j in trace["honest"]:
        j = str(j)
        out[j] = {"delta": trace["final_wallets"][j] - trace["initial_wallets"][j],
                  "outputs": trace["views"][j]["outputs"]}
    return out


def compare_with_oracle(s: Scenario, trace: dict) -> list:
    """Differences between real and ideal honest outcomes (empty when they match)."""
    ideal, real = ideal_oracle(s), real_outcomes(trace)
    diffs = []
    for j in sorted(ideal):
        for key in ("delta", "outputs"):
            if ideal[j][key] != real[j][key]:
                diffs.append(f"party {j} {key}: real {real[j][key]!r}, ideal {ideal[j][key]!r}")
    return diffs
