"""Enumerate adversary scenarios: every strategy, corrupt party and abort point."""

from __future__ import annotations

from typing import Optional

from ..mscd import turn_of
from .scenario import Scenario
from .strategies import Strategy

DUPLEX_PAYMENTS = 10


def _cap(items: list, limit: Optional[int]) -> list:
    return items if limit is None else items[:limit]


def msfe_strategies(n: int, k: int, executions: int, limit: Optional[int] = None) -> list:
    ids = range(1, executions + 1)
    out = _cap([Strategy("abort_at_step", exec=e, step=s) for e in ids for s in (1, 2, 3)], limit)
    out += _cap([Strategy("withhold_share", exec=e) for e in ids], limit)
    out += _cap([Strategy("withhold_signature", exec=e) for e in ids], limit)
    out += _cap([Strategy("premature_exit", exec=e) for e in range(1, executions + 2)], limit)
    out += _cap([Strategy("corner_case", exec=e) for e in ids], limit)
    if executions >= 2:
        out += [Strategy("replay_stale", old=1)]
    out.append(Strategy("silent_forever"))
    return out


def mscd_strategies(n: int, k: int, executions: int, stages: int = 1, limit: Optional[int] = None) -> list:
    ids = range(1, executions + 1)
    rounds = [r for r in range(1, 2 * n * stages + 1) if turn_of(r, n) == k]
    points = [Strategy("abort_at_step", exec=1, step="topup")]
    points += [Strategy("abort_at_step", exec=e, step="agree") for e in ids]
    points += [Strategy("abort_at_step", exec=e, step=f"round:{r}") for e in ids for r in rounds]
    out = _cap(points, limit)
    out += _cap([Strategy("withhold_share", exec=e) for e in ids], limit)
    out += _cap([Strategy("withhold_signature", exec=e) for e in ids], limit)
    out += _cap([Strategy("premature_exit", exec=e) for e in range(1, executions + 2)], limit)
    out += _cap([Strategy("corner_case", exec=e) for e in ids], limit)
    if executions >= 2:
        out += [Strategy("replay_stale", old=1)]
    out.append(Strategy("silent_forever"))
    return out


def strategy_grid(protocol: str, n: int, executions: int = 2, max_abort_points: Optional[int] = None,
                  seed: int = 0, payments: int = DUPLEX_PAYMENTS, **fields) -> list:
    """All single-corrupt-party scenarios for one protocol, honest baseline first."""
    base = dict(protocol=protocol, n=n, seed=seed, **fields)
    if protocol == "duplex":
        base.update(n=2, random_payments=payments)
    else:
        base.update(executions=executions)
    grid = [Scenario.from_dict({**base, "name": f"{protocol}-n{base['n']}-honest"})]
    if protocol == "duplex":
        for k in (1, 2):
            rounds = _cap(list(range(0, payments + 1)), max_abort_points)
            strategies = [Strategy("stale_duplex_submit", round=r) for r in rounds] + [Strategy("silent_forever")]
            grid += [_one(base, k, st) for st in strategies]
        return grid
    for k in range(1, n + 1):
        if protocol == "msfe":
            strategies = msfe_strategies(n, k, executions, max_abort_points)
        else:
            strategies = mscd_strategies(n, k, executions, fields.get("stages", 1), max_abort_points)
        grid += [_one(base, k, st) for st in strategies]
    return grid


def _one(base: dict, k: int, st: Strategy) -> Scenario:
    name = f"{base['protocol']}-n{base['n']}-p{k}-{st.label()}"
    return Scenario.from_dict({**base, "strategies": {str(k): st.to_dict()}, "name": name})
