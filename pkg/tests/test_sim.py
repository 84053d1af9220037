import copy
import hashlib

import pytest

from statechan.msfe import SFE_FUNCTIONS
from statechan.sim import (
    Scenario, ScenarioInvalid, Strategy, check_invariants, compare_with_oracle, derive_input, dumps, ideal_oracle,
    run_scenario, strategy_grid, UnmappableStrategy,
)


def scenario(**fields):
    return Scenario.from_dict(fields)


def corrupt(proto, n, k, **st):
    return {"protocol": proto, "n": n, "strategies": {str(k): st}}


def test_scenario_defaults_and_validation():
    s = scenario(protocol="msfe", n=4)
    assert s.q == 12 and s.function == "xor" and s.honest == (1, 2, 3, 4)
    assert scenario(protocol="mscd", n=3).q == 2
    with pytest.raises(ScenarioInvalid):
        Scenario.from_dict({"protocol": "msfe", "n": 3, "colour": "red"})
    with pytest.raises(ScenarioInvalid):
        Scenario.from_dict({"protocol": "msfe"})
    with pytest.raises(ScenarioInvalid):
        Scenario.from_dict({"protocol": "msfe", "n": 3, "q": 4})


def test_scenario_round_trips():
    s = Scenario.from_dict(corrupt("mscd", 3, 2, kind="abort_at_step", exec=2, step="round:2"))
    assert Scenario.from_dict(s.to_dict()) == s


def test_derived_inputs_are_frozen():
    s = scenario(protocol="msfe", n=2, seed=7)
    want = hashlib.sha256(b"statechan/input/7/msfe/1/2/").digest()[:8]
    assert derive_input(s, 1, 2) == want


def test_runs_are_deterministic():
    s = Scenario.from_dict(corrupt("mscd", 3, 2, kind="withhold_share", exec=2))
    assert dumps(run_scenario(s)) == dumps(run_scenario(s))
    assert dumps(run_scenario(s)) != dumps(run_scenario(s.with_seed(1)))


def test_all_honest_msfe_uses_n_plus_one_triggers():
    for n in (2, 3, 4):
        t = run_scenario(scenario(protocol="msfe", n=n, executions=5))
        assert t["stats"]["accepted_triggers"] == n + 1
        assert t["stats"]["dispute_triggers"] == 0
        assert all(e["outcome"] == "completed" for e in t["executions"])
        assert check_invariants(t).ok


def test_honest_outputs_match_function():
    s = scenario(protocol="msfe", n=3, executions=2, function="sha256")
    t = run_scenario(s)
    g = SFE_FUNCTIONS["sha256"]
    for i in (1, 2):
        z = g([derive_input(s, i, j) for j in (1, 2, 3)])
        assert t["views"]["1"]["outputs"][str(i)] == z.hex()


def test_silent_party_leads_to_refund():
    s = Scenario.from_dict(corrupt("msfe", 3, 2, kind="silent_forever"))
    t = run_scenario(s)
    assert t["outcome"] == "refunded"
    assert t["final_wallets"] == t["initial_wallets"]
    assert check_invariants(t).ok


def test_post_share_abort_compensates():
    s = Scenario.from_dict(corrupt("msfe", 3, 3, kind="abort_at_step", exec=2, step=3))
    t = run_scenario(s)
    d = {j: t["final_wallets"][j] - t["initial_wallets"][j] for j in t["final_wallets"]}
    assert d["1"] == d["2"] == s.q and d["3"] == -2 * s.q
    assert check_invariants(t).ok and compare_with_oracle(s, t) == []


def test_mscd_round_abort_blames_the_speaker():
    s = Scenario.from_dict(corrupt("mscd", 3, 2, kind="abort_at_step", exec=1, step="round:2"))
    t = run_scenario(s)
    report = check_invariants(t)
    assert report.ok
    for j in s.honest:
        view = t["views"][str(j)]
        delta = t["final_wallets"][str(j)] - t["initial_wallets"][str(j)]
        assert delta == s.q + view["entitled"] - view["topped_up"]


def test_replay_is_overridden_on_chain():
    s = Scenario.from_dict(corrupt("msfe", 3, 1, kind="replay_stale", old=1))
    t = run_scenario(s)
    assert t["stats"]["dispute_triggers"] >= 1
    assert check_invariants(t).ok
    with pytest.raises(UnmappableStrategy):
        ideal_oracle(s)


def test_duplex_stale_submit_gains_nothing():
    s = scenario(protocol="duplex", n=2, random_payments=10,
                 strategies={"1": {"kind": "stale_duplex_submit", "round": 2}})
    t = run_scenario(s)
    assert check_invariants(t).ok
    assert t["final_wallets"]["1"] - t["initial_wallets"]["1"] == t["views"]["1"]["expected_delta"]


def test_tampered_payout_is_detected():
    t = run_scenario(scenario(protocol="msfe", n=3))
    bad = copy.deepcopy(t)
    rec = next(r for r in bad["records"] if r["kind"] == "trigger" and r.get("payout"))
    rec["payout"] += 1
    report = check_invariants(bad)
    assert not report.get("conservation").ok
    assert report.get("conservation").tick == rec["tick"]


def test_budget_exhaustion_is_a_violation():
    s = Scenario.from_dict(corrupt("mscd", 3, 1, kind="withhold_share", exec=1))
    t = run_scenario(Scenario.from_dict({**s.to_dict(), "max_ticks": 5}))
    assert t["outcome"] == "budget"
    assert not check_invariants(t).get("drain").ok


def test_oracle_penalty_for_mscd():
    s = Scenario.from_dict(corrupt("mscd", 2, 1, kind="abort_at_step", exec=2, step="round:3"))
    ideal = ideal_oracle(s)
    t = run_scenario(s)
    assert list(ideal) == ["2"]
    assert compare_with_oracle(s, t) == []


def test_grid_starts_with_honest_baseline():
    grid = strategy_grid("msfe", 2)
    assert grid[0].corrupt == () and grid[0].name == "msfe-n2-honest"
    assert len({s.name for s in grid}) == len(grid)
    duplex = strategy_grid("duplex", 2, payments=3)
    assert len(duplex) == 1 + 2 * (4 + 1)


def test_strategy_labels_round_trip():
    st = Strategy("abort_at_step", exec=2, step="round:3")
    assert Strategy.from_dict(st.to_dict()) == st
    assert st.label()
