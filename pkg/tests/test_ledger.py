import pytest
from hypothesis import given, strategies as st

from statechan.ledger import (
    DuplicateDeposit, InstanceTerminated, Ledger, PayoutExceedsEscrow, Transition,
    UpdatesNotSupported, WrongDepositAmount,
)


class Claims:
    """Each party may claim back its deposit once; anything else is rejected."""

    supports_update = False

    def __init__(self, n, d):
        self.n, self.d = n, d

    def deposits(self):
        return {j: self.d for j in range(1, self.n + 1)}

    def prog(self, j, w, t, st):
        if w == "claim" and j not in st:
            return Transition(st | {j}, payout=self.d)
        if w == "greedy":
            return Transition(st, payout=10**9)
        if w == "noop":
            return Transition(st)
        return None

    def describe_state(self, st):
        return sorted(st)

    def describe_witness(self, w):
        return w


def make(n=3, d=12, wallet=100, fund=None):
    ledger = Ledger({j: wallet for j in range(1, n + 1)})
    prog = Claims(n, d)
    deposits = {j: d for j in range(1, n + 1)} if fund is None else fund
    return ledger, ledger.create_contract(prog, frozenset(), deposits, deadline=5)


def test_full_funding_goes_live():
    ledger, cid = make()
    assert ledger.instance(cid).status == "live"
    assert ledger.instance(cid).escrow == 36


def test_underfunded_refund_after_deadline():
    ledger, cid = make(n=2, fund={1: 12})
    assert ledger.wallets[1] == 88
    while ledger.now <= 5:
        ledger.advance_tick()
    assert ledger.instance(cid).status == "refunded"
    assert ledger.wallets[1] == 100
    with pytest.raises(InstanceTerminated):
        ledger.submit_trigger(cid, 1, "claim")


def test_late_funding_before_deadline():
    ledger, cid = make(n=2, fund={1: 12})
    ledger.advance_tick()
    ledger.fund(cid, 2, 12)
    assert ledger.instance(cid).status == "live"


def test_wrong_and_duplicate_deposits():
    with pytest.raises(WrongDepositAmount):
        make(fund={1: 12, 2: 11, 3: 12})
    ledger, cid = make(n=2, fund={1: 12})
    with pytest.raises(DuplicateDeposit):
        ledger.fund(cid, 1, 12)


def test_rejected_trigger_changes_nothing():
    ledger, cid = make()
    assert not ledger.submit_trigger(cid, 1, "garbage")
    ledger.advance_tick()
    assert ledger.drain(1) == []
    assert ledger.state(cid) == frozenset()


def test_last_claim_terminates_instance():
    ledger, cid = make()
    for j in (1, 2, 3):
        assert ledger.submit_trigger(cid, j, "claim")
    assert ledger.instance(cid).status == "terminated"
    assert ledger.wallets == {1: 100, 2: 100, 3: 100}
    with pytest.raises(InstanceTerminated):
        ledger.submit_trigger(cid, 1, "noop")


def test_overdraw_is_an_assertion():
    ledger, cid = make()
    with pytest.raises(PayoutExceedsEscrow):
        ledger.submit_trigger(cid, 1, "greedy")


def test_updates_not_supported():
    ledger, cid = make()
    with pytest.raises(UpdatesNotSupported):
        ledger.submit_update(cid, 1, None, 10)


def test_events_reach_every_subscriber_after_tick():
    ledger, cid = make()
    ledger.queue_trigger(cid, 2, "claim")
    ledger.advance_tick()
    for j in (1, 2, 3):
        [event] = ledger.drain(j)
        assert (event.origin, event.payout, event.payee) == (2, 12, 2)


def order_of(ledger, cid, queued):
    seen = []
    ledger.recorder = lambda kind, **f: seen.append(f["party"]) if kind == "trigger" else None
    for party in queued:
        ledger.queue_trigger(cid, party, "noop")
    ledger.advance_tick()
    return seen


def test_tick_seven_processes_p1_before_p2():
    ledger, cid = make(n=2)
    ledger.now = 7
    assert order_of(ledger, cid, [2, 1]) == [1, 2]


def test_round_robin_fifo_within_party():
    ledger, cid = make(n=3)
    ledger.now = 2
    assert order_of(ledger, cid, [2, 2, 3]) == [2, 3, 2]


@given(st.lists(st.integers(1, 4), max_size=20), st.integers(0, 50))
def test_fair_access(queued, tick):
    ledger, cid = make(n=4)
    ledger.now = tick
    order = order_of(ledger, cid, queued)
    assert sorted(order) == sorted(queued)
    # no party gets a second slot before every other waiting party got its first
    for k in range(1, 5):
        for other in set(queued) - {k}:
            if queued.count(k) >= 2:
                second = [i for i, p in enumerate(order) if p == k][1]
                assert order.index(other) < second


@given(st.lists(st.sampled_from(["claim", "noop", "garbage"]), max_size=15))
def test_coin_conservation(witnesses):
    ledger, cid = make()
    total = ledger.total_coins()
    for i, w in enumerate(witnesses):
        inst = ledger.instance(cid)
        if inst.status != "live":
            break
        ledger.queue_trigger(cid, 1 + i % 3, w)
        ledger.advance_tick()
        assert ledger.total_coins() == total
        assert inst.escrow == inst.total_in - inst.total_out >= 0
