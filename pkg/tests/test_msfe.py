import random

import pytest
from hypothesis import given, settings, strategies as st

from statechan.crypto import party_keys
from statechan.ledger import Ledger
from statechan.msfe import (
    ABORT, EXEC, EXIT, EXIT_WITNESS, INACTIVE, INIT, PAYOUT, SFE_FUNCTIONS, AbortedAtStep, Behaviour,
    Completed, MissingOpening, MsfeConfig, MsfeConfigError, MsfeContract, MsfeParty, MsfeState,
    MsfeTranscript, TranscriptWitness, _sign_all, dealer_execute, lcm_upto, run_local_execution, xor_bytes,
)

N, Q, WINDOW = 3, 6, 4


def setup(n=N, q=Q):
    keys = party_keys(n, b"test-msfe")
    cfg = MsfeConfig(n, q, WINDOW, 1, tuple(k.pk for k in keys))
    parties = [MsfeParty(j, cfg, keys[j - 1]) for j in range(1, n + 1)]
    return cfg, MsfeContract(cfg), parties


def signed(parties, exec_id, inputs=None, opened=(), seed=0):
    n = len(parties)
    inputs = inputs or [bytes([j]) for j in range(1, n + 1)]
    out = dealer_execute(SFE_FUNCTIONS["xor"], inputs, exec_id, random.Random(seed))
    sigma = _sign_all(parties, exec_id, out.h)
    X = tuple(out.openings[k] if k + 1 in opened else None for k in range(n))
    return out, MsfeTranscript(X, out.h, sigma)


class Silent(Behaviour):
    honest = False

    def __init__(self, step):
        self.step = step

    def sends(self, exec_id, step):
        return step != self.step


def test_q_must_divide_evenly():
    assert lcm_upto(3) == 6 and lcm_upto(4) == 12
    with pytest.raises(MsfeConfigError):
        MsfeConfig(3, 4, WINDOW, 1, (b"a", b"b", b"c"))
    assert MsfeConfig(3, 6, WINDOW, 1, (b"a", b"b", b"c")).deposit == 12


def test_pred_accepts_fresh_signed_transcript():
    cfg, c, parties = setup()
    _, tt = signed(parties, 1, opened={1})
    assert c.pred(1, TranscriptWitness(1, tt), 0, c.initial_state())


def test_pred_rejects_older_id_and_nothing_new():
    cfg, c, parties = setup()
    _, tt4 = signed(parties, 4, opened={1})
    _, tt5 = signed(parties, 5, opened={1})
    st5 = MsfeState(EXEC, 5, tt5, 10, (True,) * N)
    assert not c.pred(1, TranscriptWitness(4, tt4), 11, st5)
    assert not c.pred(2, TranscriptWitness(5, tt5), 11, st5)


def test_pred_rejects_bad_signature():
    cfg, c, parties = setup()
    _, tt = signed(parties, 1, opened={1})
    bad = MsfeTranscript(tt.X, tt.h, (tt.sigma[0], tt.sigma[0], tt.sigma[2]))
    assert not c.pred(1, TranscriptWitness(1, bad), 0, c.initial_state())


def test_abort_claim_pays_deposit_plus_q():
    cfg, c, parties = setup()
    _, tt = signed(parties, 1, opened={1, 3})
    st = MsfeState(EXEC, 1, tt, 10, (True,) * N)
    res = c.prog(1, EXIT_WITNESS, 10 + WINDOW + 1, st)
    assert res.payout == 18 == cfg.deposit + Q
    assert res.state.mode == ABORT and res.state.L == (False, False, True)


def test_claimant_without_opening_forfeits():
    cfg, c, parties = setup()
    _, tt = signed(parties, 1, opened={1, 3})
    st = MsfeState(EXEC, 1, tt, 10, (True,) * N)
    res = c.prog(2, EXIT_WITNESS, 10 + WINDOW + 1, st)
    assert res.payout == 0 and res.state.L[1] is False


def test_payout_mode_claim():
    cfg, c, parties = setup()
    st = MsfeState(EXIT, -1, None, 3, (True,) * N)
    assert c.prog(1, EXIT_WITNESS, 3 + WINDOW, st) is None
    res = c.prog(1, EXIT_WITNESS, 3 + WINDOW + 1, st)
    assert res.payout == 12 and res.state.mode == PAYOUT


def test_exit_paths():
    cfg, c, parties = setup()
    res = c.prog(2, EXIT_WITNESS, 5, c.initial_state())
    assert (res.state.mode, res.state.t) == (EXIT, 5)
    _, partial = signed(parties, 1, opened={1})
    st = MsfeState(EXEC, 1, partial, 5, (True,) * N)
    assert c.prog(1, EXIT_WITNESS, 5 + WINDOW, st) is None
    _, full = signed(parties, 1, opened={1, 2, 3})
    st = MsfeState(EXEC, 1, full, 5, (True,) * N)
    assert c.prog(1, EXIT_WITNESS, 6, st).state.mode == EXIT


def test_frozen_abort_rejects_transcripts():
    cfg, c, parties = setup()
    _, tt = signed(parties, 1, opened={1})
    _, tt2 = signed(parties, 2, opened={1, 2})
    st = MsfeState(ABORT, 1, tt, 10, (False, True, True))
    assert c.prog(2, TranscriptWitness(2, tt2), 11, st) is None


@settings(max_examples=30, deadline=None)
@given(st.sets(st.integers(1, 4), min_size=1, max_size=3), st.permutations([1, 2, 3, 4]))
def test_abort_drains_exactly(opened, order):
    n, q = 4, 12
    cfg, c, parties = setup(n, q)
    _, tt = signed(parties, 1, opened=opened)
    ledger = Ledger({j: 100 for j in range(1, n + 1)})
    cid = ledger.create_contract(c, MsfeState(EXEC, 1, tt, 0, (True,) * n), c.deposits(), deadline=1)
    ledger.now = WINDOW + 1
    for j in order:
        if ledger.instance(cid).status == "live":
            ledger.submit_trigger(cid, j, EXIT_WITNESS)
    assert ledger.instance(cid).status == "terminated"
    assert ledger.state(cid).mode == INACTIVE
    gain = n * (n - 1) * q // len(opened) - (n - 1) * q
    assert all(ledger.wallets[j] == 100 + (gain if j in opened else -(n - 1) * q) for j in range(1, n + 1))


def test_dealer_shares_recombine():
    out = dealer_execute(SFE_FUNCTIONS["xor"], [b"\x01", b"\x02", b"\x04"], 1, random.Random(7))
    assert out.z == bytes(7) + b"\x07"
    assert xor_bytes([x.message for x in out.openings]) == out.z
    from statechan.crypto import verify_open
    assert all(verify_open(x, h) for x, h in zip(out.openings, out.h))


def test_all_honest_execution_completes():
    cfg, c, parties = setup()
    res = run_local_execution(1, SFE_FUNCTIONS["xor"], [b"\x01", b"\x02", b"\x04"], parties, random.Random(1))
    assert res == Completed(bytes(7) + b"\x07")
    assert all(p.best.id == 1 and p.best.complete() for p in parties)


def test_withheld_signature_keeps_previous_best():
    cfg, c, parties = setup()
    run_local_execution(1, SFE_FUNCTIONS["xor"], [b"a", b"b", b"c"], parties, random.Random(1))
    parties[1].behaviour = Silent(2)
    res = run_local_execution(2, SFE_FUNCTIONS["xor"], [b"a", b"b", b"c"], parties, random.Random(2))
    assert res == AbortedAtStep(2)
    assert parties[0].best.id == 1 and parties[2].best.id == 1


def test_withheld_share_leaves_honest_openings():
    cfg, c, parties = setup()
    parties[1].behaviour = Silent(3)
    res = run_local_execution(1, SFE_FUNCTIONS["xor"], [b"a", b"b", b"c"], parties, random.Random(3))
    assert res == AbortedAtStep(3)
    X = parties[0].best.tt.X
    assert X[0] is not None and X[2] is not None and X[1] is None
    assert 1 not in parties[0].outputs and 1 in parties[1].outputs


def test_party_reactions():
    cfg, c, parties = setup()
    run_local_execution(1, SFE_FUNCTIONS["xor"], [b"a", b"b", b"c"], parties, random.Random(1))
    run_local_execution(2, SFE_FUNCTIONS["xor"], [b"d", b"e", b"f"], parties, random.Random(2))
    p1 = parties[0]
    assert p1.handle_ledger_event(MsfeState(ABORT, 1, p1.best.tt, 0, (True, False, True)), 9) == [EXIT_WITNESS]
    # a stale execution on-chain is answered with the newer best transcript
    stale = parties[1].own_only(1, *parties[1].known[1])
    w = p1.handle_ledger_event(MsfeState(EXEC, 1, stale, 5, (True,) * N), 6)
    assert w == [TranscriptWitness(2, p1.best.tt)]


def test_corner_case_submits_own_opening():
    cfg, c, parties = setup()
    run_local_execution(1, SFE_FUNCTIONS["xor"], [b"a", b"b", b"c"], parties, random.Random(1))
    parties[1].behaviour = Silent(2)
    run_local_execution(2, SFE_FUNCTIONS["xor"], [b"a", b"b", b"c"], parties, random.Random(2))
    h, sigma = parties[1].known[2]
    posted = parties[1].own_only(2, h, sigma)
    [w] = parties[0].handle_ledger_event(MsfeState(EXEC, 2, posted, 5, (True,) * N), 6)
    assert w.id == 2 and w.tt.X[0] == parties[0].openings[2]
    assert c.pred(1, w, 6, MsfeState(EXEC, 2, posted, 5, (True,) * N))


def test_missing_opening_is_an_assertion():
    cfg, c, parties = setup()
    with pytest.raises(MissingOpening):
        parties[0].own_only(9, (), ())
