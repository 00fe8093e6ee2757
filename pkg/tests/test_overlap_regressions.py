"""Regressions found by the adversarial campaigns.

Both bugs involved reconfigurations overlapping with configuration formation:

1. A probe reply from an earlier probing round, sent by a process that is
   also a member of the current round's configuration, was consumed as the
   current round's awaited answer.  That let probing descend past epochs it
   had no verdict on - below epoch 0 in the benign case, past an activated
   epoch (losing committed entries) in the worst case.

2. A deferred-activation follower joined a configuration as soon as its
   inherited prefix was delivered, before the leader's ack round completed.
   An overlapping reconfiguration could then walk below the half-formed epoch
   and resurrect a message committed later, which the early joiner misses
   forever (a Primary Integrity violation).  Followers now join only on
   post-ack evidence from the leader; an empty replay is signalled by a
   repeated state transfer.
"""

from vabcast.checker import check_liveness, check_primary_order
from vabcast.fuzz import fuzz_campaign
from vabcast.harness import run_scenario
from vabcast.model import CONF_CHANGED, Configuration, Mode, NewState
from vabcast.report import evaluate_run
from vabcast.scenario import Scenario, chaos_scenario, compute_premise, random_scenario


def test_stale_probe_ack_does_not_advance_the_round():
    # an initiator outside the configurations drives two overlapping probes;
    # replies from the first round keep arriving while the second round's
    # membership fetch is in flight
    for seed in (64, 226, 594, 622, 716, 1706, 1733):
        for mode in (Mode.VAB, Mode.PO, Mode.SPO):
            result = run_scenario(chaos_scenario(seed, mode))
            probs = {v.prop for v in result.violations}
            assert "ProbeUnderflow" not in probs, (seed, mode)
            assert "Inv1" not in probs and "Inv3" not in probs, (seed, mode)


def test_half_formed_epoch_join_does_not_break_primary_integrity():
    # shape distilled from chaos seed 1706: epoch 4 starts forming while the
    # old leader keeps broadcasting; a later reconfiguration descends past the
    # unfinished epoch and replays the residual message
    for seed in (1706, 1733, 5086, 6007, 8628):
        result = run_scenario(chaos_scenario(seed, Mode.PO))
        assert not [
            v for v in check_primary_order(result.history, Mode.PO)
            if v.prop == "P8-PrimaryIntegrity"
        ], seed


def test_empty_replay_still_activates_followers():
    # no message ever committed before the reconfiguration: the repeated
    # state transfer is the only activation signal the followers can get
    s = Scenario(
        name="empty-replay",
        mode=Mode.PO,
        processes=[1, 2, 3, 4, 5],
        initial=Configuration(0, frozenset({1, 2, 3}), 3),
        schedule=[
            {"op": "reconfigure", "by": 5, "desired_members": [1, 2, 4],
             "desired_leader": 2, "at": 5},
        ],
    )
    s.validate()
    result = run_scenario(s)
    assert result.quiescent
    joined = {ev.proc for ev in result.history
              if ev.kind == CONF_CHANGED and ev.config.epoch == 1}
    assert joined == {1, 2, 4}
    resent = [
        (t, src, dst) for (t, src, dst, w) in result.wire_log
        if isinstance(w, NewState) and w.epoch == 1 and w.log == ()
    ]
    assert len(resent) == 4  # initial transfer to 1,4 plus one repeat each
    premise = compute_premise(s)
    assert premise is not None and premise.holds
    assert not check_liveness(result.history, premise)


def test_incidentally_premise_satisfying_safety_scenarios_stay_live():
    # the wide safety distribution occasionally generates premise-satisfying
    # runs; their liveness rows are evaluated and must hold too
    for mode in (Mode.VAB, Mode.PO, Mode.SPO):
        for seed in (5544, 6601, 9247, 5086, 6007, 8628):
            scenario = random_scenario(seed, mode, premise=False)
            result = run_scenario(scenario)
            assert evaluate_run(result)["fail_count"] == 0, (mode, seed)


def test_chaos_campaign_sample_is_clean():
    for mode in (Mode.VAB, Mode.PO, Mode.SPO):
        summary = fuzz_campaign(150, mode, kind="chaos")
        assert summary.clean, (mode, summary.failures[:3])
