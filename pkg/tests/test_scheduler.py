import math

import numpy as np
import pytest

from uplinksim.amc import build_table
from uplinksim.config import FrameTiming
from uplinksim.scheduler import (PollReport, SchedulerState, assign_slots,
                                 begin_epoch, compute_weights,
                                 frame_active_set, leftover_redistribution,
                                 schedule_frame, update_deadlines,
                                 update_deficits, update_demand,
                                 update_quantum)

TIMING = FrameTiming()
TABLE = build_table(25e6, 1e-6)
PL = 8000


def healthy_reports(n=10, cwnd=70.0, tto=0.2, rtt=0.1, rto=0.3):
    return [PollReport(cwnd=cwnd, tto_s=tto, rtt_s=rtt, rto_s=rto) for _ in range(n)]


def fresh_state(policy="TWUS-A", n=10, cwnd=70.0, snr=None, **kw):
    snr = snr if snr is not None else [30.0] * n
    return begin_epoch(healthy_reports(n, cwnd=cwnd), snr, TABLE, policy,
                       TIMING, PL, **kw)


# --- epoch opening ----------------------------------------------------------

def test_begin_epoch_quantum_and_k():
    state = fresh_state()
    # R_min * N_s * T_s / M = 40e6 * 500 * 2e-6 / 10 = 4000 bits
    assert state.quantum_bits == pytest.approx(4000.0)
    # k = ceil(min RTT / T_f) = ceil(0.1 / 0.002) = 50
    assert state.epoch_frames == 50


def test_begin_epoch_excludes_zero_cwnd():
    reports = healthy_reports(10)
    reports[4] = PollReport(cwnd=0.0, tto_s=0.2, rtt_s=0.1, rto_s=0.3)
    state = begin_epoch(reports, [30.0] * 10, TABLE, "TWUS-A", TIMING, PL)
    assert 4 not in state.schedulable
    assert len(state.schedulable) == 9


def test_begin_epoch_excludes_below_threshold():
    snr = [30.0] * 10
    snr[2] = 11.0  # below the 12.18 dB minimum
    state = fresh_state(snr=snr)
    assert 2 not in state.schedulable


def test_begin_epoch_initial_values():
    state = fresh_state(cwnd=70.0)
    for i in state.schedulable:
        assert state.demand[i] == 70.0 * PL
        assert state.deficit[i] == 1.0
        assert state.scaled_deficit[i] == 1.0
        assert state.flag[i] == 0
        assert state.slots[i] == 0
        assert state.deadline[i] == 1.0  # non-deadline policy


def test_begin_epoch_deadline_policy_reads_tto():
    reports = healthy_reports(3, tto=0.123)
    state = begin_epoch(reports, [30.0] * 3, TABLE, "DTWUS-A", TIMING, PL)
    for i in state.schedulable:
        assert state.deadline[i] == 0.123


def test_begin_epoch_empty_connected_rejected():
    with pytest.raises(ValueError):
        begin_epoch([], [], TABLE, "TWUS-A", TIMING, PL)


# --- active set -------------------------------------------------------------

def test_active_set_tracks_threshold_and_demand():
    state = fresh_state(n=3)
    state.demand[1] = 0.5  # below the 1-bit activity floor
    snr = [30.0, 30.0, 11.0]
    frame_active_set(state, snr, TABLE)
    assert state.active == (0,)
    assert state.rate[0] == 120e6
    assert state.rate[2] == 0.0


def test_active_set_all_when_healthy():
    state = fresh_state(n=4)
    frame_active_set(state, [30.0] * 4, TABLE)
    assert state.active == (0, 1, 2, 3)


def test_active_set_fixed_mode_rate():
    state = fresh_state(policy="TWUS", n=2)
    frame_active_set(state, [30.0, 30.0], TABLE)
    assert state.rate[0] == 40e6  # QPSK only under fixed modulation


# --- per-frame updates ------------------------------------------------------

def test_update_demand_subtracts_served():
    state = fresh_state(n=2, cwnd=70.0)
    state.prev_flag[0], state.prev_slots[0], state.prev_rate[0] = 1, 100, 40e6
    update_demand(state)
    # 560000 - 100 * 40e6 * 2e-6 = 552000
    assert state.demand[0] == pytest.approx(552000.0)
    assert state.demand[1] == pytest.approx(560000.0)


def test_update_demand_floors_at_zero():
    state = fresh_state(n=1, cwnd=1.0)
    state.prev_flag[0], state.prev_slots[0], state.prev_rate[0] = 1, 500, 120e6
    update_demand(state)
    assert state.demand[0] == 0.0


def test_update_quantum_average():
    state = fresh_state(n=10)
    for i in (0, 1):
        state.prev_flag[i], state.prev_rate[i] = 1, 40e6
        state.prev_slots[i] = 50  # 50 * 40e6 * 2e-6 = 4000 bits each
    update_quantum(state)
    assert state.quantum_bits == pytest.approx(800.0)


def test_update_quantum_zero_when_idle():
    state = fresh_state(n=5)
    update_quantum(state)
    assert state.quantum_bits == 0.0


def test_update_deficits_transfer():
    state = fresh_state(n=2)
    state.active = (0, 1)
    # SS0 served 1000 bits, SS1 nothing -> Q = 500, DC0 -= 500, DC1 += 500
    state.prev_flag[0], state.prev_rate[0], state.prev_slots[0] = 1, 40e6, 13
    served = 13 * 40e6 * TIMING.slot_duration_s
    update_quantum(state)
    assert state.quantum_bits == pytest.approx(served / 2)
    update_deficits(state)
    assert state.deficit[0] == pytest.approx(1.0 + served / 2 - served)
    assert state.deficit[1] == pytest.approx(1.0 + served / 2)


def test_scaled_deficit_shift_makes_min_zero():
    state = fresh_state(n=3)
    state.active = (0, 1, 2)
    state.deficit = {0: -3.0, 1: 2.0, 2: 5.0}
    update_quantum(state)   # nothing served yet: quantum drops to zero
    update_deficits(state)
    assert state.scaled_deficit[0] == pytest.approx(0.0)
    assert state.scaled_deficit[1] == pytest.approx(5.0)
    assert min(state.scaled_deficit[i] for i in state.active) >= 0.0


def test_scaled_deficit_literal_shift_when_all_positive():
    state = fresh_state(n=2)
    state.active = (0, 1)
    state.deficit = {0: 2.0, 1: 6.0}
    update_quantum(state)
    update_deficits(state)
    assert state.scaled_deficit[0] == pytest.approx(4.0)
    assert state.scaled_deficit[1] == pytest.approx(8.0)


def test_deficit_conservation_over_churn_free_epoch():
    # sum DC stays at its initial value M when the schedulable set is fixed
    rng = np.random.default_rng(5)
    state = fresh_state(n=10)
    state.active = state.schedulable
    for _ in range(1000):
        for i in state.schedulable:
            state.prev_flag[i] = int(rng.random() < 0.7)
            state.prev_rate[i] = float(rng.choice([40e6, 80e6, 120e6]))
            state.prev_slots[i] = int(rng.integers(0, 60))
        update_quantum(state)
        update_deficits(state)
    total = sum(state.deficit[i] for i in state.schedulable)
    assert total == pytest.approx(10.0, rel=1e-9)


def test_deadlines_tick_for_inactive_only():
    state = fresh_state(policy="DTWUS-A", n=3)
    state.deadline = {0: 0.010, 1: 0.010, 2: 0.001}
    state.active = (0,)
    update_deadlines(state)
    assert state.deadline[0] == pytest.approx(0.010)   # active: unchanged
    assert state.deadline[1] == pytest.approx(0.008)   # inactive: -T_f
    assert state.deadline[2] == pytest.approx(0.3)     # expired: re-armed to rto


def test_deadlines_noop_for_plain_policy():
    state = fresh_state(policy="TWUS-A", n=2)
    state.active = (0,)
    update_deadlines(state)
    assert state.deadline == {0: 1.0, 1: 1.0}


# --- weights ----------------------------------------------------------------

def test_weights_symmetric_pair():
    state = fresh_state(n=2)
    state.active = (0, 1)
    state.rate = {0: 40e6, 1: 40e6}
    compute_weights(state)
    assert state.weight[0] == pytest.approx(0.5)
    assert state.weight[1] == pytest.approx(0.5)


def test_weights_rate_squared_ratio():
    # equal demand and credit, rates 40 vs 80 Mbps: W1/W2 = (R2/R1)^2 = 4
    state = fresh_state(n=2)
    state.active = (0, 1)
    state.demand = {0: 8e5, 1: 8e5}
    state.scaled_deficit = {0: 2.0, 1: 2.0}
    state.rate = {0: 40e6, 1: 80e6}
    compute_weights(state)
    assert state.weight[0] == pytest.approx(0.8)
    assert state.weight[1] == pytest.approx(0.2)


def test_weights_deadline_ratio():
    # d0 = d1/2 with everything else equal: W0 = 2/3
    state = fresh_state(policy="DTWUS-A", n=2)
    state.active = (0, 1)
    state.rate = {0: 40e6, 1: 40e6}
    state.demand = {0: 8e5, 1: 8e5}
    state.scaled_deficit = {0: 2.0, 1: 2.0}
    state.deadline = {0: 0.1, 1: 0.2}
    compute_weights(state)
    assert state.weight[0] == pytest.approx(2 / 3)
    assert state.weight[1] == pytest.approx(1 / 3)


def test_weights_zero_rate_rejected():
    state = fresh_state(n=1)
    state.active = (0,)
    state.rate[0] = 0.0
    with pytest.raises(ValueError):
        compute_weights(state)


def test_weights_equal_fallback_when_credit_vanishes():
    state = fresh_state(n=1)
    state.active = (0,)
    state.rate[0] = 40e6
    state.scaled_deficit[0] = 0.0
    compute_weights(state)
    assert state.weight[0] == 1.0


def test_twus_equals_dtwus_with_equal_deadlines():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = 6
        t = fresh_state(policy="TWUS-A", n=n)
        d = fresh_state(policy="DTWUS-A", n=n)
        active = tuple(range(n))
        for s in (t, d):
            s.active = active
            for i in active:
                s.rate[i] = float(rng.choice([40e6, 80e6, 120e6]))
                s.demand[i] = float(rng.uniform(1e4, 6e5))
                s.scaled_deficit[i] = float(rng.uniform(0.0, 9e3))
        for i in active:
            d.rate[i] = t.rate[i]
            d.demand[i] = t.demand[i]
            d.scaled_deficit[i] = t.scaled_deficit[i]
            d.deadline[i] = 0.25
        compute_weights(t)
        compute_weights(d)
        for i in active:
            assert d.weight[i] == pytest.approx(t.weight[i], abs=1e-12)
        assign_slots(t)
        assign_slots(d)
        assert all(t.slots[i] == d.slots[i] for i in active)


# --- slot assignment --------------------------------------------------------

def test_single_claimant_takes_whole_frame():
    state = fresh_state(n=1)
    state.active = (0,)
    state.rate[0] = 40e6
    state.demand[0] = 1e9
    compute_weights(state)
    assign_slots(state)
    assert state.slots[0] == 500


def test_weight_shares_without_demand_cap():
    state = fresh_state(n=2)
    state.active = (0, 1)
    state.rate = {0: 40e6, 1: 40e6}
    state.demand = {0: 1e9, 1: 1e9}
    state.weight = {0: 0.8, 1: 0.2}
    assign_slots(state)
    assert state.slots[0] == 400
    assert state.slots[1] == 100


def test_demand_cap_binds():
    # demand worth 20 slots beats an 80% weight share
    state = fresh_state(n=2, work_conserving=False)
    state.active = (0, 1)
    state.rate = {0: 40e6, 1: 40e6}
    state.demand = {0: 20 * 40e6 * TIMING.slot_duration_s, 1: 1e9}
    state.weight = {0: 0.8, 1: 0.2}
    assign_slots(state)
    assert state.slots[0] == 20
    assert state.flag[0] == 1 and state.flag[1] == 1


def test_leftover_redistribution_fills_capped_share():
    state = fresh_state(n=2)
    state.active = (0, 1)
    state.rate = {0: 40e6, 1: 40e6}
    state.demand = {0: 20 * 40e6 * TIMING.slot_duration_s, 1: 1e9}
    state.weight = {0: 0.8, 1: 0.2}
    assign_slots(state)
    leftover_redistribution(state)
    assert state.slots[0] == 20
    assert state.slots[1] == 480


def test_leftover_noop_without_caps():
    state = fresh_state(n=2)
    state.active = (0, 1)
    state.rate = {0: 40e6, 1: 40e6}
    state.demand = {0: 1e9, 1: 1e9}
    state.weight = {0: 0.5, 1: 0.5}
    assign_slots(state)
    before = dict(state.slots)
    leftover_redistribution(state)
    assert state.slots == before


def test_leftover_disabled_in_strict_mode():
    state = fresh_state(n=2, work_conserving=False)
    state.active = (0, 1)
    state.rate = {0: 40e6, 1: 40e6}
    state.demand = {0: 20 * 40e6 * TIMING.slot_duration_s, 1: 1e9}
    state.weight = {0: 0.8, 1: 0.2}
    assign_slots(state)
    before = dict(state.slots)
    leftover_redistribution(state)
    assert state.slots == before


def test_rr_pointer_rotation():
    state = fresh_state(policy="RR-A", n=3, cwnd=1.0)
    state.active = (0, 1, 2)
    state.rate = {0: 40e6, 1: 40e6, 2: 40e6}
    state.demand = {i: PL for i in range(3)}
    assign_slots(state)
    # 8000 bits at 80 bits per slot = 100 slots each; all three fit
    assert state.slots == {0: 100, 1: 100, 2: 100}
    assert state.rr_pointer == 3


def test_rr_exhaustion_resumes_at_unfinished():
    state = fresh_state(policy="RR-A", n=3)
    state.active = (0, 1, 2)
    state.rate = {0: 40e6, 1: 40e6, 2: 40e6}
    state.demand = {i: 1e9 for i in range(3)}
    assign_slots(state)
    assert state.slots[0] == 500 and state.slots[1] == 0
    assert state.rr_pointer == 0  # SS0 still has residual demand


def test_rr_demand_cap_spec_example():
    state = fresh_state(policy="RR-A", n=2)
    state.active = (0, 1)
    state.rate = {0: 120e6, 1: 40e6}
    state.demand = {0: 100 * 120e6 * TIMING.slot_duration_s, 1: 1e9}
    assign_slots(state)
    assert state.slots[0] == 100
    assert state.slots[1] == 400


# --- frame driver and invariant sweeps --------------------------------------

def test_schedule_frame_budget_and_demand_caps():
    rng = np.random.default_rng(7)
    ts = TIMING.slot_duration_s
    for policy in ("TWUS-A", "DTWUS-A", "RR-A", "TWUS"):
        state = fresh_state(policy=policy, n=8, cwnd=float(rng.integers(1, 80)))
        for _ in range(200):
            snr = list(rng.normal(24, 10, size=8))
            demand_before = dict(state.demand)
            grants = schedule_frame(state, snr, TABLE)
            assert sum(grants.values()) <= 500
            for i, n_slots in grants.items():
                served = n_slots * state.rate[i] * ts
                assert served <= demand_before[i] + state.rate[i] * ts
            if state.active:
                if policy != "RR-A":
                    assert sum(state.weight[i] for i in state.active) == pytest.approx(1.0, abs=1e-9)


def test_deadline_pressure_grants_more_slots():
    # two equal subscribers, the nearer deadline wins strictly (before caps)
    state = fresh_state(policy="DTWUS-A", n=2)
    state.active = (0, 1)
    state.rate = {0: 80e6, 1: 80e6}
    state.demand = {0: 1e9, 1: 1e9}
    state.scaled_deficit = {0: 3.0, 1: 3.0}
    state.deadline = {0: 0.05, 1: 0.25}
    compute_weights(state)
    assign_slots(state)
    assert state.slots[0] > state.slots[1]


def test_schedule_frame_deterministic():
    def run():
        state = fresh_state(policy="DTWUS-A", n=6)
        rng = np.random.default_rng(3)
        out = []
        for _ in range(100):
            snr = list(rng.normal(22, 9, size=6))
            out.append(sorted(schedule_frame(state, snr, TABLE).items()))
        return out

    assert run() == run()


def test_compat_quantum_lag_changes_trajectory():
    # the lagged-quantum variant bootstraps DC from Q(0) instead of Q(1)=0
    same = fresh_state(n=4, same_frame_quantum=True)
    lag = fresh_state(n=4, same_frame_quantum=False)
    snr = [30.0] * 4
    schedule_frame(same, snr, TABLE)
    schedule_frame(lag, snr, TABLE)
    schedule_frame(same, snr, TABLE)
    schedule_frame(lag, snr, TABLE)
    assert any(abs(same.deficit[i] - lag.deficit[i]) > 1.0 for i in range(4))
