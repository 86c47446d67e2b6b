"""Polling-epoch uplink slot scheduling: round robin and the TCP-window-aware
weighted policies (TWUS/DTWUS, fixed or adaptive modulation).

At every polling epoch the base station snapshots flow demands (one congestion
window each) and then assigns uplink slots frame by frame.  The weighted
policies track per-subscriber service credit with a deficit counter against a
running quantum (mean bits served per schedulable subscriber) and weight each
active subscriber by demand x credit, both expressed in slot terms; the
deadline variants additionally divide by the time left to the flow's
retransmission timeout so starved flows are rescued before they time out.

Update rules per frame n of an epoch (schedulable set fixed within an epoch,
service terms are the previous frame's grants):

    D_i(n)  = D_i(n-1) - served_i(n-1)                       demand, >= 0
    Q(n)    = (1/M) * sum_i served_i(n-1)                    quantum
    DC_i(n) = DC_i(n-1) + Q(n) - served_i(n-1)               deficit counter
    dc_i(n) = DC_i(n) + |min over active DC(n)|              scaled deficit
    W_i(n) ~ (D_i/R_i) * (dc_i/R_i)           [/ d_i(n) for deadline policies]
    N_i(n)  = floor(min(W_i * T_ul, D_i/R_i) / T_s)          slot grant

Using the same-frame quantum in the deficit update makes sum_i DC_i(n) exactly
invariant (= M, its initial value) over a churn-free epoch;
same_frame_quantum=False selects the lagged variant instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .amc import ADAPTIVE, FIXED_QPSK, ModulationTable, select_rate
from .config import (ADAPTIVE_KINDS, DEADLINE_KINDS, SCHEDULER_KINDS,
                     WEIGHTED_KINDS, FrameTiming)

_EPS = 1e-9


@dataclass(frozen=True)
class PollReport:
    """Flow-level requirement a subscriber reports when polled."""
    cwnd: float
    tto_s: float       # time left to the flow's retransmission timeout
    rtt_s: float
    rto_s: float       # full timeout value, used to re-arm expired deadlines


@dataclass
class SchedulerState:
    policy: str
    adaptive: bool
    deadline_enabled: bool
    timing: FrameTiming
    epoch_frames: int                  # k: frames between polls
    frame_in_epoch: int                # n, 0 at the poll
    schedulable: tuple[int, ...]
    active: tuple[int, ...] = ()
    quantum_bits: float = 0.0
    prev_quantum_bits: float = 0.0
    demand: dict = field(default_factory=dict)         # D_i, bits
    deficit: dict = field(default_factory=dict)        # DC_i, bits (may be < 0)
    scaled_deficit: dict = field(default_factory=dict)  # dc_i >= 0, active only
    weight: dict = field(default_factory=dict)         # W_i, sums to 1 on active
    slots: dict = field(default_factory=dict)          # N_i
    flag: dict = field(default_factory=dict)           # 1 iff granted this frame
    rate: dict = field(default_factory=dict)           # R_i, bps (0 if inactive)
    deadline: dict = field(default_factory=dict)       # d_i, seconds
    timeout_reset: dict = field(default_factory=dict)  # re-arm value per SS
    prev_slots: dict = field(default_factory=dict)
    prev_rate: dict = field(default_factory=dict)
    prev_flag: dict = field(default_factory=dict)
    rr_pointer: int = 0                # persists across frames and epochs
    work_conserving: bool = True
    same_frame_quantum: bool = True

    @property
    def mode(self) -> str:
        return ADAPTIVE if self.adaptive else FIXED_QPSK


def begin_epoch(reports: list[PollReport], snr_db: list[float],
                table: ModulationTable, policy: str, timing: FrameTiming,
                packet_len_bits: int, *, rr_pointer: int = 0,
                work_conserving: bool = True,
                same_frame_quantum: bool = True) -> SchedulerState:
    """Poll the connected subscribers and open a new epoch.

    Schedulable subscribers are those reporting a nonzero cwnd whose SNR at
    the poll clears the lowest modulation threshold.  The epoch length is
    ceil(min RTT / T_f) so every flow is polled at least once per RTT.
    """
    if not reports:
        raise ValueError("empty connected set")
    if policy not in SCHEDULER_KINDS:
        raise ValueError(f"unknown policy {policy!r}")
    min_th = table.min_threshold_db
    schedulable = tuple(
        i for i, rep in enumerate(reports)
        if rep.cwnd > 0 and snr_db[i] >= min_th
    )
    min_rtt = min(rep.rtt_s for rep in reports)
    k = max(1, math.ceil(min_rtt / timing.frame_duration_s))
    deadline_enabled = policy in DEADLINE_KINDS
    m = len(schedulable)
    state = SchedulerState(
        policy=policy,
        adaptive=policy in ADAPTIVE_KINDS,
        deadline_enabled=deadline_enabled,
        timing=timing,
        epoch_frames=k,
        frame_in_epoch=0,
        schedulable=schedulable,
        rr_pointer=rr_pointer,
        work_conserving=work_conserving,
        same_frame_quantum=same_frame_quantum,
    )
    if m:
        state.quantum_bits = (table.r_min_bps * timing.uplink_slots_per_frame
                              * timing.slot_duration_s / m)
    state.prev_quantum_bits = state.quantum_bits
    for i in schedulable:
        rep = reports[i]
        state.demand[i] = rep.cwnd * packet_len_bits
        state.deficit[i] = 1.0
        state.scaled_deficit[i] = 1.0
        state.weight[i] = 0.0
        state.slots[i] = 0
        state.flag[i] = 0
        state.rate[i] = 0.0
        state.deadline[i] = rep.tto_s if deadline_enabled else 1.0
        state.timeout_reset[i] = rep.rto_s
        state.prev_slots[i] = 0
        state.prev_rate[i] = 0.0
        state.prev_flag[i] = 0
    return state


def frame_active_set(state: SchedulerState, snr_db: list[float],
                     table: ModulationTable) -> SchedulerState:
    """Active set for the frame: above threshold now, demand still pending."""
    active = []
    for i in state.schedulable:
        r = select_rate(snr_db[i], table, state.mode)
        if r is not None and state.demand[i] > 1.0:
            active.append(i)
            state.rate[i] = r
        else:
            state.rate[i] = 0.0
    state.active = tuple(active)
    return state


def update_demand(state: SchedulerState) -> SchedulerState:
    ts = state.timing.slot_duration_s
    for i in state.schedulable:
        served = state.prev_flag[i] * state.prev_slots[i] * state.prev_rate[i] * ts
        state.demand[i] = max(0.0, state.demand[i] - served)
    return state


def update_quantum(state: SchedulerState) -> SchedulerState:
    ts = state.timing.slot_duration_s
    state.prev_quantum_bits = state.quantum_bits
    m = len(state.schedulable)
    if m == 0:
        state.quantum_bits = 0.0
        return state
    total = sum(state.prev_flag[i] * state.prev_rate[i] * state.prev_slots[i] * ts
                for i in state.schedulable)
    state.quantum_bits = total / m
    return state


def update_deficits(state: SchedulerState) -> SchedulerState:
    ts = state.timing.slot_duration_s
    q = state.quantum_bits if state.same_frame_quantum else state.prev_quantum_bits
    for i in state.schedulable:
        served = state.prev_flag[i] * state.prev_rate[i] * state.prev_slots[i] * ts
        state.deficit[i] += q - served
    if state.active:
        shift = abs(min(state.deficit[j] for j in state.active))
        for i in state.active:
            state.scaled_deficit[i] = state.deficit[i] + shift
    return state


def update_deadlines(state: SchedulerState) -> SchedulerState:
    """Deadlines tick down for schedulable-but-inactive subscribers; an
    expired deadline re-arms to the flow's full timeout value (the flow is
    timing out before it could be scheduled again)."""
    if not state.deadline_enabled:
        return state
    tf = state.timing.frame_duration_s
    active = set(state.active)
    for i in state.schedulable:
        if i not in active:
            state.deadline[i] -= tf
            if state.deadline[i] <= 0.0:
                state.deadline[i] = state.timeout_reset[i]
    return state


def compute_weights(state: SchedulerState) -> SchedulerState:
    """Demand x credit weights (in slot terms), normalized over the active set."""
    if state.policy not in WEIGHTED_KINDS:
        raise ValueError(f"{state.policy} does not use weights")
    for i in state.schedulable:
        state.weight[i] = 0.0
    if not state.active:
        return state
    raw = {}
    for i in state.active:
        r = state.rate[i]
        if r <= 0.0:
            raise ValueError(f"active subscriber {i} has no rate")
        w = (state.demand[i] / r) * (state.scaled_deficit[i] / r)
        if state.deadline_enabled:
            w /= max(state.deadline[i], 1e-12)
        raw[i] = w
    total = sum(raw.values())
    if total <= 0.0:
        # All scaled deficits (or demands) vanished; fall back to equal shares
        # so the grant step still has a distribution to work with.
        share = 1.0 / len(state.active)
        for i in state.active:
            state.weight[i] = share
    else:
        for i in state.active:
            state.weight[i] = raw[i] / total
    return state


def _demand_slots(state: SchedulerState, i: int) -> float:
    return state.demand[i] / (state.rate[i] * state.timing.slot_duration_s)


def _rr_order(state: SchedulerState) -> list[int]:
    order = sorted(state.active)
    if not order:
        return order
    start = 0
    for pos, i in enumerate(order):
        if i >= state.rr_pointer:
            start = pos
            break
    return order[start:] + order[:start]


def assign_slots(state: SchedulerState) -> SchedulerState:
    """Grant whole slots for the frame; total never exceeds the slot budget.

    Weighted policies grant floor(min(weight share, demand)) slots each.  The
    round-robin baseline walks the active set from a persistent pointer,
    granting each subscriber its full remaining demand until the frame runs
    out of slots.
    """
    ns = state.timing.uplink_slots_per_frame
    for i in state.schedulable:
        state.slots[i] = 0
        state.flag[i] = 0
    if not state.active:
        return state

    if state.policy in WEIGHTED_KINDS:
        for i in state.active:
            share = state.weight[i] * ns
            n = int(math.floor(min(share, _demand_slots(state, i)) + _EPS))
            state.slots[i] = n
    else:
        remaining = ns
        order = _rr_order(state)
        pointer = state.rr_pointer
        partial = None
        for i in order:
            if remaining == 0:
                if partial is None:
                    partial = i
                break
            need = int(math.ceil(_demand_slots(state, i) - _EPS))
            grant = min(need, remaining)
            state.slots[i] = grant
            remaining -= grant
            if grant < need and partial is None:
                partial = i
        if partial is not None:
            pointer = partial            # resume at the first unfinished SS
        elif order:
            pointer = order[-1] + 1      # full pass served; rotate onward
        state.rr_pointer = pointer

    for i in state.active:
        state.flag[i] = 1 if state.slots[i] >= 1 else 0
    return state


def leftover_redistribution(state: SchedulerState) -> SchedulerState:
    """Re-offer slots lost to rounding or the demand cap, in weight order.

    Keeps the frame work-conserving; a no-op when work_conserving is off (the
    grants then stand exactly as assigned) or when nothing is capped.
    """
    if not state.work_conserving or not state.active:
        return state
    ns = state.timing.uplink_slots_per_frame
    leftover = ns - sum(state.slots[i] for i in state.active)
    if leftover <= 0:
        return state
    if state.policy in WEIGHTED_KINDS:
        order = sorted(state.active, key=lambda i: (-state.weight[i], i))
    else:
        order = _rr_order(state)
    for i in order:
        if leftover == 0:
            break
        need = int(math.ceil(_demand_slots(state, i) - _EPS)) - state.slots[i]
        if need <= 0:
            continue
        extra = min(need, leftover)
        state.slots[i] += extra
        leftover -= extra
    for i in state.active:
        state.flag[i] = 1 if state.slots[i] >= 1 else 0
    return state


def schedule_frame(state: SchedulerState, snr_db: list[float],
                   table: ModulationTable) -> dict:
    """Run one frame of the epoch; returns {ss: slots} for granted subscribers.

    Callers record the grants; the next frame's demand/quantum/deficit updates
    consume them via the prev_* fields rolled here.
    """
    state.frame_in_epoch += 1
    frame_active_set(state, snr_db, table)
    update_demand(state)
    update_quantum(state)
    update_deficits(state)
    update_deadlines(state)
    if state.policy in WEIGHTED_KINDS:
        compute_weights(state)
    assign_slots(state)
    leftover_redistribution(state)
    grants = {i: state.slots[i] for i in state.active if state.slots[i] > 0}
    for i in state.schedulable:
        state.prev_slots[i] = state.slots[i]
        state.prev_rate[i] = state.rate[i]
        state.prev_flag[i] = state.flag[i]
    return grants
