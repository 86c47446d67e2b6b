"""Run orchestration: frame clock, polling, channel advance, slot service,
TCP feedback with delayed ACKs, warm-up discard and multi-run averaging.

The per-run loop, once per frame:

  1. advance every subscriber channel (new SNR),
  2. deliver ACKs due this frame (downlink is uncontended, so an ACK arrives
     one base RTT after the packet's transmission),
  3. poll and open a new epoch when the previous one has elapsed,
  4. run the scheduler frame and serve the granted bits, completing whole
     packets toward the ACK pipe,
  5. tick retransmission timers of flows with pending data,
  6. accumulate metrics once the warm-up window has passed.

Randomness is split into one independent stream per (run, subscriber, role)
via numpy SeedSequence spawn keys, so paired experiments on the same seed see
identical channel realizations regardless of scheduler choice.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import channel as chan
from . import scheduler as sched
from . import tcp
from .amc import ModulationTable, build_table, residual_packet_error
from .config import ExperimentConfig, validate
from .metrics import AggregateMetrics, MetricsRecord, aggregate, jfi

# Stream roles for the seed split (appending new roles never perturbs old ones).
_ROLE_SHADOW = 0
_ROLE_FADING = 1
_ROLE_TCP = 2
_ROLE_FLOW = 3


def substream(seed: int, run_index: int, ss_index: int, role: int) -> np.random.Generator:
    """Deterministic per-(run, subscriber, role) random stream."""
    key = np.random.SeedSequence(entropy=seed, spawn_key=(run_index, ss_index, role))
    return np.random.default_rng(key)


class _SubscriberChannel:
    """Channel state bound to its shadowing/fading streams."""

    def __init__(self, config: ExperimentConfig, table: ModulationTable,
                 ss_index: int, run_index: int, tx_power: float):
        self.state = chan.make_channel_state(config, table, ss_index, tx_power)
        self._shadow_rng = substream(config.rng_seed, run_index, ss_index, _ROLE_SHADOW)
        self._fading_rng = substream(config.rng_seed, run_index, ss_index, _ROLE_FADING)

    def advance(self) -> float:
        """One frame forward; returns the SNR in dB."""
        st = self.state
        if st.shadow_frames_left == 0:
            st.shadow_gain_db = float(self._shadow_rng.normal(0.0, st.sigma_db))
            st.shadow_frames_left = st.shadow_block_frames
        st.shadow_frames_left -= 1
        g = float(self._fading_rng.exponential(st.fading_mean))
        st.snr_linear = (st.tx_power * st.pathloss
                         * 10.0 ** (st.shadow_gain_db / 10.0) * g / st.noise_power)
        return st.snr_db


@dataclass
class _FlowRuntime:
    flow: tcp.TcpFlowState
    pending_bits: float = 0.0   # unsent share of the posted window
    carry_bits: float = 0.0     # served bits not yet forming a whole packet
    transmitted: int = 0
    last_perr: float = 0.0      # packet error prob of the latest grant
    rtt_sampled: bool = False   # one estimator sample per posted window
    overflow_bits: float = 0.0  # window share shed by the finite queue
    ack_queue: deque = field(default_factory=deque)  # (arrival_frame, count, rtt_sample, p_err)


@dataclass
class TraceSinks:
    """Optional CSV writers (anything with writerow) for per-frame traces."""
    snr: object = None     # (run, frame, ss, snr_dB)
    sched: object = None   # (run, frame, ss, rate_bps, slots, demand_bits, dc, weight, deadline_s)
    tcp: object = None     # (run, time_s, ss, event, cwnd, ssthresh, rto)


def _check_finite(run_index: int, frame: int, flows, state) -> None:
    for i, fr in enumerate(flows):
        for name in ("cwnd", "rtt_estimate_s", "rto_s", "tto_s"):
            if not math.isfinite(getattr(fr.flow, name)):
                raise RuntimeError(
                    f"non-finite {name} for ss {i} at run {run_index} frame {frame}")
    if state is not None and any(not math.isfinite(v) for v in state.deficit.values()):
        raise RuntimeError(f"non-finite deficit at run {run_index} frame {frame}")


def run_single(config: ExperimentConfig, run_index: int, *,
               table: ModulationTable | None = None,
               channels: list | None = None,
               traces: TraceSinks | None = None) -> MetricsRecord:
    """One independent simulation run; metrics cover frames past the warm-up.

    channels may inject alternative per-subscriber channel objects (anything
    with an advance() -> snr_dB method) for controlled-channel experiments.
    """
    validate(config)
    if table is None:
        table = build_table(config.channel_bandwidth_hz, config.target_ber)
    timing = config.timing
    n_ss = config.num_ss
    tf = timing.frame_duration_s
    ts = timing.slot_duration_s
    ns = timing.uplink_slots_per_frame
    pl = config.packet_len_bits
    flat_perr = config.per_packet_error_prob
    bw = config.channel_bandwidth_hz
    ack_delay_frames = max(1, round(config.base_rtt_s / tf))

    if channels is None:
        tx_power = chan.calibrate_tx_power(config, table)
        channels = [_SubscriberChannel(config, table, i, run_index, tx_power)
                    for i in range(n_ss)]
    tcp_rngs = [substream(config.rng_seed, run_index, i, _ROLE_TCP) for i in range(n_ss)]
    flows = [_FlowRuntime(flow=tcp.init_flow(
                config, substream(config.rng_seed, run_index, i, _ROLE_FLOW)))
             for i in range(n_ss)]

    state: sched.SchedulerState | None = None
    frames_to_poll = 0
    rr_pointer = 0
    min_th = table.min_threshold_db

    # Post-warmup accumulators.
    measuring = False
    frames_measured = 0
    clear_count = 0
    used_slots = 0
    cwnd_sum = 0.0
    rtt_sum = 0.0
    rto_sum = 0.0
    epoch_sum = 0.0
    slots_per_ss = [0] * n_ss
    acked_at_mark = [0] * n_ss
    tx_at_mark = [0] * n_ss
    loss_at_mark = [0] * n_ss
    t_at_mark = [0] * n_ss
    f_at_mark = [0] * n_ss

    def complete_packets(i: int, fr: _FlowRuntime, frame: int, rtt_sample: float) -> None:
        # Whole packets head for the ACK pipe; the per-epoch window posting
        # already bounds how many bits the scheduler can serve, so completion
        # needs no additional window gate (after a mid-epoch timeout the
        # excess in flight is the retained retransmission backlog).
        flow = fr.flow
        count = int(fr.carry_bits // pl)
        if count:
            fr.carry_bits -= count * pl
            flow.inflight += count
            fr.transmitted += count
            fr.ack_queue.append((frame + ack_delay_frames, count, rtt_sample,
                                 fr.last_perr))

    for frame in range(config.num_frames):
        now = frame * tf

        snr_db = [ch.advance() for ch in channels]
        if traces and traces.snr is not None:
            for i, s in enumerate(snr_db):
                traces.snr.writerow((run_index, frame, i, round(s, 4)))

        # ACK deliveries due this frame; coalesce per flow, then let any
        # window space freed by them release gated packets.
        for i, fr in enumerate(flows):
            flow = fr.flow
            while fr.ack_queue and fr.ack_queue[0][0] <= frame:
                _, count, sample, p_err = fr.ack_queue.popleft()
                count = min(count, flow.inflight)
                if count > 0:
                    pre_loss = flow.loss_indications
                    pre_acked = flow.packets_acked_total
                    tcp.on_packets_delivered(flow, count, sample, tcp_rngs[i], p_err,
                                             sample_rtt=not fr.rtt_sampled)
                    if flow.packets_acked_total > pre_acked:
                        fr.rtt_sampled = True
                    if traces and traces.tcp is not None and flow.loss_indications > pre_loss:
                        traces.tcp.writerow((run_index, round(now, 6), i, "triple-dup",
                                             round(flow.cwnd, 3), round(flow.ssthresh, 3),
                                             round(flow.rto_s, 4)))

        if frames_to_poll == 0:
            _check_finite(run_index, frame, flows, state)
            reports = []
            for i, fr in enumerate(flows):
                started = now >= fr.flow.start_offset_s
                # The interface queue holds at most buffer_packets; the part
                # of the window it cannot hold is shed as congestion drops,
                # surfacing to the sender as duplicate ACKs one RTT later.
                window_bits = tcp.demand_bits(fr.flow, pl) if started else 0.0
                kept_bits = min(window_bits, config.buffer_packets * pl)
                reports.append(sched.PollReport(
                    cwnd=kept_bits / pl,
                    tto_s=fr.flow.tto_s,
                    rtt_s=fr.flow.rtt_estimate_s,
                    rto_s=fr.flow.rto_s,
                ))
                if started:
                    fr.pending_bits = kept_bits
                    fr.rtt_sampled = False
                    fr.overflow_bits += window_bits - kept_bits
                    dropped = int(fr.overflow_bits // pl)
                    if dropped:
                        fr.overflow_bits -= dropped * pl
                        fr.flow.inflight += dropped
                        fr.transmitted += dropped
                        fr.ack_queue.append((frame + ack_delay_frames, dropped,
                                             config.base_rtt_s, 1.0))
            if state is not None:
                rr_pointer = state.rr_pointer
            state = sched.begin_epoch(
                reports, snr_db, table, config.scheduler_kind, timing, pl,
                rr_pointer=rr_pointer,
                work_conserving=config.work_conserving,
                same_frame_quantum=config.same_frame_quantum,
            )
            frames_to_poll = state.epoch_frames
        frames_to_poll -= 1

        if state.schedulable:
            grants = sched.schedule_frame(state, snr_db, table)
            rtt_sample = config.base_rtt_s + state.frame_in_epoch * tf
            for i, n_slots in grants.items():
                fr = flows[i]
                bits = min(n_slots * state.rate[i] * ts, state.demand[i])
                fr.pending_bits = max(0.0, fr.pending_bits - bits)
                fr.carry_bits += bits
                fr.last_perr = (flat_perr if flat_perr is not None else
                                residual_packet_error(snr_db[i], state.rate[i], bw, pl))
                complete_packets(i, fr, frame, rtt_sample)
                if measuring:
                    slots_per_ss[i] += n_slots
                    used_slots += n_slots
            if traces and traces.sched is not None:
                for i in state.active:
                    traces.sched.writerow((
                        run_index, frame, i, state.rate[i], state.slots[i],
                        round(state.demand[i], 1), round(state.deficit[i], 3),
                        round(state.weight[i], 6), round(state.deadline[i], 5)))

        # Retransmission timers tick while posted data is still unserved
        # (the downlink ACK path is reliable, so served data cannot time out;
        # clean ACKs re-arm the timer through the TCP state machine).
        for i, fr in enumerate(flows):
            flow = fr.flow
            if now < flow.start_offset_s:
                continue
            if fr.pending_bits > 0.5:
                flow.tto_s -= tf
                if flow.tto_s <= 1e-12:
                    tcp.on_timeout(flow)
                    if traces and traces.tcp is not None:
                        traces.tcp.writerow((run_index, round(now, 6), i, "timeout",
                                             round(flow.cwnd, 3), round(flow.ssthresh, 3),
                                             round(flow.rto_s, 4)))

        if frame == config.warmup_frames:
            measuring = True
            for i, fr in enumerate(flows):
                acked_at_mark[i] = fr.flow.packets_acked_total
                tx_at_mark[i] = fr.transmitted
                loss_at_mark[i] = fr.flow.loss_indications
                t_at_mark[i] = fr.flow.timeouts
                f_at_mark[i] = fr.flow.fast_retransmits
        if measuring:
            frames_measured += 1
            clear_count += sum(1 for s in snr_db if s >= min_th)
            cwnd_sum += sum(fr.flow.cwnd for fr in flows)
            rtt_sum += sum(fr.flow.rtt_estimate_s for fr in flows)
            rto_sum += sum(fr.flow.rto_s for fr in flows)
            epoch_sum += state.epoch_frames if state is not None else 0.0

    duration = frames_measured * tf
    per_ss_acked = [flows[i].flow.packets_acked_total - acked_at_mark[i]
                    for i in range(n_ss)]
    per_ss_tx = [flows[i].transmitted - tx_at_mark[i] for i in range(n_ss)]
    per_ss_loss = [flows[i].flow.loss_indications - loss_at_mark[i]
                   for i in range(n_ss)]
    per_ss_thr = tuple(a * pl / duration for a in per_ss_acked)
    total_tx = sum(per_ss_tx)
    sum_slots = sum(slots_per_ss)
    return MetricsRecord(
        frames_measured=frames_measured,
        avg_cwnd=cwnd_sum / (frames_measured * n_ss),
        avg_throughput_bps=sum(per_ss_thr) / n_ss,
        per_ss_throughput_bps=per_ss_thr,
        slot_utilization=used_slots / (ns * frames_measured),
        jfi_slots=jfi(slots_per_ss) if sum_slots else 0.0,
        jfi_throughput=jfi(per_ss_thr) if any(per_ss_thr) else 0.0,
        loss_rate=(sum(per_ss_loss) / total_tx) if total_tx else 0.0,
        per_ss_slots=tuple(slots_per_ss),
        measured_p=clear_count / (frames_measured * n_ss),
        mean_rtt_s=rtt_sum / (frames_measured * n_ss),
        mean_rto_s=rto_sum / (frames_measured * n_ss),
        mean_epoch_frames=epoch_sum / frames_measured,
        timeouts=sum(flows[i].flow.timeouts - t_at_mark[i] for i in range(n_ss)),
        fast_retransmits=sum(flows[i].flow.fast_retransmits - f_at_mark[i]
                             for i in range(n_ss)),
        packets_acked=sum(per_ss_acked),
        packets_transmitted=total_tx,
    )


def run_experiment(config: ExperimentConfig, *,
                   traces: TraceSinks | None = None) -> AggregateMetrics:
    """num_runs independent runs with derived seeds, aggregated."""
    validate(config)
    table = build_table(config.channel_bandwidth_hz, config.target_ber)
    records = [run_single(config, run_index, table=table, traces=traces)
               for run_index in range(config.num_runs)]
    return aggregate(records)


@dataclass(frozen=True)
class SweepRow:
    parameter: str
    value: float
    scheduler_kind: str
    result: AggregateMetrics


def sweep(config: ExperimentConfig, parameter: str, values) -> list[SweepRow]:
    """One experiment per parameter value (sigma_dB or cwnd_max)."""
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    field_by_param = {"sigma_dB": "shadowing_sigma_dB", "cwnd_max": "cwnd_max"}
    if parameter not in field_by_param:
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    fname = field_by_param[parameter]
    rows = []
    for v in values:
        cast = int(v) if fname == "cwnd_max" else float(v)
        cfg = dataclasses.replace(config, **{fname: cast})
        rows.append(SweepRow(parameter=parameter, value=float(v),
                             scheduler_kind=config.scheduler_kind,
                             result=run_experiment(cfg)))
    return rows
