"""Frame-clock TCP Reno flow state machine.

Window growth, triple-duplicate-ACK halving and timeout backoff follow
standard Reno; the surrounding simulator drives the state machine once per
frame.  The congestion window is held in (fractional) packets so that
congestion avoidance can add 1/cwnd per ACK.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig

RTT_ALPHA = 0.875          # exponential averaging weight for the old estimate
DUP_ACK_THRESHOLD = 3
RTO_BACKOFF_CAP = 64       # rto never exceeds 64x the initial rto


@dataclass
class TcpFlowState:
    cwnd: float
    cwnd_max: int
    ssthresh: float
    rtt_estimate_s: float
    rto_s: float
    tto_s: float               # time left until the retransmission timer fires
    base_rto_s: float
    rto_min_s: float
    acks_per_packet: int
    start_offset_s: float
    dup_ack_count: int = 0
    inflight: int = 0          # packets transmitted and awaiting ACK
    packets_acked_total: int = 0
    loss_indications: int = 0
    timeouts: int = 0
    fast_retransmits: int = 0
    in_backoff: bool = False


def init_flow(config: ExperimentConfig, rng: np.random.Generator) -> TcpFlowState:
    """Fresh flow: cwnd 1, ssthresh cwnd_max/2, random start within one RTT."""
    rto = max(2.0 * config.base_rtt_s, config.rto_min_s)
    return TcpFlowState(
        cwnd=1.0,
        cwnd_max=config.cwnd_max,
        ssthresh=max(config.cwnd_max / 2.0, 2.0),
        rtt_estimate_s=config.base_rtt_s,
        rto_s=rto,
        tto_s=rto,
        base_rto_s=rto,
        rto_min_s=config.rto_min_s,
        acks_per_packet=config.acks_per_packet,
        start_offset_s=float(rng.uniform(0.0, config.base_rtt_s)),
    )


def demand_bits(flow: TcpFlowState, packet_len_bits: int) -> float:
    """Bits the flow asks for at a poll: one full window."""
    return flow.cwnd * packet_len_bits


def update_rtt(flow: TcpFlowState, sample_s: float) -> None:
    """Exponential averaging; refresh rto unless timeout backoff is active."""
    if sample_s <= 0:
        raise ValueError(f"rtt sample must be positive, got {sample_s}")
    flow.rtt_estimate_s = RTT_ALPHA * flow.rtt_estimate_s + (1.0 - RTT_ALPHA) * sample_s
    if not flow.in_backoff:
        flow.rto_s = max(flow.rto_min_s, 2.0 * flow.rtt_estimate_s)


def on_timeout(flow: TcpFlowState) -> None:
    """Retransmission timer fired: collapse the window, back off the timer."""
    flow.ssthresh = max(int(flow.cwnd) // 2, 2)
    flow.cwnd = 1.0
    flow.rto_s = min(2.0 * flow.rto_s, RTO_BACKOFF_CAP * flow.base_rto_s)
    flow.tto_s = flow.rto_s
    flow.dup_ack_count = 0
    flow.loss_indications += 1
    flow.timeouts += 1
    flow.in_backoff = True
    # inflight is retained: the unacknowledged data is still pending.


def _grow_clean(flow: TcpFlowState, n_packets: int) -> None:
    # Slow start below ssthresh, then congestion avoidance at the rate of
    # one window per window (applied batch-wise against the entry cwnd).
    remaining = float(n_packets) / flow.acks_per_packet
    if flow.cwnd < flow.ssthresh:
        room = flow.ssthresh - flow.cwnd
        step = min(remaining, room)
        flow.cwnd += step
        remaining -= step
    if remaining > 0.0:
        flow.cwnd += remaining / flow.cwnd
    flow.cwnd = min(flow.cwnd, float(flow.cwnd_max))


def _triple_dup(flow: TcpFlowState) -> None:
    # dup_ack_count bookkeeping stays with the caller (batch loop).
    half = int(flow.cwnd) // 2
    flow.ssthresh = max(half, 2)
    flow.cwnd = float(max(half, 1))
    flow.loss_indications += 1
    flow.fast_retransmits += 1


def on_packets_delivered(flow: TcpFlowState, n_packets: int, measured_rtt_s: float,
                         rng: np.random.Generator, per_packet_error_prob: float,
                         sample_rtt: bool = True) -> None:
    """Process a batch of packets reaching the sink; errored ones raise
    duplicate ACKs, clean ones grow the window and rearm the timer.

    sample_rtt=False skips the estimator update (callers timing one sample
    per window, Karn-style, pass True for the window's first batch only).
    """
    if n_packets > flow.inflight:
        raise ValueError(f"delivered {n_packets} > inflight {flow.inflight}")
    flow.inflight -= n_packets

    if per_packet_error_prob > 0.0:
        errored = int(rng.binomial(n_packets, per_packet_error_prob))
    else:
        errored = 0
    clean = n_packets - errored

    # Duplicate ACKs accumulate until the third triggers one halving.
    flow.dup_ack_count += errored
    while flow.dup_ack_count >= DUP_ACK_THRESHOLD:
        flow.dup_ack_count -= DUP_ACK_THRESHOLD
        _triple_dup(flow)

    if clean > 0:
        flow.packets_acked_total += clean
        flow.in_backoff = False
        if sample_rtt:
            update_rtt(flow, measured_rtt_s)
        _grow_clean(flow, clean)
        flow.tto_s = flow.rto_s
