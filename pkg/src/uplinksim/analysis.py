"""Closed-form TCP send-rate model with polling delay, and its comparison
against simulation.

The steady-state Reno send rate (packets per second) given a loss probability
p_w, round trip time RTT and mean timeout TO is

    B = min( cwnd_max/RTT,
             1 / ( RTT*sqrt(2*b*p_w/3)
                   + TO*min(1, 3*sqrt(3*b*p_w/8))*p_w*(1+32*p_w^2) ) ).

Polling adds delay: a subscriber below the lowest modulation threshold at a
poll waits whole epochs for the next chance.  With per-poll clearing
probability p, the expected number of extra epochs waited is E[L] = 1/p - 1
(the mean of the geometric wait minus the successful poll), so the effective
round trip time becomes RTT_wr = RTT_w + E[L]*k*T_f.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .config import ExperimentConfig
from .engine import sweep


@dataclass(frozen=True)
class AnalysisParams:
    p: float                 # P(SNR >= lowest threshold) at a poll
    epoch_frames: float      # k
    frame_duration_s: float
    rtt_w_s: float           # average round trip time under service
    acks_per_packet: int     # b
    to_s: float              # average timeout value
    p_w: float               # loss indications per packet transmitted
    cwnd_max: float          # packets; math.inf for an unbounded window


def expected_wait_epochs(p: float) -> float:
    """E[L]: mean polling epochs waited before becoming schedulable."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"clearing probability must be in (0, 1], got {p}")
    return 1.0 / p - 1.0


def adjusted_rtt(params: AnalysisParams) -> float:
    """RTT_wr: round trip time inflated by the mean polling delay."""
    return (params.rtt_w_s
            + expected_wait_epochs(params.p)
            * params.epoch_frames * params.frame_duration_s)


def send_rate(params: AnalysisParams, use_adjusted: bool = True) -> float:
    """Model send rate in packets per second.

    use_adjusted selects the polling-delay-adjusted RTT; with p_w = 0 the
    loss-limited branch is infinite and the window-limited branch must bound
    the rate (finite cwnd_max), otherwise the rate is unbounded.
    """
    rtt = adjusted_rtt(params) if use_adjusted else params.rtt_w_s
    if params.p_w < 0:
        raise ValueError("loss probability must be nonnegative")
    if params.p_w == 0.0 and math.isinf(params.cwnd_max):
        raise ValueError("p_w = 0 with unbounded cwnd_max: send rate diverges")
    window_limited = params.cwnd_max / rtt
    if params.p_w == 0.0:
        return window_limited
    b, pw = params.acks_per_packet, params.p_w
    loss_denom = (rtt * math.sqrt(2.0 * b * pw / 3.0)
                  + params.to_s * min(1.0, 3.0 * math.sqrt(3.0 * b * pw / 8.0))
                  * pw * (1.0 + 32.0 * pw * pw))
    return min(window_limited, 1.0 / loss_denom)


@dataclass(frozen=True)
class ComparisonRow:
    cwnd_max: int
    sim_bps: float
    model_bps: float
    rel_err: float
    measured_p: float
    measured_p_w: float
    rtt_w_s: float


def compare_with_simulation(config: ExperimentConfig, cwnd_max_values, *,
                            use_adjusted: bool = True) -> list[ComparisonRow]:
    """Sweep cwnd_max, feed each run's measured p, p_w, RTT and TO into the
    model, and report simulated vs analytical per-flow throughput."""
    rows = []
    for entry in sweep(config, "cwnd_max", cwnd_max_values):
        m = entry.result.mean
        params = AnalysisParams(
            p=min(max(m["measured_p"], 1e-9), 1.0),
            epoch_frames=m["mean_epoch_frames"],
            frame_duration_s=config.timing.frame_duration_s,
            rtt_w_s=m["mean_rtt_s"],
            acks_per_packet=config.acks_per_packet,
            to_s=m["mean_rto_s"],
            p_w=m["loss_rate"],
            cwnd_max=entry.value,
        )
        model_pps = send_rate(params, use_adjusted=use_adjusted)
        model_bps = model_pps * config.packet_len_bits
        sim_bps = m["avg_throughput_bps"]
        rows.append(ComparisonRow(
            cwnd_max=int(entry.value),
            sim_bps=sim_bps,
            model_bps=model_bps,
            rel_err=abs(sim_bps - model_bps) / model_bps if model_bps else math.inf,
            measured_p=m["measured_p"],
            measured_p_w=m["loss_rate"],
            rtt_w_s=m["mean_rtt_s"],
        ))
    return rows
