"""Per-subscriber wireless channel: path loss, block shadowing, Rayleigh fading.

Each subscriber sees an independent channel.  The per-frame SNR is

    snr = tx_power * pathloss_gain * 10^(shadow_dB/10) * g / (N0 * B)

with shadow_dB ~ Normal(0, sigma^2) redrawn every shadow_block_frames frames
and the fast-fading power gain g ~ Exponential(mean beta) redrawn every frame
(one-frame coherence).  Transmit power is calibrated so the mean SNR at the
cell edge (fading averaged to beta, shadowing at its median) sits
edge_margin_dB above the lowest modulation threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .amc import ModulationTable
from .config import ExperimentConfig


def pathloss_gain(distance_km: float, gamma: float) -> float:
    """Distance power-law gain, normalized to 1 at the 1 km reference."""
    if distance_km <= 0:
        raise ValueError(f"distance must be positive, got {distance_km}")
    return (1.0 / distance_km) ** gamma


def calibrate_tx_power(config: ExperimentConfig, table: ModulationTable) -> float:
    """Power such that mean edge SNR = lowest threshold + edge_margin_dB."""
    if not table.rows:
        raise ValueError("empty modulation table")
    d_max = max(config.distances_km)
    target_lin = 10.0 ** ((table.min_threshold_db + config.edge_margin_dB) / 10.0)
    noise = config.noise_psd * config.channel_bandwidth_hz
    gain = pathloss_gain(d_max, config.path_loss_exponent)
    return target_lin * noise / (gain * config.fading_mean_power)


@dataclass
class ChannelState:
    distance_km: float
    tx_power: float
    pathloss: float            # linear gain at distance_km
    sigma_db: float
    shadow_block_frames: int
    fading_mean: float
    noise_power: float         # N0 * B
    shadow_gain_db: float = 0.0
    shadow_frames_left: int = 0
    snr_linear: float = 0.0

    @property
    def snr_db(self) -> float:
        if self.snr_linear <= 0.0:
            return -math.inf
        return 10.0 * math.log10(self.snr_linear)


def make_channel_state(config: ExperimentConfig, table: ModulationTable,
                       ss_index: int, tx_power: float | None = None) -> ChannelState:
    if tx_power is None:
        tx_power = calibrate_tx_power(config, table)
    d = config.distances_km[ss_index]
    return ChannelState(
        distance_km=d,
        tx_power=tx_power,
        pathloss=pathloss_gain(d, config.path_loss_exponent),
        sigma_db=config.shadowing_sigma_dB,
        shadow_block_frames=config.shadow_block_frames,
        fading_mean=config.fading_mean_power,
        noise_power=config.noise_psd * config.channel_bandwidth_hz,
    )


def advance_frame(state: ChannelState, rng: np.random.Generator) -> ChannelState:
    """Advance one frame: refresh the shadow block if due, redraw fading.

    Draw order is fixed (shadow draw on block boundaries, one fading draw per
    frame) so the realization for a given stream depends only on the frame
    index, keeping paired experiments on a shared seed comparable.
    """
    if state.shadow_frames_left == 0:
        state.shadow_gain_db = float(rng.normal(0.0, state.sigma_db))
        state.shadow_frames_left = state.shadow_block_frames
    state.shadow_frames_left -= 1
    g = float(rng.exponential(state.fading_mean))
    state.snr_linear = (state.tx_power * state.pathloss
                        * 10.0 ** (state.shadow_gain_db / 10.0) * g
                        / state.noise_power)
    return state


def threshold_clear_probability(edge_margin_db: float, sigma_db: float,
                                nodes: int = 64) -> float:
    """P(per-frame SNR >= lowest threshold) for the cell-edge subscriber.

    Gauss-Hermite average over the shadowing of the Rayleigh clearing
    probability exp(-10^(-(margin+X)/10)); useful to reason about the polling
    schedulability probability without running the simulator.
    """
    x, w = np.polynomial.hermite.hermgauss(nodes)
    shifts = math.sqrt(2.0) * sigma_db * x
    vals = np.exp(-(10.0 ** (-(edge_margin_db + shifts) / 10.0)))
    return float(np.sum(w * vals) / math.sqrt(math.pi))
