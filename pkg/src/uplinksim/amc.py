"""Adaptive modulation: SNR thresholds per scheme and per-frame rate selection.

For an AWGN channel the achievable rate is R = B*log2(1 + MI*SNR), where the
modulation index MI folds in the target bit error rate:

    MI = -ln(5*p_b)/1.5   for spectral efficiency R/B < 4
    MI = -ln(0.5*p_b)/1.5 for R/B >= 4

Inverting for the minimum SNR that supports a rate gives the scheme threshold
SNR_th = (2^(R/B) - 1) * MI, compared in dB against the per-frame SNR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# (scheme, rate at 25 MHz) for QPSK, 16-QAM and 64-QAM uplink profiles.
DEFAULT_RATES_BPS = (("QPSK", 40e6), ("16-QAM", 80e6), ("64-QAM", 120e6))

ADAPTIVE = "adaptive"
FIXED_QPSK = "fixed-qpsk"


def modulation_index(ber: float, spectral_eff: float) -> float:
    """Modulation index MI for a target BER and spectral efficiency."""
    if not 0.0 < ber < 1.0:
        raise ValueError(f"ber must be in (0, 1), got {ber}")
    if spectral_eff <= 0.0:
        raise ValueError(f"spectral efficiency must be positive, got {spectral_eff}")
    if spectral_eff < 4.0:
        return -math.log(5.0 * ber) / 1.5
    return -math.log(0.5 * ber) / 1.5


def snr_threshold_db(rate_bps: float, bandwidth_hz: float, ber: float) -> float:
    """Minimum SNR (dB) at which rate_bps is sustainable over bandwidth_hz."""
    if rate_bps <= 0 or bandwidth_hz <= 0:
        raise ValueError("rate and bandwidth must be positive")
    se = rate_bps / bandwidth_hz
    mi = modulation_index(ber, se)
    if mi <= 0.0:
        raise ValueError(f"non-positive modulation index {mi} for ber={ber}")
    return 10.0 * math.log10((2.0 ** se - 1.0) * mi)


@dataclass(frozen=True)
class ModulationRow:
    scheme: str
    rate_bps: float
    spectral_eff: float
    snr_th_dB: float
    mod_index: float


@dataclass(frozen=True)
class ModulationTable:
    rows: tuple[ModulationRow, ...]

    @property
    def r_min_bps(self) -> float:
        return self.rows[0].rate_bps

    @property
    def min_threshold_db(self) -> float:
        return self.rows[0].snr_th_dB


def build_table(bandwidth_hz: float, ber: float,
                rates_bps=DEFAULT_RATES_BPS) -> ModulationTable:
    """Build the scheme table, sorted by rate with strictly increasing thresholds."""
    rows = []
    for scheme, rate in sorted(rates_bps, key=lambda r: r[1]):
        se = rate / bandwidth_hz
        rows.append(ModulationRow(
            scheme=scheme,
            rate_bps=float(rate),
            spectral_eff=se,
            snr_th_dB=snr_threshold_db(rate, bandwidth_hz, ber),
            mod_index=modulation_index(ber, se),
        ))
    for lo, hi in zip(rows, rows[1:]):
        if hi.snr_th_dB <= lo.snr_th_dB:
            raise ValueError(
                f"thresholds not strictly increasing: {lo.scheme} {lo.snr_th_dB:.2f} dB"
                f" vs {hi.scheme} {hi.snr_th_dB:.2f} dB")
    return ModulationTable(rows=tuple(rows))


def select_rate(snr_db: float, table: ModulationTable, mode: str = ADAPTIVE):
    """Transmission rate for the frame, or None when not schedulable.

    Threshold comparison is inclusive: SNR equal to a threshold selects that
    scheme.  In fixed-QPSK mode only the lowest-rate row is ever used.
    """
    if mode == FIXED_QPSK:
        row = table.rows[0]
        return row.rate_bps if snr_db >= row.snr_th_dB else None
    if mode != ADAPTIVE:
        raise ValueError(f"unknown mode {mode!r}")
    chosen = None
    for row in table.rows:
        if snr_db >= row.snr_th_dB:
            chosen = row.rate_bps
        else:
            break
    return chosen


def residual_ber(snr_db: float, rate_bps: float, bandwidth_hz: float) -> float:
    """Achieved bit error rate when transmitting at rate_bps with the given SNR.

    Inverse of the threshold rule: p_b ~= c * exp(-1.5 * snr / (2^(R/B) - 1))
    with c = 0.2 below spectral efficiency 4 and c = 2 above, clamped to
    [0, 0.5].  Equals the table's target BER exactly at the scheme threshold
    and decays steeply above it.
    """
    se = rate_bps / bandwidth_hz
    if se <= 0:
        raise ValueError("spectral efficiency must be positive")
    snr_lin = 10.0 ** (snr_db / 10.0)
    coeff = 0.2 if se < 4.0 else 2.0
    return min(0.5, coeff * math.exp(-1.5 * snr_lin / (2.0 ** se - 1.0)))


def residual_packet_error(snr_db: float, rate_bps: float, bandwidth_hz: float,
                          packet_len_bits: int) -> float:
    """Probability that a packet sent at this operating point carries an error."""
    ber = residual_ber(snr_db, rate_bps, bandwidth_hz)
    return 1.0 - (1.0 - ber) ** packet_len_bits


def table_rows(table: ModulationTable) -> list[dict]:
    """Table rows as dicts, one per scheme (CSV dump format)."""
    return [
        {
            "scheme": r.scheme,
            "rate_mbps": r.rate_bps / 1e6,
            "spectral_eff_bps_hz": r.spectral_eff,
            "snr_th_dB": round(r.snr_th_dB, 4),
        }
        for r in table.rows
    ]
