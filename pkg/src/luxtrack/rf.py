"""Radio legs: indoor-hotspot path loss, LoS probability, backscatter budget.

Path-loss means follow the standardized indoor-hotspot office model; the
formulas hold for 1 <= d3d <= 150 m, so link evaluations clamp shorter desk
distances up to 1 m (with a one-time warning) while the bare formula functions
reject them outright.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .scenario import Scenario
from . import vlc

# Reported when a device sits outside every cell and therefore backscatters
# nothing; compares as smaller than any real level.
NO_SIGNAL_DB = float("-inf")

_MIN_MODEL_DISTANCE_M = 1.0


def _check_distance(d_3d: float) -> None:
    if d_3d < _MIN_MODEL_DISTANCE_M:
        raise ValueError(
            f"path-loss model holds for d >= {_MIN_MODEL_DISTANCE_M} m, got {d_3d:.3f} m"
        )


def pathloss_los_db(d_3d, f_c_ghz: float):
    """Mean line-of-sight loss: 32.4 + 17.3 log10(d) + 20 log10(f_GHz) [dB]."""
    d = np.asarray(d_3d, dtype=float)
    if np.any(d < _MIN_MODEL_DISTANCE_M):
        _check_distance(float(np.min(d)))
    out = 32.4 + 17.3 * np.log10(d) + 20.0 * np.log10(f_c_ghz)
    return float(out) if np.isscalar(d_3d) else out


def pathloss_nlos_db(d_3d, f_c_ghz: float):
    """Mean non-LoS loss: the NLoS formula floored by the LoS mean."""
    d = np.asarray(d_3d, dtype=float)
    los = pathloss_los_db(d_3d, f_c_ghz)
    nlos = 17.3 + 38.3 * np.log10(d) + 24.9 * np.log10(f_c_ghz)
    out = np.maximum(los, nlos)
    return float(out) if np.isscalar(d_3d) else out


def los_probability(d_2d):
    """Open-office LoS probability as a piecewise function of 2D distance."""
    d = np.asarray(d_2d, dtype=float)
    if np.any(d < 0.0):
        raise ValueError("2D distance must be nonnegative")
    p = np.where(
        d <= 5.0,
        1.0,
        np.where(
            d <= 49.0,
            np.exp(-(d - 5.0) / 70.8),
            0.54 * np.exp(-(d - 49.0) / 211.7),
        ),
    )
    return float(p) if np.isscalar(d_2d) else p


def expected_pathloss_db(d_3d, d_2d, f_c_ghz: float):
    """Probability-weighted mix of the LoS and NLoS mean losses [dB]."""
    p = los_probability(d_2d)
    return p * pathloss_los_db(d_3d, f_c_ghz) + (1.0 - p) * pathloss_nlos_db(d_3d, f_c_ghz)


def sampled_pathloss_db(
    d_3d: float,
    d_2d: float,
    f_c_ghz: float,
    sigma_los_db: float,
    sigma_nlos_db: float,
    rng: np.random.Generator,
) -> float:
    """One realization: Bernoulli LoS state plus per-condition shadowing [dB]."""
    if rng.random() < los_probability(d_2d):
        return pathloss_los_db(d_3d, f_c_ghz) + rng.normal(0.0, sigma_los_db)
    return pathloss_nlos_db(d_3d, f_c_ghz) + rng.normal(0.0, sigma_nlos_db)


def _clamped_hop(pose_a, pose_b) -> tuple[float, float]:
    """(d_3d, d_2d) between two poses, with d_3d clamped into model range."""
    a = np.asarray(pose_a, dtype=float)
    b = np.asarray(pose_b, dtype=float)
    d_2d = float(np.hypot(b[0] - a[0], b[1] - a[1]))
    d_3d = float(np.linalg.norm(b - a))
    if d_3d < _MIN_MODEL_DISTANCE_M:
        warnings.warn(
            f"hop distance {d_3d:.2f} m below path-loss model range; clamping to 1 m",
            stacklevel=3,
        )
        d_3d = _MIN_MODEL_DISTANCE_M
    return d_3d, d_2d


def hop_pathloss_db(
    scenario: Scenario,
    pose_a,
    pose_b,
    mode: str = "expected",
    rng: np.random.Generator | None = None,
) -> float:
    """Path loss of one radio hop in the requested realization mode."""
    d_3d, d_2d = _clamped_hop(pose_a, pose_b)
    f_c = scenario.rf.carrier_freq_ghz
    if mode == "expected":
        return float(expected_pathloss_db(d_3d, d_2d, f_c))
    if mode == "sampled":
        if rng is None:
            raise ValueError("sampled mode needs an explicit rng")
        return sampled_pathloss_db(
            d_3d, d_2d, f_c, scenario.rf.shadow_sigma_los_db, scenario.rf.shadow_sigma_nlos_db, rng
        )
    raise ValueError(f"unknown path-loss mode {mode!r}")


def _budget_const_db(scenario: Scenario) -> float:
    """Position-independent part of the backscatter budget [dB over mW]."""
    rf = scenario.rf
    return (
        10.0 * math.log10(rf.backscatter_efficiency)
        + rf.gain_tx_dbi
        + rf.gain_rx_dbi
        + 2.0 * rf.gain_bd_dbi
        + rf.carrier_power_dbm
    )


def backscatter_rss_db(
    scenario: Scenario,
    device_pos,
    i_ac_amplitude: float,
    rng: np.random.Generator | None = None,
    mode: str = "expected",
) -> float:
    """Received backscatter strength at the reader [dBm].

    10 log10(xi * G_t * G_r * G_bd^2 * I_ac^2 * P_c / (L_fwd * L_bwd)). The
    forward and backscatter hops draw independent LoS/shadowing states in
    "sampled" mode. Returns NO_SIGNAL_DB when the device has no AC drive.
    """
    if i_ac_amplitude < 0.0:
        raise ValueError("AC amplitude must be nonnegative")
    if i_ac_amplitude == 0.0:
        return NO_SIGNAL_DB
    p = np.asarray(device_pos, dtype=float)
    pos3 = np.array([p[0], p[1], scenario.device.height]) if p.size == 2 else p
    l_fwd = hop_pathloss_db(scenario, scenario.rfs_pose, pos3, mode, rng)
    l_bwd = hop_pathloss_db(scenario, pos3, scenario.reader_pose, mode, rng)
    return (
        _budget_const_db(scenario)
        + 20.0 * math.log10(i_ac_amplitude)
        - l_fwd
        - l_bwd
    )


def backscatter_rss_at(
    scenario: Scenario,
    device_pos,
    rng: np.random.Generator | None = None,
    mode: str = "expected",
) -> float:
    """RSS with the AC amplitude computed from the optical link at the position."""
    i_ac = vlc.total_ac_rms_amplitude(scenario, device_pos)
    return backscatter_rss_db(scenario, device_pos, i_ac, rng, mode)


def predicted_rss_map(scenario: Scenario, positions: np.ndarray) -> np.ndarray:
    """Vectorized shadow-free expected RSS [dBm] for (N, 2) positions.

    The tracker evaluates this for every particle; out-of-coverage positions
    yield NO_SIGNAL_DB.
    """
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    i_ac = vlc.ac_rms_map(scenario, pts)
    h = scenario.device.height
    f_c = scenario.rf.carrier_freq_ghz

    def hop(pose):
        pose = np.asarray(pose, dtype=float)
        d2 = np.hypot(pts[:, 0] - pose[0], pts[:, 1] - pose[1])
        d3 = np.sqrt(d2**2 + (h - pose[2]) ** 2)
        d3 = np.maximum(d3, _MIN_MODEL_DISTANCE_M)
        return expected_pathloss_db(d3, d2, f_c)

    out = np.full(pts.shape[0], NO_SIGNAL_DB)
    lit = i_ac > 0.0
    if np.any(lit):
        budget = _budget_const_db(scenario)
        out[lit] = (
            budget
            + 20.0 * np.log10(i_ac[lit])
            - hop(scenario.rfs_pose)[lit]
            - hop(scenario.reader_pose)[lit]
        )
    return out


def reader_noise_power_w(scenario: Scenario) -> float:
    """Complex reader noise variance N_0 * B in watts."""
    n0_w_hz = 10.0 ** ((scenario.noise_psd_dbm_hz - 30.0) / 10.0)
    return n0_w_hz * scenario.bandwidth_hz
