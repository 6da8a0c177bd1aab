"""Lambertian optical downlink: channel gain, photocurrents, energy harvesting.

All functions are pure in (scenario, position) and vectorize over positions
where noted; the tag is assumed to face straight up, so irradiance and
incidence angles coincide.
"""

from __future__ import annotations

import math

import numpy as np

from .scenario import LedAp, DeviceSpec, Scenario


def lambertian_gain(led: LedAp, device_pos, device: DeviceSpec) -> float:
    """DC gain of the optical channel between one LED and the detector.

    ((nu+1) * A / (2 pi d^2)) * cos^nu(phi) * cos(psi) inside the field of
    view, exactly 0 outside it. With the upward-facing detector phi == psi.
    """
    p = np.asarray(device_pos, dtype=float)
    dx = p[0] - led.position[0]
    dy = p[1] - led.position[1]
    dz = led.position[2] - p[2]
    d = math.sqrt(dx * dx + dy * dy + dz * dz)
    if d == 0.0:
        raise ValueError("device coincides with the LED; gain undefined")
    cos_angle = dz / d
    cos_fov = math.cos(math.radians(device.fov_semi_angle_deg))
    if cos_angle < cos_fov:
        return 0.0
    nu = led.lambertian_index
    return (nu + 1.0) * device.pd_area / (2.0 * math.pi * d * d) * cos_angle ** (nu + 1.0)


def gain_map(scenario: Scenario, positions: np.ndarray) -> np.ndarray:
    """(N, L) matrix of channel gains for N 2D device positions.

    Positions are horizontal coordinates; the scenario's device height is
    used for the vertical placement.
    """
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    h = scenario.device.height
    cos_fov = math.cos(math.radians(scenario.device.fov_semi_angle_deg))
    gains = np.zeros((pts.shape[0], len(scenario.leds)))
    for j, led in enumerate(scenario.leds):
        dz = led.position[2] - h
        d2 = (pts[:, 0] - led.position[0]) ** 2 + (pts[:, 1] - led.position[1]) ** 2 + dz * dz
        d = np.sqrt(d2)
        cos_angle = dz / d
        nu = led.lambertian_index
        g = (nu + 1.0) * scenario.device.pd_area / (2.0 * np.pi * d2) * cos_angle ** (nu + 1.0)
        gains[:, j] = np.where(cos_angle >= cos_fov, g, 0.0)
    return gains


def received_ac_amplitude(scenario: Scenario, device_pos) -> dict[int, float]:
    """Per-LED AC photocurrent amplitude [A] at a device position.

    eta_oe * eta_eo * H_l * s_max for every AP in view; zero entries for the
    rest. s_max = mod_index * I_bias.
    """
    p = np.asarray(device_pos, dtype=float)
    pos3 = (p[0], p[1], scenario.device.height) if p.size == 2 else tuple(p)
    out = {}
    for led in scenario.leds:
        h = lambertian_gain(led, pos3, scenario.device)
        s_max = scenario.mod_index * led.bias_current
        out[led.id] = scenario.device.responsivity * led.eta_eo * h * s_max
    return out


def total_ac_rms_amplitude(scenario: Scenario, device_pos) -> float:
    """Scalar AC amplitude used in the backscatter power budget.

    RMS of the superposed modulating photocurrent: the per-LED square waves
    are mutually uncorrelated, so the composite mean square is the sum of the
    squared per-LED amplitudes.
    """
    amps = received_ac_amplitude(scenario, device_pos)
    return math.sqrt(sum(a * a for a in amps.values()))


def ac_rms_map(scenario: Scenario, positions: np.ndarray) -> np.ndarray:
    """Vectorized `total_ac_rms_amplitude` over (N, 2) positions."""
    gains = gain_map(scenario, positions)
    scale = np.array(
        [scenario.device.responsivity * led.eta_eo * scenario.mod_index * led.bias_current
         for led in scenario.leds]
    )
    return np.sqrt(np.sum((gains * scale[None, :]) ** 2, axis=1))


def dc_photocurrent(scenario: Scenario, device_pos) -> float:
    """Total DC photocurrent [A]: eta_oe * sum_l eta_eo * H_l * I_bias."""
    p = np.asarray(device_pos, dtype=float)
    pos3 = (p[0], p[1], scenario.device.height) if p.size == 2 else tuple(p)
    total = 0.0
    for led in scenario.leds:
        h = lambertian_gain(led, pos3, scenario.device)
        total += led.eta_eo * h * led.bias_current
    return scenario.device.responsivity * total


def open_circuit_voltage(scenario: Scenario, i_dc: float) -> float:
    """V_oc = V_t * ln(1 + I_dc / I_dark); zero when unlit."""
    dev = scenario.device
    return dev.thermal_voltage * math.log1p(i_dc / dev.dark_current)


def harvested_power(scenario: Scenario, device_pos) -> float:
    """Power available to the tag [W]: fill_factor * I_dc * V_oc."""
    i_dc = dc_photocurrent(scenario, device_pos)
    return scenario.device.fill_factor * i_dc * open_circuit_voltage(scenario, i_dc)


def noise_variance(scenario: Scenario) -> float:
    """Additive detector noise variance N_0 * B (linear watts)."""
    n0_w_hz = 10.0 ** ((scenario.noise_psd_dbm_hz - 30.0) / 10.0)
    return n0_w_hz * scenario.bandwidth_hz


def vlc_power_heatmap(
    scenario: Scenario, resolution: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Aggregate received optical power sum_l P_l * H_l on a uniform grid.

    Returns (x_coords, y_coords, power) where power[i, j] corresponds to
    (x_coords[j], y_coords[i]) in watts. Grid starts at the area origin.
    """
    if resolution <= 0.0:
        raise ValueError("grid resolution must be positive")
    xs = np.arange(0.0, scenario.width + 1e-9, resolution)
    ys = np.arange(0.0, scenario.length + 1e-9, resolution)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    gains = gain_map(scenario, pts)
    p_led = np.array([led.eta_eo * led.bias_current for led in scenario.leds])
    power = (gains * p_led[None, :]).sum(axis=1).reshape(gy.shape)
    return xs, ys, power


def write_grid(path, xs: np.ndarray, ys: np.ndarray, values: np.ndarray, units: str) -> None:
    """Delimited-text grid with a one-line header (origin, resolution, units)."""
    res_x = xs[1] - xs[0] if len(xs) > 1 else 0.0
    header = f"origin=({xs[0]:.6g},{ys[0]:.6g}) resolution={res_x:.6g} units={units}"
    np.savetxt(path, values, delimiter=",", header=header)


def read_grid(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
