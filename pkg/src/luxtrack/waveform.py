"""Transmit-side and tag-side signal synthesis.

Frames are 16 bits: a 7-bit Barker preamble `1110010`, the 8-bit LED id
(MSB first) and one dummy bit. Each frame is Manchester-encoded into 32
half-chips and every half-chip is filled with a square-wave tone (sign of a
sine) from the AP's frequency pair. APs free-run: their repeating frame
streams carry independent start offsets.

The tag hard-limits the composite photocurrent with a comparator referenced
to a slow low-pass of itself, and the resulting switch state amplitude-
modulates the reflected carrier; the reader sees that binary waveform scaled
through the backscatter power budget plus complex white noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from . import rf, vlc
from .scenario import FrequencyPair, Scenario

BARKER7 = np.array([1, 1, 1, 0, 0, 1, 0], dtype=np.uint8)
FRAME_BITS = 16
DUMMY_BIT = 0

# Cutoff of the RC reference filter feeding the comparator's negative input.
COMPARATOR_LPF_HZ = 15.0


@dataclass(frozen=True)
class ModulationSpec:
    """Bit rate and line coding of the LED-modulating signal."""

    bit_rate: float = 1000.0
    manchester: bool = True

    def __post_init__(self) -> None:
        if self.bit_rate <= 0.0:
            raise ValueError("bit rate must be positive")

    @property
    def chip_rate(self) -> float:
        return 2.0 * self.bit_rate if self.manchester else self.bit_rate


@dataclass
class SampleStream:
    """Uniformly sampled waveform (real at the tag, complex at the reader)."""

    samples: np.ndarray
    rate: float
    epoch: float = 0.0

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples)
        if self.rate <= 0.0:
            raise ValueError("sample rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.rate

    def times(self) -> np.ndarray:
        return self.epoch + np.arange(len(self.samples)) / self.rate


def build_frame(led_id: int) -> np.ndarray:
    """16-bit frame: Barker || id (MSB first) || dummy."""
    if not 0 <= led_id <= 255:
        raise ValueError(f"LED id must fit 8 bits, got {led_id}")
    payload = np.array([(led_id >> (7 - k)) & 1 for k in range(8)], dtype=np.uint8)
    return np.concatenate([BARKER7, payload, [DUMMY_BIT]]).astype(np.uint8)


def parse_frame(bits) -> int:
    """Recover the id from an aligned 16-bit frame; raises on a bad preamble."""
    b = np.asarray(bits, dtype=np.uint8)
    if len(b) < FRAME_BITS or not np.array_equal(b[:7], BARKER7):
        raise ValueError("not an aligned frame")
    return int(np.packbits(b[7:15])[0])


def manchester_encode(bits) -> np.ndarray:
    """bit 1 -> [1, 0], bit 0 -> [0, 1]; output has exact 0.5 chip mean."""
    b = np.asarray(bits, dtype=np.uint8)
    chips = np.empty(2 * len(b), dtype=np.uint8)
    chips[0::2] = b
    chips[1::2] = 1 - b
    return chips


def manchester_decode(chips) -> np.ndarray:
    """First half-chip of each pair carries the bit under this encoding."""
    c = np.asarray(chips, dtype=np.uint8)
    return c[0 : 2 * (len(c) // 2) : 2].copy()


def _tone_samples(chips: np.ndarray, pair: FrequencyPair, chip_rate: float,
                  sample_rate: float, n_samples: int, start_offset: float,
                  periodic: bool) -> np.ndarray:
    """Square-tone fill of a chip sequence, free-running from `start_offset` s."""
    t = start_offset + np.arange(n_samples) / sample_rate
    idx = np.floor(t * chip_rate).astype(np.int64)
    idx = idx % len(chips) if periodic else np.clip(idx, 0, len(chips) - 1)
    freqs = np.where(chips[idx] == 1, pair.f2, pair.f1)
    return np.sign(np.sin(2.0 * np.pi * freqs * t))


def bfsk_waveform(
    bits,
    spec: ModulationSpec,
    pair: FrequencyPair,
    sample_rate: float,
    start_offset: float = 0.0,
) -> SampleStream:
    """Square-wave FSK stream for one bit sequence, amplitude +-1.

    Each (Manchester-expanded) symbol interval is filled with the sign of the
    selected tone, both tones referenced to the same free-running time base.
    """
    if sample_rate < 10.0 * pair.f2:
        raise ValueError(
            f"sample rate {sample_rate} too low for tone {pair.f2} (need >= 10x)"
        )
    b = np.asarray(bits, dtype=np.uint8)
    chips = manchester_encode(b) if spec.manchester else b
    n = round(len(chips) * sample_rate / spec.chip_rate)
    samples = _tone_samples(chips, pair, spec.chip_rate, sample_rate, n, start_offset, False)
    return SampleStream(samples, sample_rate)


def ap_frame_stream(
    led_id: int,
    pair: FrequencyPair,
    spec: ModulationSpec,
    sample_rate: float,
    n_samples: int,
    start_offset: float = 0.0,
) -> np.ndarray:
    """The AP's endlessly repeating frame waveform observed from `start_offset` s."""
    chips = manchester_encode(build_frame(led_id)) if spec.manchester \
        else build_frame(led_id)
    return _tone_samples(chips, pair, spec.chip_rate, sample_rate, n_samples,
                         start_offset, True)


def frame_duration(spec: ModulationSpec) -> float:
    return FRAME_BITS / spec.bit_rate


def device_rx_composite(
    scenario: Scenario,
    device_pos,
    sample_rate: float | None = None,
    duration: float = 0.2,
    rng: np.random.Generator | None = None,
    start_offsets: dict[int, float] | None = None,
) -> SampleStream:
    """AC photocurrent at the tag: superposition of all in-view AP streams.

    Per-AP amplitudes come from the optical link; start offsets default to
    independent uniform draws over one frame (or zero without an rng).
    """
    fs = scenario.sample_rate_hz if sample_rate is None else sample_rate
    spec = ModulationSpec(bit_rate=scenario.data_rate_bps)
    n = round(duration * fs)
    amps = vlc.received_ac_amplitude(scenario, device_pos)
    total = np.zeros(n)
    for led in scenario.leds:
        a = amps[led.id]
        if a == 0.0:
            continue
        if led.freq_pair is None:
            raise ValueError(f"LED {led.id} has no frequency pair assigned")
        if start_offsets is not None:
            off = start_offsets.get(led.id, 0.0)
        elif rng is not None:
            off = float(rng.uniform(0.0, frame_duration(spec)))
        else:
            off = 0.0
        total += a * ap_frame_stream(led.id, led.freq_pair, spec, fs, n, off)
    return SampleStream(total, fs)


def comparator_switch(stream: SampleStream, cutoff_hz: float = COMPARATOR_LPF_HZ) -> np.ndarray:
    """Binary switch-control state: input above its slow-moving mean -> 1."""
    x = np.asarray(stream.samples, dtype=float)
    if len(x) == 0:
        return np.zeros(0, dtype=np.uint8)
    a = math.exp(-2.0 * math.pi * cutoff_hz / stream.rate)
    ref, _ = lfilter([1.0 - a], [1.0, -a], x, zi=np.array([a * x[0]]))
    return (x > ref).astype(np.uint8)


def backscatter_mix(
    device_stream: SampleStream,
    scenario: Scenario,
    device_pos,
    rng: np.random.Generator | None = None,
    pathloss_mode: str = "expected",
    phase: float = 0.0,
    comparator: bool = True,
    add_noise: bool = True,
) -> SampleStream:
    """Complex baseband stream at the reader.

    The tag's binary switch state (or, with comparator=False, the linear
    unit-RMS composite) rides on an amplitude set by the backscatter budget
    evaluated with the stream's own RMS drive; complex white Gaussian noise
    of variance N_0*B is added on top.
    """
    x = np.asarray(device_stream.samples, dtype=float)
    i_ac_rms = float(np.sqrt(np.mean(x**2))) if len(x) else 0.0

    if i_ac_rms > 0.0:
        rss_dbm = rf.backscatter_rss_db(scenario, device_pos, i_ac_rms, rng, pathloss_mode)
        amp = math.sqrt(10.0 ** ((rss_dbm - 30.0) / 10.0))
        if comparator:
            shape = 2.0 * comparator_switch(device_stream).astype(float) - 1.0
        else:
            shape = x / i_ac_rms
        signal = amp * shape * np.exp(1j * phase)
    else:
        signal = np.zeros(len(x), dtype=complex)

    if add_noise:
        if rng is None:
            raise ValueError("noise injection needs an explicit rng")
        p_n = rf.reader_noise_power_w(scenario)
        noise = math.sqrt(p_n / 2.0) * (
            rng.standard_normal(len(x)) + 1j * rng.standard_normal(len(x))
        )
        signal = signal + noise

    return SampleStream(signal.astype(complex), device_stream.rate, device_stream.epoch)


# -- raw I/Q file exchange ---------------------------------------------------

def write_iq(stream: SampleStream, path: str | Path) -> None:
    """Interleaved little-endian float32 I/Q plus a text sidecar (rate, epoch)."""
    path = Path(path)
    z = np.asarray(stream.samples, dtype=complex)
    inter = np.empty(2 * len(z), dtype="<f4")
    inter[0::2] = z.real
    inter[1::2] = z.imag
    inter.tofile(path)
    path.with_suffix(path.suffix + ".meta").write_text(
        f"rate_hz={stream.rate!r}\nepoch_s={stream.epoch!r}\n"
    )


def read_iq(path: str | Path) -> SampleStream:
    path = Path(path)
    inter = np.fromfile(path, dtype="<f4")
    if len(inter) % 2:
        raise ValueError(f"{path} holds an odd number of float32 values")
    meta = {}
    for line in path.with_suffix(path.suffix + ".meta").read_text().splitlines():
        key, _, value = line.partition("=")
        meta[key.strip()] = float(value)
    z = inter[0::2].astype(float) + 1j * inter[1::2].astype(float)
    return SampleStream(z, meta["rate_hz"], meta.get("epoch_s", 0.0))
