"""Non-coherent FSK demodulation at the reader.

Flow: low-pass pre-filter, decimation, a bank of linear-phase FIR band-pass
filters (one per tone), envelope detection, integrate-and-dump chip decisions
with a timing search, Barker frame synchronization, id extraction, RSS
measurement, and spatial BER evaluation via full loopback.

All filters are windowed-sinc designs fully determined by the bank
parameters; group delay is removed by centered convolution, so decisions and
sync offsets line up with the incoming stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve, firwin, hilbert

from . import vlc, waveform
from .rf import NO_SIGNAL_DB
from .scenario import FrequencyPair, Scenario
from .waveform import (
    BARKER7,
    FRAME_BITS,
    ModulationSpec,
    SampleStream,
    manchester_decode,
)


@dataclass(frozen=True)
class FilterBankSpec:
    """Pre-filter and band-pass bank parameters."""

    lpf_cutoff_hz: float = 20e3
    lpf_transition_hz: float = 5e3
    bandwidth_10db_hz: float = 500.0
    decimation: int = 4


def _odd(n: int) -> int:
    return n if n % 2 else n + 1


class FilterBank:
    """Windowed-sinc filter bank for a fixed set of tone pairs and rate."""

    def __init__(
        self,
        pairs: list[FrequencyPair],
        sample_rate: float,
        spec: FilterBankSpec = FilterBankSpec(),
    ):
        self.pairs = list(pairs)
        self.rate = sample_rate
        self.spec = spec
        self.decimated_rate = sample_rate / spec.decimation
        if self.decimated_rate < 2.2 * max(p.f2 for p in pairs):
            raise ValueError("decimated rate undersamples the highest tone")
        self.lpf_taps = firwin(
            _odd(math.ceil(3.3 * sample_rate / spec.lpf_transition_hz)),
            spec.lpf_cutoff_hz,
            fs=sample_rate,
        )
        bpf_transition = spec.bandwidth_10db_hz
        n_bpf = _odd(math.ceil(3.3 * self.decimated_rate / bpf_transition))
        half_bw = spec.bandwidth_10db_hz / 2.0
        self.tone_taps: dict[float, np.ndarray] = {}
        for pair in pairs:
            for f in (pair.f1, pair.f2):
                if f not in self.tone_taps:
                    self.tone_taps[f] = firwin(
                        n_bpf, [f - half_bw, f + half_bw], pass_zero=False,
                        fs=self.decimated_rate,
                    )

    def front_end(self, samples: np.ndarray) -> np.ndarray:
        """Low-pass, decimate, and (for real input) move to the analytic signal."""
        x = np.asarray(samples)
        y = fftconvolve(x, self.lpf_taps, mode="same")
        y = y[:: self.spec.decimation]
        if not np.iscomplexobj(y):
            y = hilbert(y)
        return y

    def tone_envelope(self, x_decimated: np.ndarray, freq: float, smooth: int) -> np.ndarray:
        """Band-pass one tone and smooth its magnitude over `smooth` samples."""
        y = fftconvolve(x_decimated, self.tone_taps[freq], mode="same")
        env = np.abs(y)
        if smooth > 1:
            env = fftconvolve(env, np.ones(smooth) / smooth, mode="same")
        return env


@dataclass
class PairDecode:
    """Chip decisions for one frequency pair."""

    pair: FrequencyPair
    chips: np.ndarray
    chip_offset_s: float
    # Mean per-chip decision margin, a scale-dependent quality indicator.
    margin: float


@dataclass
class FrameHit:
    """One synchronized frame within a chip sequence."""

    chip_offset: int
    led_id: int
    dummy: int
    distance: int


@dataclass
class Detection:
    """A validated id decode with its epoch and measured strength."""

    led_id: int
    epoch: float
    rss_db: float
    preamble_distance: int = 0
    bit_errors: int | None = None


def _chip_decisions(diff: np.ndarray, samples_per_chip: int) -> tuple[np.ndarray, int, float]:
    """Integrate-and-dump with a full timing-offset search.

    Returns (chips, best_offset_samples, mean_abs_margin). The offset grid
    spans one chip period, so any fractional start alignment is absorbed.
    """
    spc = samples_per_chip
    cum = np.concatenate([[0.0], np.cumsum(diff)])
    best = (-1.0, 0, np.zeros(0))
    for off in range(spc):
        n_win = (len(diff) - off) // spc
        if n_win < 1:
            continue
        edges = cum[off : off + n_win * spc + 1 : spc]
        sums = np.diff(edges)
        metric = float(np.mean(np.abs(sums)))
        if metric > best[0]:
            best = (metric, off, sums)
    metric, off, sums = best
    return (sums > 0).astype(np.uint8), off, metric / spc


def demodulate(
    stream: SampleStream,
    bank: FilterBank,
    spec: ModulationSpec = ModulationSpec(),
) -> list[PairDecode]:
    """Per-pair chip sequences from a reader (complex) or tag (real) stream."""
    if stream.rate != bank.rate:
        raise ValueError(f"stream rate {stream.rate} != bank design rate {bank.rate}")
    x = bank.front_end(stream.samples)
    spc = int(round(bank.decimated_rate / spec.chip_rate))
    if spc < 4:
        raise ValueError("fewer than 4 samples per chip; raise the sample rate")
    out = []
    for pair in bank.pairs:
        env1 = bank.tone_envelope(x, pair.f1, spc)
        env2 = bank.tone_envelope(x, pair.f2, spc)
        chips, off, margin = _chip_decisions(env2 - env1, spc)
        out.append(
            PairDecode(pair, chips, stream.epoch + off / bank.decimated_rate, margin)
        )
    return out


def _sliding_hamming(bits: np.ndarray, pattern: np.ndarray) -> np.ndarray:
    n = len(bits) - len(pattern) + 1
    if n <= 0:
        return np.zeros(0, dtype=int)
    dist = np.zeros(n, dtype=int)
    for j, p in enumerate(pattern):
        dist += bits[j : j + n] != p
    return dist


def frame_sync(
    chips: np.ndarray,
    tolerance: int = 0,
    require_manchester_valid: bool = False,
) -> list[FrameHit]:
    """Find Barker-aligned frames in a chip sequence and extract the ids.

    Both Manchester phases are searched; overlapping candidates are resolved
    best-first (lowest preamble distance, then earliest). The optional
    Manchester validity gate additionally requires every half-chip pair in
    the frame to be a legal transition, which suppresses noise-driven hits.
    """
    c = np.asarray(chips, dtype=np.uint8)
    candidates: list[FrameHit] = []
    for phase in (0, 1):
        bits = manchester_decode(c[phase:])
        dist = _sliding_hamming(bits, BARKER7)
        for i in np.nonzero(dist <= tolerance)[0]:
            if i + FRAME_BITS > len(bits):
                continue
            if require_manchester_valid:
                seg = c[phase + 2 * i : phase + 2 * i + 2 * FRAME_BITS]
                if np.any(seg[0::2] == seg[1::2]):
                    continue
            led_id = int(np.packbits(bits[i + 7 : i + 15])[0])
            dummy = int(bits[i + 15])
            candidates.append(FrameHit(phase + 2 * i, led_id, dummy, int(dist[i])))

    candidates.sort(key=lambda h: (h.distance, h.chip_offset))
    accepted: list[FrameHit] = []
    for cand in candidates:
        span = range(cand.chip_offset, cand.chip_offset + 2 * FRAME_BITS)
        if all(
            a.chip_offset + 2 * FRAME_BITS <= span.start or a.chip_offset >= span.stop
            for a in accepted
        ):
            accepted.append(cand)
    accepted.sort(key=lambda h: h.chip_offset)
    return accepted


def measure_rss(
    stream: SampleStream,
    noise_band_hz: tuple[float, float] = (16e3, 23e3),
) -> float:
    """Mean stream power in dBm, corrected for the estimated noise floor.

    The floor is the median periodogram level inside a signal-free band
    (between the highest tone and the lowest square-wave harmonic), scaled to
    the full bandwidth. Returns NO_SIGNAL_DB when nothing exceeds the floor.
    """
    z = np.asarray(stream.samples)
    if len(z) == 0:
        raise ValueError("empty stream")
    p_total = float(np.mean(np.abs(z) ** 2))
    spec = np.abs(np.fft.fft(z)) ** 2 / len(z) ** 2
    freqs = np.fft.fftfreq(len(z), d=1.0 / stream.rate)
    lo, hi = noise_band_hz
    oob = (np.abs(freqs) >= lo) & (np.abs(freqs) <= hi)
    if not np.any(oob):
        raise ValueError("noise estimation band empty; stream too short or rate too low")
    # Median of the exponentially distributed bin powers, debiased to a mean.
    floor_per_bin = float(np.median(spec[oob])) / math.log(2.0)
    p_signal = p_total - floor_per_bin * len(z)
    if p_signal <= 0.0:
        return NO_SIGNAL_DB
    return 10.0 * math.log10(p_signal) + 30.0


@dataclass
class DecodeResult:
    ids: frozenset[int]
    rss_db: float | None
    detections: list[Detection] = field(default_factory=list)


def detect_ids(
    stream: SampleStream,
    scenario: Scenario,
    bank: FilterBank | None = None,
    tolerance: int = 0,
) -> DecodeResult:
    """Full reader-side decode of one epoch: ids present plus measured RSS.

    An id is accepted only when it is assigned, in the scenario, to the very
    pair it was decoded on; frames must also be structurally valid.
    """
    if bank is None:
        bank = FilterBank(_unique_pairs(scenario), stream.rate)
    spec = ModulationSpec(bit_rate=scenario.data_rate_bps)
    pair_ids = {
        pair: [led.id for led in scenario.leds if led.freq_pair == pair]
        for pair in bank.pairs
    }
    chip_t = 1.0 / spec.chip_rate
    detections: list[Detection] = []
    for dec in demodulate(stream, bank, spec):
        valid = pair_ids.get(dec.pair, [])
        for hit in frame_sync(dec.chips, tolerance, require_manchester_valid=True):
            if hit.led_id in valid and hit.dummy == waveform.DUMMY_BIT:
                detections.append(
                    Detection(
                        led_id=hit.led_id,
                        epoch=dec.chip_offset_s + hit.chip_offset * chip_t,
                        rss_db=NO_SIGNAL_DB,
                        preamble_distance=hit.distance,
                    )
                )
    ids = frozenset(d.led_id for d in detections)
    rss = None
    if ids:
        rss = measure_rss(stream)
        if rss == NO_SIGNAL_DB:
            return DecodeResult(frozenset(), None, [])
        for d in detections:
            d.rss_db = rss
    return DecodeResult(ids, rss, detections)


def _unique_pairs(scenario: Scenario) -> list[FrequencyPair]:
    pairs = []
    for led in scenario.leds:
        if led.freq_pair is None:
            raise ValueError(f"LED {led.id} has no frequency pair assigned")
        if led.freq_pair not in pairs:
            pairs.append(led.freq_pair)
    return pairs


def _aligned_payload_ber(
    chips: np.ndarray, led_id: int, trim_bits: int = FRAME_BITS
) -> tuple[float, int]:
    """Payload BER of a repeating-frame decode at the best cyclic alignment.

    Alignment (Manchester phase x 16 bit rotations) is chosen on whole-frame
    agreement; the error rate is then counted on the 8 id bits per frame.
    Returns (ber, payload_bits_counted).
    """
    pattern = waveform.build_frame(led_id).astype(np.uint8)
    best_total = None
    best_payload = (0.5, 0)
    for phase in (0, 1):
        bits = manchester_decode(np.asarray(chips, dtype=np.uint8)[phase:])
        bits = bits[trim_bits : len(bits) - trim_bits]
        n_frames = len(bits) // FRAME_BITS
        if n_frames < 1:
            continue
        grid = bits[: n_frames * FRAME_BITS].reshape(n_frames, FRAME_BITS)
        for rot in range(FRAME_BITS):
            pat = np.roll(pattern, -rot)
            col_err = (grid != pat[None, :]).sum(axis=0)
            total = int(col_err.sum())
            payload_cols = [(j) for j in range(FRAME_BITS) if 7 <= (j + rot) % FRAME_BITS < 15]
            payload_err = int(col_err[payload_cols].sum())
            if best_total is None or total < best_total:
                best_total = total
                best_payload = (payload_err / (8 * n_frames), 8 * n_frames)
    return best_payload


def ber_map(
    scenario: Scenario,
    resolution: float = 0.2,
    dwell_s: float = 2.0,
    rng: np.random.Generator | None = None,
    comparator: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-AP bit error rate on a grid via the full waveform loopback.

    Returns (x_coords, y_coords, ber) with ber shaped (n_aps, ny, nx). Each
    point synthesizes the tag composite, mixes it onto the carrier, decodes
    at the reader, and compares payload bits against the AP's known frame.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    spec = ModulationSpec(bit_rate=scenario.data_rate_bps)
    min_payload = 1e3
    if dwell_s * scenario.data_rate_bps * 0.5 < min_payload:
        raise ValueError(
            f"dwell {dwell_s}s yields fewer than {min_payload:.0f} payload bits per point"
        )
    xs = np.arange(0.0, scenario.width + 1e-9, resolution)
    ys = np.arange(0.0, scenario.length + 1e-9, resolution)
    bank = FilterBank(_unique_pairs(scenario), scenario.sample_rate_hz)
    ber = np.zeros((len(scenario.leds), len(ys), len(xs)))
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            dev = waveform.device_rx_composite(
                scenario, (x, y), duration=dwell_s, rng=rng
            )
            rdr = waveform.backscatter_mix(
                dev, scenario, (x, y), rng=rng, phase=float(rng.uniform(0, 2 * np.pi)),
                comparator=comparator,
            )
            decodes = {d.pair: d for d in demodulate(rdr, bank, spec)}
            for j, led in enumerate(scenario.leds):
                chips = decodes[led.freq_pair].chips
                ber[j, iy, ix], _ = _aligned_payload_ber(chips, led.id)
    return xs, ys, ber


def process_iq_file(path, scenario: Scenario, tolerance: int = 0) -> list[Detection]:
    """Standalone decode of a recorded I/Q capture written by the synthesizer."""
    stream = waveform.read_iq(path)
    return detect_ids(stream, scenario, tolerance=tolerance).detections


def detections_to_rows(detections: list[Detection]) -> str:
    """Delimited-text rows: epoch, id, rss_db."""
    lines = ["epoch_s,led_id,rss_db"]
    for d in detections:
        lines.append(f"{d.epoch:.6f},{d.led_id},{d.rss_db:.3f}")
    return "\n".join(lines) + "\n"
