"""Dual-tone multi-frequency keypad synthesis and detection.

A key press is the sum of one row tone and one column tone from the
standard 4x4 keypad grid. Detection runs the Goertzel recurrence over
fixed-size sample blocks for the eight keypad frequencies, then applies
threshold and twist tests; a stream decoder segments consecutive block
decisions into key events.

The classic detector sizing (205-sample blocks at 8 kHz) places every
keypad frequency close to an integer DFT bin, and goertzel_power
quantises its target frequency to the nearest bin of the block, so the
recurrence agrees with a direct DFT evaluation to machine precision.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import MonitomationError

ROW_FREQS = (697.0, 770.0, 852.0, 941.0)
COL_FREQS = (1209.0, 1336.0, 1477.0, 1633.0)

_KEY_GRID = (
    ("1", "2", "3", "A"),
    ("4", "5", "6", "B"),
    ("7", "8", "9", "C"),
    ("*", "0", "#", "D"),
)

KEY_TO_PAIR: dict[str, tuple[float, float]] = {
    _KEY_GRID[r][c]: (ROW_FREQS[r], COL_FREQS[c])
    for r in range(4)
    for c in range(4)
}
PAIR_TO_KEY = {pair: key for key, pair in KEY_TO_PAIR.items()}

MIN_SAMPLE_RATE = int(2 * max(COL_FREQS))  # Nyquist for the highest tone


class InvalidKey(MonitomationError):
    pass


class SampleRateTooLow(MonitomationError):
    pass


class UnsupportedFormat(MonitomationError):
    pass


@dataclass
class ToneBlock:
    """A chunk of mono audio samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate < MIN_SAMPLE_RATE:
            raise SampleRateTooLow(
                f"{self.sample_rate} Hz is below the {MIN_SAMPLE_RATE} Hz minimum"
            )
        if len(self.samples) < 1:
            raise ValueError("a tone block holds at least one sample")


@dataclass(frozen=True)
class KeyEvent:
    key: str
    start_sample: int
    end_sample: int


@dataclass(frozen=True)
class DetectorConfig:
    """Detection parameters.

    ``power_threshold_db`` is how far the selected row and column bins
    must rise above the mean power of the six non-selected bins.
    """

    block_size: int = 205
    power_threshold_db: float = 20.0
    max_twist_db: float = 8.0
    min_key_blocks: int = 2
    min_gap_blocks: int = 1

    def __post_init__(self):
        if self.block_size < 64:
            raise ValueError("block_size must be at least 64 samples")
        if self.power_threshold_db <= 0 or self.max_twist_db <= 0:
            raise ValueError("thresholds must be positive")
        if self.min_key_blocks < 1 or self.min_gap_blocks < 1:
            raise ValueError("block counts must be at least 1")


def synthesize_key(
    key: str,
    duration_ms: int,
    sample_rate: int = 8000,
    amplitude: float = 0.4,
    noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ToneBlock:
    """Generate the two-tone signal for one keypad key, plus optional noise."""
    if key not in KEY_TO_PAIR:
        raise InvalidKey(f"{key!r} is not a DTMF key")
    if not 0.0 < amplitude <= 0.5:
        raise ValueError("per-tone amplitude must be in (0, 0.5]")
    f_row, f_col = KEY_TO_PAIR[key]
    n = np.arange(round(duration_ms * sample_rate / 1000))
    samples = amplitude * np.sin(2 * np.pi * f_row * n / sample_rate)
    samples += amplitude * np.sin(2 * np.pi * f_col * n / sample_rate)
    if noise_std > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        samples = samples + rng.normal(0.0, noise_std, len(n))
    return ToneBlock(samples, sample_rate)


def goertzel_power(block: ToneBlock, target_freq: float) -> float:
    """Squared magnitude of the DFT bin nearest ``target_freq``.

    Runs the Goertzel recurrence s[n] = x[n] + coeff*s[n-1] - s[n-2] with
    coeff = 2*cos(2*pi*k/N) for the nearest integer bin k, and returns
    s1**2 + s2**2 - coeff*s1*s2.
    """
    x = block.samples
    n = len(x)
    k = round(target_freq * n / block.sample_rate)
    coeff = 2.0 * math.cos(2.0 * math.pi * k / n)
    # the recurrence is the IIR filter 1 / (1 - coeff z^-1 + z^-2)
    s = lfilter([1.0], [1.0, -coeff, 1.0], x)
    s1 = s[-1]
    s2 = s[-2] if n >= 2 else 0.0
    return max(0.0, s1 * s1 + s2 * s2 - coeff * s1 * s2)


def detect_key_block(block: ToneBlock, cfg: DetectorConfig = DetectorConfig()) -> str | None:
    """Decide which key, if any, is present in one block.

    The block is Hamming-windowed before the bin powers are measured;
    without a window, leakage from the off-bin-centre keypad tones eats
    nearly the whole 20 dB threshold margin.
    """
    if len(block.samples) != cfg.block_size:
        raise ValueError(
            f"block of {len(block.samples)} samples, expected {cfg.block_size}"
        )
    windowed = ToneBlock(block.samples * np.hamming(cfg.block_size), block.sample_rate)
    row_powers = [goertzel_power(windowed, f) for f in ROW_FREQS]
    col_powers = [goertzel_power(windowed, f) for f in COL_FREQS]
    r = int(np.argmax(row_powers))
    c = int(np.argmax(col_powers))
    p_row, p_col = row_powers[r], col_powers[c]
    if p_row <= 0.0 or p_col <= 0.0:
        return None
    others = [p for i, p in enumerate(row_powers) if i != r]
    others += [p for i, p in enumerate(col_powers) if i != c]
    floor = sum(others) / len(others)
    threshold = floor * 10.0 ** (cfg.power_threshold_db / 10.0)
    if not (p_row > threshold and p_col > threshold):
        return None
    twist_db = abs(10.0 * math.log10(p_row / p_col))
    if twist_db > cfg.max_twist_db:
        return None
    return PAIR_TO_KEY[(ROW_FREQS[r], COL_FREQS[c])]


def decode_key_sequence(
    samples: np.ndarray,
    sample_rate: int,
    cfg: DetectorConfig = DetectorConfig(),
) -> list[KeyEvent]:
    """Segment a sample stream into an ordered list of key events.

    The stream is cut into non-overlapping blocks (a trailing partial
    block is ignored). A key press needs at least ``min_key_blocks``
    consecutive detections; a press of the same key again needs at least
    ``min_gap_blocks`` silent blocks in between, while shorter dropouts
    are bridged. A change of key always starts a new press.
    """
    if sample_rate < MIN_SAMPLE_RATE:
        raise SampleRateTooLow(
            f"{sample_rate} Hz is below the {MIN_SAMPLE_RATE} Hz minimum"
        )
    samples = np.asarray(samples, dtype=np.float64)
    bs = cfg.block_size
    events: list[KeyEvent] = []

    pending: str | None = None
    first_block = 0
    last_block = 0
    count = 0
    gap = 0

    def finalize():
        nonlocal pending, count
        if pending is not None and count >= cfg.min_key_blocks:
            events.append(
                KeyEvent(pending, first_block * bs, (last_block + 1) * bs)
            )
        pending = None
        count = 0

    n_blocks = len(samples) // bs
    for i in range(n_blocks):
        block = ToneBlock(samples[i * bs : (i + 1) * bs], sample_rate)
        decision = detect_key_block(block, cfg)
        if decision is None:
            gap += 1
            if pending is not None and gap >= cfg.min_gap_blocks:
                finalize()
            continue
        if pending is None:
            pending, first_block, last_block, count = decision, i, i, 1
        elif decision == pending:
            # still within the same press; short gaps are bridged
            last_block, count = i, count + 1
        else:
            finalize()
            pending, first_block, last_block, count = decision, i, i, 1
        gap = 0
    finalize()
    return events


def keys_of(events: list[KeyEvent]) -> str:
    """The decoded key string, ready for instruction classification."""
    return "".join(e.key for e in events)


# --- WAV ingestion ----------------------------------------------------------

def read_wav(path: str) -> tuple[np.ndarray, int]:
    """Load a mono 16-bit PCM WAV file as float samples in [-1, 1]."""
    try:
        with wave.open(path, "rb") as w:
            if w.getnchannels() != 1:
                raise UnsupportedFormat("only mono WAV files are supported")
            if w.getsampwidth() != 2:
                raise UnsupportedFormat("only 16-bit PCM WAV files are supported")
            if w.getcomptype() != "NONE":
                raise UnsupportedFormat("compressed WAV files are not supported")
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise UnsupportedFormat(str(exc)) from None
    return pcm16_to_float(raw), rate


def write_wav(path: str, samples: np.ndarray, sample_rate: int) -> None:
    """Write float samples in [-1, 1] as a mono 16-bit PCM WAV file."""
    with wave.open(path, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(float_to_pcm16(samples))


def pcm16_to_float(raw: bytes) -> np.ndarray:
    data = np.frombuffer(raw, dtype="<i2")
    return data.astype(np.float64) / 32768.0


def float_to_pcm16(samples: np.ndarray) -> bytes:
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    return (clipped * 32767.0).astype("<i2").tobytes()
