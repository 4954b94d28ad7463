"""WAV input/output, framing, and overlap-add reconstruction."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import AudioFormatError

CANONICAL_RATE_HZ = 16_000
DEFAULT_FRAME_MS = 20.0
DEFAULT_HOP_MS = 10.0
ENVELOPE_FLOOR = 1e-6

_PCM16_SCALE = 32768.0


@dataclass
class AudioBuffer:
    """Mono audio samples in [-1, 1] with their sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioBuffer holds mono audio (1-D samples)")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class FrameConfig:
    """Analysis framing: frame length and hop in samples, window shape."""

    frame_len: int = 320
    hop: int = 160
    window: str = "hann"

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_len:
            raise ValueError("hop must satisfy 0 < hop <= frame_len")
        if self.frame_len % 2:
            raise ValueError("frame_len must be even")
        if self.window not in ("rectangular", "hann"):
            raise ValueError(f"unknown window {self.window!r}")

    @classmethod
    def for_rate(
        cls,
        sample_rate_hz: int,
        frame_ms: float = DEFAULT_FRAME_MS,
        hop_ms: float = DEFAULT_HOP_MS,
        window: str = "hann",
    ) -> "FrameConfig":
        frame_len = int(round(sample_rate_hz * frame_ms / 1000.0))
        frame_len += frame_len % 2
        hop = max(1, int(round(sample_rate_hz * hop_ms / 1000.0)))
        return cls(frame_len=frame_len, hop=min(hop, frame_len), window=window)

    def window_values(self) -> np.ndarray:
        if self.window == "rectangular":
            return np.ones(self.frame_len)
        # periodic Hann: sums to a constant envelope at 50% overlap
        n = np.arange(self.frame_len)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.frame_len)


def read_wav(path) -> AudioBuffer:
    """Read a 16-bit PCM or 32-bit float RIFF WAV as mono samples in [-1, 1].

    Multi-channel files are reduced to channel 0 with a warning.
    """
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise AudioFormatError(f"{path}: {exc}") from exc
    if data.ndim > 1:
        warnings.warn(f"{path}: {data.shape[1]} channels, using channel 0")
        data = data[:, 0]
    if data.size == 0:
        raise AudioFormatError(f"{path}: zero-length audio")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _PCM16_SCALE
    elif data.dtype in (np.dtype(np.float32), np.dtype(np.float64)):
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(
            f"{path}: unsupported sample format {data.dtype}; expected int16 or float32"
        )
    return AudioBuffer(samples, int(rate))


def write_wav(path, audio: AudioBuffer) -> int:
    """Write 16-bit PCM. Returns the number of samples clamped to [-1, 1]."""
    x = audio.samples
    clipped = int(np.count_nonzero((x < -1.0) | (x > 1.0)))
    if clipped:
        warnings.warn(f"{path}: clamped {clipped} samples to [-1, 1]")
        x = np.clip(x, -1.0, 1.0)
    pcm = np.clip(np.rint(x * _PCM16_SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(path, audio.sample_rate_hz, pcm)
    return clipped


def frame_signal(audio: AudioBuffer, cfg: FrameConfig) -> tuple[np.ndarray, int]:
    """Split a signal into windowed frames.

    Returns (frames, padded_len). The signal is zero-padded so that every
    sample is covered by at least one frame (inputs shorter than one frame
    become a single frame); the frame count is then
    floor((padded_len - frame_len) / hop) + 1.
    """
    x = audio.samples
    n = len(x)
    if n <= cfg.frame_len:
        padded = cfg.frame_len
    else:
        hops = -(-(n - cfg.frame_len) // cfg.hop)  # ceil division
        padded = cfg.frame_len + hops * cfg.hop
    if padded > n:
        x = np.concatenate([x, np.zeros(padded - n)])
    count = (padded - cfg.frame_len) // cfg.hop + 1
    idx = np.arange(cfg.frame_len)[None, :] + cfg.hop * np.arange(count)[:, None]
    frames = x[idx] * cfg.window_values()[None, :]
    return frames, padded


def overlap_add(
    frames: np.ndarray,
    cfg: FrameConfig,
    out_len: int,
    sample_rate_hz: int = CANONICAL_RATE_HZ,
) -> AudioBuffer:
    """Reassemble frames at the analysis hop, dividing out the window envelope.

    Positions where the summed window envelope falls below ENVELOPE_FLOOR
    are set to zero instead of being amplified.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ValueError("frames must be a 2-D array of uniform rows")
    if frames.size and frames.shape[1] != cfg.frame_len:
        raise ValueError(
            f"frame length {frames.shape[1]} does not match config frame_len {cfg.frame_len}"
        )
    total = cfg.frame_len + cfg.hop * (len(frames) - 1) if len(frames) else 0
    acc = np.zeros(max(total, out_len))
    env = np.zeros_like(acc)
    w = cfg.window_values()
    for m in range(len(frames)):
        sl = slice(m * cfg.hop, m * cfg.hop + cfg.frame_len)
        acc[sl] += frames[m]
        env[sl] += w
    good = env > ENVELOPE_FLOOR
    acc[good] /= env[good]
    acc[~good] = 0.0
    return AudioBuffer(acc[:out_len], sample_rate_hz)
