"""Training-free utterance similarity from long-term average log-mel spectra.

This is a deterministic, desk-scale stand-in for a trained speaker
verification back end: good enough to rank synthetic voices, calibrated
to an LLR scale by logistic regression. It is not a substitute for a
trained ASV system.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import expit

from .audio import AudioBuffer, FrameConfig, frame_signal
from .metrics.privacy import LN2, ScoreSet

FEATURE_DIM = 64
_LOG_FLOOR = 1e-12
_MIN_PAIRS_PER_CLASS = 10


@dataclass
class UttVector:
    """Utterance id plus its fixed-dimension spectral summary."""

    utt_id: str
    features: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape != (FEATURE_DIM,):
            raise ValueError(f"features must have dimension {FEATURE_DIM}")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate_hz: int, n_fft: int, n_bands: int = FEATURE_DIM) -> np.ndarray:
    """Triangular mel filters over the rfft bins, shape (n_bands, n_fft//2 + 1)."""
    n_bins = n_fft // 2 + 1
    mel_edges = np.linspace(0.0, _hz_to_mel(sample_rate_hz / 2.0), n_bands + 2)
    hz_edges = _mel_to_hz(mel_edges)
    bins = hz_edges / (sample_rate_hz / 2.0) * (n_bins - 1)
    fb = np.zeros((n_bands, n_bins))
    for b in range(n_bands):
        left, center, right = bins[b], bins[b + 1], bins[b + 2]
        k = np.arange(n_bins)
        up = (k - left) / max(center - left, 1e-9)
        down = (right - k) / max(right - center, 1e-9)
        fb[b] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def featurize(audio: AudioBuffer, utt_id: str = "") -> UttVector:
    """Mean log power over mel bands, mean-and-variance normalized.

    Amplitude scaling shifts every band by the same log offset, which the
    mean normalization removes. Silent audio yields a zero vector with a
    warning.
    """
    if len(audio) == 0:
        raise ValueError("cannot featurize empty audio")
    cfg = FrameConfig.for_rate(audio.sample_rate_hz)
    frames, _ = frame_signal(audio, cfg)
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    bands = power @ mel_filterbank(audio.sample_rate_hz, cfg.frame_len).T
    ltas = np.log(bands + _LOG_FLOOR).mean(axis=0)
    std = ltas.std()
    if std == 0.0:
        warnings.warn(f"{utt_id or 'utterance'}: silent audio, zero feature vector")
        return UttVector(utt_id, np.zeros(FEATURE_DIM))
    return UttVector(utt_id, (ltas - ltas.mean()) / std)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def score(a: UttVector, b: UttVector, cal: tuple[float, float]) -> float:
    """Affine-calibrated cosine score: slope * cos(a, b) + offset. Symmetric."""
    slope, offset = cal
    if not (math.isfinite(slope) and math.isfinite(offset)):
        raise ValueError("calibration parameters must be finite")
    if slope <= 0:
        raise ValueError("calibration slope must be positive")
    return slope * cosine_similarity(a.features, b.features) + offset


def calibrate(dev: ScoreSet) -> tuple[float, float]:
    """Fit (slope, offset) mapping raw cosines to LLRs by logistic regression.

    Minimizes the balanced log-loss (the LLR cost of the mapped scores),
    which is convex in (slope, offset); the identity map is the starting
    point, so the calibrated cost never exceeds the uncalibrated one. The
    returned slope is floored at a small positive value so downstream
    scoring stays monotone.
    """
    tar = dev.target_scores()
    non = dev.impostor_scores()
    if len(tar) < _MIN_PAIRS_PER_CLASS or len(non) < _MIN_PAIRS_PER_CLASS:
        raise ValueError(f"need at least {_MIN_PAIRS_PER_CLASS} pairs per class")

    def objective(w):
        s = w[0] * tar + w[1]
        n = w[0] * non + w[1]
        return 0.5 * (np.logaddexp(0.0, -s).mean() + np.logaddexp(0.0, n).mean()) / LN2

    def gradient(w):
        s_sig = expit(-(w[0] * tar + w[1]))
        n_sig = expit(w[0] * non + w[1])
        d_slope = 0.5 * (-(s_sig * tar).mean() + (n_sig * non).mean()) / LN2
        d_offset = 0.5 * (-s_sig.mean() + n_sig.mean()) / LN2
        return np.array([d_slope, d_offset])

    x0 = np.array([1.0, 0.0])
    result = optimize.minimize(objective, x0, jac=gradient, method="BFGS")
    candidates = [x0, np.array([max(result.x[0], 1e-6), result.x[1]])]
    best = min(candidates, key=objective)
    return float(best[0]), float(best[1])
