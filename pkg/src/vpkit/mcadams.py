"""Pole-angle anonymization: raise LPC pole angles to a power and resynthesize.

Angles of complex poles (in (0, pi) for the upper half-plane) are raised
to the configured exponent, pulling spectral peaks toward 1 rad -- about
2.5 kHz at a 16 kHz sample rate. Real-axis poles keep their angle. Radii
may additionally be contracted by a constant factor.
"""

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, FrameConfig, frame_signal, overlap_add, read_wav, write_wav
from .lpc import (
    STABILITY_RADIUS,
    PoleSet,
    lpc_analyze,
    lpc_from_poles,
    roots_of_lpc,
    split_conjugate,
    synthesize,
)

DEFAULT_ALPHA = 0.8
DEFAULT_LPC_ORDER = 20


@dataclass(frozen=True)
class McAdamsConfig:
    """Anonymizer settings: angle exponent, radius contraction, LPC order, framing."""

    alpha: float = DEFAULT_ALPHA
    radius_scale: float = 1.0
    lpc_order: int = DEFAULT_LPC_ORDER
    frame: FrameConfig = field(default_factory=FrameConfig)
    seed: int | None = None  # reserved for a stochastic-alpha extension; unused

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0.0 < self.radius_scale <= 1.0:
            raise ValueError("radius_scale must be in (0, 1]")
        if self.lpc_order < 2:
            raise ValueError("lpc_order must be >= 2")


@dataclass
class UtteranceReport:
    """Per-utterance processing stats for directory runs."""

    utt_id: str = ""
    frames: int = 0
    flagged_frames: int = 0
    pole_clamps: int = 0
    clipped_samples: int = 0
    runtime_s: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def transform_poles(poles: PoleSet, cfg: McAdamsConfig) -> PoleSet:
    """Shift pole angles by the configured exponent and scale radii.

    Upper-half poles get angle phi**alpha (kept within [0, pi]) and radius
    radius_scale * r; conjugates mirror exactly. Real-axis poles keep
    their angle and only have the radius scaled. Any radius above the
    stability bound is clamped to it.
    """
    reals, pos = split_conjugate(np.asarray(poles.poles))
    new_reals = np.clip(reals * cfg.radius_scale, -STABILITY_RADIUS, STABILITY_RADIUS)
    r = np.minimum(np.abs(pos) * cfg.radius_scale, STABILITY_RADIUS)
    phi = np.clip(np.angle(pos) ** cfg.alpha, 0.0, np.pi)
    shifted = r * np.exp(1j * phi)
    out = np.concatenate([new_reals.astype(np.complex128), shifted, np.conj(shifted)])
    return PoleSet(np.sort_complex(out), poles.order)


def anonymize_mcadams(audio: AudioBuffer, cfg: McAdamsConfig) -> AudioBuffer:
    """Anonymize one utterance; output has the same length as the input."""
    out, _ = anonymize_with_report(audio, cfg)
    return out


def anonymize_with_report(
    audio: AudioBuffer, cfg: McAdamsConfig
) -> tuple[AudioBuffer, UtteranceReport]:
    """Frame-by-frame pipeline: LPC -> poles -> angle shift -> resynthesis -> OLA.

    The analysis residual is reused unchanged for resynthesis; each frame
    is synthesized from zero filter state so the transform stays local to
    the frame (the overlap-add crossfade smooths hop boundaries). If any
    output sample exceeds 1, the signal is peak-normalized to 0.95.
    """
    if len(audio) == 0:
        raise ValueError("audio is empty")
    t0 = time.perf_counter()
    frames, _ = frame_signal(audio, cfg.frame)
    report = UtteranceReport(frames=len(frames))
    synth = np.empty_like(frames)
    for m in range(len(frames)):
        lp = lpc_analyze(frames[m], cfg.lpc_order)
        report.flagged_frames += int(lp.flagged)
        try:
            poles = roots_of_lpc(lp)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"frame {m}: {exc}") from exc
        report.pole_clamps += int(
            np.count_nonzero(np.abs(poles.poles) * cfg.radius_scale > STABILITY_RADIUS)
        )
        shifted = transform_poles(poles, cfg)
        synth[m], _ = synthesize(lpc_from_poles(shifted), lp.residual, frame_index=m)
    out = overlap_add(synth, cfg.frame, out_len=len(audio), sample_rate_hz=audio.sample_rate_hz)
    peak = float(np.max(np.abs(out.samples))) if len(out) else 0.0
    if peak > 1.0:
        out = AudioBuffer(out.samples * (0.95 / peak), audio.sample_rate_hz)
    report.runtime_s = time.perf_counter() - t0
    return out, report


def load_anonymization_manifest(path) -> dict[str, str]:
    """Read `utt_id<TAB>relative_path` lines (a middle speaker column is tolerated)."""
    entries: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) == 2:
                utt, rel = fields
            elif len(fields) == 3:
                utt, _, rel = fields
            else:
                raise ValueError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields")
            if utt in entries:
                raise ValueError(f"{path}:{lineno}: duplicate utterance id {utt!r}")
            entries[utt] = rel
    return entries


def _anonymize_one(utt_id: str, src: Path, dst: Path, cfg: McAdamsConfig) -> UtteranceReport:
    t0 = time.perf_counter()
    try:
        audio = read_wav(src)
        out, report = anonymize_with_report(audio, cfg)
        dst.parent.mkdir(parents=True, exist_ok=True)
        report.clipped_samples = write_wav(dst, out)
    except Exception as exc:  # collected per file; the run continues
        report = UtteranceReport(utt_id=utt_id, error=f"{type(exc).__name__}: {exc}")
    report.utt_id = utt_id
    report.runtime_s = time.perf_counter() - t0
    return report


def anonymize_directory(
    in_dir,
    out_dir,
    cfg: McAdamsConfig,
    manifest: dict[str, str],
    jobs: int = 1,
) -> list[UtteranceReport]:
    """Anonymize every manifest entry with one config; collect per-file reports.

    Failures are recorded in the corresponding report rather than raised,
    so one bad file does not abort the run.
    """
    in_dir = Path(in_dir)
    out_dir = Path(out_dir)
    items = [(utt, in_dir / rel, out_dir / rel) for utt, rel in manifest.items()]
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(
                pool.map(lambda it: _anonymize_one(it[0], it[1], it[2], cfg), items)
            )
    else:
        reports = [_anonymize_one(utt, src, dst, cfg) for utt, src, dst in items]
    failures = [r for r in reports if not r.ok]
    if failures:
        warnings.warn(f"{len(failures)} of {len(reports)} files failed anonymization")
    return reports
