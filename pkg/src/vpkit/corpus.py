"""Deterministic synthetic corpus: formant-filtered voices, manifests, transcripts.

Each synthetic speaker is a recipe of resonator frequencies plus a pitch
base; utterances vary pitch, duration, and excitation noise while keeping
the resonances, so a spectral scorer can tell speakers apart.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .audio import AudioBuffer, write_wav
from .scorer import featurize
from .embeddings import EmbeddingSet, save_embeddings

_VOCABULARY = (
    "ABLE BAKER CHART DELTA EMBER FROST GROVE HALO INDEX JOLT KITE LUMEN "
    "MAPLE NORTH OPAL PIVOT QUILL RIDGE SLATE TOKEN UMBER VAPOR WICK YIELD"
).split()

_FADE_MS = 5.0


@dataclass
class CorpusPaths:
    """Locations of everything a generated corpus provides."""

    root: Path
    wav_dir: Path
    enroll_manifest: Path
    trial_manifest: Path
    trial_key: Path
    transcripts: Path
    pool_embeddings: Path | None


@dataclass(frozen=True)
class SpeakerRecipe:
    formants_hz: tuple[float, ...]
    bandwidths_hz: tuple[float, ...]
    f0_hz: float


def _speaker_recipe(index: int, rng: np.random.Generator) -> SpeakerRecipe:
    # golden-ratio spreading keeps speakers apart for any count
    f1 = 350.0 + 450.0 * ((index * 0.6180339887) % 1.0) + rng.uniform(-15, 15)
    f2 = 1100.0 + 900.0 * ((index * 0.3819660113 + 0.21) % 1.0) + rng.uniform(-25, 25)
    f3 = 2500.0 + 700.0 * ((index * 0.7548776662 + 0.13) % 1.0) + rng.uniform(-30, 30)
    bw = tuple(float(rng.uniform(70, 110)) for _ in range(3))
    f0 = 95.0 + 110.0 * ((index * 0.5545497 + 0.37) % 1.0) + rng.uniform(-3, 3)
    return SpeakerRecipe((f1, f2, f3), bw, f0)


def render_utterance(
    recipe: SpeakerRecipe,
    duration_s: float,
    sample_rate_hz: int,
    rng: np.random.Generator,
    f0_jitter: float = 0.0,
) -> AudioBuffer:
    """Impulse-train-plus-noise excitation through cascaded resonators."""
    n = int(duration_s * sample_rate_hz)
    f0 = recipe.f0_hz * (1.0 + f0_jitter)
    excitation = np.zeros(n)
    period = sample_rate_hz / f0
    pulses = np.round(np.arange(0.0, n, period)).astype(int)
    excitation[pulses[pulses < n]] = 1.0
    excitation += 0.02 * rng.standard_normal(n)
    x = excitation
    for f, bw in zip(recipe.formants_hz, recipe.bandwidths_hz):
        r = np.exp(-np.pi * bw / sample_rate_hz)
        theta = 2.0 * np.pi * f / sample_rate_hz
        x = signal.lfilter([1.0], [1.0, -2.0 * r * np.cos(theta), r * r], x)
    peak = np.max(np.abs(x))
    if peak > 0:
        x = 0.6 * x / peak
    fade = int(_FADE_MS / 1000.0 * sample_rate_hz)
    if fade and n >= 2 * fade:
        ramp = np.linspace(0.0, 1.0, fade)
        x[:fade] *= ramp
        x[-fade:] *= ramp[::-1]
    return AudioBuffer(x, sample_rate_hz)


def gen_corpus(
    out_dir,
    speakers: int = 8,
    utterances: int = 4,
    seed: int = 0,
    sample_rate_hz: int = 16000,
    pool_speakers: int = 0,
) -> CorpusPaths:
    """Generate WAVs, enroll/trial manifests, a trial key, and transcripts.

    Per speaker, the first utterance goes to the enrollment set and the
    rest to the trial set; the key lists the full enroll-by-trial cross
    product as target/nontarget pairs. With pool_speakers > 0, extra
    single-utterance voices are featurized into a pool embedding file.
    """
    if speakers < 2:
        raise ValueError("need at least 2 speakers")
    if utterances < 2:
        raise ValueError("need at least 2 utterances per speaker")
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    enroll_lines: list[str] = []
    trial_lines: list[str] = []
    transcript_lines: list[str] = []
    enroll_ids: list[tuple[str, str]] = []
    trial_ids: list[tuple[str, str]] = []
    for s in range(speakers):
        spk = f"spk{s:02d}"
        recipe = _speaker_recipe(s, rng)
        for u in range(utterances):
            utt = f"{spk}_utt{u:02d}"
            duration = float(rng.uniform(0.9, 1.3))
            audio = render_utterance(
                recipe, duration, sample_rate_hz, rng, f0_jitter=float(rng.uniform(-0.04, 0.04))
            )
            rel = f"wav/{utt}.wav"
            write_wav(out_dir / rel, audio)
            words = " ".join(rng.choice(_VOCABULARY, size=int(rng.integers(5, 10))))
            transcript_lines.append(f"{utt} {words}")
            line = f"{utt}\t{spk}\t{rel}"
            if u == 0:
                enroll_lines.append(line)
                enroll_ids.append((utt, spk))
            else:
                trial_lines.append(line)
                trial_ids.append((utt, spk))

    key_lines = []
    for e_utt, e_spk in enroll_ids:
        for t_utt, t_spk in trial_ids:
            label = "target" if e_spk == t_spk else "nontarget"
            key_lines.append(f"{e_utt} {t_utt} {label}")

    paths = CorpusPaths(
        root=out_dir,
        wav_dir=wav_dir,
        enroll_manifest=out_dir / "enroll.tsv",
        trial_manifest=out_dir / "trial.tsv",
        trial_key=out_dir / "trials.txt",
        transcripts=out_dir / "transcripts.txt",
        pool_embeddings=None,
    )
    paths.enroll_manifest.write_text("\n".join(enroll_lines) + "\n", encoding="utf-8")
    paths.trial_manifest.write_text("\n".join(trial_lines) + "\n", encoding="utf-8")
    paths.trial_key.write_text("\n".join(key_lines) + "\n", encoding="utf-8")
    paths.transcripts.write_text("\n".join(transcript_lines) + "\n", encoding="utf-8")

    if pool_speakers > 0:
        entries = {}
        for p in range(pool_speakers):
            spk = f"pool{p:02d}"
            recipe = _speaker_recipe(1000 + p, rng)
            audio = render_utterance(recipe, 1.0, sample_rate_hz, rng)
            utt = f"{spk}_utt00"
            entries[utt] = (spk, featurize(audio, utt).features)
        pool_path = out_dir / "pool.txt"
        save_embeddings(pool_path, EmbeddingSet(entries))
        paths.pool_embeddings = pool_path
    return paths
