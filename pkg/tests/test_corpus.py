import numpy as np
import pytest

from vpkit.corpus import gen_corpus, render_utterance, _speaker_recipe
from vpkit.metrics.privacy import load_trial_key


class TestGenCorpus:
    def test_counts_for_eight_by_four(self, corpus):
        wavs = sorted(corpus.wav_dir.glob("*.wav"))
        assert len(wavs) == 32
        enroll = corpus.enroll_manifest.read_text().strip().splitlines()
        trial = corpus.trial_manifest.read_text().strip().splitlines()
        assert len(enroll) == 8
        assert len(trial) == 24
        key = load_trial_key(corpus.trial_key)
        targets = [pair for pair, label in key.items() if label == "target"]
        assert len(targets) == 8 * 3
        assert len(key) == 8 * 24

    def test_transcripts_cover_all_utterances(self, corpus):
        lines = corpus.transcripts.read_text().strip().splitlines()
        assert len(lines) == 32
        for line in lines:
            utt, *words = line.split()
            assert (corpus.wav_dir / f"{utt}.wav").exists()
            assert len(words) >= 5

    def test_regeneration_identical(self, tmp_path):
        a = gen_corpus(tmp_path / "a", speakers=3, utterances=2, seed=42)
        b = gen_corpus(tmp_path / "b", speakers=3, utterances=2, seed=42)
        for wav in sorted(a.wav_dir.glob("*.wav")):
            assert wav.read_bytes() == (b.wav_dir / wav.name).read_bytes()
        assert a.trial_key.read_text() == b.trial_key.read_text()
        assert a.transcripts.read_text() == b.transcripts.read_text()

    def test_seed_changes_audio_not_structure(self, tmp_path):
        a = gen_corpus(tmp_path / "a", speakers=3, utterances=2, seed=1)
        b = gen_corpus(tmp_path / "b", speakers=3, utterances=2, seed=2)
        names_a = sorted(p.name for p in a.wav_dir.glob("*.wav"))
        names_b = sorted(p.name for p in b.wav_dir.glob("*.wav"))
        assert names_a == names_b
        assert a.trial_key.read_text().splitlines()[0].split()[:2] == \
            b.trial_key.read_text().splitlines()[0].split()[:2]
        changed = any(
            (a.wav_dir / n).read_bytes() != (b.wav_dir / n).read_bytes() for n in names_a
        )
        assert changed

    def test_pool_embeddings_written(self, corpus):
        assert corpus.pool_embeddings is not None
        lines = corpus.pool_embeddings.read_text().strip().splitlines()
        assert len(lines) == 24

    def test_minimum_sizes_enforced(self, tmp_path):
        with pytest.raises(ValueError, match="2 speakers"):
            gen_corpus(tmp_path / "x", speakers=1, utterances=4)
        with pytest.raises(ValueError, match="2 utterances"):
            gen_corpus(tmp_path / "y", speakers=4, utterances=1)


class TestRenderUtterance:
    def test_fades_and_peak(self):
        rng = np.random.default_rng(0)
        audio = render_utterance(_speaker_recipe(0, rng), 1.0, 16000, rng)
        assert audio.samples[0] == 0.0
        assert audio.samples[-1] == 0.0
        assert np.max(np.abs(audio.samples)) <= 0.6 + 1e-12

    def test_distinct_speakers_distinct_spectra(self):
        rng = np.random.default_rng(0)
        r0 = _speaker_recipe(0, rng)
        r1 = _speaker_recipe(1, rng)
        assert r0.formants_hz != r1.formants_hz
