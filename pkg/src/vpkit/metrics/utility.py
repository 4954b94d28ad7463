"""Utility metrics: word error rate and speaker-clustering quality."""

import itertools
import re
from dataclasses import dataclass

import numpy as np

MAX_CLUSTERS = 4

_NON_WORD = re.compile(r"[^A-Z0-9']+")


def normalize_text(text: str) -> tuple[str, ...]:
    """Uppercase, strip punctuation except apostrophes, collapse whitespace."""
    return tuple(tok for tok in _NON_WORD.sub(" ", text.upper()).split() if tok)


@dataclass(frozen=True)
class Transcript:
    utt_id: str
    tokens: tuple[str, ...]

    @classmethod
    def from_text(cls, utt_id: str, text: str) -> "Transcript":
        return cls(utt_id, normalize_text(text))


def wer(ref: Transcript, hyp: Transcript) -> tuple[float, int, int, int]:
    """Word error rate from a unit-cost Levenshtein alignment.

    Returns (rate, substitutions, deletions, insertions) with
    rate = (S + D + I) / len(ref).
    """
    r, h = ref.tokens, hyp.tokens
    if not r:
        raise ValueError(f"{ref.utt_id}: empty reference transcript")
    nr, nh = len(r), len(h)
    cost = np.zeros((nr + 1, nh + 1), dtype=np.int64)
    cost[:, 0] = np.arange(nr + 1)
    cost[0, :] = np.arange(nh + 1)
    for i in range(1, nr + 1):
        for j in range(1, nh + 1):
            sub = cost[i - 1, j - 1] + (r[i - 1] != h[j - 1])
            cost[i, j] = min(sub, cost[i - 1, j] + 1, cost[i, j - 1] + 1)
    subs = dels = ins = 0
    i, j = nr, nh
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + (r[i - 1] != h[j - 1]):
            subs += int(r[i - 1] != h[j - 1])
            i, j = i - 1, j - 1
        elif i > 0 and cost[i, j] == cost[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return (subs + dels + ins) / nr, subs, dels, ins


def corpus_wer(
    pairs: list[tuple[Transcript, Transcript]]
) -> tuple[float, int, int, int, int]:
    """Corpus rate from summed error counts, not a mean of per-utterance rates.

    Returns (rate, substitutions, deletions, insertions, reference_words).
    """
    if not pairs:
        raise ValueError("no transcript pairs")
    subs = dels = ins = words = 0
    for ref, hyp in pairs:
        _, s, d, i = wer(ref, hyp)
        subs += s
        dels += d
        ins += i
        words += len(ref.tokens)
    return (subs + dels + ins) / words, subs, dels, ins, words


@dataclass
class ClusteringTrial:
    """Recordings with ground-truth speakers and a listener's partition.

    recordings: (recording_id, true_speaker_id, is_distractor) triples.
    clusters: partition of the recording ids into 1..4 groups.
    """

    recordings: list[tuple[str, str, bool]]
    clusters: list[set[str]]

    def __post_init__(self):
        ids = [rec_id for rec_id, _, _ in self.recordings]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate recording ids")
        if not 1 <= len(self.clusters) <= MAX_CLUSTERS:
            raise ValueError(f"cluster count must be in [1, {MAX_CLUSTERS}]")
        covered: set[str] = set()
        for c in self.clusters:
            if covered & c:
                raise ValueError("clusters overlap")
            covered |= c
        if covered != set(ids):
            raise ValueError("clusters must cover every recording exactly once")

    def speaker_of(self, rec_id: str) -> str:
        for rid, spk, _ in self.recordings:
            if rid == rec_id:
                return spk
        raise KeyError(rec_id)

    def speakers(self) -> list[str]:
        return sorted({spk for _, spk, _ in self.recordings})

    def has_distractor(self) -> bool:
        return any(d for _, _, d in self.recordings)


def _overlap_counts(trial: ClusteringTrial) -> list[dict[str, int]]:
    counts = []
    for c in trial.clusters:
        per: dict[str, int] = {}
        for rec_id in c:
            spk = trial.speaker_of(rec_id)
            per[spk] = per.get(spk, 0) + 1
        counts.append(per)
    return counts


def clustering_purity(trial: ClusteringTrial) -> float:
    """Best injective assignment of speakers to clusters, matched fraction.

    Exhaustively maximizes sum_c |c intersect s_c| over assignments of
    distinct speakers (distractor included) to clusters, divided by the
    number of recordings.
    """
    counts = _overlap_counts(trial)
    speakers = trial.speakers()
    n_clusters = len(trial.clusters)
    k = min(n_clusters, len(speakers))
    best = 0
    for cluster_subset in itertools.combinations(range(n_clusters), k):
        for perm in itertools.permutations(speakers, k):
            total = sum(counts[c].get(s, 0) for c, s in zip(cluster_subset, perm))
            best = max(best, total)
    return best / len(trial.recordings)


def clustering_f1(trial: ClusteringTrial) -> float:
    """Macro-averaged F1 with clusters labeled by their majority speaker.

    Ties go to the lowest speaker id; several clusters may carry the same
    label, in which case their recordings pool into one predicted set.
    """
    counts = _overlap_counts(trial)
    labels = []
    for per in counts:
        best = max(sorted(per), key=lambda s: per[s])  # max count, lowest id on ties
        labels.append(best)
    rec_of: dict[str, set[str]] = {s: set() for s in trial.speakers()}
    for rec_id, spk, _ in trial.recordings:
        rec_of[spk].add(rec_id)
    predicted: dict[str, set[str]] = {s: set() for s in trial.speakers()}
    for label, cluster in zip(labels, trial.clusters):
        predicted[label] |= cluster
    f1s = []
    for spk in trial.speakers():
        tp = len(predicted[spk] & rec_of[spk])
        precision = tp / len(predicted[spk]) if predicted[spk] else 0.0
        recall = tp / len(rec_of[spk])
        f1s.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return float(np.mean(f1s))


def load_transcripts(path) -> dict[str, Transcript]:
    """Read `utt_id<SP>word word ...` lines; words are normalized on load."""
    out: dict[str, Transcript] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(None, 1)
            utt = fields[0]
            text = fields[1] if len(fields) > 1 else ""
            if utt in out:
                raise ValueError(f"{path}:{lineno}: duplicate utterance id {utt!r}")
            out[utt] = Transcript.from_text(utt, text)
    return out


def load_clustering_trials(path) -> list[ClusteringTrial]:
    """Read blank-line-separated blocks of
    `recording_id<SP>true_speaker<SP>cluster_index<SP>is_distractor` lines.
    """
    trials: list[ClusteringTrial] = []
    block: list[tuple[str, str, int, bool]] = []

    def flush():
        if not block:
            return
        recordings = [(rid, spk, dis) for rid, spk, _, dis in block]
        n_clusters = max(idx for _, _, idx, _ in block) + 1
        clusters: list[set[str]] = [set() for _ in range(n_clusters)]
        for rid, _, idx, _ in block:
            clusters[idx].add(rid)
        trials.append(ClusteringTrial(recordings, [c for c in clusters if c]))
        block.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                flush()
                continue
            fields = line.split()
            if len(fields) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields")
            rid, spk, idx, dis = fields
            if dis not in ("0", "1", "true", "false"):
                raise ValueError(f"{path}:{lineno}: is_distractor must be 0/1/true/false")
            block.append((rid, spk, int(idx), dis in ("1", "true")))
    flush()
    return trials
