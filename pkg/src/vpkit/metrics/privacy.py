"""Speaker-verifiability metrics: EER, LLR costs, and voice-similarity matrices."""

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit

TARGET = "target"
IMPOSTOR = "impostor"
LN2 = math.log(2.0)

MODES = ("oo", "oa", "aa")

# llr(ids_a, side_a, ids_b, side_b) -> array of shape (len(ids_a), len(ids_b));
# sides are "original" or "anon"
PairwiseLlr = Callable[[list[str], str, list[str], str], np.ndarray]


@dataclass(frozen=True)
class Trial:
    enroll_id: str
    trial_id: str
    score: float
    label: str


@dataclass
class ScoreSet:
    """Labeled trial scores on an LLR scale."""

    trials: list[Trial]

    def __post_init__(self):
        for t in self.trials:
            if t.label not in (TARGET, IMPOSTOR):
                raise ValueError(f"bad label {t.label!r} for trial {t.enroll_id}/{t.trial_id}")
            if not math.isfinite(t.score):
                raise ValueError(f"non-finite score for trial {t.enroll_id}/{t.trial_id}")

    @classmethod
    def from_arrays(cls, target_scores, impostor_scores) -> "ScoreSet":
        trials = [Trial("e", f"t{i}", float(s), TARGET) for i, s in enumerate(target_scores)]
        trials += [Trial("e", f"i{i}", float(s), IMPOSTOR) for i, s in enumerate(impostor_scores)]
        return cls(trials)

    def target_scores(self) -> np.ndarray:
        return np.array([t.score for t in self.trials if t.label == TARGET])

    def impostor_scores(self) -> np.ndarray:
        return np.array([t.score for t in self.trials if t.label == IMPOSTOR])


def _split_or_raise(scores: ScoreSet) -> tuple[np.ndarray, np.ndarray]:
    tar = scores.target_scores()
    non = scores.impostor_scores()
    if len(tar) == 0 or len(non) == 0:
        raise ValueError("need at least one target and one impostor trial")
    return tar, non


def eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and its threshold.

    All distinct scores are swept as thresholds with
    P_fa = fraction of impostors >= threshold and
    P_miss = fraction of targets < threshold; where no threshold gives an
    exact crossing, the rates are interpolated linearly between the two
    bracketing thresholds.
    """
    tar, non = _split_or_raise(scores)
    tar = np.sort(tar)
    non = np.sort(non)
    thresholds = np.unique(np.concatenate([tar, non]))
    # sentinel above the top score so the crossing is always bracketed
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)
    pfa = (len(non) - np.searchsorted(non, thresholds, side="left")) / len(non)
    pmiss = np.searchsorted(tar, thresholds, side="left") / len(tar)
    gap = pfa - pmiss  # non-increasing in the threshold
    exact = np.flatnonzero(gap == 0.0)
    if len(exact):
        i = exact[0]
        return float(pfa[i]), float(thresholds[i])
    i = int(np.flatnonzero(gap < 0.0)[0])
    g_lo, g_hi = gap[i - 1], gap[i]
    t = g_lo / (g_lo - g_hi)
    value = pmiss[i - 1] + t * (pmiss[i] - pmiss[i - 1])
    threshold = thresholds[i - 1] + t * (thresholds[i] - thresholds[i - 1])
    return float(value), float(threshold)


def cllr(scores: ScoreSet) -> float:
    """Log-likelihood-ratio cost in bits:
    (1/2) [ mean_tar log2(1+e^-s) + mean_non log2(1+e^s) ].
    """
    tar, non = _split_or_raise(scores)
    return float(
        0.5 * (np.logaddexp(0.0, -tar).mean() + np.logaddexp(0.0, non).mean()) / LN2
    )


def cllr_min(scores: ScoreSet) -> float:
    """Discrimination loss: cllr after optimal monotonic calibration.

    Scores are mapped to empirical posteriors by pool-adjacent-violators
    isotonic regression, with one pseudo-trial per class padded at each
    extreme to keep the calibrated LLRs finite, then converted back to
    LLRs. The padding can exceed the raw cost on tiny separable sets, so
    the result is capped at cllr(scores): identity is itself a monotone
    calibration.
    """
    tar, non = _split_or_raise(scores)
    s = np.concatenate([tar, non])
    labels = np.concatenate([np.ones(len(tar)), np.zeros(len(non))])
    order = np.argsort(s, kind="stable")
    seq = labels[order]
    padded = np.concatenate([[1.0, 0.0], seq, [1.0, 0.0]])
    post = _pav(padded)[2:-2]
    prior_log_odds = math.log(len(tar) / len(non))
    llr_sorted = np.log(post) - np.log1p(-post) - prior_log_odds
    llrs = np.empty_like(llr_sorted)
    llrs[order] = llr_sorted
    calibrated = ScoreSet.from_arrays(llrs[: len(tar)], llrs[len(tar) :])
    return min(cllr(calibrated), cllr(scores))


def _pav(y: np.ndarray) -> np.ndarray:
    """Least-squares non-decreasing fit by pool-adjacent-violators."""
    values: list[float] = []
    weights: list[float] = []
    for v in y:
        values.append(float(v))
        weights.append(1.0)
        while len(values) > 1 and values[-2] > values[-1]:
            w = weights[-2] + weights[-1]
            values[-2] = (values[-2] * weights[-2] + values[-1] * weights[-1]) / w
            weights[-2] = w
            values.pop()
            weights.pop()
    return np.repeat(values, np.asarray(weights, dtype=int))


@dataclass
class SimilarityMatrix:
    """Speaker-by-speaker sigmoid-of-mean-LLR values."""

    speakers: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.speakers)
        if self.values.shape != (n, n):
            raise ValueError(f"values must be {n}x{n}")


def similarity_matrix(
    llr: PairwiseLlr, segments: dict[str, list[str]], mode: str
) -> SimilarityMatrix:
    """Build the similarity matrix S(i,j) = sigmoid(mean pairwise LLR).

    mode selects the data side of each axis: "oo" original/original,
    "aa" anonymized/anonymized, "oa" row original vs column anonymized.
    When a speaker is compared against itself on the same data side,
    identical-segment pairs are excluded and unordered pairs are averaged;
    self-comparison then requires at least two segments.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    side_row, side_col = {
        "oo": ("original", "original"),
        "aa": ("anon", "anon"),
        "oa": ("original", "anon"),
    }[mode]
    speakers = list(segments)
    for spk, ids in segments.items():
        if not ids:
            raise ValueError(f"speaker {spk!r} has no segments")
    n = len(speakers)
    values = np.zeros((n, n))
    for i, si in enumerate(speakers):
        for j, sj in enumerate(speakers):
            block = np.asarray(llr(segments[si], side_row, segments[sj], side_col), dtype=np.float64)
            if block.shape != (len(segments[si]), len(segments[sj])):
                raise ValueError("llr function returned a block of the wrong shape")
            if i == j and side_row == side_col:
                if len(segments[si]) < 2:
                    raise ValueError(
                        f"speaker {si!r}: self-comparison needs at least 2 segments"
                    )
                k, l = np.triu_indices(len(segments[si]), k=1)
                mean = block[k, l].mean()
            else:
                mean = block.mean()
            values[i, j] = expit(mean)
    return SimilarityMatrix(speakers, values)


def diag_dominance(m: SimilarityMatrix) -> float:
    """Absolute difference between mean diagonal and mean off-diagonal values."""
    n = len(m.speakers)
    if n < 2:
        raise ValueError("diagonal dominance needs at least 2 speakers")
    diag = float(np.trace(m.values)) / n
    off = (float(m.values.sum()) - float(np.trace(m.values))) / (n * (n - 1))
    return abs(diag - off)


def _check_same_speakers(a: SimilarityMatrix, b: SimilarityMatrix) -> None:
    if a.speakers != b.speakers:
        raise ValueError("similarity matrices cover different speaker sets")


def de_identification(m_oa: SimilarityMatrix, m_oo: SimilarityMatrix) -> float:
    """1 - D_diag(M_oa)/D_diag(M_oo); 1 is perfect de-identification.

    A negative raw value is clamped to 0 with a warning.
    """
    _check_same_speakers(m_oa, m_oo)
    d_oo = diag_dominance(m_oo)
    if d_oo == 0.0:
        raise ValueError("original-data diagonal dominance is zero")
    raw = 1.0 - diag_dominance(m_oa) / d_oo
    if raw < 0.0:
        warnings.warn(f"negative de-identification {raw:.4g} clamped to 0")
        return 0.0
    return raw


def gain_voice_distinctiveness(m_aa: SimilarityMatrix, m_oo: SimilarityMatrix) -> float:
    """10 log10(D_diag(M_aa)/D_diag(M_oo)) in dB; 0 preserves distinctiveness.

    A zero dominance on either side yields a signed-infinity sentinel
    (nan when both are zero) with a warning.
    """
    _check_same_speakers(m_aa, m_oo)
    d_aa = diag_dominance(m_aa)
    d_oo = diag_dominance(m_oo)
    if d_aa == 0.0 or d_oo == 0.0:
        warnings.warn("zero diagonal dominance; gain is an infinity sentinel")
        if d_aa == d_oo:
            return math.nan
        return -math.inf if d_aa == 0.0 else math.inf
    return 10.0 * math.log10(d_aa / d_oo)


def load_score_file(path) -> dict[tuple[str, str], float]:
    """Read `enroll_id<SP>trial_id<SP>score` lines."""
    out: dict[tuple[str, str], float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                enroll, trial, score = line.split()
                out[(enroll, trial)] = float(score)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed score line") from exc
    return out


def save_score_file(path, scores: dict[tuple[str, str], float]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for (enroll, trial), score in scores.items():
            fh.write(f"{enroll} {trial} {score:.12g}\n")


def load_trial_key(path) -> dict[tuple[str, str], str]:
    """Read `enroll_id<SP>trial_id<SP>target|nontarget` lines."""
    out: dict[tuple[str, str], str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 3 or fields[2] not in ("target", "nontarget"):
                raise ValueError(f"{path}:{lineno}: expected `enroll trial target|nontarget`")
            out[(fields[0], fields[1])] = TARGET if fields[2] == "target" else IMPOSTOR
    return out


def make_scoreset(
    scores: dict[tuple[str, str], float], key: dict[tuple[str, str], str]
) -> ScoreSet:
    """Join a score file with a trial key; every scored pair must be keyed."""
    missing = [pair for pair in scores if pair not in key]
    if missing:
        raise ValueError(f"{len(missing)} scored pairs missing from the trial key, e.g. {missing[0]}")
    trials = [Trial(e, t, s, key[(e, t)]) for (e, t), s in scores.items()]
    return ScoreSet(trials)


def save_matrix_csv(path, m: SimilarityMatrix) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("speaker," + ",".join(m.speakers) + "\n")
        for spk, row in zip(m.speakers, m.values):
            fh.write(spk + "," + ",".join(f"{v:.10g}" for v in row) + "\n")


def load_matrix_csv(path) -> SimilarityMatrix:
    with open(path, encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    header = lines[0].split(",")
    speakers = header[1:]
    values = []
    for line in lines[1:]:
        fields = line.split(",")
        values.append([float(v) for v in fields[1:]])
    return SimilarityMatrix(speakers, np.array(values))


def save_matrix_heatmap(path, m: SimilarityMatrix) -> None:
    """Optional PNG heatmap export; requires matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(m.values, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(len(m.speakers)), m.speakers, rotation=90, fontsize=6)
    ax.set_yticks(range(len(m.speakers)), m.speakers, fontsize=6)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
