"""Evaluation harness: run the attack-condition protocols end to end.

Conditions follow the attacker's knowledge: unprotected_oo scores original
enrollment against original trials, ignorant_oa scores original enrollment
against anonymized trials, and lazy_informed_aa anonymizes both sides
(with different per-speaker pseudo-identities for the enroll and trial
roles). Semi-informed evaluation would require retraining the back end on
anonymized data and is rejected.
"""

import configparser
import csv
import hashlib
import json
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .audio import read_wav
from .embeddings import AnonPolicy, EmbeddingSet, anonymize_embedding_set, load_embeddings
from .errors import PlanError, StageError
from .mcadams import McAdamsConfig, anonymize_mcadams
from .metrics.privacy import (
    ScoreSet,
    Trial,
    cllr,
    cllr_min,
    de_identification,
    diag_dominance,
    eer,
    gain_voice_distinctiveness,
    load_trial_key,
    similarity_matrix,
)
from .metrics.utility import corpus_wer, load_transcripts
from .scorer import calibrate, cosine_similarity, featurize

log = logging.getLogger(__name__)

CONDITIONS = ("unprotected_oo", "ignorant_oa", "lazy_informed_aa")
SEMI_INFORMED = "semi_informed_aa"
ANONYMIZERS = ("none", "mcadams", "embed")

REPORT_CSV_VERSION = 1
CSV_COLUMNS = ("report_version", "condition", "anonymizer", "metric", "mode", "value")


def default_jobs() -> int:
    """Worker count default: the VPKIT_JOBS environment variable, else 1."""
    env = os.environ.get("VPKIT_JOBS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ValueError(f"VPKIT_JOBS must be an integer, got {env!r}")


@dataclass
class EvalPlan:
    """One evaluation run: condition, anonymizer, data locations, seed."""

    condition: str
    output_dir: Path
    enroll_manifest: Path
    trial_manifest: Path
    trial_key: Path
    anonymizer: str = "none"
    seed: int = 0
    transcripts: Path | None = None
    hypotheses: Path | None = None
    audio_root: Path | None = None
    mcadams: McAdamsConfig = field(default_factory=McAdamsConfig)
    embed_pool: Path | None = None
    embed_policy: AnonPolicy = field(default_factory=AnonPolicy)
    jobs: int = 1

    def validate(self) -> None:
        if self.condition == SEMI_INFORMED:
            raise PlanError(
                "semi-informed evaluation retrains the verification model on "
                "anonymized data, which is outside this toolkit; use one of "
                + ", ".join(CONDITIONS)
            )
        if self.condition not in CONDITIONS:
            raise PlanError(f"unknown condition {self.condition!r}")
        if self.anonymizer not in ANONYMIZERS:
            raise PlanError(f"unknown anonymizer {self.anonymizer!r}")
        if self.condition == "unprotected_oo" and self.anonymizer != "none":
            raise PlanError("the unprotected condition forbids an anonymizer")
        if self.condition != "unprotected_oo" and self.anonymizer == "none":
            raise PlanError(f"condition {self.condition} requires an anonymizer")
        if self.anonymizer == "embed" and self.embed_pool is None:
            raise PlanError("the embed anonymizer requires a pool embedding file")

    def config_hash(self) -> str:
        parts = []
        for f in fields(self):
            parts.append(f"{f.name}={getattr(self, f.name)!r}")
        digest = hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()
        return digest[:16]


@dataclass(frozen=True)
class MetricRow:
    metric: str
    mode: str
    value: float


@dataclass
class Report:
    """Consolidated metrics plus provenance for one plan run."""

    condition: str
    anonymizer: str
    rows: list[MetricRow]
    provenance: dict[str, str]

    def value(self, metric: str, mode: str = "") -> float:
        for row in self.rows:
            if row.metric == metric and (not mode or row.mode == mode):
                return row.value
        raise KeyError(f"no metric {metric!r} (mode {mode!r}) in report")


def load_plan(path) -> EvalPlan:
    """Parse an INI-style plan file; relative paths resolve next to it."""
    path = Path(path)
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise PlanError(f"cannot read plan file {path}")
    if "plan" not in parser:
        raise PlanError(f"{path}: missing [plan] section")
    base = path.parent

    def resolve(value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    plan_sec = parser["plan"]
    data = parser["data"] if "data" in parser else {}
    required = ("enroll_manifest", "trial_manifest", "trial_key")
    for key in required:
        if key not in data:
            raise PlanError(f"{path}: [data] section needs {key}")
    mc = parser["mcadams"] if "mcadams" in parser else {}
    mcadams_cfg = McAdamsConfig(
        alpha=float(mc.get("alpha", 0.8)),
        radius_scale=float(mc.get("radius_scale", 1.0)),
        lpc_order=int(mc.get("lpc_order", 20)),
    )
    em = parser["embed"] if "embed" in parser else {}
    policy = AnonPolicy(
        n_far=int(em.get("n_far", 200)),
        n_avg=int(em.get("n_avg", 100)),
        distance=em.get("distance", "cosine"),
        level=em.get("level", "per_speaker"),
        seed=int(plan_sec.get("seed", 0)),
    )
    plan = EvalPlan(
        condition=plan_sec.get("condition", ""),
        anonymizer=plan_sec.get("anonymizer", "none"),
        seed=int(plan_sec.get("seed", 0)),
        output_dir=resolve(plan_sec.get("output_dir", "out")),
        enroll_manifest=resolve(data["enroll_manifest"]),
        trial_manifest=resolve(data["trial_manifest"]),
        trial_key=resolve(data["trial_key"]),
        transcripts=resolve(data["transcripts"]) if "transcripts" in data else None,
        hypotheses=resolve(data["hypotheses"]) if "hypotheses" in data else None,
        audio_root=resolve(data["audio_root"]) if "audio_root" in data else None,
        mcadams=mcadams_cfg,
        embed_pool=resolve(em["pool"]) if "pool" in em else None,
        embed_policy=policy,
        jobs=int(plan_sec["jobs"]) if "jobs" in plan_sec else default_jobs(),
    )
    plan.validate()
    return plan


def _load_dataset_manifest(path) -> list[tuple[str, str, str]]:
    """Read `utt_id<TAB>speaker<TAB>relative_path` lines."""
    rows: list[tuple[str, str, str]] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields_ = line.split("\t")
            if len(fields_) != 3:
                raise ValueError(f"{path}:{lineno}: expected `utt<TAB>speaker<TAB>path`")
            utt, spk, rel = fields_
            if utt in seen:
                raise ValueError(f"{path}:{lineno}: duplicate utterance id {utt!r}")
            seen.add(utt)
            rows.append((utt, spk, rel))
    return rows


def _map_jobs(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def run_plan(plan: EvalPlan) -> Report:
    """Execute one plan: anonymize per condition, score, compute metrics, write reports.

    Any stage failure raises StageError with the stage name after removing
    files this run already wrote.
    """
    plan.validate()
    written: list[Path] = []
    stage = "load-data"
    try:
        enroll = _load_dataset_manifest(plan.enroll_manifest)
        trial = _load_dataset_manifest(plan.trial_manifest)
        key = load_trial_key(plan.trial_key)
        enroll_root = plan.audio_root or plan.enroll_manifest.parent
        trial_root = plan.audio_root or plan.trial_manifest.parent
        log.info("loaded %d enroll, %d trial utterances, %d keyed pairs",
                 len(enroll), len(trial), len(key))

        stage = "featurize"
        enroll_audio = {u: read_wav(enroll_root / rel) for u, _, rel in enroll}
        trial_audio = {u: read_wav(trial_root / rel) for u, _, rel in trial}
        enroll_spk = {u: s for u, s, _ in enroll}
        trial_spk = {u: s for u, s, _ in trial}
        orig_enroll = dict(zip(enroll_audio, _map_jobs(
            lambda u: featurize(enroll_audio[u], u).features, list(enroll_audio), plan.jobs)))
        orig_trial = dict(zip(trial_audio, _map_jobs(
            lambda u: featurize(trial_audio[u], u).features, list(trial_audio), plan.jobs)))

        stage = "anonymize"
        anon_trial, anon_enroll = _anonymize_sides(
            plan, enroll_audio, trial_audio, enroll_spk, trial_spk, orig_enroll, orig_trial
        )

        stage = "calibrate"
        cal = _calibrate_on_originals(orig_enroll, orig_trial, key)
        log.info("calibration slope=%.4g offset=%.4g", cal[0], cal[1])

        stage = "score"
        if plan.condition == "unprotected_oo":
            side_enroll, side_trial = orig_enroll, orig_trial
        elif plan.condition == "ignorant_oa":
            side_enroll, side_trial = orig_enroll, anon_trial
        else:
            side_enroll, side_trial = anon_enroll, anon_trial
        utt_scores = _score_pairs(side_enroll, side_trial, key, cal)
        spk_scores = _score_speaker_averaged(side_enroll, enroll_spk, side_trial, key, cal)

        stage = "metrics"
        rows = []
        for mode, scores in (("utt", utt_scores), ("spk", spk_scores)):
            e, _thr = eer(scores)
            rows.append(MetricRow("eer", mode, e))
            rows.append(MetricRow("cllr", mode, cllr(scores)))
            rows.append(MetricRow("cllr_min", mode, cllr_min(scores)))

        stage = "matrices"
        rows.extend(_matrix_rows(orig_trial, anon_trial, trial_spk, cal,
                                 anonymized=plan.anonymizer != "none"))

        stage = "wer"
        if plan.transcripts is not None and plan.hypotheses is not None:
            refs = load_transcripts(plan.transcripts)
            hyps = load_transcripts(plan.hypotheses)
            missing = sorted(set(refs) - set(hyps))
            if missing:
                raise ValueError(f"hypotheses missing for {len(missing)} utterances, e.g. {missing[0]}")
            rate, s, d, i, words = corpus_wer([(refs[u], hyps[u]) for u in refs])
            rows.append(MetricRow("wer", "corpus", rate))

        stage = "report"
        report = Report(
            condition=plan.condition,
            anonymizer=plan.anonymizer,
            rows=rows,
            provenance={
                "config_hash": plan.config_hash(),
                "seed": str(plan.seed),
                "tool_version": __version__,
                "enroll_manifest": str(plan.enroll_manifest),
                "trial_manifest": str(plan.trial_manifest),
                "trial_key": str(plan.trial_key),
            },
        )
        _write_report(report, plan.output_dir, written)
        return report
    except Exception as exc:
        for p in written:
            try:
                p.unlink()
            except OSError:
                pass
        if isinstance(exc, StageError):
            raise
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc


def _anonymize_sides(plan, enroll_audio, trial_audio, enroll_spk, trial_spk,
                     orig_enroll, orig_trial):
    """Anonymized feature vectors for the trial side and (aa only) enroll side."""
    if plan.anonymizer == "none":
        return orig_trial, orig_enroll
    if plan.anonymizer == "mcadams":
        def anon_vec(args):
            utt, audio = args
            return featurize(anonymize_mcadams(audio, plan.mcadams), utt).features

        anon_trial = dict(zip(trial_audio, _map_jobs(
            anon_vec, list(trial_audio.items()), plan.jobs)))
        anon_enroll = orig_enroll
        if plan.condition == "lazy_informed_aa":
            anon_enroll = dict(zip(enroll_audio, _map_jobs(
                anon_vec, list(enroll_audio.items()), plan.jobs)))
        return anon_trial, anon_enroll
    pool = load_embeddings(plan.embed_pool)
    trial_set = EmbeddingSet({u: (trial_spk[u], v) for u, v in orig_trial.items()})
    anon_trial_set = anonymize_embedding_set(trial_set, pool, plan.embed_policy, role="trial")
    anon_trial = {u: anon_trial_set.vector_of(u) for u in orig_trial}
    anon_enroll = orig_enroll
    if plan.condition == "lazy_informed_aa":
        enroll_set = EmbeddingSet({u: (enroll_spk[u], v) for u, v in orig_enroll.items()})
        anon_enroll_set = anonymize_embedding_set(enroll_set, pool, plan.embed_policy, role="enroll")
        anon_enroll = {u: anon_enroll_set.vector_of(u) for u in orig_enroll}
    return anon_trial, anon_enroll


def _calibrate_on_originals(orig_enroll, orig_trial, key):
    trials = []
    for (e, t), label in key.items():
        if e in orig_enroll and t in orig_trial:
            cos = cosine_similarity(orig_enroll[e], orig_trial[t])
            trials.append(Trial(e, t, cos, label))
    return calibrate(ScoreSet(trials))


def _score_pairs(enroll_vecs, trial_vecs, key, cal):
    slope, offset = cal
    trials = []
    for (e, t), label in key.items():
        if e not in enroll_vecs:
            raise ValueError(f"keyed enrollment utterance {e!r} not in the enroll manifest")
        if t not in trial_vecs:
            raise ValueError(f"keyed trial utterance {t!r} not in the trial manifest")
        s = slope * cosine_similarity(enroll_vecs[e], trial_vecs[t]) + offset
        trials.append(Trial(e, t, s, label))
    return ScoreSet(trials)


def _score_speaker_averaged(enroll_vecs, enroll_spk, trial_vecs, key, cal):
    """Average each speaker's enrollment vectors into one model, then score."""
    slope, offset = cal
    models: dict[str, np.ndarray] = {}
    for spk in sorted(set(enroll_spk.values())):
        vecs = [enroll_vecs[u] for u, s in enroll_spk.items() if s == spk]
        models[spk] = np.mean(vecs, axis=0)
    pair_label: dict[tuple[str, str], str] = {}
    for (e, t), label in key.items():
        pair = (enroll_spk[e], t)
        if pair_label.setdefault(pair, label) != label:
            raise ValueError(f"inconsistent labels for speaker pair {pair}")
    trials = [
        Trial(spk, t, slope * cosine_similarity(models[spk], trial_vecs[t]) + offset, label)
        for (spk, t), label in pair_label.items()
    ]
    return ScoreSet(trials)


def _matrix_rows(orig_trial, anon_trial, trial_spk, cal, anonymized):
    """DeID and voice-distinctiveness rows from the oo/oa/aa similarity matrices.

    Without an anonymizer there is no anonymized side, so M_oa and M_aa
    are M_oo itself and the derived metrics are exactly 0.
    """
    slope, offset = cal
    segments: dict[str, list[str]] = {}
    for utt, spk in trial_spk.items():
        segments.setdefault(spk, []).append(utt)
    if len(segments) < 2 or min(len(v) for v in segments.values()) < 2:
        warnings.warn("similarity matrices skipped: need >= 2 speakers with >= 2 trial segments")
        return []
    vecs = {"original": orig_trial, "anon": anon_trial}

    def llr(ids_a, side_a, ids_b, side_b):
        va, vb = vecs[side_a], vecs[side_b]
        return np.array(
            [[slope * cosine_similarity(va[a], vb[b]) + offset for b in ids_b] for a in ids_a]
        )

    m_oo = similarity_matrix(llr, segments, "oo")
    m_oa = similarity_matrix(llr, segments, "oa") if anonymized else m_oo
    m_aa = similarity_matrix(llr, segments, "aa") if anonymized else m_oo
    return [
        MetricRow("deid", "trial", de_identification(m_oa, m_oo)),
        MetricRow("gvd_db", "trial", gain_voice_distinctiveness(m_aa, m_oo)),
        MetricRow("diag_dominance_oo", "trial", diag_dominance(m_oo)),
        MetricRow("diag_dominance_oa", "trial", diag_dominance(m_oa)),
        MetricRow("diag_dominance_aa", "trial", diag_dominance(m_aa)),
    ]


def _write_report(report: Report, output_dir: Path, written: list[Path]) -> None:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    csv_path = output_dir / "report.csv"
    written.append(csv_path)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            writer.writerow([
                REPORT_CSV_VERSION, report.condition, report.anonymizer,
                row.metric, row.mode, f"{row.value:.10g}",
            ])

    jsonl_path = output_dir / "report.jsonl"
    written.append(jsonl_path)
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        header = {"record": "provenance", "condition": report.condition,
                  "anonymizer": report.anonymizer, **report.provenance}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for row in report.rows:
            fh.write(json.dumps(
                {"record": "metric", "metric": row.metric, "mode": row.mode,
                 "value": row.value}, sort_keys=True) + "\n")

    txt_path = output_dir / "report.txt"
    written.append(txt_path)
    lines = [
        f"condition:  {report.condition}",
        f"anonymizer: {report.anonymizer}",
    ]
    lines += [f"{k}: {v}" for k, v in report.provenance.items()]
    lines.append("")
    lines.append(f"{'metric':<20} {'mode':<8} value")
    for row in report.rows:
        lines.append(f"{row.metric:<20} {row.mode:<8} {row.value:.6g}")
    txt_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def format_report(report: Report) -> str:
    lines = [f"condition={report.condition} anonymizer={report.anonymizer}"]
    for row in report.rows:
        lines.append(f"  {row.metric:<20} {row.mode:<8} {row.value:.6g}")
    return "\n".join(lines)
