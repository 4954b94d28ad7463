"""Command-line entry points under the `vpkit` root command."""

import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .audio import FrameConfig, read_wav
from .embeddings import (
    AnonPolicy,
    PldaParams,
    anonymize_embedding_set,
    load_embeddings,
    save_embeddings,
)
from .harness import default_jobs as harness_default_jobs
from .harness import format_report, load_plan, run_plan
from .mcadams import (
    McAdamsConfig,
    anonymize_directory,
    load_anonymization_manifest,
)
from .metrics import privacy, utility
from .corpus import gen_corpus
from .scorer import calibrate, cosine_similarity, featurize


def default_jobs() -> int:
    try:
        return harness_default_jobs()
    except ValueError as exc:
        raise click.ClickException(str(exc))


@click.group()
@click.version_option(version=__version__, prog_name="vpkit")
def main():
    """Voice anonymization and privacy/utility evaluation."""


@main.group()
def anonymize():
    """Anonymize audio or embedding files."""


@anonymize.command("mcadams")
@click.option("--alpha", default=0.8, show_default=True, help="Pole-angle exponent.")
@click.option("--radius-scale", default=1.0, show_default=True, help="Pole-radius contraction in (0, 1].")
@click.option("--order", default=20, show_default=True, help="LPC order.")
@click.option("--frame-ms", default=20.0, show_default=True)
@click.option("--hop-ms", default=10.0, show_default=True)
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--manifest", type=click.Path(exists=True, path_type=Path),
              help="utt_id<TAB>relative_path lines; defaults to every *.wav under --in.")
@click.option("--jobs", default=None, type=int, help="Worker threads (default: VPKIT_JOBS or 1).")
def anonymize_mcadams_cmd(alpha, radius_scale, order, frame_ms, hop_ms, in_path, out_path, manifest, jobs):
    """Pole-shifting anonymization of a WAV file or directory."""
    from .mcadams import anonymize_mcadams as anonymize_buffer
    from .audio import write_wav

    if in_path.is_file():
        audio = read_wav(in_path)
        frame = FrameConfig.for_rate(audio.sample_rate_hz, frame_ms, hop_ms)
        cfg = McAdamsConfig(alpha=alpha, radius_scale=radius_scale, lpc_order=order, frame=frame)
        out = anonymize_buffer(audio, cfg)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(out_path, out)
        click.echo(f"wrote {out_path}")
        return
    if manifest is not None:
        entries = load_anonymization_manifest(manifest)
    else:
        entries = {
            p.stem: str(p.relative_to(in_path))
            for p in sorted(in_path.rglob("*.wav"))
        }
    if not entries:
        raise click.ClickException(f"no input files under {in_path}")
    frame = FrameConfig.for_rate(16000, frame_ms, hop_ms)
    cfg = McAdamsConfig(alpha=alpha, radius_scale=radius_scale, lpc_order=order, frame=frame)
    reports = anonymize_directory(in_path, out_path, cfg, entries, jobs=jobs or default_jobs())
    failed = 0
    for r in reports:
        if r.ok:
            click.echo(
                f"{r.utt_id}: frames={r.frames} flagged={r.flagged_frames} "
                f"pole_clamps={r.pole_clamps} clipped={r.clipped_samples} "
                f"time={r.runtime_s:.2f}s"
            )
        else:
            failed += 1
            click.echo(f"{r.utt_id}: FAILED ({r.error})", err=True)
    click.echo(f"{len(reports) - failed}/{len(reports)} files anonymized")
    if failed:
        sys.exit(1)


@anonymize.command("embed")
@click.option("--pool", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--n", "n_far", default=200, show_default=True, help="Farthest-pool depth.")
@click.option("--n-star", "n_avg", default=100, show_default=True, help="Averaged subset size.")
@click.option("--level", default="per-speaker", show_default=True,
              type=click.Choice(["per-speaker", "per-utterance"]))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--role", default="", help="Key salt, e.g. trial or enroll.")
@click.option("--distance", default="cosine", show_default=True,
              type=click.Choice(["cosine", "plda-simplified"]))
@click.option("--plda-params", type=click.Path(exists=True, path_type=Path),
              help=".npz with mean/within/between, required for plda-simplified.")
def anonymize_embed_cmd(pool, in_path, out_path, n_far, n_avg, level, seed, role, distance, plda_params):
    """Replace embeddings with pseudo-speaker averages from a pool."""
    policy = AnonPolicy(
        n_far=n_far,
        n_avg=n_avg,
        distance=distance.replace("-", "_"),
        level=level.replace("-", "_"),
        seed=seed,
    )
    plda = PldaParams.from_file(plda_params) if plda_params else None
    if policy.distance == "plda_simplified" and plda is None:
        raise click.ClickException("--plda-params is required with --distance plda-simplified")
    pool_set = load_embeddings(pool)
    in_set = load_embeddings(in_path)
    out_set = anonymize_embedding_set(in_set, pool_set, policy, role=role, plda=plda)
    save_embeddings(out_path, out_set)
    click.echo(f"wrote {len(out_set)} pseudo-speaker embeddings to {out_path}")


@main.group()
def score():
    """Produce LLR-scaled score files."""


@score.command("pairs")
@click.option("--audio-dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--trials", required=True, type=click.Path(exists=True, path_type=Path),
              help="Pair list: `enroll_id trial_id [label]` lines.")
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--slope", default=1.0, show_default=True)
@click.option("--offset", default=0.0, show_default=True)
@click.option("--calibrate-on", type=click.Path(exists=True, path_type=Path),
              help="Trial key file; fit slope/offset on these labeled pairs first.")
def score_pairs_cmd(audio_dir, trials, out_path, slope, offset, calibrate_on):
    """Score utterance pairs with the built-in spectral scorer.

    Audio is read from <audio-dir>/<utt_id>.wav.
    """
    pair_list: list[tuple[str, str]] = []
    with open(trials, encoding="utf-8") as fh:
        for line in fh:
            fields = line.split()
            if len(fields) >= 2:
                pair_list.append((fields[0], fields[1]))
    needed = sorted({u for pair in pair_list for u in pair})
    vectors = {}
    for utt in needed:
        wav = audio_dir / f"{utt}.wav"
        if not wav.exists():
            raise click.ClickException(f"missing audio file {wav}")
        vectors[utt] = featurize(read_wav(wav), utt).features
    if calibrate_on:
        key = privacy.load_trial_key(calibrate_on)
        dev = privacy.ScoreSet([
            privacy.Trial(e, t, cosine_similarity(vectors[e], vectors[t]), label)
            for (e, t), label in key.items()
            if e in vectors and t in vectors
        ])
        slope, offset = calibrate(dev)
        click.echo(f"calibrated slope={slope:.6g} offset={offset:.6g}")
    scores = {
        (e, t): slope * cosine_similarity(vectors[e], vectors[t]) + offset
        for e, t in pair_list
    }
    privacy.save_score_file(out_path, scores)
    click.echo(f"wrote {len(scores)} scores to {out_path}")


@main.group()
def metrics():
    """Privacy and utility metrics from score/transcript files."""


def _scoreset_from(scores_path, key_path):
    scores = privacy.load_score_file(scores_path)
    key = privacy.load_trial_key(key_path)
    return privacy.make_scoreset(scores, key)


@metrics.command("eer")
@click.option("--scores", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--key", required=True, type=click.Path(exists=True, path_type=Path))
def metrics_eer(scores, key):
    value, threshold = privacy.eer(_scoreset_from(scores, key))
    click.echo(f"eer={value:.6g} threshold={threshold:.6g}")


@metrics.command("cllr")
@click.option("--scores", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--key", required=True, type=click.Path(exists=True, path_type=Path))
def metrics_cllr(scores, key):
    click.echo(f"cllr={privacy.cllr(_scoreset_from(scores, key)):.6g}")


@metrics.command("cllrmin")
@click.option("--scores", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--key", required=True, type=click.Path(exists=True, path_type=Path))
def metrics_cllrmin(scores, key):
    click.echo(f"cllr_min={privacy.cllr_min(_scoreset_from(scores, key)):.6g}")


@metrics.command("simmatrix")
@click.option("--pair-scores", required=True, type=click.Path(exists=True, path_type=Path),
              help="`seg_a seg_b llr` lines; seg_a is the row side.")
@click.option("--utt2spk", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--cross-side", is_flag=True,
              help="Sides differ (oa-style): keep identical-segment pairs on the diagonal.")
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--heatmap", type=click.Path(path_type=Path), help="Optional PNG export.")
def metrics_simmatrix(pair_scores, utt2spk, cross_side, out_path, heatmap):
    """Build a speaker similarity matrix from pairwise segment LLRs."""
    raw = privacy.load_score_file(pair_scores)
    segments: dict[str, list[str]] = {}
    with open(utt2spk, encoding="utf-8") as fh:
        for line in fh:
            fields = line.split()
            if len(fields) == 2:
                segments.setdefault(fields[1], []).append(fields[0])

    def llr(ids_a, side_a, ids_b, side_b):
        block = np.empty((len(ids_a), len(ids_b)))
        for i, a in enumerate(ids_a):
            for j, b in enumerate(ids_b):
                if (a, b) in raw:
                    block[i, j] = raw[(a, b)]
                elif side_a == side_b and (b, a) in raw:
                    block[i, j] = raw[(b, a)]
                else:
                    raise click.ClickException(f"missing pairwise score for ({a}, {b})")
        return block

    matrix = privacy.similarity_matrix(llr, segments, "oa" if cross_side else "oo")
    privacy.save_matrix_csv(out_path, matrix)
    click.echo(f"wrote {len(matrix.speakers)}x{len(matrix.speakers)} matrix to {out_path}")
    if heatmap:
        privacy.save_matrix_heatmap(heatmap, matrix)
        click.echo(f"wrote heatmap to {heatmap}")


@metrics.command("deid")
@click.option("--m-oa", "m_oa_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--m-oo", "m_oo_path", required=True, type=click.Path(exists=True, path_type=Path))
def metrics_deid(m_oa_path, m_oo_path):
    m_oa = privacy.load_matrix_csv(m_oa_path)
    m_oo = privacy.load_matrix_csv(m_oo_path)
    click.echo(f"deid={privacy.de_identification(m_oa, m_oo):.6g}")


@metrics.command("gvd")
@click.option("--m-aa", "m_aa_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--m-oo", "m_oo_path", required=True, type=click.Path(exists=True, path_type=Path))
def metrics_gvd(m_aa_path, m_oo_path):
    m_aa = privacy.load_matrix_csv(m_aa_path)
    m_oo = privacy.load_matrix_csv(m_oo_path)
    click.echo(f"gvd_db={privacy.gain_voice_distinctiveness(m_aa, m_oo):.6g}")


@metrics.command("wer")
@click.option("--ref", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--hyp", required=True, type=click.Path(exists=True, path_type=Path))
def metrics_wer(ref, hyp):
    refs = utility.load_transcripts(ref)
    hyps = utility.load_transcripts(hyp)
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise click.ClickException(f"hypotheses missing for {missing[:3]} ...")
    rate, s, d, i, words = utility.corpus_wer([(refs[u], hyps[u]) for u in refs])
    click.echo(f"wer={rate:.6g} sub={s} del={d} ins={i} ref_words={words}")


@metrics.command("purity")
@click.option("--trials", required=True, type=click.Path(exists=True, path_type=Path))
def metrics_purity(trials):
    """Clustering purity per trial and averaged; distractors count as assignable speakers."""
    loaded = utility.load_clustering_trials(trials)
    if not loaded:
        raise click.ClickException("no trials in file")
    values = []
    for idx, trial in enumerate(loaded):
        p = utility.clustering_purity(trial)
        values.append(p)
        note = " (distractor assignable)" if trial.has_distractor() else ""
        click.echo(f"trial {idx}: purity={p:.6g}{note}")
    click.echo(f"mean purity={np.mean(values):.6g} over {len(values)} trials")


@metrics.command("f1")
@click.option("--trials", required=True, type=click.Path(exists=True, path_type=Path))
def metrics_f1(trials):
    loaded = utility.load_clustering_trials(trials)
    if not loaded:
        raise click.ClickException("no trials in file")
    values = []
    for idx, trial in enumerate(loaded):
        f = utility.clustering_f1(trial)
        values.append(f)
        click.echo(f"trial {idx}: f1={f:.6g}")
    click.echo(f"mean f1={np.mean(values):.6g} over {len(values)} trials")


@main.command("run")
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True, path_type=Path))
def run_cmd(plan_path):
    """Run a full evaluation plan and print the report."""
    plan = load_plan(plan_path)
    report = run_plan(plan)
    click.echo(format_report(report))
    click.echo(f"reports written to {plan.output_dir}")


@main.command("gen-corpus")
@click.option("--speakers", default=8, show_default=True, type=int)
@click.option("--utterances", default=4, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--pool-speakers", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def gen_corpus_cmd(speakers, utterances, seed, pool_speakers, out_dir):
    """Generate a synthetic evaluation corpus with manifests and transcripts."""
    paths = gen_corpus(out_dir, speakers=speakers, utterances=utterances, seed=seed,
                       pool_speakers=pool_speakers)
    click.echo(f"corpus written under {paths.root}")
    click.echo(f"enroll manifest: {paths.enroll_manifest}")
    click.echo(f"trial manifest:  {paths.trial_manifest}")
    click.echo(f"trial key:       {paths.trial_key}")
    if paths.pool_embeddings:
        click.echo(f"pool embeddings: {paths.pool_embeddings}")


if __name__ == "__main__":
    main()
