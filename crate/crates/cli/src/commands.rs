use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use capweight::formats::{
    load_logprob_dump, load_noisy_corpus, load_token_dump, read_jsonl_file, write_jsonl,
    write_logprob_dump, AlignmentRecord, NoisyCaptionRecord, ScoreRecord, SidecarRecord,
    TokenDumpRecord,
};
use capweight::reweight::{check_sigma, flagged_tokens};
use capweight::{
    build_alignment, compute_weights, corpus_term_stats, detection_metrics, differential_scores,
    filter_noisy_tokens, generate_template_corpus, hal_rate, inject_hallucinations, project_scores,
    score_statistics, select_threshold, synthetic_provider, AlignmentMap, Caption, GreedyTokenizer,
    HallucinationJudgment as Judgment, NoisyCaption, Population, ScoreKind, Series, SpanTokenizer,
    TemplatedCaption, Threshold, Tokenization, TruncatedNormal, WhitespaceTokenizer, WithSpecials,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FileConfig, PipelineConfig};
use crate::manifest::RunManifest;
use crate::{Cli, CliError, CliResult, Command};

/// Keeps the exit code of a core error while naming the caption.
fn at(id: &str) -> impl Fn(capweight::Error) -> CliError + '_ {
    move |e| {
        let mut c = CliError::from(e);
        c.error = c.error.context(format!("caption {id}"));
        c
    }
}

fn open_inputs(m: &mut RunManifest, paths: &[&Path]) -> CliResult {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::consistency(anyhow!(
                "input {} does not exist",
                p.display()
            )));
        }
        m.input(p)?;
    }
    Ok(())
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_records<T: Serialize>(path: &Path, records: &[T]) -> CliResult {
    write_jsonl(create(path)?, records)?;
    Ok(())
}

fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> CliResult
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(CliError::internal)?;
    for row in rows {
        w.write_record(row).map_err(CliError::internal)?;
    }
    w.into_inner()
        .map_err(|e| CliError::internal(anyhow!("{e}")))?
        .flush()?;
    Ok(())
}

/// `dir/name.csv` -> `dir/name.summary.csv`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

/// Reports a line-numbered diagnostic for schema errors before propagating.
fn loaded<T>(path: &Path, r: capweight::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        if e.is_schema() {
            eprintln!("{}: {e}", path.display());
        }
        let mut c = CliError::from(e);
        if matches!(c.code, 1) {
            c.code = 3;
        }
        c.error = c.error.context(format!("reading {}", path.display()));
        c
    })
}

fn load_scores(path: &Path) -> CliResult<Vec<(String, Series)>> {
    let recs = loaded(path, read_jsonl_file::<ScoreRecord>(path))?;
    recs.into_iter()
        .map(|(line, r)| Ok((r.tokenizer.clone(), loaded(path, r.to_series(line))?)))
        .collect()
}

fn logprob_series(path: &Path, kind: ScoreKind) -> CliResult<Vec<(String, Series)>> {
    let recs = loaded(path, load_logprob_dump(path))?;
    recs.par_iter()
        .map(|r| {
            let s = match kind {
                ScoreKind::Differential => differential_scores(r),
                k => r.series(k),
            }
            .map_err(at(&r.caption_id))?;
            Ok((r.tokenizer.clone(), s))
        })
        .collect()
}

fn check_unique<'a>(
    what: &str,
    ids: impl IntoIterator<Item = &'a str>,
) -> CliResult<BTreeSet<&'a str>> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(CliError::consistency(anyhow!(
                "{what}: duplicate caption_id {id}"
            )));
        }
    }
    Ok(seen)
}

fn same_caption_set<'a>(
    a: (&str, impl IntoIterator<Item = &'a str>),
    b: (&str, impl IntoIterator<Item = &'a str>),
) -> CliResult {
    let sa = check_unique(a.0, a.1)?;
    let sb = check_unique(b.0, b.1)?;
    if sa != sb {
        let only_a = sa.difference(&sb).count();
        let only_b = sb.difference(&sa).count();
        return Err(CliError::consistency(anyhow!(
            "caption sets differ: {only_a} only in {}, {only_b} only in {}",
            a.0,
            b.0
        )));
    }
    Ok(())
}

/// One threshold per caption: the corpus quantile, or the quantile of the
/// batch the caption falls in.
fn thresholds(series: &[Series], cfg: &PipelineConfig) -> CliResult<Vec<Threshold>> {
    let pick = |chunk: &[Series]| -> CliResult<Threshold> {
        let pool: Vec<f64> = chunk.iter().flat_map(|s| s.scored()).collect();
        Ok(select_threshold(
            &pool,
            cfg.sigma,
            cfg.population,
            cfg.score_kind,
        )?)
    };
    match cfg.population {
        Population::Corpus => Ok(vec![pick(series)?; series.len()]),
        Population::Batch => {
            if cfg.batch_size == 0 {
                return Err(CliError::schema(anyhow!("batch size must be positive")));
            }
            let mut out = Vec::with_capacity(series.len());
            for chunk in series.chunks(cfg.batch_size) {
                let t = pick(chunk)?;
                out.extend(std::iter::repeat_n(t, chunk.len()));
            }
            Ok(out)
        }
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn run(cli: Cli) -> CliResult {
    let file = match &cli.config {
        Some(p) if !p.is_file() => {
            return Err(CliError::consistency(anyhow!(
                "config {} does not exist",
                p.display()
            )))
        }
        Some(p) => FileConfig::load(p).map_err(CliError::schema)?,
        None => FileConfig::default(),
    };
    let cfg = PipelineConfig::resolve(file, cli.command.overrides(cli.seed));
    check_sigma(cfg.sigma)?;
    let mut m = RunManifest::new(cli.command.name(), cfg.clone());
    if let Some(p) = &cli.config {
        m.input(p)?;
    }
    let out = match cli.command {
        Command::Tokenize {
            captions,
            tokenizer,
            vocab,
            name,
            bos,
            eos,
            out,
        } => {
            tokenize(
                &mut m,
                &captions,
                &tokenizer,
                vocab.as_deref(),
                name,
                bos,
                eos,
                &out,
            )?;
            out
        }
        Command::Align {
            source,
            target,
            out,
        } => {
            align(&mut m, &source, &target, &out)?;
            out
        }
        Command::Score { logprobs, out, .. } => {
            open_inputs(&mut m, &[&logprobs])?;
            let series = logprob_series(&logprobs, cfg.score_kind)?;
            let recs: Vec<ScoreRecord> =
                series.iter().map(|(t, s)| ScoreRecord::new(t, s)).collect();
            write_records(&out, &recs)?;
            m.stage("score", recs.len(), 0);
            out
        }
        Command::Project {
            scores,
            alignment,
            out,
        } => {
            project(&mut m, &scores, &alignment, &out)?;
            out
        }
        Command::Weight {
            logprobs,
            alignment,
            out,
            ..
        } => {
            weight(&mut m, &cfg, &logprobs, alignment.as_deref(), &out)?;
            out
        }
        Command::Filter {
            tokens,
            scores,
            out,
            ..
        } => {
            filter(&mut m, &cfg, &tokens, &scores, &out)?;
            out
        }
        Command::Template { n, tally, out } => {
            let corpus = generate_template_corpus(n, cfg.seed);
            write_records(&out, &corpus.captions)?;
            m.stage("template", corpus.captions.len(), 0);
            if let Some(t) = tally {
                write_csv(
                    &t,
                    &["word", "count"],
                    corpus
                        .slot_word_tally
                        .iter()
                        .map(|(w, c)| [w.clone(), c.to_string()]),
                )?;
                m.output(&t)?;
            }
            out
        }
        Command::Inject { corpus, out, .. } => {
            open_inputs(&mut m, &[&corpus])?;
            let recs = loaded(&corpus, read_jsonl_file::<TemplatedCaption>(&corpus))?;
            let captions: Vec<TemplatedCaption> = recs.into_iter().map(|(_, c)| c).collect();
            let cats: BTreeSet<_> = cfg.categories.iter().copied().collect();
            let (noisy, stats) = inject_hallucinations(&captions, cfg.rate, &cats, cfg.seed)?;
            let recs: Vec<NoisyCaptionRecord> = noisy.iter().map(Into::into).collect();
            write_records(&out, &recs)?;
            m.stage("inject", recs.len(), 0);
            m.stage("inject.eligible_slots", stats.eligible_slots, 0);
            m.stage("inject.substituted_slots", stats.substituted_slots, 0);
            m.stage("inject.noisy_tokens", stats.noisy_tokens, 0);
            m.stage("inject.total_tokens", stats.total_tokens, 0);
            out
        }
        Command::Synth { corpus, out, .. } => {
            open_inputs(&mut m, &[&corpus])?;
            let noisy = loaded(&corpus, load_noisy_corpus(&corpus))?;
            let clean = TruncatedNormal::new(cfg.clean_mean, cfg.clean_std)?;
            let noisy_dist = TruncatedNormal::new(cfg.noisy_mean, cfg.noisy_std)?;
            let recs = synthetic_provider(&noisy, clean, noisy_dist, cfg.seed)?;
            write_logprob_dump(create(&out)?, &recs)?;
            m.stage("synth", recs.len(), 0);
            out
        }
        Command::Evaluate {
            scores,
            logprobs,
            truth,
            out,
            ..
        } => {
            evaluate(
                &mut m,
                &cfg,
                scores.as_deref(),
                logprobs.as_deref(),
                &truth,
                &out,
            )?;
            out
        }
        Command::Stats {
            scores,
            logprobs,
            truth,
            out,
            ..
        } => {
            stats(
                &mut m,
                &cfg,
                scores.as_deref(),
                logprobs.as_deref(),
                truth.as_deref(),
                &out,
            )?;
            out
        }
        Command::Halrate { judgments, out } => {
            halrate(&mut m, &judgments, &out)?;
            out
        }
        Command::Terms {
            captions,
            terms,
            out,
        } => {
            open_inputs(&mut m, &[&captions])?;
            let caps = loaded(&captions, read_jsonl_file::<Caption>(&captions))?;
            let counts = corpus_term_stats(caps.iter().map(|(_, c)| c.text.as_str()), &terms);
            write_csv(
                &out,
                &["term", "count"],
                terms
                    .iter()
                    .map(|t| [t.clone(), counts[t.as_str()].to_string()]),
            )?;
            m.stage("terms", caps.len(), 0);
            out
        }
    };
    m.output(&out)?;
    m.write(&out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn tokenize(
    m: &mut RunManifest,
    captions: &Path,
    kind: &str,
    vocab: Option<&Path>,
    name: Option<String>,
    bos: Option<u32>,
    eos: Option<u32>,
    out: &Path,
) -> CliResult {
    let mut inputs = vec![captions];
    inputs.extend(vocab);
    open_inputs(m, &inputs)?;
    let caps = loaded(captions, read_jsonl_file::<Caption>(captions))?;
    let inner: Box<dyn SpanTokenizer> = match kind {
        "whitespace" => Box::new(WhitespaceTokenizer),
        "greedy" => {
            let path =
                vocab.ok_or_else(|| CliError::schema(anyhow!("greedy tokenizer needs --vocab")))?;
            let text = std::fs::read_to_string(path)?;
            let name = name.clone().unwrap_or_else(|| "greedy".into());
            Box::new(GreedyTokenizer::from_vocab_text(name, &text)?)
        }
        other => return Err(CliError::schema(anyhow!("unknown tokenizer {other:?}"))),
    };
    let tok = WithSpecials::new(inner, bos, eos);
    let tag = name.unwrap_or_else(|| tok.name().to_owned());
    let results: Vec<CliResult<TokenDumpRecord>> = caps
        .par_iter()
        .map(|(line, c)| {
            let t = tok.tokenize(c).map_err(|e| {
                eprintln!("{}:{line}: caption {}: {e}", captions.display(), c.id);
                at(&c.id)(e)
            })?;
            let mut rec = TokenDumpRecord::from_tokenization(&t);
            rec.tokenizer = tag.clone();
            Ok(rec)
        })
        .collect();
    let recs = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    write_records(out, &recs)?;
    m.stage("tokenize", recs.len(), 0);
    Ok(())
}

fn align(m: &mut RunManifest, source: &Path, target: &Path, out: &Path) -> CliResult {
    open_inputs(m, &[source, target])?;
    let src = loaded(source, load_token_dump(source))?;
    let tgt = loaded(target, load_token_dump(target))?;
    same_caption_set(
        ("source", src.iter().map(Tokenization::caption_id)),
        ("target", tgt.iter().map(Tokenization::caption_id)),
    )?;
    let by_id: HashMap<&str, &Tokenization> = tgt.iter().map(|t| (t.caption_id(), t)).collect();
    let recs = src
        .par_iter()
        .map(|s| {
            let t = by_id[s.caption_id()];
            let map = build_alignment(s, t).map_err(at(s.caption_id()))?;
            Ok(AlignmentRecord::new(s, t, &map))
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_records(out, &recs)?;
    m.stage("align", recs.len(), 0);
    Ok(())
}

fn load_alignments(path: &Path) -> CliResult<Vec<(AlignmentRecord, AlignmentMap)>> {
    let recs = loaded(path, read_jsonl_file::<AlignmentRecord>(path))?;
    recs.into_iter()
        .map(|(line, r)| {
            let map = loaded(path, r.to_map(line))?;
            Ok((r, map))
        })
        .collect()
}

/// Projects `series` (keyed by caption) onto the source side of each
/// alignment, in alignment order.
fn project_all(
    series: &[(String, Series)],
    aligns: &[(AlignmentRecord, AlignmentMap)],
) -> CliResult<Vec<(String, Series)>> {
    same_caption_set(
        ("scores", series.iter().map(|(_, s)| s.caption_id())),
        (
            "alignment",
            aligns.iter().map(|(r, _)| r.caption_id.as_str()),
        ),
    )?;
    let by_id: HashMap<&str, &(String, Series)> =
        series.iter().map(|p| (p.1.caption_id(), p)).collect();
    aligns
        .par_iter()
        .map(|(r, map)| {
            let (tokenizer, s) = by_id[r.caption_id.as_str()];
            if *tokenizer != r.target_tokenizer {
                return Err(CliError::consistency(anyhow!(
                    "caption {}: scores are over {tokenizer:?} but the alignment targets {:?}",
                    r.caption_id,
                    r.target_tokenizer
                )));
            }
            let p = project_scores(s, map).map_err(at(&r.caption_id))?;
            Ok((r.source_tokenizer.clone(), p))
        })
        .collect()
}

fn project(m: &mut RunManifest, scores: &Path, alignment: &Path, out: &Path) -> CliResult {
    open_inputs(m, &[scores, alignment])?;
    let series = load_scores(scores)?;
    let aligns = load_alignments(alignment)?;
    let projected = project_all(&series, &aligns)?;
    let recs: Vec<ScoreRecord> = projected
        .iter()
        .map(|(t, s)| ScoreRecord::new(t, s))
        .collect();
    write_records(out, &recs)?;
    m.stage("project", recs.len(), 0);
    Ok(())
}

fn weight(
    m: &mut RunManifest,
    cfg: &PipelineConfig,
    logprobs: &Path,
    alignment: Option<&Path>,
    out: &Path,
) -> CliResult {
    let mut inputs = vec![logprobs];
    inputs.extend(alignment);
    open_inputs(m, &inputs)?;
    let mut series = logprob_series(logprobs, cfg.score_kind)?;
    m.stage("score", series.len(), 0);
    if let Some(a) = alignment {
        let aligns = load_alignments(a)?;
        series = project_all(&series, &aligns)?;
        m.stage("project", series.len(), 0);
    }
    let only: Vec<Series> = series.iter().map(|(_, s)| s.clone()).collect();
    let ts = thresholds(&only, cfg)?;
    let recs: Vec<SidecarRecord> = series
        .par_iter()
        .zip(&ts)
        .map(|((tok, s), t)| SidecarRecord::new(tok, t, &compute_weights(s, t)))
        .collect();
    write_records(out, &recs)?;
    m.stage("weight", recs.len(), 0);
    Ok(())
}

fn filter(
    m: &mut RunManifest,
    cfg: &PipelineConfig,
    tokens: &Path,
    scores: &Path,
    out: &Path,
) -> CliResult {
    open_inputs(m, &[tokens, scores])?;
    let toks = loaded(tokens, load_token_dump(tokens))?;
    let series = load_scores(scores)?;
    same_caption_set(
        ("tokens", toks.iter().map(Tokenization::caption_id)),
        ("scores", series.iter().map(|(_, s)| s.caption_id())),
    )?;
    let by_id: HashMap<&str, &Series> = series.iter().map(|(_, s)| (s.caption_id(), s)).collect();
    let ordered: Vec<Series> = toks.iter().map(|t| by_id[t.caption_id()].clone()).collect();
    let ts = thresholds(&ordered, cfg)?;
    let results: Vec<CliResult<Option<Caption>>> = toks
        .par_iter()
        .zip(&ordered)
        .zip(&ts)
        .map(|((tok, s), t)| match filter_noisy_tokens(tok, s, t) {
            Ok(c) => Ok(Some(c)),
            Err(capweight::Error::AllRemoved(id)) => {
                eprintln!("caption {id}: every scored token is flagged; caption dropped");
                Ok(None)
            }
            Err(e) => Err(at(tok.caption_id())(e)),
        })
        .collect();
    let kept: Vec<Option<Caption>> = results.into_iter().collect::<CliResult<_>>()?;
    let dropped = kept.iter().filter(|c| c.is_none()).count();
    let kept: Vec<Caption> = kept.into_iter().flatten().collect();
    let flagged: usize = ordered
        .iter()
        .zip(&ts)
        .map(|(s, t)| flagged_tokens(s, t).len())
        .sum();
    write_records(out, &kept)?;
    m.stage("filter.flagged_tokens", flagged, 0);
    m.stage("filter", kept.len(), dropped);
    Ok(())
}

/// Score series from either a score file or a log-prob dump.
fn input_series(
    m: &mut RunManifest,
    cfg: &PipelineConfig,
    scores: Option<&Path>,
    logprobs: Option<&Path>,
) -> CliResult<Vec<Series>> {
    let series = match (scores, logprobs) {
        (Some(p), None) => {
            open_inputs(m, &[p])?;
            load_scores(p)?
        }
        (None, Some(p)) => {
            open_inputs(m, &[p])?;
            logprob_series(p, cfg.score_kind)?
        }
        _ => {
            return Err(CliError::schema(anyhow!(
                "exactly one of --scores and --logprobs is required"
            )))
        }
    };
    Ok(series.into_iter().map(|(_, s)| s).collect())
}

/// Reorders `truth` to follow `series`.
fn truth_for(series: &[Series], path: &Path) -> CliResult<Vec<NoisyCaption>> {
    let truth = loaded(path, load_noisy_corpus(path))?;
    same_caption_set(
        ("scores", series.iter().map(Series::caption_id)),
        ("truth", truth.iter().map(|t| t.caption.id.as_str())),
    )?;
    let mut by_id: HashMap<String, NoisyCaption> = truth
        .into_iter()
        .map(|t| (t.caption.id.clone(), t))
        .collect();
    Ok(series
        .iter()
        .map(|s| {
            by_id
                .remove(s.caption_id())
                .expect("caption sets checked equal")
        })
        .collect())
}

fn evaluate(
    m: &mut RunManifest,
    cfg: &PipelineConfig,
    scores: Option<&Path>,
    logprobs: Option<&Path>,
    truth: &Path,
    out: &Path,
) -> CliResult {
    let series = input_series(m, cfg, scores, logprobs)?;
    open_inputs(m, &[truth])?;
    let truth = truth_for(&series, truth)?;
    for s in &cfg.sigmas {
        check_sigma(*s)?;
    }
    let report = detection_metrics(&series, &truth, &cfg.sigmas)?;
    write_csv(
        out,
        &["threshold", "precision", "recall", "tp", "fp", "fn"],
        report.rows.iter().map(|r| {
            [
                fmt_f64(r.threshold),
                fmt_f64(r.precision),
                fmt_f64(r.recall),
                r.tp.to_string(),
                r.fp.to_string(),
                r.fn_.to_string(),
            ]
        }),
    )?;
    m.stage("evaluate", series.len(), 0);
    Ok(())
}

fn stats(
    m: &mut RunManifest,
    cfg: &PipelineConfig,
    scores: Option<&Path>,
    logprobs: Option<&Path>,
    truth: Option<&Path>,
    out: &Path,
) -> CliResult {
    let series = input_series(m, cfg, scores, logprobs)?;
    let masks = match truth {
        Some(t) => {
            open_inputs(m, &[t])?;
            let truth = truth_for(&series, t)?;
            for (s, t) in series.iter().zip(&truth) {
                if s.len() != t.noise_mask.len() {
                    return Err(CliError::consistency(anyhow!(
                        "caption {}: {} scores for {} mask entries",
                        t.caption.id,
                        s.len(),
                        t.noise_mask.len()
                    )));
                }
            }
            Some(truth.into_iter().map(|t| t.noise_mask).collect::<Vec<_>>())
        }
        None => None,
    };
    let report = score_statistics(&series, masks.as_deref(), cfg.bins)?;
    write_csv(
        out,
        &["bin_lo", "bin_hi", "count_all", "count_noisy"],
        (0..report.counts_all.len()).map(|b| {
            [
                fmt_f64(report.bin_edges[b]),
                fmt_f64(report.bin_edges[b + 1]),
                report.counts_all[b].to_string(),
                report
                    .counts_noisy
                    .get(b)
                    .map(u64::to_string)
                    .unwrap_or_default(),
            ]
        }),
    )?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    let summary = summary_path(out);
    write_csv(
        &summary,
        &["kind", "mean_all", "mean_noisy", "mean_shift", "ks"],
        [[
            report.kind.to_string(),
            fmt_f64(report.mean_all),
            opt(report.mean_noisy),
            opt(report.separation.map(|s| s.mean_shift)),
            opt(report.separation.map(|s| s.ks)),
        ]],
    )?;
    m.output(&summary)?;
    m.stage("stats", series.len(), 0);
    Ok(())
}

fn halrate(m: &mut RunManifest, judgments: &Path, out: &Path) -> CliResult {
    open_inputs(m, &[judgments])?;
    let recs = loaded(judgments, read_jsonl_file::<Judgment>(judgments))?;
    let js: Vec<Judgment> = recs.into_iter().map(|(_, j)| j).collect();
    let report = hal_rate::<f64>(&js)?;
    write_csv(
        out,
        &["caption_id", "num_objects", "hal_rate"],
        report.per_caption.iter().map(|c| {
            [
                c.caption_id.clone(),
                c.num_objects.to_string(),
                fmt_f64(c.rate),
            ]
        }),
    )?;
    let summary = summary_path(out);
    write_csv(
        &summary,
        &["captions", "mean_hal_rate", "mean_num_obj"],
        [[
            report.per_caption.len().to_string(),
            fmt_f64(report.corpus_mean_rate),
            fmt_f64(report.corpus_mean_num_obj),
        ]],
    )?;
    m.output(&summary)?;
    m.stage("halrate", js.len(), 0);
    Ok(())
}
