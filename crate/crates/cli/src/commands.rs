use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use session_coder::baseline::{baseline_crossval, fit_baseline, session_documents, svm_params, DEFAULT_K};
use session_coder::config::RunConfig;
use session_coder::data::{
    build_dataset, embed_utterances, generate_synthetic, load_embeddings, load_sessions, load_vocab,
    merge_turns, save_embeddings, save_sessions, save_vocab, Dataset, EmbeddedSession,
    MetadataVocab, Session, SyntheticSpec,
};
use session_coder::evaluation::{
    aggregate_saliency, carve_validation, config_echo, cross_validate, paired_bootstrap,
    run_ablation, write_saliency_csv, BootstrapResult, EvalReport, SaliencyCurve,
};
use session_coder::model::{load_model, save_model};
use session_coder::seeds;
use session_coder::training::train as train_model;
use session_coder::{Error, Result};

use crate::manifest::Recorder;
use crate::{Common, Provider, Toggle};

pub const THREADS_ENV: &str = "SESSION_CODER_THREADS";

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

/// Defaults, then the config file (paths relative to it), then flags, then
/// the thread cap from the environment.
pub fn resolve_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let mut cfg = RunConfig::load(path)?;
            let base = path.parent().unwrap_or(Path::new(""));
            rebase(base, &mut cfg.transcripts);
            rebase(base, &mut cfg.embeddings);
            rebase(base, &mut cfg.vocab);
            rebase(base, &mut cfg.out_dir);
            cfg
        }
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(r) = c.role {
        cfg.role_filter = r;
    }
    if let Some(m) = c.mode {
        cfg.mode = m;
    }
    if let Some(t) = c.metadata {
        cfg.metadata_enabled = t == Toggle::On;
    }
    if let Some(n) = c.parallel_folds {
        cfg.parallel_folds = n;
    }
    for (flag, slot) in [
        (&c.transcripts, &mut cfg.transcripts),
        (&c.embeddings, &mut cfg.embeddings),
        (&c.vocab, &mut cfg.vocab),
        (&c.out, &mut cfg.out_dir),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let cap: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        if cap == 0 {
            return Err(Error::Config(format!("{THREADS_ENV} must be at least 1")));
        }
        cfg.parallel_folds = cfg.parallel_folds.min(cap);
    }
    cfg.parallel_folds = cfg.parallel_folds.max(1);
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg_out: Option<&PathBuf>) -> Result<PathBuf> {
    let dir = cfg_out.cloned().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    let p = path
        .as_ref()
        .ok_or_else(|| Error::Config(format!("no {what} file given (--{what} or config `{what}`)")))?;
    if !p.is_file() {
        return Err(Error::Config(format!("{what} file `{}` does not exist", p.display())));
    }
    Ok(p)
}

fn write_json<T: Serialize>(rec: &mut Recorder, path: PathBuf, value: &T) -> Result<()> {
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    rec.output(&path);
    Ok(())
}

fn config_value(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

struct Inputs {
    sessions: Vec<Session>,
    embeddings: BTreeMap<String, EmbeddedSession>,
    vocab: MetadataVocab,
}

fn load_inputs(cfg: &RunConfig, rec: &mut Recorder) -> Result<Inputs> {
    let transcripts = required(&cfg.transcripts, "transcripts")?;
    let embeddings = required(&cfg.embeddings, "embeddings")?;
    let vocab_path = match &cfg.vocab {
        Some(_) => Some(required(&cfg.vocab, "vocab")?),
        None => None,
    };
    rec.input(transcripts)?;
    rec.input(embeddings)?;
    let vocab = match vocab_path {
        Some(p) => {
            rec.input(p)?;
            load_vocab(p)?
        }
        None => MetadataVocab::default(),
    };
    Ok(Inputs {
        sessions: load_sessions(transcripts)?,
        embeddings: load_embeddings(embeddings)?,
        vocab,
    })
}

fn dataset(cfg: &RunConfig, inputs: &Inputs) -> Result<Dataset> {
    build_dataset(&inputs.sessions, &inputs.embeddings, &inputs.vocab, cfg.dataset_options())
}

pub fn synth(spec_path: Option<PathBuf>, seed: Option<u64>, out: Option<PathBuf>) -> Result<String> {
    let mut rec = Recorder::new("synth");
    let mut spec = match &spec_path {
        Some(p) => {
            rec.input(p)?;
            serde_json::from_str::<SyntheticSpec>(&fs::read_to_string(p)?)
                .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let data = generate_synthetic(&spec)?;
    let dir = out_dir(out.as_ref())?;
    let transcripts = dir.join("transcripts.jsonl");
    let embeddings = dir.join("embeddings.jsonl");
    let vocab = dir.join("vocab.json");
    save_sessions(&transcripts, &data.sessions)?;
    save_embeddings(&embeddings, &data.embeddings)?;
    save_vocab(&vocab, &data.vocab)?;
    for p in [&transcripts, &embeddings, &vocab] {
        rec.output(p);
    }
    write_json(&mut rec, dir.join("spec.json"), &spec)?;
    let run = serde_json::json!({
        "transcripts": "transcripts.jsonl",
        "embeddings": "embeddings.jsonl",
        "vocab": "vocab.json",
    });
    write_json(&mut rec, dir.join("config.json"), &run)?;
    let spec_value = serde_json::to_value(&spec)?;
    rec.finish(&dir, spec.seed, spec_value)?;
    let positives = data.sessions.iter().filter(|s| s.labels.label() == 1).count();
    Ok(format!(
        "synth: {} sessions, {} therapists, {} competent; written to {}",
        data.sessions.len(),
        spec.n_therapists,
        positives,
        dir.display()
    ))
}

pub fn embed(c: &Common, provider: Provider, source: Option<PathBuf>, dim: Option<usize>) -> Result<String> {
    let cfg = resolve_config(c)?;
    let mut rec = Recorder::new("embed");
    let transcripts = required(&cfg.transcripts, "transcripts")?;
    rec.input(transcripts)?;
    let mut sessions = load_sessions(transcripts)?;
    sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let mut out = Vec::with_capacity(sessions.len());
    match provider {
        Provider::Hash => {
            let d = dim.unwrap_or(cfg.embedding_dim);
            if d == 0 {
                return Err(Error::Config("embedding dimension must be positive".into()));
            }
            for s in &sessions {
                let merged = merge_turns(&s.utterances, cfg.merge_gap_s);
                let kept: Vec<_> = merged
                    .iter()
                    .filter(|u| cfg.role_filter.keeps(u.role))
                    .cloned()
                    .collect();
                // a session with nothing retained is embedded in full; the
                // dataset builder excludes it either way
                let rows = if kept.is_empty() { merged } else { kept };
                out.push(embed_utterances(&s.session_id, &rows, d));
            }
        }
        Provider::File => {
            let src = required(&source, "source")?;
            rec.input(src)?;
            let mut table = load_embeddings(src)?;
            let missing: Vec<String> = sessions
                .iter()
                .filter(|s| !table.contains_key(&s.session_id))
                .map(|s| s.session_id.clone())
                .collect();
            if !missing.is_empty() {
                return Err(Error::MissingEmbedding(missing));
            }
            for s in &sessions {
                let e = table.remove(&s.session_id).expect("checked above");
                let merged = merge_turns(&s.utterances, cfg.merge_gap_s);
                let kept = merged.iter().filter(|u| cfg.role_filter.keeps(u.role)).count();
                if e.rows() != merged.len() && e.rows() != kept {
                    return Err(Error::Validation(format!(
                        "session `{}` has {} embedding rows but {} merged turns ({kept} retained)",
                        s.session_id,
                        e.rows(),
                        merged.len()
                    )));
                }
                out.push(e);
            }
        }
    }
    let dir = out_dir(cfg.out_dir.as_ref())?;
    let path = dir.join("embeddings.jsonl");
    save_embeddings(&path, &out)?;
    rec.output(&path);
    rec.finish(&dir, cfg.seed, config_value(&cfg))?;
    Ok(format!(
        "embed: {} sessions, dimension {}, written to {}",
        out.len(),
        out.first().map_or(0, |e| e.dim()),
        path.display()
    ))
}

pub fn train(c: &Common) -> Result<String> {
    let cfg = resolve_config(c)?;
    let mut rec = Recorder::new("train");
    let inputs = load_inputs(&cfg, &mut rec)?;
    let data = dataset(&cfg, &inputs)?;
    let therapists: Vec<&str> = data.examples.iter().map(|e| e.therapist_id.as_str()).collect();
    let all: Vec<usize> = (0..data.len()).collect();
    let (tr, va) = carve_validation(
        &all,
        &therapists,
        cfg.validation_fraction,
        seeds::derive(cfg.seed, seeds::VALIDATION),
    )?;
    let (model, history) = train_model(
        &data.subset(&tr),
        &data.subset(&va),
        cfg.model_config(data.dim, data.meta_width),
        &cfg.train_config(0),
    )?;
    let dir = out_dir(cfg.out_dir.as_ref())?;
    let model_path = dir.join("model.json");
    save_model(&model, &model_path)?;
    rec.output(&model_path);
    write_json(&mut rec, dir.join("history.json"), &history)?;
    rec.finish(&dir, cfg.seed, config_echo(&cfg, &data))?;
    Ok(format!(
        "train: {} training and {} validation sessions; best epoch {} of {} (validation loss {:.6}); model at {}",
        tr.len(),
        va.len(),
        history.best_epoch,
        history.stopped_epoch,
        history.best_val_loss(),
        model_path.display()
    ))
}

fn report_summary(cmd: &str, report: &EvalReport) -> String {
    let mut s = format!("{cmd}: {} macro-F1 {:.4}", report.system, report.macro_f1);
    let c = report.confusion;
    let _ = write!(s, " (tn {} fp {} fn {} tp {})", c.tn, c.fp, c.fn_, c.tp);
    for f in &report.folds {
        let _ = write!(s, "\n  fold {:>2}: {} test sessions, macro-F1 {:.4}", f.fold, f.n_test, f.macro_f1);
    }
    s
}

fn write_csv(rec: &mut Recorder, path: PathBuf, curves: &[SaliencyCurve]) -> Result<()> {
    let mut buf = Vec::new();
    write_saliency_csv(&mut buf, curves)?;
    fs::write(&path, buf)?;
    rec.output(&path);
    Ok(())
}

pub fn crossval(c: &Common) -> Result<String> {
    let cfg = resolve_config(c)?;
    let mut rec = Recorder::new("crossval");
    let inputs = load_inputs(&cfg, &mut rec)?;
    let data = dataset(&cfg, &inputs)?;
    let outcome = cross_validate(&data, &cfg)?;
    let dir = out_dir(cfg.out_dir.as_ref())?;
    let path = dir.join("report.json");
    outcome.report.save(&path)?;
    rec.output(&path);
    write_csv(&mut rec, dir.join("saliency.csv"), &outcome.saliency)?;
    rec.finish(&dir, cfg.seed, config_echo(&cfg, &data))?;
    Ok(report_summary("crossval", &outcome.report) + &format!("\nreport at {}", path.display()))
}

pub fn baseline(c: &Common) -> Result<String> {
    let cfg = resolve_config(c)?;
    let mut rec = Recorder::new("baseline");
    let transcripts = required(&cfg.transcripts, "transcripts")?;
    rec.input(transcripts)?;
    let sessions = load_sessions(transcripts)?;
    let (docs, _excluded) = session_documents(&sessions, cfg.role_filter, cfg.merge_gap_s);
    let report = baseline_crossval(&docs, &cfg)?;
    // the deployable model sees every session; its SVM stream sits after the folds
    let all: Vec<_> = docs.iter().collect();
    let model = fit_baseline(&all, cfg.role_filter, DEFAULT_K, svm_params(cfg.seed, cfg.k))?;
    let dir = out_dir(cfg.out_dir.as_ref())?;
    let path = dir.join("baseline_report.json");
    report.save(&path)?;
    rec.output(&path);
    let model_path = dir.join("baseline_model.json");
    model.save(&model_path)?;
    rec.output(&model_path);
    rec.finish(&dir, cfg.seed, report.config.clone())?;
    Ok(report_summary("baseline", &report) + &format!("\nreport at {}", path.display()))
}

pub fn ablate(c: &Common) -> Result<String> {
    let cfg = resolve_config(c)?;
    let mut rec = Recorder::new("ablate");
    let inputs = load_inputs(&cfg, &mut rec)?;
    let (grid, reports) = run_ablation(&inputs.sessions, &inputs.embeddings, &inputs.vocab, &cfg)?;
    let dir = out_dir(cfg.out_dir.as_ref())?;
    let cells_dir = dir.join("cells");
    fs::create_dir_all(&cells_dir)?;
    for r in &reports {
        let path = cells_dir.join(format!("{}.json", r.system.replace('/', "__")));
        r.save(&path)?;
        rec.output(&path);
    }
    write_json(&mut rec, dir.join("ablation.json"), &grid)?;
    rec.finish(&dir, cfg.seed, config_value(&cfg))?;
    let mut s = String::from("ablate:");
    for cell in &grid.cells {
        let _ = write!(s, "\n  {:<40} macro-F1 {:.4}", cell.system, cell.macro_f1);
    }
    for t in &grid.toggles {
        let rel = t
            .relative_improvement
            .map_or("n/a".to_string(), |r| format!("{:+.2}%", 100.0 * r));
        let _ = write!(s, "\n  {:<15} with {:.4} without {:.4} relative {rel}", t.toggle, t.mean_yes, t.mean_no);
    }
    Ok(s)
}

pub fn saliency(c: &Common, model_path: Option<PathBuf>) -> Result<String> {
    let cfg = resolve_config(c)?;
    let mut rec = Recorder::new("saliency");
    let inputs = load_inputs(&cfg, &mut rec)?;
    let data = dataset(&cfg, &inputs)?;
    let curves = match &model_path {
        Some(p) => {
            rec.input(p)?;
            aggregate_saliency(&load_model(p)?, &data)?
        }
        None => cross_validate(&data, &cfg)?.saliency,
    };
    let dir = out_dir(cfg.out_dir.as_ref())?;
    let path = dir.join("saliency.csv");
    write_csv(&mut rec, path.clone(), &curves)?;
    rec.finish(&dir, cfg.seed, config_echo(&cfg, &data))?;
    Ok(format!(
        "saliency: {} curves over {} sessions, written to {}",
        curves.len(),
        curves.first().map_or(0, |c| c.n_sessions),
        path.display()
    ))
}

#[derive(Debug, Serialize)]
struct Comparison {
    system_a: String,
    system_b: String,
    macro_f1_a: f64,
    macro_f1_b: f64,
    n_sessions: usize,
    bootstrap: BootstrapResult,
}

pub fn evaluate(c: &Common, a: &Path, b: &Path, bootstrap_n: Option<usize>) -> Result<String> {
    let cfg = resolve_config(c)?;
    let mut rec = Recorder::new("evaluate");
    rec.input(a)?;
    rec.input(b)?;
    let mut ra = EvalReport::load(a)?;
    let rb = EvalReport::load(b)?;
    let ids = |r: &EvalReport| -> Vec<(String, u8)> {
        let mut v: Vec<_> = r.predictions.iter().map(|p| (p.session_id.clone(), p.label)).collect();
        v.sort();
        v
    };
    if ids(&ra) != ids(&rb) {
        return Err(Error::Protocol(
            "reports do not cover the same sessions with the same labels".into(),
        ));
    }
    let preds = |r: &EvalReport| -> BTreeMap<String, u8> {
        r.predictions.iter().map(|p| (p.session_id.clone(), p.predicted)).collect()
    };
    let (pa, pb) = (preds(&ra), preds(&rb));
    let labels: Vec<u8> = ids(&ra).into_iter().map(|(_, l)| l).collect();
    let pa: Vec<u8> = pa.into_values().collect();
    let pb: Vec<u8> = pb.into_values().collect();
    let n = bootstrap_n.unwrap_or(cfg.bootstrap_n);
    let result = paired_bootstrap(&pa, &pb, &labels, n, seeds::derive(cfg.seed, seeds::BOOTSTRAP))?;
    let dir = out_dir(cfg.out_dir.as_ref())?;
    let cmp = Comparison {
        system_a: ra.system.clone(),
        system_b: rb.system.clone(),
        macro_f1_a: ra.macro_f1,
        macro_f1_b: rb.macro_f1,
        n_sessions: labels.len(),
        bootstrap: result,
    };
    write_json(&mut rec, dir.join("comparison.json"), &cmp)?;
    ra.bootstrap = Some(result);
    let path = dir.join("report.json");
    ra.save(&path)?;
    rec.output(&path);
    rec.finish(&dir, cfg.seed, serde_json::json!({ "bootstrap_n": n, "seed": cfg.seed }))?;
    Ok(format!(
        "evaluate: {} ({:.4}) vs {} ({:.4}) on {} sessions: delta {:+.4}, p = {:.6} ({} resamples)",
        cmp.system_a, cmp.macro_f1_a, cmp.system_b, cmp.macro_f1_b, cmp.n_sessions, result.delta, result.p_value, n
    ))
}
