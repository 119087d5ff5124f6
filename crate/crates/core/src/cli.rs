//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure. Every command logs its seed and configuration hash
//! to stderr, and every file it writes carries that hash, either inline or
//! in a `<file>.meta.json` sidecar.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::bundle::{read_json, write_json, Bundle, Checkpoint, FORMAT_VERSION};
use crate::config::{content_hash, TrainConfig};
use crate::dataprep::{
    gen_synthetic, load_pan_pairs, read_answers, read_corpus, read_truth, resample_pairs, split_corpus,
    write_answers, write_corpus, write_jsonl, write_pan_pairs, SplitRatios, SubsetQuotas, SynthConfig,
};
use crate::dataprep::Trial;
use crate::encoder::Document;
use crate::error::{Error, Result};
use crate::gradcheck::grad_check_all;
use crate::metrics::{pan_scores, reliability, AnswerSet};
use crate::trainer::{
    authorship_accuracy, derive_seed, train_ensemble, train_o2d2, tune_epsilon, Calibration, FandomProbe,
    FeatureCache,
};

#[derive(Debug, Parser)]
#[command(name = "avprob", version, about = "Authorship verification with calibrated abstention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Split a corpus into author- and fandom-disjoint parts.
    Split(SplitArgs),
    /// Draw verification pairs from a corpus.
    SamplePairs(SampleArgs),
    /// Stage one: train the verifier (or an ensemble of verifiers).
    Train(TrainArgs),
    /// Stage two: fit the out-of-distribution detector.
    TrainO2d2(O2d2Args),
    /// Pick the detector label margin on validation pairs.
    TuneEpsilon(TuneArgs),
    /// Score pairs with a bundle and write answers.
    Predict(PredictArgs),
    /// Compute evaluation metrics for answers against ground truth.
    Evaluate(EvaluateArgs),
    /// Compare analytic and finite-difference gradients.
    GradCheck(GradCheckArgs),
    /// Train a fandom verifier on frozen embeddings as a leakage diagnostic.
    ProbeFandom(ProbeArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    authors: Option<usize>,
    #[arg(long)]
    docs_per_author: Option<usize>,
    #[arg(long)]
    fandoms: Option<usize>,
    #[arg(long)]
    universe_size: Option<usize>,
    #[arg(long)]
    style: Option<f64>,
    #[arg(long)]
    topic: Option<f64>,
    #[arg(long)]
    words: Option<usize>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Training, calibration and validation shares.
    #[arg(long, value_delimiter = ',', default_values_t = [0.6, 0.2, 0.2])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// training, calibration, validation or development.
    #[arg(long, conflicts_with = "quotas")]
    preset: Option<String>,
    /// Pairs per subset as SA_SF,SA_DF,DA_SF,DA_DF.
    #[arg(long, value_delimiter = ',')]
    quotas: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training corpus.
    #[arg(long)]
    train: PathBuf,
    /// Development pairs for early stopping.
    #[arg(long, requires = "dev_truth")]
    dev_pairs: Option<PathBuf>,
    #[arg(long)]
    dev_truth: Option<PathBuf>,
    /// Output bundle directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    ensemble: Option<usize>,
    /// Ensemble members trained in parallel.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    probe_fandom: bool,
}

#[derive(Debug, Args)]
struct O2d2Args {
    #[arg(long)]
    bundle: PathBuf,
    /// Fixed calibration pairs.
    #[arg(long, requires = "truth", conflicts_with = "corpus")]
    pairs: Option<PathBuf>,
    #[arg(long, requires = "pairs")]
    truth: Option<PathBuf>,
    /// Calibration documents; pairs are redrawn every epoch.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Pairs per subset and epoch with `--corpus`, as SA_SF,SA_DF,DA_SF,DA_DF.
    #[arg(long, value_delimiter = ',', requires = "corpus")]
    quotas: Option<Vec<usize>>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output bundle; defaults to updating `--bundle` in place.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, requires = "calib_truth", conflicts_with = "calib_corpus")]
    calib_pairs: Option<PathBuf>,
    #[arg(long, requires = "calib_pairs")]
    calib_truth: Option<PathBuf>,
    /// Calibration documents; pairs are redrawn every epoch.
    #[arg(long)]
    calib_corpus: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', requires = "calib_corpus")]
    calib_quotas: Option<Vec<usize>>,
    #[arg(long)]
    val_pairs: PathBuf,
    #[arg(long)]
    val_truth: PathBuf,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Ignore the detector and answer every trial.
    #[arg(long)]
    no_detector: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    answers: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Directory for `metrics.jsonl` and `reliability.csv`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    bins: usize,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 200)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    eval_pairs: PathBuf,
    #[arg(long)]
    eval_truth: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn echo(seed: u64, hash: &str) {
    eprintln!("seed={seed} config_hash={hash}");
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn write_provenance<T: Serialize>(path: &Path, command: &str, hash: &str, seed: u64, config: &T) -> Result<()> {
    write_json(
        &sidecar(path),
        &json!({
            "command": command,
            "config_hash": hash,
            "seed": seed,
            "config": config,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::from_toml_file(p),
        None => Ok(TrainConfig::default()),
    }
}

fn load_pairs_truth(pairs: &Path, truth: &Path) -> Result<Vec<crate::dataprep::Trial>> {
    load_pan_pairs(pairs, truth)
}

fn synth(a: SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_authors: a.authors.unwrap_or(d.n_authors),
        docs_per_author: a.docs_per_author.unwrap_or(d.docs_per_author),
        n_fandoms: a.fandoms.unwrap_or(d.n_fandoms),
        universe_size: a.universe_size.unwrap_or(d.universe_size),
        style_strength: a.style.unwrap_or(d.style_strength),
        topic_strength: a.topic.unwrap_or(d.topic_strength),
        words_per_doc: a.words.unwrap_or(d.words_per_doc),
        seed: a.seed,
        ..d
    };
    let hash = content_hash(&cfg);
    echo(cfg.seed, &hash);
    let docs = gen_synthetic(&cfg)?;
    write_corpus(&a.out, &docs)?;
    write_provenance(&a.out, "synth", &hash, cfg.seed, &cfg)?;
    println!("wrote {} documents to {}", docs.len(), a.out.display());
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let [r0, r1, r2] = a.ratios[..] else {
        return Err(Error::InvalidConfig("--ratios takes exactly three values".into()));
    };
    let ratios = SplitRatios([r0, r1, r2]);
    let hash = content_hash(&json!({"ratios": ratios, "seed": a.seed, "corpus": a.corpus}));
    echo(a.seed, &hash);
    let docs = read_corpus(&a.corpus)?;
    let split = split_corpus(&docs, ratios, a.seed)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let mut summary = BTreeMap::new();
    for (name, part) in ["training", "calibration", "validation"].iter().zip(split.parts()) {
        write_corpus(&a.out_dir.join(format!("{name}.jsonl")), &part.documents)?;
        summary.insert(
            name.to_string(),
            json!({
                "documents": part.documents.len(),
                "authors": part.authors,
                "fandoms": part.fandoms,
            }),
        );
        println!(
            "{name:<12} {:>6} documents {:>5} authors {:>4} fandoms",
            part.documents.len(),
            part.authors.len(),
            part.fandoms.len()
        );
    }
    println!("removed      {:>6} documents", split.removed.len());
    write_json(
        &a.out_dir.join("split.json"),
        &json!({
            "config_hash": hash,
            "seed": a.seed,
            "ratios": ratios,
            "parts": summary,
            "removed": split.removed,
        }),
    )
}

fn parse_quotas(preset: Option<&str>, quotas: Option<&[usize]>) -> Result<SubsetQuotas> {
    match (preset, quotas) {
        (Some(p), None) => match p {
            "training" => Ok(SubsetQuotas::training()),
            "calibration" => Ok(SubsetQuotas::calibration()),
            "validation" => Ok(SubsetQuotas::validation()),
            "development" => Ok(SubsetQuotas::development()),
            other => Err(Error::InvalidConfig(format!("unknown preset `{other}`"))),
        },
        (None, Some(q)) => match *q {
            [sa_sf, sa_df, da_sf, da_df] => Ok(SubsetQuotas {
                sa_sf,
                sa_df,
                da_sf,
                da_df,
            }),
            _ => Err(Error::InvalidConfig("quotas take exactly four values".into())),
        },
        _ => Err(Error::InvalidConfig("give either --preset or --quotas".into())),
    }
}

fn sample_pairs(a: SampleArgs) -> Result<()> {
    let quotas = parse_quotas(a.preset.as_deref(), a.quotas.as_deref())?;
    let hash = content_hash(&json!({"quotas": quotas, "seed": a.seed, "corpus": a.corpus}));
    echo(a.seed, &hash);
    let docs = read_corpus(&a.corpus)?;
    let trials = resample_pairs(&docs, &quotas, a.seed)?;
    write_pan_pairs(&trials, &a.pairs, &a.truth)?;
    write_provenance(&a.pairs, "sample-pairs", &hash, a.seed, &quotas)?;
    println!("wrote {} pairs", trials.len());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.optimizer.learning_rate = v;
    }
    if let Some(v) = a.ensemble {
        cfg.ensemble_size = v;
    }
    if let Some(v) = a.jobs {
        cfg.jobs = v;
    }
    if a.probe_fandom {
        cfg.probe_fandom = true;
    }
    cfg.validate()?;
    let hash = cfg.hash();
    echo(cfg.seed, &hash);

    let docs = read_corpus(&a.train)?;
    let dev = match (&a.dev_pairs, &a.dev_truth) {
        (Some(p), Some(t)) => load_pairs_truth(p, t)?,
        _ => Vec::new(),
    };
    let mut cache = FeatureCache::new();
    cache.add_documents(&cfg.featurizer, &docs)?;
    cache.add_trials(&cfg.featurizer, &dev)?;
    let runs = train_ensemble(&docs, &dev, &cache, &cfg)?;

    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut log = Vec::new();
    let mut members = Vec::new();
    for (k, run) in runs.into_iter().enumerate() {
        for e in &run.stage1.history {
            log.push(json!({"config_hash": hash, "member": k, "seed": run.seed, "log": e}));
            let dev = e.dev.map(|d| format!("{:.4}", d.overall)).unwrap_or_else(|| "-".into());
            println!(
                "member {k} epoch {:>3}  dml {:.4}  bfs {:.4}  ual {:.4}  dev overall {dev}",
                e.epoch, e.train.dml, e.train.bfs, e.train.ual
            );
        }
        let epoch = run.stage1.best_epoch.unwrap_or(run.stage1.epochs_run);
        let mut metrics = BTreeMap::new();
        if let Some(d) = run.stage1.history.get(epoch.saturating_sub(1)).and_then(|l| l.dev) {
            for (name, v) in d.as_array() {
                metrics.insert(name.to_string(), v);
            }
        }
        members.push(Checkpoint {
            format_version: FORMAT_VERSION,
            config_hash: hash.clone(),
            seed: run.seed,
            epoch,
            metrics,
            model: run.model,
        });
    }
    write_jsonl(&a.out.join("train-log.jsonl"), log)?;
    write_json(&a.out.join("config.json"), &cfg)?;
    Bundle::new(&hash, members).save(&a.out)?;
    println!("saved bundle to {}", a.out.display());
    Ok(())
}

fn bundle_seed(b: &Bundle) -> u64 {
    b.manifest.seeds.first().copied().unwrap_or(0)
}

enum CalibSource {
    Pairs(Vec<Trial>),
    Corpus(Vec<Document>, SubsetQuotas),
}

impl CalibSource {
    fn load(
        pairs: Option<&Path>,
        truth: Option<&Path>,
        corpus: Option<&Path>,
        quotas: Option<&[usize]>,
    ) -> Result<Self> {
        match (pairs, truth, corpus) {
            (Some(p), Some(t), None) => Ok(Self::Pairs(load_pan_pairs(p, t)?)),
            (None, None, Some(c)) => {
                let q = match quotas {
                    Some(q) => parse_quotas(None, Some(q))?,
                    None => SubsetQuotas::calibration(),
                };
                Ok(Self::Corpus(read_corpus(c)?, q))
            }
            _ => Err(Error::InvalidConfig(
                "give calibration pairs with truth, or a calibration corpus".into(),
            )),
        }
    }

    fn documents(&self) -> Vec<&Document> {
        match self {
            Self::Pairs(t) => t.iter().flat_map(|t| [&t.doc1, &t.doc2]).collect(),
            Self::Corpus(d, _) => d.iter().collect(),
        }
    }

    fn as_calibration(&self) -> Calibration<'_> {
        match self {
            Self::Pairs(t) => Calibration::Pairs(t),
            Self::Corpus(docs, quotas) => Calibration::Resampled { docs, quotas },
        }
    }
}

fn train_detector(a: O2d2Args) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(e) = a.epsilon {
        cfg.epsilon = e;
    }
    cfg.validate()?;
    let calib = CalibSource::load(a.pairs.as_deref(), a.truth.as_deref(), a.corpus.as_deref(), a.quotas.as_deref())?;
    let mut bundle = Bundle::load(&a.bundle)?;
    let hash = content_hash(&json!({"bundle": bundle.manifest.config_hash, "config": cfg.hash()}));
    echo(bundle_seed(&bundle), &hash);
    let mut cache = FeatureCache::new();
    for m in &mut bundle.members {
        cache.add_documents(&m.model.featurizer, calib.documents())?;
        let report = train_o2d2(&mut m.model, calib.as_calibration(), &cache, &cfg, cfg.epsilon, m.seed)?;
        m.config_hash = hash.clone();
        println!(
            "seed {}: {} of {} calibration trials labelled undecidable, final loss {:.4}",
            m.seed, report.positives, report.trials, report.final_loss
        );
    }
    bundle.manifest.config_hash = hash;
    bundle.save(a.out.as_deref().unwrap_or(&a.bundle))
}

fn tune(a: TuneArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(g) = a.grid {
        cfg.epsilon_grid = g;
    }
    cfg.validate()?;
    let calib = CalibSource::load(
        a.calib_pairs.as_deref(),
        a.calib_truth.as_deref(),
        a.calib_corpus.as_deref(),
        a.calib_quotas.as_deref(),
    )?;
    let mut bundle = Bundle::load(&a.bundle)?;
    let hash = content_hash(&json!({"bundle": bundle.manifest.config_hash, "config": cfg.hash()}));
    echo(bundle_seed(&bundle), &hash);
    let val = load_pairs_truth(&a.val_pairs, &a.val_truth)?;
    let mut cache = FeatureCache::new();
    for m in &mut bundle.members {
        cache.add_documents(&m.model.featurizer, calib.documents())?;
        cache.add_trials(&m.model.featurizer, &val)?;
        let t = tune_epsilon(&mut m.model, calib.as_calibration(), &val, &cache, &cfg, m.seed)?;
        println!("seed {}", m.seed);
        println!("  {:>7} {:>8} {:>8} {:>8}", "epsilon", "c@1", "f_05_u", "overall");
        for (e, s) in &t.table {
            println!("  {e:>7.3} {:>8.4} {:>8.4} {:>8.4}", s.c_at_1, s.f_05_u, s.overall);
        }
        println!("  selected epsilon {}", t.epsilon);
        m.config_hash = hash.clone();
        m.metrics.insert("epsilon".into(), t.epsilon);
    }
    bundle.manifest.config_hash = hash;
    bundle.save(a.out.as_deref().unwrap_or(&a.bundle))
}

#[derive(serde::Deserialize)]
struct PairOnly {
    id: String,
    pair: [String; 2],
}

fn predict(a: PredictArgs) -> Result<()> {
    let bundle = Bundle::load(&a.bundle)?;
    let hash = bundle.manifest.config_hash.clone();
    echo(bundle_seed(&bundle), &hash);
    let ensemble = bundle.ensemble()?;
    let use_detector = !a.no_detector && ensemble.has_detector();
    let pairs: Vec<PairOnly> = crate::dataprep::read_jsonl(&a.pairs)?;
    let featurizer = &ensemble.members[0].featurizer;
    let mut answers = Vec::with_capacity(pairs.len());
    for p in &pairs {
        let f1 = featurizer.featurize_text(&p.pair[0]);
        let f2 = featurizer.featurize_text(&p.pair[1]);
        let v = ensemble.predict_features(&f1, &f2, use_detector)?;
        answers.push((p.id.clone(), v.value));
    }
    write_answers(&a.out, &answers)?;
    write_provenance(
        &a.out,
        "predict",
        &hash,
        bundle_seed(&bundle),
        &json!({"bundle": a.bundle, "members": ensemble.len(), "detector": use_detector}),
    )?;
    let nr = answers.iter().filter(|(_, v)| *v == crate::ensemble::NON_RESPONSE).count();
    println!("wrote {} answers ({nr} non-responses) to {}", answers.len(), a.out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let values = read_answers(&a.answers)?;
    let truth: HashMap<String, bool> = read_truth(&a.truth)?.into_iter().map(|t| (t.id, t.same)).collect();
    let set = AnswerSet::join(&values, &truth)?;
    let producer = read_json::<serde_json::Value>(&sidecar(&a.answers))
        .ok()
        .and_then(|v| v.get("config_hash").and_then(|h| h.as_str()).map(str::to_string));
    let hash = producer.unwrap_or_else(|| content_hash(&json!({"answers": a.answers, "truth": a.truth})));
    echo(0, &hash);
    let scores = pan_scores(&set)?;
    let cal = reliability(&set, a.bins)?;

    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{:<10} {:>8}", "metric", "value");
    for (name, v) in scores.as_array() {
        let _ = writeln!(out, "{name:<10} {v:>8.4}");
    }
    let _ = writeln!(out, "{:<10} {:>8.4}", "ECE", cal.ece);
    let _ = writeln!(out, "{:<10} {:>8.4}", "MCE", cal.mce);
    let _ = writeln!(out, "{:<10} {:>8.4}", "non-resp", set.nonresponse_rate());

    let mut records: Vec<serde_json::Value> = scores
        .as_array()
        .iter()
        .map(|(n, v)| json!({"metric": n, "value": v, "config_hash": hash}))
        .collect();
    records.push(json!({"metric": "ece", "value": cal.ece, "config_hash": hash}));
    records.push(json!({"metric": "mce", "value": cal.mce, "config_hash": hash}));
    records.push(json!({"metric": "nonresponse_rate", "value": set.nonresponse_rate(), "config_hash": hash}));
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&dir.join("metrics.jsonl"), &records)?;
        let path = dir.join("reliability.csv");
        let mut csv = format!("# config_hash={hash}\nlower,upper,count,conf,acc\n");
        for b in &cal.bins {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                b.lower, b.upper, b.count, b.mean_confidence, b.mean_accuracy
            ));
        }
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    } else {
        for r in &records {
            let _ = writeln!(out, "{r}");
        }
    }
    Ok(())
}

fn grad_check(a: GradCheckArgs) -> Result<bool> {
    let hash = content_hash(&json!({"cases": a.cases, "seed": a.seed}));
    echo(a.seed, &hash);
    let report = grad_check_all(a.cases, a.seed)?;
    println!("{:<6} {:>6} {:>12} {:>12}", "part", "cases", "max rel err", "mean rel err");
    for c in &report.components {
        println!(
            "{:<6} {:>6} {:>12.3e} {:>12.3e}",
            c.component, c.cases, c.max_rel_error, c.mean_rel_error
        );
    }
    Ok(report.passed(a.tolerance))
}

fn probe(a: ProbeArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let bundle = Bundle::load(&a.bundle)?;
    let member = bundle
        .members
        .first()
        .ok_or_else(|| Error::InvalidConfig("bundle has no members".into()))?;
    let model = &member.model;
    let hash = content_hash(&json!({"bundle": bundle.manifest.config_hash, "config": cfg.hash()}));
    echo(member.seed, &hash);
    let docs = read_corpus(&a.train)?;
    let eval = load_pairs_truth(&a.eval_pairs, &a.eval_truth)?;
    let mut cache = FeatureCache::new();
    cache.add_documents(&model.featurizer, &docs)?;
    cache.add_trials(&model.featurizer, &eval)?;
    let auth = authorship_accuracy(model, &eval, &cache)?;
    let mut probe = FandomProbe::new(&cfg, member.seed);
    println!("{:>5} {:>10} {:>10}", "epoch", "authorship", "fandom");
    for epoch in 0..cfg.epochs {
        let trials = resample_pairs(&docs, &cfg.train_quotas, derive_seed(member.seed, "probe-resample", epoch as u64))?;
        for chunk in trials.chunks(cfg.batch_size) {
            let emb: Vec<(Vec<f64>, Vec<f64>, bool)> = chunk
                .iter()
                .map(|t| {
                    Ok((
                        model.embed(cache.get(&t.doc1.id)?)?,
                        model.embed(cache.get(&t.doc2.id)?)?,
                        t.same_fandom,
                    ))
                })
                .collect::<Result<_>>()?;
            let pairs: Vec<(&[f64], &[f64], bool)> =
                emb.iter().map(|(a, b, f)| (a.as_slice(), b.as_slice(), *f)).collect();
            probe.train_batch(&pairs, cfg.thresholds)?;
        }
        let fandom = probe.accuracy(model, &eval, &cache)?;
        println!("{:>5} {auth:>10.4} {fandom:>10.4}", epoch + 1);
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        3
    } else if e.is_usage() {
        1
    } else {
        2
    }
}

/// Parse `argv` (including the program name) and run the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Split(a) => split(a),
        Command::SamplePairs(a) => sample_pairs(a),
        Command::Train(a) => train(a),
        Command::TrainO2d2(a) => train_detector(a),
        Command::TuneEpsilon(a) => tune(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::GradCheck(a) => match grad_check(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: gradient check exceeded the tolerance");
                return 3;
            }
            Err(e) => Err(e),
        },
        Command::ProbeFandom(a) => probe(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
