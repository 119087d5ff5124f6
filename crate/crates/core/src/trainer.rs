//! Two-stage training.
//!
//! Stage one optimizes the metric-learning, scoring and adaptation layers
//! together, but each loss only reaches its own parameters: the metric loss
//! trains the encoder and projection, the scoring loss sees the LEVs as
//! constants, and the adaptation loss sees both the LEVs and the scorer
//! posterior as constants. Stage two fits the detector on a separate
//! calibration set with every stage-one parameter frozen.

use std::borrow::Cow;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bfs::{self, BfsParams};
use crate::config::TrainConfig;
use crate::dataprep::{resample_pairs, SubsetQuotas, Trial};
use crate::dml::{self, DmlParams, Lev, Thresholds};
use crate::encoder::{self, fnv1a64, Document, EncoderParams, FeatureVector, Featurizer};
use crate::ensemble::{aggregate, member_outputs};
use crate::error::{Error, Result};
use crate::metrics::{pan_scores, Answer, AnswerSet, PanScores};
use crate::model::{PairScore, Verifier};
use crate::o2d2::{self, O2d2Params};
use crate::params::{Adam, ParamSet};
use crate::ual::{self, UalParams};

/// Independent, reproducible seed for a named random stream.
pub fn derive_seed(seed: u64, stream: &str, index: u64) -> u64 {
    let mut z = seed ^ fnv1a64(stream.as_bytes()) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Feature vectors keyed by document id.
#[derive(Debug, Clone, Default)]
pub struct FeatureCache {
    map: HashMap<String, FeatureVector>,
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_documents<'a>(
        &mut self,
        featurizer: &Featurizer,
        docs: impl IntoIterator<Item = &'a Document>,
    ) -> Result<()> {
        for d in docs {
            if !self.map.contains_key(&d.id) {
                self.map.insert(d.id.clone(), featurizer.featurize(d)?);
            }
        }
        Ok(())
    }

    pub fn add_trials(&mut self, featurizer: &Featurizer, trials: &[Trial]) -> Result<()> {
        self.add_documents(featurizer, trials.iter().flat_map(|t| [&t.doc1, &t.doc2]))
    }

    pub fn get(&self, id: &str) -> Result<&FeatureVector> {
        self.map
            .get(id)
            .ok_or_else(|| Error::IdMismatch(format!("no features cached for document `{id}`")))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub fn init_model(cfg: &TrainConfig, seed: u64) -> Verifier {
    Verifier::init(
        cfg.featurizer.clone(),
        cfg.dims,
        cfg.init,
        cfg.beta,
        derive_seed(seed, "init", 0),
    )
}

/// Which stage-one losses contribute to a gradient computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossMask {
    pub dml: bool,
    pub bfs: bool,
    pub ual: bool,
}

impl LossMask {
    pub const ALL: LossMask = LossMask {
        dml: true,
        bfs: true,
        ual: true,
    };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLosses {
    pub dml: f64,
    pub bfs: f64,
    pub ual: f64,
}

/// The three stage-one layers, shared by the verifier and the fandom probe.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub dml: DmlParams,
    pub bfs: BfsParams,
    pub ual: UalParams,
}

impl Head {
    fn zeros_like(&self) -> Self {
        Self {
            dml: self.dml.zeros_like(),
            bfs: self.bfs.zeros_like(),
            ual: self.ual.zeros_like(),
        }
    }

    fn scale(&mut self, a: f64) {
        self.dml.scale(a);
        self.bfs.scale(a);
        self.ual.scale(a);
    }
}

/// Mean head gradients over a batch of embedding pairs. Also returns the
/// gradient of the metric loss w.r.t. each embedding.
#[allow(clippy::type_complexity)]
fn head_gradients(
    head: &Head,
    pairs: &[(&[f64], &[f64], bool)],
    th: Thresholds,
    mask: LossMask,
) -> Result<(Head, Vec<(Vec<f64>, Vec<f64>)>, StageLosses)> {
    let mut grads = head.zeros_like();
    let mut emb_grads = Vec::with_capacity(pairs.len());
    let mut losses = StageLosses::default();
    for &(e1, e2, label) in pairs {
        let fwd = dml::dml_forward(e1, e2, &head.dml, label, th)?;
        losses.dml += fwd.loss;
        let ge = if mask.dml {
            dml::dml_backward(e1, e2, &fwd, &head.dml, label, th, &mut grads.dml)
        } else {
            (vec![0.0; e1.len()], vec![0.0; e2.len()])
        };
        emb_grads.push(ge);

        // LEVs enter the scorer and the adaptation layer as constants.
        let (y1, y2) = (&fwd.y1.0, &fwd.y2.0);
        let b = bfs::bfs_forward(y1, y2, &head.bfs)?;
        losses.bfs += bfs::bfs_loss(b.posterior, label);
        if mask.bfs {
            let slope = bfs::bce_logit_slope(b.posterior, label);
            bfs::bfs_backward(y1, y2, &b, &head.bfs, slope, &mut grads.bfs)?;
        }

        let u = ual::ual_forward(y1, y2, b.posterior, &head.ual, label)?;
        losses.ual += u.loss;
        if mask.ual {
            ual::ual_backward(&u, b.posterior, &head.ual, label, &mut grads.ual);
        }
    }
    let n = pairs.len().max(1) as f64;
    grads.scale(1.0 / n);
    losses.dml /= n;
    losses.bfs /= n;
    losses.ual /= n;
    Ok((grads, emb_grads, losses))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Grads {
    pub encoder: EncoderParams,
    pub dml: DmlParams,
    pub bfs: BfsParams,
    pub ual: UalParams,
}

/// Mean stage-one gradients over one batch of `(f1, f2, same_author)`.
pub fn stage1_gradients(
    model: &Verifier,
    batch: &[(&[f64], &[f64], bool)],
    th: Thresholds,
    mask: LossMask,
) -> Result<(Stage1Grads, StageLosses)> {
    let embeddings: Vec<(Vec<f64>, Vec<f64>)> = batch
        .iter()
        .map(|(f1, f2, _)| Ok((model.embed(f1)?, model.embed(f2)?)))
        .collect::<Result<_>>()?;
    let pairs: Vec<(&[f64], &[f64], bool)> = embeddings
        .iter()
        .zip(batch)
        .map(|((e1, e2), (_, _, a))| (e1.as_slice(), e2.as_slice(), *a))
        .collect();
    let head = Head {
        dml: model.dml.clone(),
        bfs: model.bfs.clone(),
        ual: model.ual.clone(),
    };
    let (head_grads, emb_grads, losses) = head_gradients(&head, &pairs, th, mask)?;
    let mut enc = model.encoder.zeros_like();
    if mask.dml {
        let n = batch.len().max(1) as f64;
        for (((f1, f2, _), (e1, e2)), (g1, g2)) in batch.iter().zip(&embeddings).zip(&emb_grads) {
            let g1: Vec<f64> = g1.iter().map(|g| g / n).collect();
            let g2: Vec<f64> = g2.iter().map(|g| g / n).collect();
            encoder::encode_backward_params(f1, e1, &g1, &mut enc)?;
            encoder::encode_backward_params(f2, e2, &g2, &mut enc)?;
        }
    }
    Ok((
        Stage1Grads {
            encoder: enc,
            dml: head_grads.dml,
            bfs: head_grads.bfs,
            ual: head_grads.ual,
        },
        losses,
    ))
}

/// One optimizer per parameter set.
pub struct Stage1Optimizer {
    encoder: Adam,
    dml: Adam,
    bfs: Adam,
    ual: Adam,
    train_kernel: bool,
}

impl Stage1Optimizer {
    pub fn new(model: &Verifier, cfg: &TrainConfig) -> Self {
        Self {
            encoder: Adam::new(cfg.optimizer, &model.encoder),
            dml: Adam::new(cfg.optimizer, &model.dml),
            bfs: Adam::new(cfg.optimizer, &model.bfs),
            ual: Adam::new(cfg.optimizer, &model.ual),
            train_kernel: cfg.train_kernel,
        }
    }

    pub fn step(&mut self, model: &mut Verifier, grads: &Stage1Grads) -> Result<()> {
        let kernel = model.dml.log_kernel;
        self.encoder.step(&mut model.encoder, &grads.encoder);
        self.dml.step(&mut model.dml, &grads.dml);
        if self.train_kernel {
            model.dml.clamp_alpha();
        } else {
            model.dml.log_kernel = kernel;
        }
        self.bfs.step(&mut model.bfs, &grads.bfs);
        self.ual.step(&mut model.ual, &grads.ual);
        model.bfs.check_spd()
    }
}

fn check_losses(l: &StageLosses, epoch: usize, batch: usize) -> Result<()> {
    for (component, v) in [("dml", l.dml), ("bfs", l.bfs), ("ual", l.ual)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss {
                component,
                epoch,
                batch,
            });
        }
    }
    Ok(())
}

/// Score every trial; features must be cached.
pub fn score_trials(model: &Verifier, trials: &[Trial], cache: &FeatureCache) -> Result<Vec<PairScore>> {
    trials
        .iter()
        .map(|t| model.score_features(cache.get(&t.doc1.id)?, cache.get(&t.doc2.id)?))
        .collect()
}

/// Single-model output values, with or without the detector.
pub fn answer_values(scores: &[PairScore], use_detector: bool) -> Result<Vec<f64>> {
    scores
        .iter()
        .map(|s| Ok(aggregate(vec![member_outputs(s, use_detector)])?.value))
        .collect()
}

pub fn answer_set(trials: &[Trial], values: &[f64]) -> Result<AnswerSet> {
    AnswerSet::new(
        trials
            .iter()
            .zip(values)
            .map(|(t, v)| Answer {
                id: t.id.clone(),
                value: *v,
                truth: t.same_author,
            })
            .collect(),
    )
}

pub fn evaluate_model(
    model: &Verifier,
    trials: &[Trial],
    cache: &FeatureCache,
    use_detector: bool,
) -> Result<PanScores> {
    let scores = score_trials(model, trials, cache)?;
    pan_scores(&answer_set(trials, &answer_values(&scores, use_detector)?)?)
}

/// Parallel verifier trained on fandom labels from the target's embeddings.
/// Its gradients never reach the target model.
#[derive(Debug, Clone)]
pub struct FandomProbe {
    pub head: Head,
    opt: [Adam; 3],
}

impl FandomProbe {
    pub fn new(cfg: &TrainConfig, seed: u64) -> Self {
        let m = Verifier::init(
            cfg.featurizer.clone(),
            cfg.dims,
            cfg.init,
            cfg.beta,
            derive_seed(seed, "probe", 0),
        );
        let head = Head {
            dml: m.dml,
            bfs: m.bfs,
            ual: m.ual,
        };
        let opt = [
            Adam::new(cfg.optimizer, &head.dml),
            Adam::new(cfg.optimizer, &head.bfs),
            Adam::new(cfg.optimizer, &head.ual),
        ];
        Self { head, opt }
    }

    /// One update from `(e1, e2, same_fandom)` embedding pairs.
    pub fn train_batch(&mut self, pairs: &[(&[f64], &[f64], bool)], th: Thresholds) -> Result<StageLosses> {
        let (g, _, losses) = head_gradients(&self.head, pairs, th, LossMask::ALL)?;
        self.opt[0].step(&mut self.head.dml, &g.dml);
        self.head.dml.clamp_alpha();
        self.opt[1].step(&mut self.head.bfs, &g.bfs);
        self.opt[2].step(&mut self.head.ual, &g.ual);
        self.head.bfs.check_spd()?;
        Ok(losses)
    }

    /// Adapted same-fandom posterior.
    pub fn predict(&self, e1: &[f64], e2: &[f64]) -> Result<f64> {
        let y1 = dml::project(e1, &self.head.dml)?;
        let y2 = dml::project(e2, &self.head.dml)?;
        let b = bfs::bfs_forward(&y1, &y2, &self.head.bfs)?;
        let u = ual::ual_forward(&y1, &y2, b.posterior, &self.head.ual, false)?;
        Ok(u.posterior[1])
    }

    /// Fandom accuracy on `trials` using the target's embeddings.
    pub fn accuracy(&self, target: &Verifier, trials: &[Trial], cache: &FeatureCache) -> Result<f64> {
        let mut correct = 0usize;
        for t in trials {
            let e1 = target.embed(cache.get(&t.doc1.id)?)?;
            let e2 = target.embed(cache.get(&t.doc2.id)?)?;
            if (self.predict(&e1, &e2)? > 0.5) == t.same_fandom {
                correct += 1;
            }
        }
        Ok(correct as f64 / trials.len().max(1) as f64)
    }
}

/// Authorship accuracy of the adapted posterior (no abstention).
pub fn authorship_accuracy(model: &Verifier, trials: &[Trial], cache: &FeatureCache) -> Result<f64> {
    let scores = score_trials(model, trials, cache)?;
    let correct = scores
        .iter()
        .zip(trials)
        .filter(|(s, t)| (s.p_ual_h1 > 0.5) == t.same_author)
        .count();
    Ok(correct as f64 / trials.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train: StageLosses,
    pub dev: Option<PanScores>,
    pub authorship_accuracy: Option<f64>,
    pub fandom_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Report {
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochLog>,
}

/// Stage-one training with epoch-wise pair resampling and early stopping on
/// the development overall score. When `dev` is empty every epoch is kept.
pub fn train_stage1(
    model: &mut Verifier,
    train_docs: &[Document],
    dev: &[Trial],
    cache: &FeatureCache,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Stage1Report> {
    if train_docs.is_empty() {
        return Err(Error::CorpusTooSmall("training split is empty".into()));
    }
    let mut opt = Stage1Optimizer::new(model, cfg);
    let mut probe = cfg.probe_fandom.then(|| FandomProbe::new(cfg, seed));
    let mut best: Option<(f64, usize, Verifier)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();

    for epoch in 0..cfg.epochs {
        let trials = resample_pairs(train_docs, &cfg.train_quotas, derive_seed(seed, "resample", epoch as u64))?;
        let mut sums = StageLosses::default();
        let mut batches = 0usize;
        for (b, chunk) in trials.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&[f64], &[f64], bool)> = chunk
                .iter()
                .map(|t| Ok((&cache.get(&t.doc1.id)?[..], &cache.get(&t.doc2.id)?[..], t.same_author)))
                .collect::<Result<_>>()?;
            if let Some(probe) = probe.as_mut() {
                let emb: Vec<(Vec<f64>, Vec<f64>)> = batch
                    .iter()
                    .map(|(f1, f2, _)| Ok((model.embed(f1)?, model.embed(f2)?)))
                    .collect::<Result<_>>()?;
                let pairs: Vec<(&[f64], &[f64], bool)> = emb
                    .iter()
                    .zip(chunk)
                    .map(|((e1, e2), t)| (e1.as_slice(), e2.as_slice(), t.same_fandom))
                    .collect();
                let l = probe.train_batch(&pairs, cfg.thresholds)?;
                check_losses(&l, epoch, b)?;
            }
            let (grads, losses) = stage1_gradients(model, &batch, cfg.thresholds, LossMask::ALL)?;
            check_losses(&losses, epoch, b)?;
            opt.step(model, &grads)?;
            sums.dml += losses.dml;
            sums.bfs += losses.bfs;
            sums.ual += losses.ual;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        let mut log = EpochLog {
            epoch: epoch + 1,
            train: StageLosses {
                dml: sums.dml / n,
                bfs: sums.bfs / n,
                ual: sums.ual / n,
            },
            dev: None,
            authorship_accuracy: None,
            fandom_accuracy: None,
        };
        if !dev.is_empty() {
            let scores = evaluate_model(model, dev, cache, false)?;
            log.dev = Some(scores);
            if let Some(p) = &probe {
                log.authorship_accuracy = Some(authorship_accuracy(model, dev, cache)?);
                log.fandom_accuracy = Some(p.accuracy(model, dev, cache)?);
            }
        }
        on_epoch(&log);
        history.push(log);

        if let Some(scores) = history.last().and_then(|l| l.dev) {
            if best.as_ref().is_none_or(|(o, _, _)| scores.overall > *o) {
                best = Some((scores.overall, epoch + 1, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }
    let epochs_run = history.len();
    let best_epoch = best.as_ref().map(|(_, e, _)| *e);
    if let Some((_, _, m)) = best {
        *model = m;
    }
    Ok(Stage1Report {
        epochs_run,
        best_epoch,
        history,
    })
}

/// Detector inputs and labels for a set of trials under a frozen model.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorData {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

pub fn detector_data(
    model: &Verifier,
    trials: &[Trial],
    cache: &FeatureCache,
    epsilon: f64,
) -> Result<DetectorData> {
    let mut levs = HashMap::new();
    for t in trials {
        for d in [&t.doc1, &t.doc2] {
            if !levs.contains_key(&d.id) {
                levs.insert(d.id.clone(), model.lev(cache.get(&d.id)?)?);
            }
        }
    }
    detector_data_from_levs(model, trials, &levs, epsilon)
}

fn detector_data_from_levs(
    model: &Verifier,
    trials: &[Trial],
    levs: &HashMap<String, Lev>,
    epsilon: f64,
) -> Result<DetectorData> {
    let lev = |id: &str| {
        levs.get(id)
            .ok_or_else(|| Error::IdMismatch(format!("no LEV for document `{id}`")))
    };
    let mut inputs = Vec::with_capacity(trials.len());
    let mut labels = Vec::with_capacity(trials.len());
    for t in trials {
        let (y1, y2) = (lev(&t.doc1.id)?, lev(&t.doc2.id)?);
        let s = model.score_levs(y1, y2)?;
        labels.push(o2d2::o2d2_label(t.same_author, s.p_ual_h1 > 0.5, s.p_ual_h1, epsilon)?);
        inputs.push(o2d2::build_input(y1, y2, &s.confusion)?);
    }
    Ok(DetectorData { inputs, labels })
}

/// Fit detector parameters by class-balanced cross-entropy on a fixed set.
pub fn fit_detector(data: &DetectorData, cfg: &TrainConfig, seed: u64) -> Result<(O2d2Params, f64)> {
    fit_detector_with(cfg, seed, |_| Ok(Cow::Borrowed(data)))
}

/// Same as [`fit_detector`], but the training set may change every epoch.
/// Class weights are recomputed from each epoch's labels.
fn fit_detector_with<'a>(
    cfg: &TrainConfig,
    seed: u64,
    mut epoch_data: impl FnMut(usize) -> Result<Cow<'a, DetectorData>>,
) -> Result<(O2d2Params, f64)> {
    let d_in = 2 * cfg.dims.d_lev + 4;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "o2d2", 0));
    let mut params = O2d2Params::init(d_in, cfg.dims.d_h1, cfg.dims.d_h2, &mut rng);
    let mut opt = Adam::new(cfg.optimizer, &params);
    let mut last = f64::NAN;
    for epoch in 0..cfg.o2d2_epochs {
        let data = epoch_data(epoch)?;
        let n = data.labels.len();
        let n_pos = data.labels.iter().filter(|l| **l).count();
        let weight = |label: bool| {
            let k = if label { n_pos } else { n - n_pos };
            if k == 0 || k == n {
                1.0
            } else {
                n as f64 / (2.0 * k as f64)
            }
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            for &i in chunk {
                let v = &data.inputs[i];
                let w = weight(data.labels[i]);
                let fwd = o2d2::o2d2_forward(v, &params)?;
                loss += w * o2d2::o2d2_loss(fwd.prob, data.labels[i]);
                o2d2::o2d2_backward(v, &fwd, &params, data.labels[i], w, &mut grads);
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    component: "o2d2",
                    epoch,
                    batch: b,
                });
            }
            grads.scale(1.0 / chunk.len() as f64);
            opt.step(&mut params, &grads);
            total += loss;
        }
        last = total / n.max(1) as f64;
    }
    Ok((params, last))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub epsilon: f64,
    pub trials: usize,
    pub positives: usize,
    pub final_loss: f64,
}

/// Where stage two gets its trials from.
#[derive(Debug, Clone, Copy)]
pub enum Calibration<'a> {
    /// One fixed list of pairs, reused every epoch.
    Pairs(&'a [Trial]),
    /// Pairs redrawn from these documents every epoch.
    Resampled {
        docs: &'a [Document],
        quotas: &'a SubsetQuotas,
    },
}

/// Stage two: fit the detector on calibration data. Only the detector of
/// `model` changes. With [`Calibration::Resampled`] the report counts the
/// final epoch's pairs.
pub fn train_o2d2(
    model: &mut Verifier,
    calibration: Calibration<'_>,
    cache: &FeatureCache,
    cfg: &TrainConfig,
    epsilon: f64,
    seed: u64,
) -> Result<DetectorReport> {
    let empty = match calibration {
        Calibration::Pairs(t) => t.is_empty(),
        Calibration::Resampled { docs, quotas } => docs.is_empty() || quotas.total() == 0,
    };
    if empty {
        return Err(Error::CorpusTooSmall("calibration set is empty".into()));
    }
    o2d2::validate_epsilon(epsilon)?;
    let mut levs = HashMap::new();
    let docs: Vec<&Document> = match calibration {
        Calibration::Pairs(t) => t.iter().flat_map(|t| [&t.doc1, &t.doc2]).collect(),
        Calibration::Resampled { docs, .. } => docs.iter().collect(),
    };
    for d in docs {
        if !levs.contains_key(&d.id) {
            levs.insert(d.id.clone(), model.lev(cache.get(&d.id)?)?);
        }
    }
    let frozen: &Verifier = model;
    let mut counts = (0, 0);
    let fitted = match calibration {
        Calibration::Pairs(trials) => {
            let data = detector_data_from_levs(frozen, trials, &levs, epsilon)?;
            counts = (data.labels.len(), data.labels.iter().filter(|l| **l).count());
            fit_detector(&data, cfg, seed)?
        }
        Calibration::Resampled { docs, quotas } => fit_detector_with(cfg, seed, |epoch| {
            let trials = resample_pairs(docs, quotas, derive_seed(seed, "o2d2-resample", epoch as u64))?;
            let data = detector_data_from_levs(frozen, &trials, &levs, epsilon)?;
            counts = (data.labels.len(), data.labels.iter().filter(|l| **l).count());
            Ok(Cow::Owned(data))
        })?,
    };
    let (mut det, final_loss) = fitted;
    det.set_epsilon(epsilon);
    model.o2d2 = Some(det);
    Ok(DetectorReport {
        epsilon,
        trials: counts.0,
        positives: counts.1,
        final_loss,
    })
}

/// Smallest grid point with the highest score.
pub fn select_epsilon(table: &[(f64, f64)]) -> Result<f64> {
    let mut sorted = table.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(f64, f64)> = None;
    for (e, s) in sorted {
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((e, s));
        }
    }
    best.map(|(e, _)| e).ok_or(Error::EmptyGrid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonTuning {
    pub epsilon: f64,
    pub table: Vec<(f64, PanScores)>,
}

/// Retrain the detector for every grid point and keep the one with the best
/// validation overall score. The returned model carries that detector.
pub fn tune_epsilon(
    model: &mut Verifier,
    calibration: Calibration<'_>,
    validation: &[Trial],
    cache: &FeatureCache,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<EpsilonTuning> {
    if cfg.epsilon_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut table = Vec::with_capacity(cfg.epsilon_grid.len());
    for &eps in &cfg.epsilon_grid {
        let mut m = model.clone();
        train_o2d2(&mut m, calibration, cache, cfg, eps, seed)?;
        table.push((eps, evaluate_model(&m, validation, cache, true)?));
    }
    let overall: Vec<(f64, f64)> = table.iter().map(|(e, s)| (*e, s.overall)).collect();
    let epsilon = select_epsilon(&overall)?;
    train_o2d2(model, calibration, cache, cfg, epsilon, seed)?;
    Ok(EpsilonTuning { epsilon, table })
}

#[derive(Debug, Clone)]
pub struct MemberRun {
    pub model: Verifier,
    pub seed: u64,
    pub stage1: Stage1Report,
}

pub fn member_seed(seed: u64, index: usize) -> u64 {
    if index == 0 {
        seed
    } else {
        derive_seed(seed, "member", index as u64)
    }
}

/// Stage one for every ensemble member, `cfg.jobs` members at a time.
pub fn train_ensemble(
    train_docs: &[Document],
    dev: &[Trial],
    cache: &FeatureCache,
    cfg: &TrainConfig,
) -> Result<Vec<MemberRun>> {
    cfg.validate()?;
    let run = |k: usize| -> Result<MemberRun> {
        let seed = member_seed(cfg.seed, k);
        let mut model = init_model(cfg, seed);
        let stage1 = train_stage1(&mut model, train_docs, dev, cache, cfg, seed, |_| {})?;
        Ok(MemberRun { model, seed, stage1 })
    };
    let indices: Vec<usize> = (0..cfg.ensemble_size).collect();
    let mut out: Vec<Option<Result<MemberRun>>> = (0..cfg.ensemble_size).map(|_| None).collect();
    for wave in indices.chunks(cfg.jobs) {
        let results: Vec<(usize, Result<MemberRun>)> = std::thread::scope(|s| {
            let handles: Vec<_> = wave.iter().map(|&k| (k, s.spawn(move || run(k)))).collect();
            handles
                .into_iter()
                .map(|(k, h)| (k, h.join().expect("training thread panicked")))
                .collect()
        });
        for (k, r) in results {
            out[k] = Some(r);
        }
    }
    out.into_iter().map(|r| r.expect("every member ran")).collect()
}
