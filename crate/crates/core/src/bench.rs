//! Seeded multi-actor experiments: synthetic actors, one or more guilty
//! embedders, a detector, and rank/accuracy reporting.
//!
//! Every random draw comes from a stream derived from the master seed:
//! master -> trial -> {guilty choice, cover sources, embedding, detector}.
//! Within a trial the covers and the embedding streams do not depend on the
//! strategy or payload, so sweeps compare strategies on identical data.

use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{identify_clustering, LinkageKind};
use crate::dctdomain::{compress, synth_cover, CoefArray, CoverSourceParams};
use crate::embedsim::{allocate, capacity, nsf5_simulate_with, ChangeRateModel, EmbedRecord, Strategy};
use crate::ensemble::{li_ensemble_identify, wu_ensemble_identify, LiConfig, WuConfig};
use crate::error::{Error, Result};
use crate::features::{ActorImages, FeatureSet, Schema};
use crate::outlier::{identify_lof, DEFAULT_K};
use crate::project::{apply_projection, fit, ProjectionBasis, ProjectionSpec, TrainingData};
use crate::seeds;
use crate::setdist::{ColumnStats, FeatureMatrix, SetMeasure};

pub const PAPER_NOTE: &str = "paper corpus — not comparable";

/// Source ids of the held-out cameras used to train projections start here.
const TRAINING_SOURCE_BASE: u32 = 1_000_000;

/// Relative payloads cycled through when generating projection training data.
const TRAINING_PAYLOADS: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectorSpec {
    Cluster {
        linkage: LinkageKind,
        measure: SetMeasure,
        /// Number of actors accused.
        accuse: usize,
    },
    Lof {
        k: usize,
        measure: SetMeasure,
    },
    LiEnsemble(LiConfig),
    WuEnsemble(WuConfig),
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec::Lof {
            k: DEFAULT_K,
            measure: SetMeasure::LinearMmd,
        }
    }
}

impl DetectorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorSpec::Cluster { .. } => "cluster",
            DetectorSpec::Lof { .. } => "lof",
            DetectorSpec::LiEnsemble(_) => "li-ensemble",
            DetectorSpec::WuEnsemble(_) => "wu-ensemble",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub actors: usize,
    pub images_per_actor: usize,
    pub guilty: usize,
    /// Bits per nonzero AC coefficient in the images that carry payload.
    pub payload: f64,
    /// Fraction of the guilty actor's images that carry payload.
    pub proportion: f64,
    pub strategy: Strategy,
    pub change_model: ChangeRateModel,
    pub detector: DetectorSpec,
    pub schema: Schema,
    pub projection: Option<ProjectionSpec>,
    /// Held-out cameras used to generate projection training data.
    pub projection_sources: usize,
    pub width: usize,
    pub height: usize,
    pub quality: u32,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            actors: 20,
            images_per_actor: 50,
            guilty: 1,
            payload: 0.3,
            proportion: 0.3,
            strategy: Strategy::Linear,
            change_model: ChangeRateModel::Entropy,
            detector: DetectorSpec::default(),
            schema: Schema::Pev274,
            projection: None,
            projection_sources: 4,
            width: 64,
            height: 64,
            quality: 80,
            trials: 20,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.actors < 3 {
            return bad(format!("need at least 3 actors, got {}", self.actors));
        }
        if self.guilty >= self.actors {
            return bad(format!("guilty count {} must be below actor count {}", self.guilty, self.actors));
        }
        if self.images_per_actor < 2 {
            return bad("need at least 2 images per actor".into());
        }
        if !(self.proportion > 0.0 && self.proportion <= 1.0) {
            return bad(format!("proportion must be in (0, 1], got {}", self.proportion));
        }
        if !(0.0..=1.0).contains(&self.payload) {
            return bad(format!("payload must be in [0, 1], got {}", self.payload));
        }
        if self.trials == 0 {
            return bad("need at least one trial".into());
        }
        if let Schema::Custom(_) = self.schema {
            return bad("experiments need an extractable schema".into());
        }
        match self.detector {
            DetectorSpec::Lof { k, .. } if self.actors < k + 2 => {
                return bad(format!("LOF with k={k} needs at least {} actors", k + 2));
            }
            DetectorSpec::Cluster { accuse, .. } if accuse == 0 || accuse > self.actors => {
                return bad(format!("cannot accuse {accuse} of {} actors", self.actors));
            }
            DetectorSpec::LiEnsemble(li) => li.validate()?,
            DetectorSpec::WuEnsemble(wu) if self.images_per_actor % wu.partitions != 0 => {
                return bad(format!(
                    "{} images per actor not divisible into {} points",
                    self.images_per_actor, wu.partitions
                ));
            }
            _ => {}
        }
        if self.projection.is_some() && self.projection_sources == 0 {
            return bad("projection training needs at least one source".into());
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        seeds::derive(self.seed, "trial", &[trial as u64])
    }
}

/// Renders and compresses `m` covers for each of `n` synthetic cameras.
pub fn actor_covers(n: usize, m: usize, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(CoverSourceParams, ActorImages)>> {
    (0..n)
        .into_par_iter()
        .map(|a| {
            let params = CoverSourceParams::draw(a as u32, cfg.width, cfg.height, &mut seeds::child_rng(seed, "source", &[a as u64]));
            let images = source_covers(&params, m, cfg.quality, seed)?;
            Ok((params, ActorImages { actor: a, images }))
        })
        .collect()
}

fn source_covers(params: &CoverSourceParams, m: usize, quality: u32, seed: u64) -> Result<Vec<CoefArray>> {
    (0..m)
        .into_par_iter()
        .map(|j| {
            let mut rng = seeds::child_rng(seed, "cover", &[u64::from(params.source_id), j as u64]);
            compress(&synth_cover(params, &mut rng)?, quality)
        })
        .collect()
}

/// Embeds into `ceil(proportion * m)` randomly chosen images. The payload is
/// `payload` bpnc of the chosen images' combined capacity, spread by the
/// strategy.
pub fn embed_actor(
    actor: &ActorImages,
    strategy: Strategy,
    payload: f64,
    proportion: f64,
    model: ChangeRateModel,
    seed: u64,
) -> Result<(ActorImages, Vec<EmbedRecord>)> {
    let m = actor.images.len();
    // The small offset keeps products like 0.3 * 10 from rounding up past 3.
    let count = ((proportion * m as f64 - 1e-9).ceil() as usize).clamp(1, m);
    let mut chosen = sample(&mut seeds::child_rng(seed, "select", &[]), m, count).into_vec();
    chosen.sort_unstable();
    let caps: Vec<u64> = chosen.iter().map(|&j| capacity(&actor.images[j])).collect();
    let total = (payload * caps.iter().sum::<u64>() as f64).round() as u64;
    let alloc = allocate(strategy, &caps, total, &mut seeds::child_rng(seed, "allocate", &[]))?;
    let mut images = actor.images.clone();
    let mut records = Vec::with_capacity(count);
    for (&j, &bits) in chosen.iter().zip(&alloc.lengths) {
        let mut rng = seeds::child_rng(seed, "nsf5", &[j as u64]);
        let (stego, mut rec) = nsf5_simulate_with(&actor.images[j], bits, model, &mut rng)?;
        rec.image_id = format!("a{}-i{}", actor.actor, j);
        images[j] = stego;
        records.push(rec);
    }
    Ok((
        ActorImages {
            actor: actor.actor,
            images,
        },
        records,
    ))
}

/// A fitted projection together with the normalization it expects.
#[derive(Debug, Clone)]
pub struct FittedProjection {
    pub stats: ColumnStats,
    pub basis: ProjectionBasis,
}

/// Cover and stego features from held-out cameras, normalized jointly. The
/// label of a stego row is its realized change rate.
pub fn projection_training(cfg: &ExperimentConfig) -> Result<(TrainingData, ColumnStats)> {
    let seed = seeds::derive(cfg.seed, "projection-training", &[]);
    let m = cfg.images_per_actor;
    let mut cover_rows = Vec::new();
    let mut stego_rows = Vec::new();
    let mut labels = Vec::new();
    for s in 0..cfg.projection_sources {
        let id = TRAINING_SOURCE_BASE + s as u32;
        let params = CoverSourceParams::draw(id, cfg.width, cfg.height, &mut seeds::child_rng(seed, "source", &[u64::from(id)]));
        let covers = source_covers(&params, m, cfg.quality, seed)?;
        let rows: Vec<(Vec<f64>, Vec<f64>, f64)> = covers
            .par_iter()
            .enumerate()
            .map(|(j, c)| {
                let alpha = TRAINING_PAYLOADS[j % TRAINING_PAYLOADS.len()];
                let cap = capacity(c);
                let bits = (alpha * cap as f64).round() as u64;
                let mut rng = seeds::child_rng(seed, "nsf5", &[u64::from(id), j as u64]);
                let (stego, rec) = nsf5_simulate_with(c, bits, cfg.change_model, &mut rng)?;
                let rate = if cap == 0 { 0.0 } else { rec.changes as f64 / cap as f64 };
                Ok((
                    cfg.schema.extract(c)?.into_values(),
                    cfg.schema.extract(&stego)?.into_values(),
                    rate,
                ))
            })
            .collect::<Result<_>>()?;
        for (c, s, y) in rows {
            cover_rows.push(c);
            stego_rows.push(s);
            labels.push(y);
        }
    }
    let d = cfg.schema.dim();
    let stacked: Vec<f64> = cover_rows.iter().chain(&stego_rows).flatten().copied().collect();
    let all = FeatureMatrix::new(d, stacked, vec![0; cover_rows.len() + stego_rows.len()], cfg.schema)?;
    let stats = ColumnStats::fit(&all)?;
    let z = crate::project::to_dmatrix(&stats.apply(&all)?);
    let nc = cover_rows.len();
    let data = TrainingData::new(
        z.rows(nc, stego_rows.len()).into_owned(),
        nalgebra::DVector::from_vec(labels),
        z.rows(0, nc).into_owned(),
    )?;
    Ok((data, stats))
}

pub fn fit_projection(cfg: &ExperimentConfig) -> Result<Option<FittedProjection>> {
    match &cfg.projection {
        None => Ok(None),
        Some(spec) => {
            let (data, stats) = projection_training(cfg)?;
            Ok(Some(FittedProjection {
                stats,
                basis: fit(spec, &data)?,
            }))
        }
    }
}

/// Normalizes the actors' features with the training statistics and
/// projects them onto the fitted basis.
pub fn project_sets(sets: &[FeatureSet], p: &FittedProjection) -> Result<Vec<FeatureSet>> {
    let m = FeatureMatrix::from_sets(sets)?;
    apply_projection(&p.stats.apply(&m)?, &p.basis).map(|f| f.to_sets())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub guilty: Vec<usize>,
    /// All actors, most suspicious first.
    pub ranking: Vec<usize>,
    /// The detector's verdict (top-g actors for g guilty).
    pub accused: Vec<usize>,
    /// 1-based rank of each guilty actor, in `guilty` order.
    pub guilty_ranks: Vec<usize>,
    /// Left out of serialized reports so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Everything in a trial that does not depend on strategy or payload.
pub struct TrialData {
    pub trial: usize,
    pub seed: u64,
    pub guilty: Vec<usize>,
    pub covers: Vec<ActorImages>,
    /// Cover features; those of guilty actors are replaced after embedding.
    pub cover_sets: Option<Vec<FeatureSet>>,
}

pub fn prepare_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialData> {
    let seed = cfg.trial_seed(trial);
    let mut guilty = sample(&mut seeds::child_rng(seed, "guilty", &[]), cfg.actors, cfg.guilty).into_vec();
    guilty.sort_unstable();
    let covers: Vec<ActorImages> = actor_covers(cfg.actors, cfg.images_per_actor, cfg, seeds::derive(seed, "sources", &[]))?
        .into_iter()
        .map(|(_, a)| a)
        .collect();
    let cover_sets = match cfg.detector {
        DetectorSpec::LiEnsemble(_) => None,
        _ => Some(
            covers
                .iter()
                .filter(|a| !guilty.contains(&a.actor))
                .map(|a| a.extract(cfg.schema))
                .collect::<Result<_>>()?,
        ),
    };
    Ok(TrialData {
        trial,
        seed,
        guilty,
        covers,
        cover_sets,
    })
}

/// Embeds with the given strategy and payload and runs the detector.
pub fn finish_trial(
    cfg: &ExperimentConfig,
    data: &TrialData,
    strategy: Strategy,
    payload: f64,
    projection: Option<&FittedProjection>,
) -> Result<TrialResult> {
    let start = Instant::now();
    let embed_seed = seeds::derive(data.seed, "embedding", &[]);
    let detector_seed = seeds::derive(data.seed, "detector", &[]);
    let mut stego = Vec::with_capacity(data.guilty.len());
    for &g in &data.guilty {
        let (imgs, _) = embed_actor(
            &data.covers[g],
            strategy,
            payload,
            cfg.proportion,
            cfg.change_model,
            seeds::derive(embed_seed, "actor", &[g as u64]),
        )?;
        stego.push(imgs);
    }
    let ranking = match (&cfg.detector, &data.cover_sets) {
        (DetectorSpec::LiEnsemble(li), _) => {
            let mut all: Vec<ActorImages> = data
                .covers
                .iter()
                .filter(|a| !data.guilty.contains(&a.actor))
                .cloned()
                .collect();
            all.extend(stego);
            li_ensemble_identify(&all, li, detector_seed)?.ranking
        }
        (detector, Some(cover_sets)) => {
            let mut sets = cover_sets.clone();
            for s in &stego {
                sets.push(s.extract(cfg.schema)?);
            }
            sets.sort_by_key(|s| s.actor);
            if let Some(p) = projection {
                sets = project_sets(&sets, p)?;
            }
            detect_sets(detector, &sets, detector_seed)?
        }
        (_, None) => unreachable!("feature detectors always have cover features"),
    };
    let guilty_ranks = data
        .guilty
        .iter()
        .map(|g| ranking.iter().position(|a| a == g).expect("ranking covers all actors") + 1)
        .collect();
    Ok(TrialResult {
        trial: data.trial,
        seed: data.seed,
        guilty: data.guilty.clone(),
        accused: ranking[..data.guilty.len()].to_vec(),
        ranking,
        guilty_ranks,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs a feature-based detector and returns actors, most suspicious first.
pub fn detect_sets(detector: &DetectorSpec, sets: &[FeatureSet], seed: u64) -> Result<Vec<usize>> {
    match *detector {
        DetectorSpec::Cluster { linkage, measure, accuse } => {
            Ok(identify_clustering(sets, linkage, &measure, accuse, seed)?.accusation.ranking)
        }
        DetectorSpec::Lof { k, measure } => Ok(identify_lof(sets, k, &measure, seed)?.ranking.order()),
        DetectorSpec::WuEnsemble(wu) => Ok(wu_ensemble_identify(sets, &wu, seed)?.ranking.order()),
        DetectorSpec::LiEnsemble(_) => Err(Error::InvalidArgument(
            "the crop ensemble works on images, not feature sets".into(),
        )),
    }
}

pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialResult> {
    cfg.validate()?;
    let projection = fit_projection(cfg)?;
    run_trial_with(cfg, trial, projection.as_ref())
}

pub fn run_trial_with(cfg: &ExperimentConfig, trial: usize, projection: Option<&FittedProjection>) -> Result<TrialResult> {
    let data = prepare_trial(cfg, trial)?;
    finish_trial(cfg, &data, cfg.strategy, cfg.payload, projection)
}

pub fn average_rank(results: &[TrialResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no trial results".into()));
    }
    if results.iter().any(|r| r.guilty_ranks.len() != 1) {
        return Err(Error::InvalidArgument("average rank needs single-guilty trials".into()));
    }
    Ok(results.iter().map(|r| r.guilty_ranks[0] as f64).sum::<f64>() / results.len() as f64)
}

/// Sample standard error of the mean guilty rank.
pub fn rank_stderr(results: &[TrialResult]) -> f64 {
    let ranks: Vec<f64> = results.iter().flat_map(|r| r.guilty_ranks.iter().map(|&k| k as f64)).collect();
    let n = ranks.len() as f64;
    if ranks.len() < 2 {
        return 0.0;
    }
    let mean = ranks.iter().sum::<f64>() / n;
    let var = ranks.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Fraction of accused actors that are guilty, averaged over trials.
pub fn accuracy(results: &[TrialResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let hits: f64 = results
        .iter()
        .map(|r| r.accused.iter().filter(|a| r.guilty.contains(a)).count() as f64 / r.guilty.len() as f64)
        .sum();
    hits / results.len() as f64
}

/// Counts of (planted guilty actor, top-ranked actor) over single-guilty trials.
pub fn confusion_matrix(results: &[TrialResult], n: usize) -> Result<Vec<Vec<usize>>> {
    let mut m = vec![vec![0; n]; n];
    for r in results {
        if r.guilty.len() != 1 {
            return Err(Error::InvalidArgument("confusion matrix needs single-guilty trials".into()));
        }
        let (g, a) = (r.guilty[0], r.ranking[0]);
        if g >= n || a >= n {
            return Err(Error::InvalidArgument(format!("actor id out of range 0..{n}")));
        }
        m[g][a] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperReference {
    pub setting: String,
    pub value: String,
    pub note: String,
}

/// Published figures for settings resembling ours, for context only.
pub fn paper_references() -> Vec<PaperReference> {
    [
        ("7 cameras, m=50, 0.25 bpnc in 25% of images, linear MMD, single linkage: overall accuracy", "90.3%"),
        ("7 cameras, m=50, 0.3 bpnc in 30% of images, linear MMD, single linkage: overall accuracy", "99.9%"),
        ("7 cameras, m=10, 0.3 bpnc in 30% of images, linear MMD, single linkage: overall accuracy", "86.4%"),
        ("4000 actors, m=200, LOF k=10: strategy security order", "max-greedy > max-random > linear > even"),
    ]
    .into_iter()
    .map(|(s, v)| PaperReference {
        setting: s.into(),
        value: v.into(),
        note: PAPER_NOTE.into(),
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub average_rank: Option<f64>,
    pub rank_stderr: f64,
    pub accuracy: f64,
    pub confusion: Option<Vec<Vec<usize>>>,
    pub paper_references: Vec<PaperReference>,
}

impl Report {
    /// One row per trial: trial, seed, guilty ids, guilty ranks, accused ids.
    pub fn trials_csv(&self) -> String {
        let mut s = String::from("trial,seed,guilty,guilty_rank,accused\n");
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
        for t in &self.trials {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                t.trial,
                t.seed,
                join(&t.guilty),
                join(&t.guilty_ranks),
                join(&t.accused)
            ));
        }
        s
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let projection = fit_projection(cfg)?;
    let trials: Vec<TrialResult> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial_with(cfg, t, projection.as_ref()))
        .collect::<Result<_>>()?;
    let single = cfg.guilty == 1;
    Ok(Report {
        config: cfg.clone(),
        average_rank: if single { Some(average_rank(&trials)?) } else { None },
        rank_stderr: rank_stderr(&trials),
        accuracy: accuracy(&trials),
        confusion: if single { Some(confusion_matrix(&trials, cfg.actors)?) } else { None },
        trials,
        paper_references: paper_references(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub strategies: Vec<Strategy>,
    pub payloads: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: ExperimentConfig {
                actors: 50,
                images_per_actor: 30,
                proportion: 1.0,
                detector: DetectorSpec::Lof {
                    k: DEFAULT_K,
                    measure: SetMeasure::MeanEmbedding,
                },
                ..ExperimentConfig::default()
            },
            strategies: Strategy::ALL.to_vec(),
            payloads: vec![0.02, 0.05, 0.1, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub strategy: Strategy,
    pub payload: f64,
    pub mean_rank: f64,
    pub stderr: f64,
    pub accuracy: f64,
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub cells: Vec<SweepCell>,
    pub paper_references: Vec<PaperReference>,
}

impl SweepReport {
    pub fn cell(&self, strategy: Strategy, payload: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.strategy == strategy && c.payload == payload)
    }

    /// `strategy,payload,mean_rank,stderr` rows for plotting.
    pub fn plot_csv(&self) -> String {
        let mut s = String::from("strategy,payload,mean_rank,stderr\n");
        for c in &self.cells {
            s.push_str(&format!("{},{},{},{}\n", c.strategy, c.payload, c.mean_rank, c.stderr));
        }
        s
    }
}

/// Average guilty rank for every strategy and payload. Each trial's covers
/// and random streams are shared by all cells.
pub fn strategy_sweep(sweep: &SweepConfig) -> Result<SweepReport> {
    let cfg = &sweep.base;
    cfg.validate()?;
    if sweep.strategies.is_empty() || sweep.payloads.is_empty() {
        return Err(Error::InvalidArgument("empty sweep grid".into()));
    }
    if let Some(p) = sweep.payloads.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("payload {p} outside [0, 1]")));
    }
    let projection = fit_projection(cfg)?;
    let grid: Vec<(Strategy, f64)> = sweep
        .strategies
        .iter()
        .flat_map(|&s| sweep.payloads.iter().map(move |&p| (s, p)))
        .collect();
    // per_trial[t][cell]
    let per_trial: Vec<Vec<TrialResult>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let data = prepare_trial(cfg, t)?;
            grid.iter()
                .map(|&(s, p)| finish_trial(cfg, &data, s, p, projection.as_ref()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let cells = grid
        .iter()
        .enumerate()
        .map(|(c, &(strategy, payload))| {
            let results: Vec<TrialResult> = per_trial.iter().map(|t| t[c].clone()).collect();
            Ok(SweepCell {
                strategy,
                payload,
                mean_rank: mean_guilty_rank(&results),
                stderr: rank_stderr(&results),
                accuracy: accuracy(&results),
                ranks: results.iter().flat_map(|r| r.guilty_ranks.iter().copied()).collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport {
        config: sweep.clone(),
        cells,
        paper_references: paper_references(),
    })
}

fn mean_guilty_rank(results: &[TrialResult]) -> f64 {
    let ranks: Vec<usize> = results.iter().flat_map(|r| r.guilty_ranks.iter().copied()).collect();
    ranks.iter().sum::<usize>() as f64 / ranks.len().max(1) as f64
}
