//! Ensemble identification: crop-based clustering with majority voting, and
//! feature-subsampling with point partitions and rank fusion.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dctdomain::{compress_with_table, decompress, PixelImage};
use crate::error::{Error, Result};
use crate::features::{ActorImages, FeatureSet, Schema};
use crate::outlier::{lof_scores, SuspicionRanking, DEFAULT_K};
use crate::seeds;
use crate::setdist::{euclidean, normalize_columns, DistanceMatrix, FeatureMatrix, SetMeasure};

/// Smallest crop side: LI-250 needs a 3x3 block grid.
pub const MIN_CROP: usize = 24;
pub const DEFAULT_SUBMODELS: usize = 9;

/// Copies an `h x w` window at a uniform random pixel offset.
pub fn crop_random<R: Rng + ?Sized>(img: &PixelImage, h: usize, w: usize, rng: &mut R) -> Result<(PixelImage, (usize, usize))> {
    if h > img.height() || w > img.width() {
        return Err(Error::TooSmall(format!(
            "crop {h}x{w} larger than image {}x{}",
            img.height(),
            img.width()
        )));
    }
    let top = rng.random_range(0..=img.height() - h);
    let left = rng.random_range(0..=img.width() - w);
    Ok((img.crop(top, left, h, w)?, (top, left)))
}

/// Mean Euclidean distance over all cross pairs.
pub fn set_distance_avg<V: AsRef<[f64]>>(x: &[V], y: &[V]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidArgument("empty set".into()));
    }
    let s: f64 = x
        .iter()
        .map(|a| y.iter().map(|b| euclidean(a.as_ref(), b.as_ref())).sum::<f64>())
        .sum();
    Ok(s / (x.len() * y.len()) as f64)
}

/// Greedy absorption: start from the closest pair, repeatedly absorb the
/// remaining actor with the smallest mean distance to the absorbed group,
/// and return the index of the last one left.
pub fn li_submodel(d: &DistanceMatrix) -> Result<usize> {
    let n = d.len();
    if n < 3 {
        return Err(Error::InvalidArgument("sub-model needs at least 3 actors".into()));
    }
    let (mut bi, mut bj, mut best) = (0, 1, f64::INFINITY);
    for i in 0..n {
        for j in i + 1..n {
            if d.get(i, j) < best {
                best = d.get(i, j);
                bi = i;
                bj = j;
            }
        }
    }
    let mut absorbed = vec![bi, bj];
    let mut rest: Vec<usize> = (0..n).filter(|&i| i != bi && i != bj).collect();
    while rest.len() > 1 {
        let (mut pick, mut best) = (0, f64::INFINITY);
        for (p, &y) in rest.iter().enumerate() {
            let v = absorbed.iter().map(|&x| d.get(y, x)).sum::<f64>() / absorbed.len() as f64;
            if v < best {
                best = v;
                pick = p;
            }
        }
        absorbed.push(rest.remove(pick));
    }
    Ok(rest[0])
}

/// Suspicion counts over the sub-models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub counts: BTreeMap<usize, usize>,
}

impl VoteTally {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Most frequent actor; ties are broken uniformly at random.
pub fn majority_vote<R: Rng + ?Sized>(results: &[usize], rng: &mut R) -> Result<(usize, VoteTally)> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no votes".into()));
    }
    let mut counts = BTreeMap::new();
    for &r in results {
        *counts.entry(r).or_insert(0) += 1;
    }
    let top = *counts.values().max().expect("non-empty");
    let tied: Vec<usize> = counts.iter().filter(|(_, &c)| c == top).map(|(&a, _)| a).collect();
    let winner = if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.random_range(0..tied.len())]
    };
    Ok((winner, VoteTally { counts }))
}

/// Splits a set into `p` consecutive slices of `q` vectors.
pub fn partition_points<T: Clone>(set: &[T], p: usize, q: usize) -> Result<Vec<Vec<T>>> {
    if p == 0 || q == 0 || set.len() != p * q {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} vectors into {p} x {q}",
            set.len()
        )));
    }
    Ok(set.chunks(q).map(<[T]>::to_vec).collect())
}

/// One scored point: anomaly score, owning actor, point index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoint {
    pub score: f64,
    pub actor: usize,
    pub point: usize,
}

/// Weighted rank count per actor: the point ranked j-th of `p*n` contributes
/// `(p*n + 1 - j) / p` to its actor. Returns scores in `actors` order.
pub fn fusion_score(sorted: &[ScoredPoint], actors: &[usize], p: usize) -> Result<Vec<f64>> {
    let pn = p * actors.len();
    if p == 0 || sorted.len() != pn {
        return Err(Error::InvalidArgument(format!(
            "expected {pn} scored points, got {}",
            sorted.len()
        )));
    }
    if sorted.windows(2).any(|w| w[0].score < w[1].score) {
        return Err(Error::InvalidArgument("scored points not sorted by descending score".into()));
    }
    let slot: BTreeMap<usize, usize> = actors.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let mut seen = vec![0usize; actors.len()];
    let mut s = vec![0.0; actors.len()];
    for (j, t) in sorted.iter().enumerate() {
        let i = *slot
            .get(&t.actor)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown actor {}", t.actor)))?;
        seen[i] += 1;
        s[i] += (pn - j) as f64 / p as f64;
    }
    if seen.iter().any(|&c| c != p) {
        return Err(Error::InvalidArgument(format!("every actor must own exactly {p} points")));
    }
    Ok(s)
}

/// Mean of `n + 1 - rank` over the rankings, in `actors` order.
pub fn rank_fusion(rankings: &[Vec<usize>], actors: &[usize]) -> Result<Vec<f64>> {
    if rankings.is_empty() {
        return Err(Error::InvalidArgument("no rankings".into()));
    }
    let n = actors.len();
    let mut sorted = actors.to_vec();
    sorted.sort_unstable();
    let mut s = vec![0.0; n];
    for r in rankings {
        let mut check = r.clone();
        check.sort_unstable();
        if check != sorted {
            return Err(Error::InvalidArgument("ranking is not a permutation of the actors".into()));
        }
        for (i, a) in actors.iter().enumerate() {
            let k = r.iter().position(|x| x == a).expect("permutation") + 1;
            s[i] += (n + 1 - k) as f64;
        }
    }
    let t = rankings.len() as f64;
    Ok(s.into_iter().map(|v| v / t).collect())
}

/// `d` distinct sorted indices of `0..h`, with `d` uniform in `[ceil(h/2), h-1]`.
pub fn feature_subsample<R: Rng + ?Sized>(h: usize, rng: &mut R) -> Result<Vec<usize>> {
    if h < 2 {
        return Err(Error::InvalidArgument("feature subsampling needs at least 2 features".into()));
    }
    let d = rng.random_range(h.div_ceil(2)..=h - 1);
    let mut idx = sample(rng, h, d).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiConfig {
    pub crop_height: usize,
    pub crop_width: usize,
    pub submodels: usize,
}

impl LiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.crop_height < MIN_CROP || self.crop_width < MIN_CROP || self.crop_height % 8 != 0 || self.crop_width % 8 != 0 {
            return Err(Error::Geometry(format!(
                "crop {}x{} must be multiples of 8 and at least {MIN_CROP}",
                self.crop_height, self.crop_width
            )));
        }
        if self.submodels == 0 {
            return Err(Error::InvalidArgument("need at least one sub-model".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiSubmodel {
    pub seed: u64,
    /// Per actor (ascending id), per image: top-left crop offset.
    pub offsets: Vec<Vec<(usize, usize)>>,
    pub verdict: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiManifest {
    pub master_seed: u64,
    pub config: LiConfig,
    pub submodels: Vec<LiSubmodel>,
    pub tally: VoteTally,
    pub verdict: usize,
    /// Verdict first, then by descending vote count, then ascending id.
    pub ranking: Vec<usize>,
}

fn sorted_actors(actors: &[ActorImages]) -> Result<Vec<&ActorImages>> {
    let mut v: Vec<&ActorImages> = actors.iter().collect();
    v.sort_by_key(|a| a.actor);
    if v.windows(2).any(|w| w[0].actor == w[1].actor) {
        return Err(Error::InvalidArgument("duplicate actor id".into()));
    }
    if v.len() < 3 {
        return Err(Error::InvalidArgument("ensemble needs at least 3 actors".into()));
    }
    Ok(v)
}

fn li_run_submodel(actors: &[&ActorImages], cfg: &LiConfig, seed: u64) -> Result<LiSubmodel> {
    let mut offsets = Vec::with_capacity(actors.len());
    let mut sets = Vec::with_capacity(actors.len());
    for a in actors {
        let mut rng = seeds::child_rng(seed, "crop", &[a.actor as u64]);
        let mut off = Vec::with_capacity(a.images.len());
        let mut cropped = Vec::with_capacity(a.images.len());
        for c in &a.images {
            let (img, o) = crop_random(&decompress(c), cfg.crop_height, cfg.crop_width, &mut rng)?;
            cropped.push(compress_with_table(&img, c.table())?);
            off.push(o);
        }
        offsets.push(off);
        sets.push(
            ActorImages {
                actor: a.actor,
                images: cropped,
            }
            .extract(Schema::Li250)?,
        );
    }
    let normalized = normalize_columns(&FeatureMatrix::from_sets(&sets)?)?.to_sets();
    let d = DistanceMatrix::from_fn(normalized.len(), |i, j| {
        set_distance_avg(&normalized[i].vectors, &normalized[j].vectors).expect("sets are non-empty")
    })?;
    let verdict = actors[li_submodel(&d)?].actor;
    Ok(LiSubmodel { seed, offsets, verdict })
}

/// Crop-based clustering ensemble with majority voting over LI-250 features.
pub fn li_ensemble_identify(actors: &[ActorImages], cfg: &LiConfig, seed: u64) -> Result<LiManifest> {
    cfg.validate()?;
    let sorted = sorted_actors(actors)?;
    let submodels: Vec<LiSubmodel> = (0..cfg.submodels)
        .into_par_iter()
        .map(|t| li_run_submodel(&sorted, cfg, seeds::derive(seed, "li-submodel", &[t as u64])))
        .collect::<Result<_>>()?;
    let votes: Vec<usize> = submodels.iter().map(|s| s.verdict).collect();
    let (verdict, tally) = majority_vote(&votes, &mut seeds::child_rng(seed, "vote", &[]))?;
    let mut ranking: Vec<usize> = sorted.iter().map(|a| a.actor).collect();
    let count = |a: &usize| tally.counts.get(a).copied().unwrap_or(0);
    ranking.sort_by(|a, b| {
        (*b == verdict)
            .cmp(&(*a == verdict))
            .then(count(b).cmp(&count(a)))
            .then(a.cmp(b))
    });
    Ok(LiManifest {
        master_seed: seed,
        config: *cfg,
        submodels,
        tally,
        verdict,
        ranking,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WuConfig {
    pub submodels: usize,
    /// Points per actor.
    pub partitions: usize,
    pub lof_k: usize,
    pub measure: SetMeasure,
    /// When false every sub-model uses all features.
    pub subsample: bool,
}

impl Default for WuConfig {
    fn default() -> Self {
        Self {
            submodels: DEFAULT_SUBMODELS,
            partitions: 5,
            lof_k: DEFAULT_K,
            measure: SetMeasure::LinearMmd,
            subsample: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WuSubmodel {
    pub seed: u64,
    pub features: Vec<usize>,
    /// Points sorted by descending LOF score.
    pub points: Vec<ScoredPoint>,
    pub ranking: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WuManifest {
    pub master_seed: u64,
    pub config: WuConfig,
    pub submodels: Vec<WuSubmodel>,
    pub ranking: SuspicionRanking,
}

fn wu_run_submodel(m: &FeatureMatrix, actors: &[usize], cfg: &WuConfig, seed: u64) -> Result<WuSubmodel> {
    let features = if cfg.subsample {
        feature_subsample(m.cols(), &mut seeds::child_rng(seed, "features", &[]))?
    } else {
        (0..m.cols()).collect()
    };
    let sub = normalize_columns(&m.select_columns(&features)?)?.to_sets();
    let p = cfg.partitions;
    let mut points: Vec<Vec<Vec<f64>>> = Vec::with_capacity(p * actors.len());
    let mut owners = Vec::with_capacity(p * actors.len());
    for s in &sub {
        let q = s.len() / p;
        for (w, part) in partition_points(&s.vectors, p, q)?.into_iter().enumerate() {
            points.push(part);
            owners.push((s.actor, w));
        }
    }
    let views: Vec<&[Vec<f64>]> = points.iter().map(Vec::as_slice).collect();
    let resolved = cfg.measure.resolve(&views)?;
    let n = points.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut rng = seeds::child_rng(seed, "pair", &[i as u64, j as u64]);
            resolved.distance(&points[i], &points[j], &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut data = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        data[i * n + j] = v;
        data[j * n + i] = v;
    }
    let d = DistanceMatrix::new(n, data, (0..n).collect(), resolved.tag())?;
    let lof = lof_scores(&d, cfg.lof_k)?;
    let mut scored: Vec<ScoredPoint> = lof
        .iter()
        .zip(&owners)
        .map(|(&score, &(actor, point))| ScoredPoint { score, actor, point })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.actor.cmp(&b.actor))
            .then(a.point.cmp(&b.point))
    });
    let s = fusion_score(&scored, actors, p)?;
    let ranking = SuspicionRanking::from_scores(actors, &s)?.order();
    Ok(WuSubmodel {
        seed,
        features,
        points: scored,
        ranking,
    })
}

/// Feature-subsampling ensemble: per sub-model, LOF over `p` points per
/// actor, fused into an actor ranking; sub-model rankings are then fused.
pub fn wu_ensemble_identify(sets: &[FeatureSet], cfg: &WuConfig, seed: u64) -> Result<WuManifest> {
    if cfg.submodels == 0 || cfg.partitions == 0 {
        return Err(Error::InvalidArgument("need at least one sub-model and one partition".into()));
    }
    let mut sorted: Vec<FeatureSet> = sets.to_vec();
    sorted.sort_by_key(|s| s.actor);
    if sorted.windows(2).any(|w| w[0].actor == w[1].actor) {
        return Err(Error::InvalidArgument("duplicate actor id".into()));
    }
    if let Some(s) = sorted.iter().find(|s| s.len() % cfg.partitions != 0) {
        return Err(Error::InvalidArgument(format!(
            "actor {} has {} vectors, not divisible into {} points",
            s.actor,
            s.len(),
            cfg.partitions
        )));
    }
    let actors: Vec<usize> = sorted.iter().map(|s| s.actor).collect();
    let m = FeatureMatrix::from_sets(&sorted)?;
    let submodels: Vec<WuSubmodel> = (0..cfg.submodels)
        .into_par_iter()
        .map(|t| wu_run_submodel(&m, &actors, cfg, seeds::derive(seed, "wu-submodel", &[t as u64])))
        .collect::<Result<_>>()?;
    let rankings: Vec<Vec<usize>> = submodels.iter().map(|s| s.ranking.clone()).collect();
    let fused = rank_fusion(&rankings, &actors)?;
    Ok(WuManifest {
        master_seed: seed,
        config: *cfg,
        submodels,
        ranking: SuspicionRanking::from_scores(&actors, &fused)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_crop_is_identity() {
        let img = PixelImage::new(16, 24, (0..384).map(f64::from).collect()).unwrap();
        let (c, off) = crop_random(&img, 24, 16, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(c, img);
        assert_eq!(off, (0, 0));
        assert!(crop_random(&img, 32, 16, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn set_distance_examples() {
        assert_eq!(set_distance_avg(&[vec![0.0]], &[vec![0.0]]).unwrap(), 0.0);
        assert_eq!(set_distance_avg(&[vec![0.0]], &[vec![3.0], vec![5.0]]).unwrap(), 4.0);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(set_distance_avg(&empty, &[vec![1.0]]).is_err());
    }

    #[test]
    fn submodel_hand_trace() {
        let d = DistanceMatrix::new(
            3,
            vec![0.0, 1.0, 9.0, 1.0, 0.0, 10.0, 9.0, 10.0, 0.0],
            vec![1, 2, 3],
            String::new(),
        )
        .unwrap();
        assert_eq!(li_submodel(&d).unwrap(), 2);
        let p: Vec<Vec<f64>> = [0.0, 0.3, 1.0, 1.2, 40.0, 2.0].iter().map(|&x| vec![x]).collect();
        assert_eq!(li_submodel(&DistanceMatrix::euclidean(&p).unwrap()).unwrap(), 4);
    }

    #[test]
    fn vote_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (w, t) = majority_vote(&[7, 7, 3], &mut rng).unwrap();
        assert_eq!(w, 7);
        assert_eq!(t.total(), 3);
        assert_eq!(majority_vote(&[4], &mut rng).unwrap().0, 4);
        let wins = (0..400)
            .filter(|&s| majority_vote(&[1, 2], &mut ChaCha8Rng::seed_from_u64(s)).unwrap().0 == 1)
            .count();
        assert!((150..250).contains(&wins), "{wins}");
    }

    #[test]
    fn partition_examples() {
        let v: Vec<usize> = (1..=6).collect();
        assert_eq!(partition_points(&v, 3, 2).unwrap(), vec![vec![1, 2], vec![3, 4], vec![5, 6]]);
        assert_eq!(partition_points(&v, 1, 6).unwrap(), vec![v.clone()]);
        assert_eq!(partition_points(&v, 6, 1).unwrap().len(), 6);
        assert!(partition_points(&v, 4, 2).is_err());
    }

    fn pts(actors: &[usize]) -> Vec<ScoredPoint> {
        actors
            .iter()
            .enumerate()
            .map(|(j, &actor)| ScoredPoint {
                score: (10 - j) as f64,
                actor,
                point: 0,
            })
            .collect()
    }

    #[test]
    fn fusion_examples() {
        assert_eq!(fusion_score(&pts(&[1, 1, 2, 2]), &[1, 2], 2).unwrap(), vec![3.5, 1.5]);
        assert_eq!(fusion_score(&pts(&[3, 1, 2]), &[1, 2, 3], 1).unwrap(), vec![2.0, 1.0, 3.0]);
        assert!(fusion_score(&pts(&[1, 1, 1, 2]), &[1, 2], 2).is_err());
        let mut bad = pts(&[1, 2]);
        bad.reverse();
        assert!(fusion_score(&bad, &[1, 2], 1).is_err());
    }

    #[test]
    fn rank_fusion_examples() {
        assert_eq!(rank_fusion(&[vec![2, 0, 1]], &[0, 1, 2]).unwrap(), vec![2.0, 1.0, 3.0]);
        assert_eq!(rank_fusion(&[vec![5, 6, 7], vec![6, 7, 5]], &[5, 6, 7]).unwrap(), vec![2.0, 2.5, 1.5]);
        assert!(rank_fusion(&[vec![5, 5, 7]], &[5, 6, 7]).is_err());
    }

    #[test]
    fn subsample_bounds() {
        for s in 0..50 {
            let idx = feature_subsample(274, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
            assert!((137..=273).contains(&idx.len()));
            assert!(idx.windows(2).all(|w| w[0] < w[1]) && *idx.last().unwrap() < 274);
            assert_eq!(idx, feature_subsample(274, &mut ChaCha8Rng::seed_from_u64(s)).unwrap());
        }
        assert_eq!(feature_subsample(2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap().len(), 1);
    }

    proptest::proptest! {
        #[test]
        fn fusion_sums_are_closed_form(n in 1usize..8, p in 1usize..5, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut owners: Vec<usize> = (0..n).flat_map(|a| std::iter::repeat_n(a, p)).collect();
            rand::seq::SliceRandom::shuffle(owners.as_mut_slice(), &mut rng);
            let actors: Vec<usize> = (0..n).collect();
            let s = fusion_score(&pts_long(&owners), &actors, p).unwrap();
            let total: f64 = s.iter().sum();
            proptest::prop_assert!((total - (n * (p * n + 1)) as f64 / 2.0).abs() < 1e-9);

            let rankings: Vec<Vec<usize>> = (0..3).map(|_| {
                let mut r = actors.clone();
                rand::seq::SliceRandom::shuffle(r.as_mut_slice(), &mut rng);
                r
            }).collect();
            let f = rank_fusion(&rankings, &actors).unwrap();
            proptest::prop_assert!((f.iter().sum::<f64>() - (n * (n + 1)) as f64 / 2.0).abs() < 1e-9);
        }
    }

    fn pts_long(actors: &[usize]) -> Vec<ScoredPoint> {
        actors
            .iter()
            .enumerate()
            .map(|(j, &actor)| ScoredPoint {
                score: -(j as f64),
                actor,
                point: j,
            })
            .collect()
    }
}
