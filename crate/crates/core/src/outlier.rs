//! Local outlier factor and the LOF-based identification framework.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::seeds;
use crate::setdist::{actor_distance_matrix, normalize_columns, DistanceMatrix, FeatureMatrix, SetMeasure};

pub const DEFAULT_K: usize = 10;

/// Stand-in for an infinite local reachability density (all reach-distances
/// zero, i.e. coincident points).
pub const LRD_SENTINEL: f64 = 1e30;

/// Distance from `p` to its k-th nearest other point.
pub fn k_distance(d: &DistanceMatrix, p: usize, k: usize) -> Result<f64> {
    let n = d.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("k-distance needs 1 <= k < {n}, got {k}")));
    }
    let mut row: Vec<f64> = (0..n).filter(|&o| o != p).map(|o| d.get(p, o)).collect();
    row.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(row[k - 1])
}

/// The k-distance neighborhood: every other point within the k-distance.
pub fn neighborhood(d: &DistanceMatrix, p: usize, kd: f64) -> Vec<usize> {
    (0..d.len()).filter(|&o| o != p && d.get(p, o) <= kd).collect()
}

/// LOF value of every point of the distance matrix. Negative entries
/// (signed MMD estimates) count as zero distance.
pub fn lof_scores(d: &DistanceMatrix, k: usize) -> Result<Vec<f64>> {
    let clamped;
    let d = if d.data().iter().any(|&v| v < 0.0) {
        clamped = d.clamped();
        &clamped
    } else {
        d
    };
    let n = d.len();
    if k < 2 || n < k + 2 {
        return Err(Error::InvalidArgument(format!(
            "LOF needs 2 <= k and at least k+2 points, got k={k}, n={n}"
        )));
    }
    let kd: Vec<f64> = (0..n).into_par_iter().map(|p| k_distance(d, p, k)).collect::<Result<_>>()?;
    let hoods: Vec<Vec<usize>> = (0..n).into_par_iter().map(|p| neighborhood(d, p, kd[p])).collect();
    let lrd: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|p| {
            let s: f64 = hoods[p].iter().map(|&o| kd[o].max(d.get(p, o))).sum();
            if s == 0.0 {
                LRD_SENTINEL
            } else {
                hoods[p].len() as f64 / s
            }
        })
        .collect();
    Ok((0..n)
        .into_par_iter()
        .map(|p| {
            let s: f64 = hoods[p].iter().map(|&o| lrd[o] / lrd[p]).sum();
            s / hoods[p].len() as f64
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub actor: usize,
    pub score: f64,
}

/// Actors ordered from most to least suspicious.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspicionRanking {
    pub entries: Vec<RankEntry>,
}

impl SuspicionRanking {
    /// Sorts by descending score, ties by ascending actor id.
    pub fn from_scores(actors: &[usize], scores: &[f64]) -> Result<Self> {
        if actors.len() != scores.len() {
            return Err(Error::DimensionMismatch {
                expected: actors.len(),
                got: scores.len(),
            });
        }
        let mut entries: Vec<RankEntry> = actors
            .iter()
            .zip(scores)
            .map(|(&actor, &score)| RankEntry { actor, score })
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.actor.cmp(&b.actor)));
        Ok(Self { entries })
    }

    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.actor).collect()
    }

    /// 1-based rank of `actor`.
    pub fn rank_of(&self, actor: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.actor == actor).map(|p| p + 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct LofRun {
    pub distances: DistanceMatrix,
    pub ranking: SuspicionRanking,
}

/// Treats every actor's feature set as one point and ranks actors by LOF.
pub fn identify_lof(sets: &[FeatureSet], k: usize, measure: &SetMeasure, seed: u64) -> Result<LofRun> {
    let mut sorted: Vec<FeatureSet> = sets.to_vec();
    sorted.sort_by_key(|s| s.actor);
    if sorted.windows(2).any(|w| w[0].actor == w[1].actor) {
        return Err(Error::InvalidArgument("duplicate actor id".into()));
    }
    let normalized = normalize_columns(&FeatureMatrix::from_sets(&sorted)?)?.to_sets();
    let distances = actor_distance_matrix(&normalized, measure, seeds::derive(seed, "distances", &[]))?;
    let scores = lof_scores(&distances, k)?;
    let ranking = SuspicionRanking::from_scores(distances.labels(), &scores)?;
    Ok(LofRun { distances, ranking })
}
